import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bravl.channel import Channel, assemble, build_grid
from bravl.kinematics import NU_CRITICAL, PhysicalParams, energy
from bravl.spectral import bound_states, channel_matrix, eigendecompose
from bravl.virial import (PROFILE_IDS, SWEEP_COLUMNS, bound_profile, embedded_threshold,
                          envelope, psi_coefficient, psi_coefficient_check, ratio_r, ratio_s,
                          solution_residuals, virial_residual, virial_residual_theorem_form,
                          z_sweep, zero_coupling_residual)


@pytest.fixture(scope="module")
def ground_sequence():
    return bound_states(Channel(0, 0.5), PhysicalParams.from_nu(0.5))


def test_zero_vector_gives_zero_terms(ground_sequence):
    cm = ground_sequence.solutions[0].matrix
    for fn in (virial_residual, virial_residual_theorem_form):
        r = fn(0.9, np.zeros(cm.size), cm)
        assert r.lhs == 0 and r.rhs == 0 and r.residual == 0 and r.relative_residual == 0


def test_errors(ground_sequence):
    cm = ground_sequence.solutions[0].matrix
    with pytest.raises(ValueError):
        virial_residual(0.9, np.ones(cm.size + 1), cm)
    with pytest.raises(FloatingPointError):
        virial_residual(float("nan"), np.ones(cm.size), cm)
    massless = channel_matrix(Channel(0, 0.5), 20, PhysicalParams.from_nu(0.5, mass=0.0))
    with pytest.raises(ValueError):
        virial_residual_theorem_form(0.5, np.ones(20), massless)


def test_residual_convergence_and_form_agreement(ground_sequence):
    cor, thm = [], []
    for sol in ground_sequence.solutions:
        c, t = solution_residuals(sol, 0)
        assert c.admissible and c.imaginary_ok and t.imaginary_ok
        assert c.residual == abs(c.lhs - c.rhs)
        cor.append(c.relative_residual)
        thm.append(t.relative_residual)
        assert abs(c.residual - t.residual) <= max(c.residual, t.residual) + 1e-15
    assert cor[0] > cor[1] > cor[2]
    assert cor[2] <= 1e-3
    for a, b in zip(cor, thm):
        assert max(a, b) <= 2 * min(a, b)


def test_report_fields(ground_sequence):
    c, t = solution_residuals(ground_sequence.solutions[-1], 0)
    d = c.to_dict()
    assert d["N"] == 400 and d["sigma"] == 1.0 and d["units"] == "mc2"
    assert set(c.terms) == {"k2_term", "mass_term"}
    assert set(t.terms) == {"mass_term", "k1_term", "k2_term"}
    assert c.eigenvalue == pytest.approx(0.8621925, abs=1e-6)


def test_complex_phase_is_harmless(ground_sequence):
    sol = ground_sequence.solutions[0]
    v = sol.vectors[:, 0] * np.exp(0.7j)
    a = virial_residual(sol.values[0], v, sol.matrix)
    b = virial_residual(sol.values[0], sol.vectors[:, 0], sol.matrix)
    assert a.imaginary_ok
    assert a.lhs == pytest.approx(b.lhs, rel=1e-12) and a.rhs == pytest.approx(b.rhs, rel=1e-12)


def test_non_symmetric_form_flags_imaginary_part():
    from dataclasses import replace
    cm = channel_matrix(Channel(0, 0.5), 20, PhysicalParams.from_nu(0.5))
    bad = np.array(cm.kernel2)
    bad[0, 1] += 0.3
    tweaked = replace(cm, kernel2=bad)
    v = np.ones(20) + 1j * np.arange(20)
    assert not virial_residual(0.9, v, tweaked).imaginary_ok


def test_excited_stable_states_also_satisfy_identity(ground_sequence):
    sol = ground_sequence.solutions[-1]
    for k in range(int(ground_sequence.stable.sum())):
        c, _ = solution_residuals(sol, k)
        assert c.relative_residual < 1e-3


def test_zero_charge_pseudo_eigenpairs_rejected():
    params = PhysicalParams()
    g = build_grid(30)
    cm = assemble(Channel(0, 0.5), g, params)
    sol = eigendecompose(cm)
    e = energy(g.nodes, params)
    for k in (0, 10, 29):
        i = int(np.argmax(abs(sol.vectors[:, k])))
        r = virial_residual(sol.values[k], sol.vectors[:, k], cm)
        assert not r.admissible
        assert r.lhs - r.rhs == pytest.approx(zero_coupling_residual(g.nodes[i]), rel=1e-12)
        assert r.lhs - r.rhs > 0
        assert sol.values[k] == e[i]


def _exact_zero_residual(p):
    with mpmath.workdps(50):
        p = mpmath.mpf(p)
        e = mpmath.sqrt(p * p + 1)
        return (e - 1) * (1 - 1 / e + 1 / e ** 2) + (e - 1) * (2 * e - 1) / e ** 2


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e6))
def test_zero_coupling_residual_positive(p):
    val = zero_coupling_residual(p)
    exact = _exact_zero_residual(p)
    assert val > 0
    assert abs(val - float(exact)) <= 1e-12 * float(exact)


def test_zero_coupling_residual_vectorized_and_units():
    p = np.array([0.5, 1.0, 2.0])
    out = zero_coupling_residual(p)
    assert out.shape == (3,)
    # dimensionless: invariant under a change of mass with p measured in m c
    assert zero_coupling_residual(2.0 * p, PhysicalParams(mass=2.0)) == pytest.approx(out, rel=1e-14)
    with pytest.raises(ValueError):
        zero_coupling_residual(1.0, PhysicalParams(mass=0.0))


# --- profiles -----------------------------------------------------------------------

def test_ratio_limits():
    assert float(ratio_r(0.0)) == 1.0
    assert float(ratio_s(0.0)) == 0.0
    assert float(ratio_r(0.75)) == pytest.approx(0.75, rel=1e-15)
    assert float(ratio_s(1e7)) == pytest.approx(2.0, abs=1e-6)


def test_extremal_constants():
    r = bound_profile("ratio_r")
    s = bound_profile("ratio_s")
    assert r.extremum == pytest.approx(0.75, abs=1e-6)
    assert r.argument == pytest.approx(0.75, abs=1e-4)
    assert r.extremum <= r.sampled_extremum
    assert s.extremum == pytest.approx(2.0, abs=1e-6)
    assert np.all(s.values < 2.0)
    assert r.p.size == 10_000 and r.p[0] == 1e-4 and r.p[-1] == pytest.approx(1e4)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 0.75))
def test_theta_nonpositive_below_threshold(nu):
    for pid in ("Phi", "Theta"):
        assert bound_profile(pid, nu=nu, samples=2000).extremum <= 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.7501, 1.2))
def test_theta_envelope_above_threshold(nu):
    b = bound_profile("Theta", nu=nu, samples=2000)
    assert b.extremum <= envelope("Theta", nu) + 1e-9
    assert b.extremum > 0


def test_profile_errors():
    with pytest.raises(ValueError):
        bound_profile("Omega")
    with pytest.raises(ValueError):
        bound_profile("Phi", p_range=(0.0, 1.0))
    with pytest.raises(ValueError):
        bound_profile("Phi", p_range=(2.0, 1.0))
    with pytest.raises(ValueError):
        envelope("Psi", 0.5)


def test_profile_serialization():
    d = bound_profile("Psi", nu=0.5, samples=50).to_dict(include_samples=True)
    assert d["units"] == "dimensionless" and len(d["p"]) == 50
    assert set(PROFILE_IDS) == {"Phi", "Psi", "Theta", "ratio_r", "ratio_s"}


def test_psi_coefficient():
    assert psi_coefficient() == pytest.approx(0.6442002195710, abs=1e-13)
    rep = psi_coefficient_check()
    assert rep["verdict"] == "PASS" and rep["max_psi"] < 0
    assert rep["coefficient"] == pytest.approx((math.pi ** 2 + 8) / (2 * (math.pi ** 2 + 4)), rel=1e-14)


def test_psi_negative_at_critical_coupling():
    b = bound_profile("Psi", nu=NU_CRITICAL, samples=1000)
    assert np.all(b.values < 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-3, 1e3))
def test_psi_affine_in_nu(nu1, nu2, p):
    from bravl.virial import _profile_values
    f = lambda nu: float(_profile_values("Psi", np.array(p), nu))
    mid = f((nu1 + nu2) / 2)
    assert mid == pytest.approx((f(nu1) + f(nu2)) / 2, rel=1e-9, abs=1e-12)


# --- thresholds and sweep -------------------------------------------------------

def test_threshold_examples():
    assert embedded_threshold(Channel(1, -0.5), 0.7) == 1.0
    assert embedded_threshold(Channel(1, -0.5), 1.0) == 1.5
    assert embedded_threshold(Channel(3, 0.5), 0.8) == 1.0
    assert embedded_threshold(None, 0.9) == pytest.approx(1.3)
    assert embedded_threshold(Channel(0, 0.5), 0.95) == math.inf
    with pytest.raises(ValueError):
        embedded_threshold(Channel(0, 0.5), -0.1)
    with pytest.raises(TypeError):
        embedded_threshold((1, -0.5), 0.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 2), st.floats(0, 2), st.sampled_from([None, Channel(1, -0.5), Channel(0, 0.5),
                                                          Channel(2, 0.5)]))
def test_threshold_monotone(a, b, ch):
    lo, hi = min(a, b), max(a, b)
    assert embedded_threshold(ch, lo) <= embedded_threshold(ch, hi)
    if hi <= 0.75:
        assert embedded_threshold(ch, hi) == 1.0


def test_sweep_zero_row():
    rows = z_sweep(Channel(0, 0.5), [0.0])
    assert len(rows) == 3 and set(rows[0]) == set(SWEEP_COLUMNS)
    for r in rows:
        assert math.isnan(r["lambda_min_over_mc2"]) and r["embedded_verdict"] == "PASS"
        assert r["stable_bound_states"] == 0


def test_sweep_ground_state_decreasing():
    nus = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = z_sweep(Channel(0, 0.5), nus)
    finest = [r["lambda_min_over_mc2"] for r in rows if r["N"] == 400]
    assert all(b < a for a, b in zip(finest, finest[1:]))
    for r in rows:
        assert r["lower_bound_ok"]
        if r["nu"] <= 0.75:
            assert r["embedded_verdict"] == "PASS"
