import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bravl.channel import Channel, ChannelMatrix, assemble, build_grid, weighted_kernel_matrices
from bravl.kinematics import NU_CRITICAL, PhysicalParams, critical_Z, energy
from bravl.spectral import (SupercriticalWarning, bound_states, channel_matrix, eigendecompose,
                            embedded_scan, relative_bound_ratio)

# ground-state regression values (N = 100, 200, 400, sigma = 1)
GROUND = {
    ((0, 0.5), 0.5): 0.8621925,
    ((0, 0.5), 0.25): 0.9680844,
    ((0, 0.5), 0.75): 0.6275646,
    ((1, -0.5), 0.5): 0.9657995,
    ((1, 0.5), 0.5): 0.9682213,
    ((2, -0.5), 0.5): 0.9858104,
}


def _toy(A):
    g = build_grid(8)
    A = np.asarray(A, dtype=float)
    return ChannelMatrix(Channel(0, 0.5), g, PhysicalParams(), A, np.diag(A).copy(),
                         np.zeros_like(A), np.zeros_like(A))


def test_zero_charge_spectrum(grid100):
    params = PhysicalParams()
    sol = eigendecompose(assemble(Channel(0, 0.5), grid100, params))
    assert np.allclose(sol.values, np.sort(energy(grid100.nodes, params)), rtol=1e-15)
    assert np.all(sol.values >= params.rest_energy)


def test_two_by_two_closed_form():
    a, b, c = 2.0, 0.5, -1.0
    sol = eigendecompose(_toy([[a, b], [b, c]]))
    mean, rad = (a + c) / 2, math.hypot((a - c) / 2, b)
    assert sol.values == pytest.approx([mean - rad, mean + rad], rel=1e-14)


def test_random_reconstruction():
    rng = np.random.default_rng(11)
    M = rng.normal(size=(40, 40))
    sol = eigendecompose(_toy(M + M.T))
    V = sol.vectors
    assert np.allclose(V @ np.diag(sol.values) @ V.T, M + M.T, atol=1e-10)
    assert np.allclose(V.T @ V, np.eye(40), atol=1e-10)
    assert np.all(np.diff(sol.values) >= 0)


def test_eigendecompose_errors():
    with pytest.raises(FloatingPointError):
        eigendecompose(_toy([[1.0, np.nan], [np.nan, 1.0]]))
    with pytest.raises(ValueError):
        eigendecompose(_toy([[1.0, 2.0], [0.0, 1.0]]))


@pytest.mark.parametrize("nu", [0.3, 0.7])
def test_residuals_and_orthonormality(nu, grid100):
    sol = eigendecompose(assemble(Channel(1, -0.5), grid100, PhysicalParams.from_nu(nu)))
    assert np.all(sol.residuals <= 1e-9 * sol.matrix_norm)
    assert np.allclose(sol.vectors.T @ sol.vectors, np.eye(100), atol=1e-10)
    assert sol.max_relative_residual() <= 1e-9
    phi = sol.node_samples(0)
    assert np.sum(grid100.weights * phi ** 2) == pytest.approx(1.0, rel=1e-12)


def test_summary_units():
    sol = eigendecompose(channel_matrix(Channel(0, 0.5), 20, PhysicalParams(mass=2.0)))
    s = sol.summary()
    assert s["units"] == "mc2" and s["eigenvalues"][0] >= 1.0
    s0 = eigendecompose(channel_matrix(Channel(0, 0.5), 20, PhysicalParams(mass=0.0))).summary()
    assert s0["units"] == "c_sigma"


@pytest.mark.parametrize("key", sorted(GROUND))
def test_ground_state_regression(key):
    (l, s), nu = key
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SupercriticalWarning)
        b = bound_states(Channel(l, s), PhysicalParams.from_nu(nu))
    assert b.stable[0]
    assert b.values[0] == pytest.approx(GROUND[key], abs=2e-7)
    assert b.lower_bound < b.values[0] < 1.0


def test_ground_state_by_second_diagonal_route():
    # independent assembly route: Voronoi cell averages for the diagonal
    params = PhysicalParams.from_nu(0.5)
    g = build_grid(400)
    cell = eigendecompose(assemble(Channel(0, 0.5), g, params, method="cell")).values[0]
    assert cell == pytest.approx(GROUND[((0, 0.5), 0.5)], abs=1e-3)


def test_zero_charge_has_no_bound_states():
    b = bound_states(Channel(0, 0.5), PhysicalParams())
    assert b.values.size == 0
    s = embedded_scan(Channel(0, 0.5), PhysicalParams())
    assert s.passed and s.stable_values.size == 0


def test_sequence_errors():
    with pytest.raises(ValueError):
        bound_states(Channel(0, 0.5), PhysicalParams.from_nu(0.5), nodes=(100, 200))
    with pytest.raises(ValueError):
        bound_states(Channel(0, 0.5), PhysicalParams.from_nu(0.5), nodes=(100, 300, 200))
    with pytest.raises(ValueError):
        bound_states(Channel(0, 0.5), PhysicalParams.from_nu(NU_CRITICAL))


def test_supercritical_warning_labels_result():
    with pytest.warns(SupercriticalWarning):
        b = bound_states(Channel(0, 0.5), PhysicalParams.from_nu(0.8), nodes=(50, 100, 200))
    assert not b.authoritative
    # non-critical channel at the same coupling stays authoritative
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert bound_states(Channel(1, 0.5), PhysicalParams.from_nu(0.8),
                            nodes=(50, 100, 200)).authoritative


def test_ground_state_monotone_in_charge():
    nus = [0.1, 0.3, 0.5, 0.7]
    mins, counts = [], []
    for nu in nus:
        b = bound_states(Channel(1, 0.5), PhysicalParams.from_nu(nu))
        mins.append(b.values[0])
        counts.append(int(b.stable.sum()))
    assert all(b < a for a, b in zip(mins, mins[1:]))
    assert all(b >= a for a, b in zip(counts, counts[1:]))


@settings(max_examples=8, deadline=None)
@given(st.floats(0.01, 0.9))
def test_eigenvalues_positive_and_above_lower_bound(nu):
    params = PhysicalParams.from_nu(nu)
    for N in (60, 120):
        values = eigendecompose(channel_matrix(Channel(1, 0.5), N, params)).values
        assert values[0] > 0
        assert values[0] >= (1 - nu / NU_CRITICAL) - 1e-3


def test_stability_history_layout():
    b = bound_states(Channel(0, 0.5), PhysicalParams.from_nu(0.5))
    assert len(b.history) == b.values.size
    assert all(len(h) == 3 and len(d) == 2 for h, d in zip(b.history, b.drifts))
    d = b.to_dict()
    assert d["units"] == "mc2" and d["states"][0]["stable"]
    assert b.stable_values.size == int(b.stable.sum())


def test_continuum_values_are_unstable():
    b = bound_states(Channel(0, 0.5), PhysicalParams.from_nu(0.5))
    s = embedded_scan(Channel(0, 0.5), PhysicalParams.from_nu(0.5), solutions=b.solutions)
    assert s.candidates > 0 and s.stable_values.size == 0 and s.passed
    assert s.to_dict()["verdict"] == "PASS"


@pytest.mark.parametrize("ch", [Channel(0, 0.5), Channel(1, -0.5)])
def test_embedded_scan_examples(ch):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SupercriticalWarning)
        s = embedded_scan(ch, PhysicalParams.from_nu(0.7))
    assert s.passed and s.threshold == pytest.approx(1.0)


def test_relative_bound_ratio_linear_in_charge():
    ch, g = Channel(0, 0.5), build_grid(200)
    params = PhysicalParams(Z=critical_Z(PhysicalParams().alpha))
    kernels = weighted_kernel_matrices(ch, g, params)
    full = relative_bound_ratio(ch, g, params, kernels)
    half = relative_bound_ratio(ch, g, params.with_Z(params.Z / 2), kernels)
    assert half == pytest.approx(full / 2, rel=1e-12)
    assert 0.9 < full < 1.02


def test_relative_bound_ratio_high_channel_smaller():
    g = build_grid(200)
    params = PhysicalParams(Z=critical_Z(PhysicalParams().alpha))
    high = relative_bound_ratio(Channel(5, 0.5), g, params)
    low = relative_bound_ratio(Channel(0, 0.5), g, params)
    assert high < 0.9 < low


@pytest.mark.parametrize("a", [0.5, 2.0])
def test_dilation_covariance_of_spectrum(a):
    ch = Channel(1, -0.5)
    g = build_grid(100)
    base = eigendecompose(assemble(ch, g, PhysicalParams.from_nu(0.4))).values
    scaled = eigendecompose(assemble(ch, g.scaled(a), PhysicalParams.from_nu(0.4, mass=a))).values
    assert np.allclose(scaled, a * base, rtol=1e-11)
