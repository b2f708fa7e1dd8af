"""Virial identities on computed eigenpairs, bound profiles and exclusion thresholds.

Two discrete forms of the channel virial identity are evaluated.  The
*corollary form* is

    (lam/e0 - 1) sum |v_i|^2 (1 - e0/e_i + e0^2/e_i^2)
        = c_Z sum_ij v_i W2_ij v_j (1/e_i + 1/e_j)
          - sum |v_i|^2 (e_i - e0)(2 e_i - e0) / e_i^2

and the *theorem form* is

    lam |v|^2 = sum |v_i|^2 e0^2/e_i
        - (c_Z/2) e0 sum_ij v_i W1_ij v_j (a_i + a_j)
        + (c_Z/2) e0 sum_ij v_i W2_ij v_j (b_i + b_j)

with ``a = 1/e - e0/e^2``, ``b = 1/e + e0/e^2`` and ``c_Z = alpha c Z / pi``.
``v`` is the eigenvector in the symmetrized basis, so ``|v_i|^2 = w_i |phi_i|^2``
and ``W1``, ``W2`` are the weighted kernel matrices actually diagonalized,
diagonal entries included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import Channel, ChannelMatrix
from .kinematics import NU_CRITICAL, NU_CRITICAL_PRIME, PhysicalParams, energy
from .spectral import DEFAULT_NODES, STABILITY_TOL, bound_states, embedded_scan

IMAG_TOL = 1e-12
FORMS = ("corollary", "theorem")


@dataclass(frozen=True)
class VirialReport:
    """Both sides of one virial identity for one eigenpair.

    ``residual`` is exactly ``|lhs - rhs|``; ``relative_residual`` divides by
    ``max(|lhs|, |rhs|, |v|^2)``.  ``admissible`` is False when the eigenvalue
    lies in the continuum, where no normalizable eigenfunction is expected.
    """

    form: str
    channel: Channel
    eigenvalue: float
    lhs: float
    rhs: float
    terms: dict
    residual: float
    relative_residual: float
    norm2: float
    N: int
    sigma: float
    admissible: bool
    imaginary_max: float = 0.0
    imaginary_ok: bool = True

    def to_dict(self) -> dict:
        return {
            "form": self.form,
            "channel": self.channel.to_dict(),
            "eigenvalue": self.eigenvalue,
            "units": "mc2",
            "lhs": self.lhs,
            "rhs": self.rhs,
            "terms": dict(self.terms),
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "norm2": self.norm2,
            "N": self.N,
            "sigma": self.sigma,
            "admissible": self.admissible,
            "imaginary_max": self.imaginary_max,
            "imaginary_ok": self.imaginary_ok,
        }


def _prepare(eigenvalue, vector, matrix: ChannelMatrix):
    params = matrix.params
    if params.rest_energy <= 0:
        raise ValueError("the virial identities need m > 0")
    v = np.asarray(vector)
    if v.ndim != 1 or v.size != matrix.size:
        raise ValueError(f"eigenvector of length {v.size} does not match grid N={matrix.size}")
    if not np.all(np.isfinite(v)) or not math.isfinite(eigenvalue):
        raise FloatingPointError("non-finite eigenpair")
    return v, np.asarray(matrix.energies, dtype=float), params.rest_energy


def _form(v, M, left, right=None):
    """``sum_ij conj(v_i) M_ij v_j (left_i + right_j)`` split into real and imaginary parts."""
    if right is None:
        right = left
    value = np.vdot(left * v, M @ v) + np.vdot(v, M @ (right * v))
    return float(value.real), float(abs(value.imag))


def _report(form, eigenvalue, v, matrix, lhs, rhs, terms, imag, e0):
    norm2 = float(np.vdot(v, v).real)
    residual = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs), norm2)
    imag_scale = IMAG_TOL * scale if scale > 0 else 0.0
    return VirialReport(
        form=form,
        channel=matrix.channel,
        eigenvalue=float(eigenvalue) / e0,
        lhs=lhs,
        rhs=rhs,
        terms=terms,
        residual=residual,
        relative_residual=residual / scale if scale > 0 else 0.0,
        norm2=norm2,
        N=matrix.size,
        sigma=matrix.grid.sigma,
        admissible=bool(eigenvalue < e0),
        imaginary_max=imag,
        imaginary_ok=imag <= imag_scale,
    )


def virial_residual(eigenvalue: float, vector, matrix: ChannelMatrix) -> VirialReport:
    """Corollary form of the channel virial identity; see the module docstring."""
    v, e, e0 = _prepare(eigenvalue, vector, matrix)
    c = matrix.params.channel_coupling
    mod2 = np.abs(v) ** 2
    r = e0 / e
    lhs = (eigenvalue / e0 - 1.0) * float(np.sum(mod2 * (1.0 - r + r * r)))
    k2_term, imag = _form(v, matrix.kernel2, 1.0 / e)
    k2_term *= c
    # (e - e0) computed cancellation-free
    kinetic = (matrix.params.light_speed * matrix.grid.nodes) ** 2 / (e + e0)
    mass_term = float(np.sum(mod2 * kinetic * (2.0 * e - e0) / e ** 2))
    rhs = k2_term - mass_term
    terms = {"k2_term": k2_term, "mass_term": mass_term}
    return _report("corollary", eigenvalue, v, matrix, lhs, rhs, terms, c * imag, e0)


def virial_residual_theorem_form(eigenvalue: float, vector, matrix: ChannelMatrix
                                 ) -> VirialReport:
    """Theorem form of the channel virial identity; see the module docstring."""
    v, e, e0 = _prepare(eigenvalue, vector, matrix)
    c = matrix.params.channel_coupling
    mod2 = np.abs(v) ** 2
    lhs = float(eigenvalue) * float(np.sum(mod2))
    mass_term = float(np.sum(mod2 * e0 * e0 / e))
    a = 1.0 / e - e0 / e ** 2
    b = 1.0 / e + e0 / e ** 2
    k1_raw, imag1 = _form(v, matrix.kernel1, a)
    k2_raw, imag2 = _form(v, matrix.kernel2, b)
    k1_term = -0.5 * c * e0 * k1_raw
    k2_term = 0.5 * c * e0 * k2_raw
    rhs = mass_term + k1_term + k2_term
    terms = {"mass_term": mass_term, "k1_term": k1_term, "k2_term": k2_term}
    imag = 0.5 * c * e0 * max(imag1, imag2)
    return _report("theorem", eigenvalue, v, matrix, lhs, rhs, terms, imag, e0)


def solution_residuals(solution, k: int = 0) -> tuple[VirialReport, VirialReport]:
    """Both forms for eigenpair ``k`` of an :class:`~bravl.spectral.EigenSolution`."""
    lam = float(solution.values[k])
    v = solution.vectors[:, k]
    return (virial_residual(lam, v, solution.matrix),
            virial_residual_theorem_form(lam, v, solution.matrix))


def zero_coupling_residual(p, params: PhysicalParams | None = None):
    """``LHS - RHS`` of the corollary form for a Z=0 basis vector at momentum ``p``.

    Equals ``(e/e0 - 1)(1 - e0/e + e0^2/e^2) + (e - e0)(2e - e0)/e^2``, which is
    strictly positive for ``p > 0``: the free pseudo-eigenpairs never satisfy
    the identity.
    """
    params = PhysicalParams() if params is None else params
    e0 = params.rest_energy
    if e0 <= 0:
        raise ValueError("needs m > 0")
    p = np.asarray(p, dtype=float)
    e = np.asarray(energy(p, params), dtype=float)
    gap = (params.light_speed * p) ** 2 / (e + e0)
    r = e0 / e
    out = (gap / e0) * (1.0 - r + r * r) + gap * (2.0 * e - e0) / e ** 2
    return float(out) if out.ndim == 0 else out


# --- bound profiles ---------------------------------------------------------

PROFILE_IDS = ("Phi", "Psi", "Theta", "ratio_r", "ratio_s")
DEFAULT_RANGE = (1e-4, 1e4)
DEFAULT_SAMPLES = 10_000
EXTREMUM_TOL = 1e-6


def _s(p):
    return np.sqrt(p * p + 1.0)


def _outer_factor(p):
    s = _s(p)
    return p * p / ((s + 1.0) * (p * p + 2.0 - s)), s


def ratio_r(p):
    p = np.asarray(p, dtype=float)
    s = _s(p)
    return (2.0 * s - 1.0) / (p + s)


def ratio_s(p):
    p = np.asarray(p, dtype=float)
    f, s = _outer_factor(p)
    return f * (p + s)


def _profile_values(profile: str, p, nu: float):
    p = np.asarray(p, dtype=float)
    if profile == "ratio_r":
        return ratio_r(p)
    if profile == "ratio_s":
        return ratio_s(p)
    if profile in ("Phi", "Theta"):
        return ratio_s(p) * (nu - ratio_r(p))
    if profile == "Psi":
        f, s = _outer_factor(p)
        coefficient = nu / (2.0 * math.pi) * (math.pi ** 2 / 4.0 + 2.0)
        return f * s * (coefficient - (2.0 * s - 1.0) / s)
    raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILE_IDS}")


@dataclass(frozen=True)
class BoundProfile:
    """Samples of one bound function.

    ``extremum_kind`` is ``"min"`` for ratio_r, ``"sup"`` for ratio_s and
    ``"max"`` otherwise.
    """

    profile: str
    nu: float
    p: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    extremum: float
    argument: float
    extremum_kind: str
    sampled_extremum: float

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "profile": self.profile,
            "nu": self.nu,
            "units": "dimensionless",
            "argument_units": "momentum_mc",
            "extremum_kind": self.extremum_kind,
            "extremum": self.extremum,
            "argument": self.argument,
            "sampled_extremum": self.sampled_extremum,
        }
        if include_samples:
            out["p"] = self.p.tolist()
            out["values"] = self.values.tolist()
        return out


def _golden_refine(f, p, values, k, sign):
    """Golden-section refinement around sample ``k`` of ``sign * f``."""
    lo = p[max(k - 1, 0)]
    hi = p[min(k + 1, p.size - 1)]
    if not lo < p[k] < hi:
        return float(p[k]), float(values[k])
    # work in log p so the bracket is well scaled
    res = minimize_scalar(lambda y: sign * float(f(math.exp(y))), method="golden",
                          bracket=(math.log(lo), math.log(p[k]), math.log(hi)),
                          tol=1e-12)
    x = math.exp(res.x)
    return x, float(f(x))


def _tail_limit(f, p_start: float) -> float:
    """Polynomial extrapolation in ``1/p`` of ``f(p)`` as ``p -> inf``."""
    ps = p_start * 2.0 ** np.arange(6)
    x = 1.0 / ps
    coeffs = np.polyfit(x, f(ps), 4)
    return float(coeffs[-1])


def bound_profile(profile: str, p_range=DEFAULT_RANGE, nu: float = 0.0,
                  samples: int = DEFAULT_SAMPLES) -> BoundProfile:
    """Sample a bound function on log-spaced momenta and locate its extremum.

    Momenta are in units of ``m c``.  The extremum is found by dense sampling
    followed by golden-section refinement; for ratio_s the supremum is the
    limit at infinity, obtained by tail extrapolation.
    """
    if profile not in PROFILE_IDS:
        raise ValueError(f"unknown profile {profile!r}; expected one of {PROFILE_IDS}")
    lo, hi = (float(x) for x in p_range)
    if not 0 < lo < hi or not math.isfinite(hi):
        raise ValueError("p-range must satisfy 0 < p_min < p_max < inf")
    if samples < 3:
        raise ValueError("need at least three samples")
    p = np.geomspace(lo, hi, samples)
    values = _profile_values(profile, p, nu)

    def f(x):
        return _profile_values(profile, x, nu)

    if profile == "ratio_r":
        k = int(np.argmin(values))
        x, ext = _golden_refine(f, p, values, k, 1.0)
        return BoundProfile(profile, nu, p, values, ext, x, "min", float(values[k]))
    k = int(np.argmax(values))
    if profile == "ratio_s":
        limit = _tail_limit(f, max(hi, 1e3))
        sup = max(limit, float(values[k]))
        return BoundProfile(profile, nu, p, values, sup, math.inf, "sup", float(values[k]))
    x, ext = _golden_refine(f, p, values, k, -1.0)
    return BoundProfile(profile, nu, p, values, max(ext, float(values[k])), x, "max",
                        float(values[k]))


def envelope(profile: str, nu: float) -> float:
    """Proven upper envelope of Phi/Theta: 0 for nu <= 3/4, else 2(nu - 3/4)."""
    if profile not in ("Phi", "Theta"):
        raise ValueError("envelope is defined for Phi and Theta")
    return max(0.0, 2.0 * (nu - NU_CRITICAL_PRIME))


def psi_coefficient() -> float:
    """``(pi^2 + 8) / (2 (pi^2 + 4))``: the Psi bracket coefficient at nu = nu_c."""
    return (math.pi ** 2 + 8.0) / (2.0 * (math.pi ** 2 + 4.0))


def psi_coefficient_check(samples: int = 1000) -> dict:
    """Check the Psi coefficient at the critical coupling and Psi < 0 on samples."""
    computed = NU_CRITICAL / (2.0 * math.pi) * (math.pi ** 2 / 4.0 + 2.0)
    expected = psi_coefficient()
    p = np.geomspace(DEFAULT_RANGE[0], DEFAULT_RANGE[1], samples)
    psi = _profile_values("Psi", p, NU_CRITICAL)
    max_psi = float(np.max(psi))
    passed = abs(computed - expected) <= 1e-14 and computed < 1.0 and max_psi < 0.0
    return {
        "coefficient": computed,
        "closed_form": expected,
        "abs_error": abs(computed - expected),
        "samples": samples,
        "max_psi": max_psi,
        "units": "dimensionless",
        "verdict": "PASS" if passed else "FAIL",
    }


def embedded_threshold(channel: Channel | None, nu: float) -> float:
    """Lower edge (units of ``m c^2``) of the proven eigenvalue-free region.

    ``channel=None`` means the full operator.  For channel (1,-1/2) and the
    full operator this is ``max(1, 2 nu - 1/2)``; every other channel is free
    of eigenvalues from 1 upward while ``nu < nu_c``.  Beyond ``nu_c`` nothing
    is proven for those channels and ``inf`` is returned.
    """
    if not nu >= 0 or not math.isfinite(nu):
        raise ValueError("nu must be finite and >= 0")
    if channel is not None and not isinstance(channel, Channel):
        raise TypeError("channel must be a Channel or None")
    if channel is None or (channel.l == 1 and channel.s < 0):
        return max(1.0, 2.0 * nu - 0.5)
    return 1.0 if nu < NU_CRITICAL else math.inf


# --- sweep ------------------------------------------------------------------

SWEEP_COLUMNS = ("nu", "N", "lambda_min_over_mc2", "lower_bound", "residual_corollary",
                 "residual_theorem", "embedded_verdict", "stable_bound_states",
                 "lower_bound_ok")


def z_sweep(channel: Channel, nus, nodes=DEFAULT_NODES, sigma: float = 1.0,
            tol: float = STABILITY_TOL, mass: float = 1.0, light_speed: float = 1.0,
            alpha: float | None = None, allow_supercritical: bool = False) -> list[dict]:
    """One row per ``(nu, N)``: ground state, lower bound, virial residuals, verdict.

    The ground state on each grid is the lowest eigenvalue when it lies below
    ``m c^2``; otherwise the eigenvalue and residual columns are NaN.
    """
    rows = []
    for nu in nus:
        nu = float(nu)
        kwargs = {} if alpha is None else {"alpha": alpha}
        params = PhysicalParams.from_nu(nu, mass=mass, light_speed=light_speed, **kwargs)
        bound = bound_states(channel, params, nodes, sigma, tol, allow_supercritical)
        scan = embedded_scan(channel, params, nodes, sigma, tol, allow_supercritical,
                             solutions=bound.solutions)
        e0 = params.rest_energy
        lower = bound.lower_bound / e0
        for N, solution in zip(bound.nodes, bound.solutions):
            lam = float(solution.values[0])
            if lam < e0:
                cor, thm = solution_residuals(solution, 0)
                lam_out, rc, rt = lam / e0, cor.relative_residual, thm.relative_residual
                ok = lam_out >= lower - 1e-3
            else:
                lam_out = rc = rt = math.nan
                ok = True
            rows.append({
                "nu": nu,
                "N": N,
                "lambda_min_over_mc2": lam_out,
                "lower_bound": lower,
                "residual_corollary": rc,
                "residual_theorem": rt,
                "embedded_verdict": "PASS" if scan.passed else "FAIL",
                "stable_bound_states": int(bound.stable.sum()),
                "lower_bound_ok": bool(ok),
            })
    return rows
