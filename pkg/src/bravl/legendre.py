"""Legendre functions of the second kind on (1, inf) and the kernel profiles.

``Q_l(t)`` is evaluated from the shifted argument ``d = t - 1`` so that callers
which know ``d`` in closed form (the partial-wave kernels, where
``d = (p - p')**2 / (2 p p')``) never lose it to cancellation.

Two evaluation paths are used:

* ``t < T_SWITCH``: forward three-term recurrence started from the closed
  forms of ``Q_0`` and ``Q_1``.  The recurrence is mildly unstable for
  ``t > 1`` (``Q_l`` is the recessive solution) but the error growth is
  bounded by ``(t + sqrt(t**2 - 1))**(2 l + 1)``, which stays below ~1e4 for
  ``l <= L_MAX + 1`` on this branch.
* ``t >= T_SWITCH``: the hypergeometric series in ``1/t**2``, which converges
  geometrically there and has no cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import exp_trapezoid, graded_offsets

L_MAX = 12
T_SWITCH = 1.1
NEAR_SINGULAR = 1e-12

_SERIES_TOL = 1e-17
_SERIES_MAX_TERMS = 2000


def _check_order(l: int) -> int:
    if int(l) != l or l < 0:
        raise ValueError(f"Legendre order must be a nonnegative integer, got {l!r}")
    if l > L_MAX + 1:
        raise ValueError(f"Legendre order {l} exceeds the supported maximum {L_MAX + 1}")
    return int(l)


def _q_recurrence(l: int, d: np.ndarray) -> np.ndarray:
    t = 1.0 + d
    q_prev = 0.5 * np.log1p(2.0 / d)
    if l == 0:
        return q_prev
    q = t * q_prev - 1.0
    for n in range(1, l):
        q_prev, q = q, ((2 * n + 1) * t * q - n * q_prev) / (n + 1)
    return q


def _q_series(l: int, d: np.ndarray) -> np.ndarray:
    t = 1.0 + d
    z = 1.0 / (t * t)
    a, b, c = 0.5 * (l + 1), 0.5 * (l + 2), l + 1.5
    # sqrt(pi) l! / (Gamma(l + 3/2) 2^(l+1)), via lgamma to stay finite
    log_pref = (0.5 * math.log(math.pi) + math.lgamma(l + 1)
                - math.lgamma(l + 1.5) - (l + 1) * math.log(2.0))
    term = np.ones_like(z)
    total = np.ones_like(z)
    for k in range(_SERIES_MAX_TERMS):
        term = term * ((a + k) * (b + k) / ((c + k) * (k + 1))) * z
        total = total + term
        if np.all(term <= _SERIES_TOL * total):
            break
    else:  # pragma: no cover - z <= 1/T_SWITCH**2 bounds the term count
        raise RuntimeError("hypergeometric series for Q_l did not converge")
    return math.exp(log_pref) * total * t ** (-(l + 1))


def q_shifted(l: int, d) -> np.ndarray:
    """Evaluate ``Q_l(1 + d)`` for ``d > 0`` without a near-singularity guard.

    Intended for kernel code that resolves the logarithmic singularity
    itself.  Accepts scalars or arrays; always returns an ndarray.
    """
    l = _check_order(l)
    d = np.asarray(d, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("Q_l requires t - 1 > 0")
    out = np.empty_like(d)
    near = d < (T_SWITCH - 1.0)
    if np.any(near):
        out[near] = _q_recurrence(l, d[near])
    if np.any(~near):
        out[~near] = _q_series(l, d[~near])
    return out


def legendre_q(l: int, t, t_minus_1=None):
    """Legendre function of the second kind ``Q_l(t)`` for real ``t > 1``.

    Parameters
    ----------
    l : int
        Order, ``0 <= l <= L_MAX``.
    t : float or array_like
        Argument, strictly greater than one.
    t_minus_1 : float or array_like, optional
        ``t - 1`` computed by the caller without cancellation.  When given it
        takes precedence over ``t``.

    Returns
    -------
    float or ndarray
        Same shape as the input.

    Raises
    ------
    ValueError
        If ``l`` is out of range, ``t <= 1``, or ``t - 1 < 1e-12``.
    """
    if int(l) != l or l < 0 or l > L_MAX:
        raise ValueError(f"Legendre order must be an integer in [0, {L_MAX}], got {l!r}")
    if t_minus_1 is None:
        t_arr = np.asarray(t, dtype=float)
        if np.any(~(t_arr > 1.0)):
            raise ValueError("Q_l(t) is only defined here for t > 1")
        d = t_arr - 1.0
    else:
        d = np.asarray(t_minus_1, dtype=float)
        if np.any(~(d > 0)):
            raise ValueError("Q_l(t) is only defined here for t > 1")
    if np.any(d < NEAR_SINGULAR):
        raise ValueError(
            f"t - 1 = {float(np.min(d)):.3g} is below {NEAR_SINGULAR:g}; "
            "the logarithmic singularity at t = 1 must be handled by the caller"
        )
    out = q_shifted(l, d)
    return float(out) if out.ndim == 0 else out


def profile_shift(u) -> np.ndarray:
    """``(u + 1/u)/2 - 1 = (u - 1)**2 / (2u)``, free of cancellation near u = 1."""
    u = np.asarray(u, dtype=float)
    return (u - 1.0) ** 2 / (2.0 * u)


def g_profile(l: int, u):
    """Kernel profile ``g_l(u) = Q_l((u + 1/u)/2)`` for ``u > 0``, ``u != 1``.

    ``g_0(u) = ln|(u + 1)/(u - 1)|``.  The profile is symmetric under
    ``u -> 1/u``.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any(~(u_arr > 0)) or np.any(u_arr == 1.0):
        raise ValueError("g_l(u) requires u > 0 and u != 1")
    if int(l) != l or l < 0 or l > L_MAX:
        raise ValueError(f"Legendre order must be an integer in [0, {L_MAX}], got {l!r}")
    out = q_shifted(l, profile_shift(u_arr))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# closed-form integral identities of the kernel profiles
# ---------------------------------------------------------------------------

DEFAULT_LEVEL = 3
CONVERGENCE_TOL = 1e-10


@dataclass(frozen=True)
class IdentityResult:
    """One numerically evaluated identity.

    ``abs_error`` is ``|computed - reference|``.  ``refinement`` is the change
    in ``computed`` when the quadrature level is raised by one; ``converged``
    is true when that change is below ``CONVERGENCE_TOL``.
    """

    identity: str
    computed: float
    reference: float
    abs_error: float
    level: int
    refinement: float
    converged: bool
    description: str = ""

    @property
    def rel_error(self) -> float:
        return self.abs_error / abs(self.reference) if self.reference else self.abs_error

    def to_dict(self) -> dict:
        return {
            "identity": self.identity,
            "description": self.description,
            "computed": self.computed,
            "reference": self.reference,
            "abs_error": self.abs_error,
            "rel_error": self.rel_error,
            "level": self.level,
            "refinement": self.refinement,
            "converged": self.converged,
        }


def _g(l: int, u: np.ndarray, u_minus_1: np.ndarray) -> np.ndarray:
    return q_shifted(l, u_minus_1 * u_minus_1 / (2.0 * u))


def _level_params(level: int) -> tuple[int, float, int, float]:
    """(grading depth, grading ratio, Gauss order, tail trapezoid step)."""
    if level < 1:
        raise ValueError("quadrature level must be >= 1")
    return 12 * level, 0.15, 4 + 4 * level, 1.0 / 2 ** (level - 1)


def _unit_interval(f, level: int) -> float:
    """``int_0^1 f(u, u - 1) du`` with grading toward both endpoints."""
    depth, ratio, order, _ = _level_params(level)
    s, w = graded_offsets(0.5, depth, ratio, order)
    lower = np.sum(w * f(s, s - 1.0))
    upper = np.sum(w * f(1.0 - s, -s))
    return float(lower + upper)


def _tail(f, level: int) -> float:
    """``int_1^inf f(u, u - 1) du`` through ``u = 1 + exp(y)``, no folding."""
    _, _, _, step = _level_params(level)
    s, w = exp_trapezoid(step, -36.0, 90.0)
    return float(np.sum(w * f(1.0 + s, s)))


_IDENTITIES = {
    # id: (reference, description, evaluator(level))
    "g1_over_u": (
        2.0,
        "int_0^inf g_1(u)/u du (folded)",
        lambda L: 2.0 * _unit_interval(lambda u, d: _g(1, u, d) / u, L),
    ),
    "g1_unit_interval": (
        math.pi ** 2 / 8 - 0.5,
        "int_0^1 g_1(u) du",
        lambda L: _unit_interval(lambda u, d: _g(1, u, d), L),
    ),
    "g1_tail": (
        math.pi ** 2 / 8 + 0.5,
        "int_1^inf g_1(u) du (folded onto (0,1))",
        lambda L: _unit_interval(lambda u, d: _g(1, u, d) / (u * u), L),
    ),
    "g1_over_u2": (
        math.pi ** 2 / 4,
        "int_0^inf g_1(u)/u^2 du (unfolded tail)",
        lambda L: (_unit_interval(lambda u, d: _g(1, u, d) / (u * u), L)
                   + _tail(lambda u, d: _g(1, u, d) / (u * u), L)),
    ),
    "g1_total": (
        math.pi ** 2 / 4,
        "int_0^inf g_1(u) du (folded)",
        lambda L: _unit_interval(lambda u, d: _g(1, u, d) * (1.0 + 1.0 / (u * u)), L),
    ),
    "g0_halfpower": (
        2.0 * math.pi,
        "int_0^inf g_0(u) u^(-1/2) du (folded)",
        lambda L: _unit_interval(lambda u, d: _g(0, u, d) * (u ** -0.5 + u ** -1.5), L),
    ),
    "g0_threehalfpower": (
        2.0 * math.pi,
        "int_0^inf g_0(u) u^(-3/2) du (unfolded tail)",
        lambda L: (_unit_interval(lambda u, d: _g(0, u, d) * u ** -1.5, L)
                   + _tail(lambda u, d: _g(0, u, d) * u ** -1.5, L)),
    ),
    "g0_reflection_inner": (
        None,
        "int_0^1 g_0 u^(-1/2) du against int_1^inf g_0 u^(-3/2) du",
        (lambda L: _unit_interval(lambda u, d: _g(0, u, d) * u ** -0.5, L),
         lambda L: _tail(lambda u, d: _g(0, u, d) * u ** -1.5, L)),
    ),
    "g0_reflection_outer": (
        None,
        "int_1^inf g_0 u^(-1/2) du against int_0^1 g_0 u^(-3/2) du",
        (lambda L: _tail(lambda u, d: _g(0, u, d) * u ** -0.5, L),
         lambda L: _unit_interval(lambda u, d: _g(0, u, d) * u ** -1.5, L)),
    ),
}

IDENTITY_IDS = tuple(_IDENTITIES)


def verify_identities(level: int = DEFAULT_LEVEL) -> list[IdentityResult]:
    """Evaluate every closed-form profile identity at the given quadrature level.

    Reflection equalities carry the right-hand integral as their reference.
    Nothing is raised on poor accuracy; inspect ``abs_error`` and
    ``converged`` instead.
    """
    _level_params(level)
    results = []
    for name, (reference, description, evaluator) in _IDENTITIES.items():
        if reference is None:
            lhs, rhs = evaluator
            value, ref = lhs(level), rhs(level)
            finer = lhs(level + 1) - rhs(level + 1)
            refinement = abs(finer - (value - ref))
        else:
            value, ref = evaluator(level), reference
            refinement = abs(evaluator(level + 1) - value)
        results.append(IdentityResult(
            identity=name,
            computed=value,
            reference=ref,
            abs_error=abs(value - ref),
            level=level,
            refinement=refinement,
            converged=bool(refinement < CONVERGENCE_TOL),
            description=description,
        ))
    return results


def convolution_integral(p: float, exponent: float, level: int = DEFAULT_LEVEL) -> float:
    """``int_{R^3} |p - p'|^-2 |p'|^-exponent dp'`` for ``1 < exponent < 3``.

    The angular integration is done in closed form,
    ``int dOmega / |p - p'|^2 = 2 pi g_0(p'/p) / (p p')``, leaving a radial
    integral in ``p'`` that is split at ``p' = p``.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    if not 1.0 < exponent < 3.0:
        raise ValueError("the integral converges only for 1 < exponent < 3")

    def radial(u, d):
        # integrand in p' = p u, including dp' = p du
        return (2.0 * math.pi / p) * (p * u) ** (1.0 - exponent) * _g(0, u, d) * p

    return _unit_interval(radial, level) + _tail(radial, level)


def verify_convolution_identities(p_samples=(1.0, 4.0), level: int = DEFAULT_LEVEL
                                  ) -> list[IdentityResult]:
    """Check the two radial convolution formulas ``4 pi^2 p^-1/2`` and ``4 pi^2 p^-3/2``."""
    results = []
    for p in p_samples:
        p = float(p)
        if p <= 0:
            raise ValueError("p samples must be positive")
        for exponent, power in ((1.5, -0.5), (2.5, -1.5)):
            value = convolution_integral(p, exponent, level)
            refinement = abs(convolution_integral(p, exponent, level + 1) - value)
            reference = 4.0 * math.pi ** 2 * p ** power
            results.append(IdentityResult(
                identity=f"convolution_{exponent:g}_p{p:g}",
                computed=value,
                reference=reference,
                abs_error=abs(value - reference),
                level=level,
                refinement=refinement,
                converged=bool(refinement < CONVERGENCE_TOL * max(1.0, abs(reference))),
                description=f"int |p-p'|^-2 |p'|^-{exponent:g} dp' at p={p:g}",
            ))
    return results
