"""Fixed (non-adaptive) quadrature rules graded toward singular endpoints.

All rules here are deterministic functions of their arguments and scale
exactly with the interval length, which the dilation-covariance checks rely
on.  Nodes are returned as *offsets from the singular end* so that callers can
evaluate integrands in a cancellation-free shifted form.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on (-1, 1), cached and read-only."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def graded_offsets(length: float, depth: int, ratio: float, order: int
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on ``[0, length]`` graded geometrically toward 0.

    Panel breakpoints are ``length * ratio**k`` for ``k = 0..depth`` plus the
    origin, with an ``order``-point Gauss-Legendre rule on every panel.  The
    innermost panel ``[0, length * ratio**depth]`` is integrated as is, so the
    rule suits integrands with integrable logarithmic or algebraic endpoint
    behaviour.

    Returns
    -------
    offsets, weights : ndarray
        Distances from the graded end and matching weights.
    """
    if length <= 0:
        raise ValueError("length must be positive")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    x, w = gauss_legendre(order)
    edges = length * ratio ** np.arange(depth + 1, dtype=float)
    edges = np.append(edges, 0.0)[::-1]  # increasing: 0, L r^depth, ..., L
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    offsets = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return offsets, weights


def two_sided_offsets(left: float, right: float, depth: int, ratio: float, order: int
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Signed offsets for ``[-left, right]`` graded toward an interior point at 0."""
    parts_s, parts_w = [], []
    if left > 0:
        s, w = graded_offsets(left, depth, ratio, order)
        parts_s.append(-s)
        parts_w.append(w)
    if right > 0:
        s, w = graded_offsets(right, depth, ratio, order)
        parts_s.append(s)
        parts_w.append(w)
    return np.concatenate(parts_s), np.concatenate(parts_w)


def exp_trapezoid(step: float, y_min: float, y_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoid nodes for ``int_1^inf f(u) du`` under ``u = 1 + exp(y)``.

    Returns ``(u - 1, weights)``; the Jacobian ``exp(y)`` is folded into the
    weights.  The transformed integrand decays exponentially at both ends for
    the logarithmic and power-law profiles used in this package, so the
    trapezoid rule converges geometrically in ``1/step``.
    """
    y = np.arange(y_min, y_max + 0.5 * step, step)
    s = np.exp(y)
    w = np.full_like(y, step) * s
    w[0] *= 0.5
    w[-1] *= 0.5
    return s, w
