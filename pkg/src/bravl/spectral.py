"""Eigendecomposition of channel matrices and grid-refinement classification.

A discrete eigenvalue is *grid-stable* when the eigenvalue with the same index
moves by less than ``tol * |lambda - m c^2|`` between the two finest grids of
a refinement sequence.  Measuring drift against the distance to the
continuum edge is what separates converged bound states from the
discretized continuum: continuum pseudo-eigenvalues sit at ``e(p_i)`` for
nodes that move with ``N``, so their distance to ``m c^2`` changes by O(1)
relative amounts even when the absolute change is tiny.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

from .channel import Channel, ChannelMatrix, MomentumGrid, assemble, build_grid, \
    weighted_kernel_matrices
from .kinematics import NU_CRITICAL, NU_CRITICAL_PRIME, PhysicalParams, energy

DEFAULT_NODES = (100, 200, 400)
STABILITY_TOL = 1e-4
RESIDUAL_TOL = 1e-9


class SupercriticalWarning(UserWarning):
    """Results in a regime where the discrete model selects an arbitrary extension."""


@dataclass(frozen=True)
class EigenSolution:
    """Full eigendecomposition of one :class:`ChannelMatrix`.

    Eigenvalues are ascending.  ``vectors[:, k]`` is orthonormal in the
    symmetrized (``sqrt(w)``-scaled) basis; :meth:`node_samples` converts to
    values of the reduced radial function at the grid nodes.
    """

    matrix: ChannelMatrix
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    matrix_norm: float

    @property
    def channel(self) -> Channel:
        return self.matrix.channel

    @property
    def grid(self) -> MomentumGrid:
        return self.matrix.grid

    def node_samples(self, k: int) -> np.ndarray:
        return self.vectors[:, k] / np.sqrt(self.grid.weights)

    def max_relative_residual(self) -> float:
        return float(np.max(self.residuals) / self.matrix_norm) if self.matrix_norm else 0.0

    def summary(self, rest_energy: float | None = None) -> dict:
        rest = self.matrix.params.rest_energy if rest_energy is None else rest_energy
        unit = rest if rest > 0 else self.grid.sigma * self.matrix.params.light_speed
        return {
            "channel": self.channel.to_dict(),
            "grid": self.grid.describe(),
            "units": "mc2" if rest > 0 else "c_sigma",
            "eigenvalues": (self.values / unit).tolist(),
            "residuals": self.residuals.tolist(),
            "matrix_norm": self.matrix_norm,
        }


def eigendecompose(matrix: ChannelMatrix) -> EigenSolution:
    """Dense symmetric eigendecomposition with per-pair residual norms."""
    A = np.asarray(matrix.matrix)
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("channel matrix has non-finite entries")
    if A.shape[0] != A.shape[1] or not np.array_equal(A, A.T):
        raise ValueError("channel matrix must be square and exactly symmetric")
    values, vectors = scipy.linalg.eigh(A)
    residuals = np.linalg.norm(A @ vectors - vectors * values[None, :], axis=0)
    return EigenSolution(matrix, values, vectors, residuals, float(np.linalg.norm(A, 2)))


@lru_cache(maxsize=48)
def _cached_kernels(channel: Channel, N: int, sigma: float, mass: float, light_speed: float):
    grid = build_grid(N, sigma=sigma)
    params = PhysicalParams(mass=mass, light_speed=light_speed)
    return grid, weighted_kernel_matrices(channel, grid, params)


def channel_matrix(channel: Channel, N: int, params: PhysicalParams,
                   sigma: float = 1.0) -> ChannelMatrix:
    """Assemble on a fresh rational grid, reusing Z-independent kernels."""
    grid, kernels = _cached_kernels(channel, int(N), float(sigma), params.mass,
                                    params.light_speed)
    return assemble(channel, grid, params, kernels=kernels)


def _check_sequence(nodes) -> tuple[int, ...]:
    nodes = tuple(int(n) for n in nodes)
    if len(nodes) < 3:
        raise ValueError("refinement needs at least three grids")
    if any(b <= a for a, b in zip(nodes, nodes[1:])):
        raise ValueError("node counts must be strictly increasing")
    return nodes


def _check_coupling(channel: Channel, params: PhysicalParams, allow_supercritical: bool) -> bool:
    """Validate ``nu`` and return whether results are authoritative."""
    if params.nu >= NU_CRITICAL and not allow_supercritical:
        raise ValueError(
            f"alpha Z = {params.nu:.6g} is not below the critical value {NU_CRITICAL:.6g}")
    if channel.is_critical and params.nu > NU_CRITICAL_PRIME:
        warnings.warn(
            f"channel {channel.label()} at alpha Z = {params.nu:.4g} > 3/4 has a family of "
            "self-adjoint extensions; the discrete result is not authoritative",
            SupercriticalWarning, stacklevel=3)
        return False
    return params.nu < NU_CRITICAL


def _drift(fine: float, coarse: float, threshold: float) -> float:
    scale = abs(fine - threshold)
    delta = abs(fine - coarse)
    if scale == 0.0:
        return math.inf if delta else 0.0
    return delta / scale


@dataclass(frozen=True)
class BoundStateSet:
    """Eigenvalues below ``m c^2`` on the finest grid and their refinement history.

    ``history[k]`` lists eigenvalue ``k`` on every grid of ``nodes``;
    ``drifts[k]`` the scaled changes between consecutive grids (``inf`` when a
    coarser grid has no eigenvalue with that index).
    """

    channel: Channel
    params: PhysicalParams
    nodes: tuple[int, ...]
    sigma: float
    tol: float
    values: np.ndarray
    stable: np.ndarray
    history: list[list[float]]
    drifts: list[list[float]]
    authoritative: bool = True
    solutions: list[EigenSolution] = field(default_factory=list, repr=False, compare=False)

    @property
    def stable_values(self) -> np.ndarray:
        return self.values[self.stable]

    @property
    def lower_bound(self) -> float:
        """``(1 - Z/Z_c) m c^2``."""
        return (1.0 - self.params.nu / NU_CRITICAL) * self.params.rest_energy

    def to_dict(self) -> dict:
        unit = self.params.rest_energy or 1.0
        return {
            "channel": self.channel.to_dict(),
            "nu": self.params.nu,
            "nodes": list(self.nodes),
            "sigma": self.sigma,
            "stability_tol": self.tol,
            "units": "mc2",
            "lower_bound": self.lower_bound / unit,
            "authoritative": self.authoritative,
            "states": [
                {"index": k, "eigenvalue": float(v / unit), "stable": bool(s),
                 "history": [h / unit for h in self.history[k]], "drift": self.drifts[k]}
                for k, (v, s) in enumerate(zip(self.values, self.stable))
            ],
        }


def _solve_sequence(channel, params, nodes, sigma):
    return [eigendecompose(channel_matrix(channel, N, params, sigma)) for N in nodes]


def _classify(solutions, indices, threshold):
    history, drifts = [], []
    for k in indices:
        vals = [float(s.values[k]) if k < s.values.size else math.nan for s in solutions]
        steps = []
        for coarse, fine in zip(vals, vals[1:]):
            steps.append(math.inf if math.isnan(coarse) else _drift(fine, coarse, threshold))
        history.append(vals)
        drifts.append(steps)
    return history, drifts


def bound_states(channel: Channel, params: PhysicalParams, nodes=DEFAULT_NODES,
                 sigma: float = 1.0, tol: float = STABILITY_TOL,
                 allow_supercritical: bool = False) -> BoundStateSet:
    """Classify the eigenvalues below ``m c^2`` under grid refinement."""
    nodes = _check_sequence(nodes)
    authoritative = _check_coupling(channel, params, allow_supercritical)
    solutions = _solve_sequence(channel, params, nodes, sigma)
    threshold = params.rest_energy
    finest = solutions[-1].values
    below = np.flatnonzero(finest < threshold)
    history, drifts = _classify(solutions, below, threshold)
    stable = np.array([d[-1] < tol for d in drifts], dtype=bool)
    return BoundStateSet(channel, params, nodes, float(sigma), tol, finest[below].copy(),
                         stable, history, drifts, authoritative, solutions)


@dataclass(frozen=True)
class EmbeddedScan:
    """Grid-stable eigenvalues at or above the continuum edge ``m c^2``.

    ``threshold`` is the lower edge of the proven eigenvalue-free region;
    ``violations`` are the stable eigenvalues inside it.
    """

    channel: Channel
    params: PhysicalParams
    nodes: tuple[int, ...]
    threshold: float
    stable_values: np.ndarray
    candidates: int
    violations: np.ndarray
    authoritative: bool = True

    @property
    def passed(self) -> bool:
        return self.violations.size == 0

    def to_dict(self) -> dict:
        unit = self.params.rest_energy or 1.0
        return {
            "channel": self.channel.to_dict(),
            "nu": self.params.nu,
            "nodes": list(self.nodes),
            "units": "mc2",
            "threshold": self.threshold / unit,
            "candidates_at_or_above_mc2": self.candidates,
            "stable_at_or_above_mc2": (self.stable_values / unit).tolist(),
            "violations": (self.violations / unit).tolist(),
            "verdict": "PASS" if self.passed else "FAIL",
            "authoritative": self.authoritative,
        }


def embedded_scan(channel: Channel, params: PhysicalParams, nodes=DEFAULT_NODES,
                  sigma: float = 1.0, tol: float = STABILITY_TOL,
                  allow_supercritical: bool = False, solutions=None) -> EmbeddedScan:
    """Look for grid-stable eigenvalues in ``[m c^2, inf)``.

    Passing ``solutions`` (from :func:`bound_states`) skips re-solving.
    """
    from .virial import embedded_threshold

    nodes = _check_sequence(nodes)
    authoritative = _check_coupling(channel, params, allow_supercritical)
    if solutions is None:
        solutions = _solve_sequence(channel, params, nodes, sigma)
    rest = params.rest_energy
    finest = solutions[-1].values
    above = np.flatnonzero(finest >= rest)
    _, drifts = _classify(solutions, above, rest)
    stable = np.array([d[-1] < tol for d in drifts], dtype=bool)
    stable_values = finest[above][stable] if above.size else np.empty(0)
    threshold = embedded_threshold(channel, params.nu) * rest
    violations = stable_values[stable_values >= threshold]
    return EmbeddedScan(channel, params, nodes, threshold, stable_values,
                        int(above.size), violations, authoritative)


def relative_bound_ratio(channel: Channel, grid: MomentumGrid, params: PhysicalParams,
                         kernels=None) -> float:
    """Largest eigenvalue of ``E^-1/2 (alpha c Z / pi) W E^-1/2``.

    The continuous form satisfies ``gamma k[u] <= (Z / Z_c) e[u]``, so at
    ``Z = Z_c`` the discrete ratio should approach 1 from below.
    """
    if kernels is None:
        kernels = weighted_kernel_matrices(channel, grid, params)
    k1, k2 = kernels
    scale = 1.0 / np.sqrt(np.asarray(energy(grid.nodes, params), dtype=float))
    B = params.channel_coupling * (k1 + k2) * scale[:, None] * scale[None, :]
    B = np.triu(B) + np.triu(B, 1).T
    return float(scipy.linalg.eigh(B, eigvals_only=True, subset_by_index=[grid.size - 1,
                                                                           grid.size - 1])[0])
