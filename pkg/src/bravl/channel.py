"""Partial-wave kernels, momentum grids and Nystrom assembly of ``b_{l,s}``.

The quadratic form of a channel operator is

    int e(p) |phi(p)|^2 dp - (alpha c Z / pi) int int conj(phi(p')) k(p', p) phi(p) dp' dp

with ``k = k1 + k2``.  On a quadrature grid ``(p_i, w_i)`` it becomes the
symmetric matrix ``A = diag(e(p_i)) - (alpha c Z / pi) W`` where
``W_ij = sqrt(w_i w_j) k(p_i, p_j)`` off the diagonal.  The kernel has a
logarithmic singularity at ``p' = p``; the diagonal entry is a locally
integrated value (see :func:`diagonal_kernel`).  Eigenvectors ``v`` of ``A``
map to node samples ``phi_i = v_i / sqrt(w_i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import PhysicalParams, energy, normalizer, pauli_dot
from .legendre import L_MAX, q_shifted
from .quadrature import gauss_legendre, two_sided_offsets

MAP_NAMES = ("rational",)

# local rule for the singular diagonal integrals
CELL_DEPTH = 30
CELL_RATIO = 0.15
CELL_ORDER = 12

PARTS = ("k1", "k2", "full")


@dataclass(frozen=True)
class Channel:
    """Partial-wave label ``(l, s)`` with ``s = +1/2`` or ``-1/2``."""

    l: int
    s: float

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 0:
            raise ValueError(f"l must be a nonnegative integer, got {self.l!r}")
        if self.s not in (0.5, -0.5):
            raise ValueError(f"s must be +1/2 or -1/2, got {self.s!r}")
        if self.l + 2 * self.s < 0:
            raise ValueError("channel (0, -1/2) does not exist (its spherical spinor vanishes)")
        if self.l > L_MAX:
            raise ValueError(f"l = {self.l} exceeds L_MAX = {L_MAX}")
        object.__setattr__(self, "l", int(self.l))
        object.__setattr__(self, "s", float(self.s))

    @property
    def spin_order(self) -> int:
        """Order ``l + 2s`` of the Legendre function in ``k2``."""
        return int(round(self.l + 2 * self.s))

    @property
    def is_critical(self) -> bool:
        """True for the two channels whose bound saturates at ``Z_c``."""
        return (self.l, self.s) in ((0, 0.5), (1, -0.5))

    @classmethod
    def parse(cls, text: str) -> "Channel":
        """Parse ``"L,S"`` where ``S`` is ``1/2``, ``-1/2``, ``0.5`` or ``-0.5``."""
        try:
            l_txt, s_txt = (part.strip() for part in text.split(","))
            if "/" in s_txt:
                num, den = s_txt.split("/")
                s = float(num) / float(den)
            else:
                s = float(s_txt)
            return cls(int(l_txt), s)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"cannot parse channel {text!r}: {exc}") from None

    def label(self) -> str:
        return f"{self.l},{'+' if self.s > 0 else '-'}1/2"

    def to_dict(self) -> dict:
        return {"l": self.l, "s": self.s}


@dataclass(frozen=True)
class MomentumGrid:
    """Quadrature nodes and weights on ``(0, inf)``.

    ``reference_nodes``/``reference_weights`` are the Gauss-Legendre rule on
    (-1, 1) that the map ``p = sigma (1 + x) / (1 - x)`` transports.
    """

    nodes: np.ndarray
    weights: np.ndarray
    map_name: str
    sigma: float
    reference_nodes: np.ndarray = field(repr=False)
    reference_weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.nodes, self.weights, self.reference_nodes, self.reference_weights):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return self.nodes.size

    def scaled(self, a: float) -> "MomentumGrid":
        """The dilated grid ``{a p_i}``, ``{a w_i}`` (map scale ``a sigma``)."""
        return MomentumGrid(self.nodes * a, self.weights * a, self.map_name, self.sigma * a,
                            self.reference_nodes.copy(), self.reference_weights.copy())

    def cell_edges(self) -> np.ndarray:
        """Voronoi cell boundaries ``b_0 = 0 < b_1 < ... < b_N``.

        Interior boundaries are node midpoints.  The last cell is unbounded
        as a Voronoi cell; it is closed symmetrically about the last node.
        """
        p = self.nodes
        mid = 0.5 * (p[1:] + p[:-1])
        return np.concatenate(([0.0], mid, [2.0 * p[-1] - mid[-1]]))

    def momentum_offset(self, i, s):
        """``P(x_i + s) - p_i`` computed without cancellation."""
        x_i = self.reference_nodes[i]
        return self.sigma * 2.0 * s / ((1.0 - x_i - s) * (1.0 - x_i))

    def describe(self) -> dict:
        return {"N": self.size, "map": self.map_name, "sigma": self.sigma}


def build_grid(N: int, map_name: str = "rational", sigma: float = 1.0) -> MomentumGrid:
    """Gauss-Legendre rule mapped to ``(0, inf)`` by ``p = sigma (1 + x) / (1 - x)``."""
    if int(N) != N or N < 8:
        raise ValueError("grid needs at least 8 nodes")
    if map_name not in MAP_NAMES:
        raise ValueError(f"unknown map {map_name!r}; choose from {MAP_NAMES}")
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ValueError("map scale sigma must be positive")
    x, w = gauss_legendre(int(N))
    one_minus = 1.0 - x
    nodes = sigma * (1.0 + x) / one_minus
    weights = w * 2.0 * sigma / one_minus ** 2
    return MomentumGrid(nodes, weights, map_name, float(sigma), x.copy(), w.copy())


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def _spin_factors(p: np.ndarray, params: PhysicalParams) -> tuple[np.ndarray, np.ndarray]:
    """``[e(p) + e(0)] / n(p)`` and ``c p / n(p)``."""
    e = np.asarray(energy(p, params))
    e0 = params.rest_energy
    n = np.sqrt(2.0 * e * (e + e0))
    return np.sqrt((e + e0) / (2.0 * e)), params.light_speed * p / n


def _kernel_parts(channel: Channel, p_prime, p, params: PhysicalParams, diff=None
                  ) -> tuple[np.ndarray, np.ndarray]:
    p_prime = np.asarray(p_prime, dtype=float)
    p = np.asarray(p, dtype=float)
    if diff is None:
        diff = p_prime - p
    d = diff * diff / (2.0 * p * p_prime)
    a_prime, b_prime = _spin_factors(p_prime, params)
    a, b = _spin_factors(p, params)
    k1 = a_prime * q_shifted(channel.l, d) * a
    k2 = b_prime * q_shifted(channel.spin_order, d) * b
    return k1, k2


def _check_pair(p_prime, p):
    p_prime = np.asarray(p_prime, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(~(p_prime > 0)) or np.any(~(p > 0)):
        raise ValueError("kernel arguments must be positive momenta")
    if np.any(p_prime == p):
        raise ValueError("kernel is singular at p' = p; use diagonal_kernel")
    return p_prime, p


def _unwrap(x):
    return float(x) if np.ndim(x) == 0 else x


def kernel_k1(l: int, p_prime, p, params: PhysicalParams):
    """``[e(p')+e(0)] Q_l(t) [e(p)+e(0)] / (n(p') n(p))`` with ``t = (p'/p + p/p')/2``."""
    p_prime, p = _check_pair(p_prime, p)
    a_prime, _ = _spin_factors(p_prime, params)
    a, _ = _spin_factors(p, params)
    diff = p_prime - p
    return _unwrap(a_prime * q_shifted(l, diff * diff / (2.0 * p * p_prime)) * a)


def kernel_k2(channel: Channel, p_prime, p, params: PhysicalParams):
    """``c^2 p' Q_{l+2s}(t) p / (n(p') n(p))``."""
    p_prime, p = _check_pair(p_prime, p)
    return _unwrap(_kernel_parts(channel, p_prime, p, params)[1])


def kernel(channel: Channel, p_prime, p, params: PhysicalParams):
    """Full partial-wave kernel ``k1 + k2``."""
    p_prime, p = _check_pair(p_prime, p)
    k1, k2 = _kernel_parts(channel, p_prime, p, params)
    return _unwrap(k1 + k2)


@dataclass(frozen=True)
class FullKernel:
    """3D kernel matrix ``K = K1 + K2`` at one pair of momentum vectors."""

    K1: np.ndarray
    K2: np.ndarray

    @property
    def K(self) -> np.ndarray:
        return self.K1 + self.K2


def kernel_full(p_prime, p, params: PhysicalParams) -> FullKernel:
    """The 2x2 kernel of the three-dimensional form and its two parts.

    ``K(p', p) = K(p, p')^dagger`` holds for real vectors.
    """
    p_prime = np.asarray(p_prime, dtype=float)
    p = np.asarray(p, dtype=float)
    if p_prime.shape != (3,) or p.shape != (3,):
        raise ValueError("kernel_full expects two 3-vectors")
    dist2 = float(np.sum((p - p_prime) ** 2))
    if dist2 == 0.0:
        raise ValueError("kernel_full is singular at p' = p")
    r_prime, r = float(np.linalg.norm(p_prime)), float(np.linalg.norm(p))
    e0 = params.rest_energy
    denom = normalizer(r_prime, params) * dist2 * normalizer(r, params)
    scalar = (energy(r_prime, params) + e0) * (energy(r, params) + e0) / denom
    K1 = scalar * np.eye(2, dtype=complex)
    K2 = params.light_speed ** 2 * (pauli_dot(p_prime) @ pauli_dot(p)) / denom
    return FullKernel(K1, K2)


@dataclass(frozen=True)
class MassDifferenceReport:
    """Counts against the bracket bound and against the sharp bound.

    ``passed`` refers to the bracket bound of :func:`mass_difference_bound`.
    """

    samples: int
    violations: int
    max_ratio: float
    max_difference: float
    sharp_violations: int = 0
    max_sharp_ratio: float = 0.0

    @property
    def passed(self) -> bool:
        return self.violations == 0


def mass_difference_bound(p_prime, p, mass: float, light_speed: float = 1.0) -> float:
    """Right-hand side ``|p-p'|^-2 {m/(2e(p)) + m/(2e(p')) + m^2/(4 e(p) e(p'))}``.

    ``m`` enters as the rest energy ``m c^2``, the only reading under which the
    bracket is dimensionless; at ``c = 1`` the two readings coincide.
    """
    params = PhysicalParams(mass=mass, light_speed=light_speed)
    mc2 = params.rest_energy
    e, e_prime = energy(np.linalg.norm(p), params), energy(np.linalg.norm(p_prime), params)
    dist2 = float(np.sum((np.asarray(p) - np.asarray(p_prime)) ** 2))
    return (mc2 / (2 * e) + mc2 / (2 * e_prime) + mc2 ** 2 / (4 * e * e_prime)) / dist2


def mass_difference_sharp_bound(p_prime, p, mass: float, light_speed: float = 1.0) -> float:
    """Angle-free supremum of ``|K_m - K_0|`` at the radii ``|p'|``, ``|p|``.

    With ``x = m c^2 / e(p)`` the difference is ``a Id + b U`` where ``U`` is
    unitary, ``a = (sqrt((1+x')(1+x)) - 1)/2 >= 0`` and
    ``b = (sqrt((1-x')(1-x)) - 1)/2 <= 0``; its norm ``|a| + |b|`` over
    ``|p - p'|^2`` is attained for antiparallel vectors.
    """
    params = PhysicalParams(mass=mass, light_speed=light_speed)
    mc2 = params.rest_energy
    x = mc2 / energy(float(np.linalg.norm(p)), params)
    x_prime = mc2 / energy(float(np.linalg.norm(p_prime)), params)
    dist2 = float(np.sum((np.asarray(p) - np.asarray(p_prime)) ** 2))
    spread = math.sqrt((1 + x_prime) * (1 + x)) - math.sqrt((1 - x_prime) * (1 - x))
    return 0.5 * spread / dist2


def mass_difference_bound_check(pairs, mass: float, light_speed: float = 1.0
                                ) -> MassDifferenceReport:
    """Compare the operator norm of ``K_m - K_0`` with its bound on sampled pairs.

    ``pairs`` is an iterable of ``(p', p)`` 3-vector pairs.  Violations are
    counted, not raised.
    """
    massive = PhysicalParams(mass=mass, light_speed=light_speed)
    massless = PhysicalParams(mass=0.0, light_speed=light_speed)
    count = violations = sharp_violations = 0
    max_ratio = max_diff = max_sharp = 0.0
    for p_prime, p in pairs:
        diff = kernel_full(p_prime, p, massive).K - kernel_full(p_prime, p, massless).K
        norm = float(np.linalg.norm(diff, 2))
        bound = mass_difference_bound(p_prime, p, mass, light_speed)
        sharp = mass_difference_sharp_bound(p_prime, p, mass, light_speed)
        count += 1
        max_diff = max(max_diff, norm)
        if bound > 0:
            max_ratio = max(max_ratio, norm / bound)
        if sharp > 0:
            max_sharp = max(max_sharp, norm / sharp)
        if norm > bound * (1 + 1e-12) + 1e-300:
            violations += 1
        if norm > sharp * (1 + 1e-10) + 1e-300:
            sharp_violations += 1
    return MassDifferenceReport(count, violations, max_ratio, max_diff,
                                sharp_violations, max_sharp)


# ---------------------------------------------------------------------------
# Nystrom assembly
# ---------------------------------------------------------------------------

DIAGONAL_METHODS = ("subtraction", "cell")


def _local_rule(depth: int, ratio: float, order: int):
    return two_sided_offsets(1.0, 1.0, depth, ratio, order)


def _cell_integrals(channel: Channel, grid: MomentumGrid, params: PhysicalParams,
                    depth: int = CELL_DEPTH, ratio: float = CELL_RATIO,
                    order: int = CELL_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """``int_{cell_i} k(p_i, p') dp'`` for ``k1`` and ``k2`` at every node."""
    p = grid.nodes
    edges = grid.cell_edges()
    left, right = p - edges[:-1], edges[1:] - p
    s_unit, w_unit = _local_rule(depth, ratio, order)
    half_len = np.where(s_unit[None, :] < 0, left[:, None], right[:, None])
    offsets = s_unit[None, :] * half_len
    weights = w_unit[None, :] * half_len
    p_i = np.broadcast_to(p[:, None], offsets.shape)
    k1, k2 = _kernel_parts(channel, p_i + offsets, p_i, params, diff=offsets)
    return np.sum(weights * k1, axis=1), np.sum(weights * k2, axis=1)


def _mapped_integrals(channel: Channel, grid: MomentumGrid, params: PhysicalParams,
                      depth: int = CELL_DEPTH, ratio: float = CELL_RATIO,
                      order: int = CELL_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """``int_{-1}^{1} k(p_i, P(x)) dx`` for ``k1`` and ``k2`` at every node.

    The rule is graded toward ``x_i`` from both sides; the integrand is
    bounded at ``x = +-1``.
    """
    x = grid.reference_nodes
    s_unit, w_unit = _local_rule(depth, ratio, order)
    half_len = np.where(s_unit[None, :] < 0, (1.0 + x)[:, None], (1.0 - x)[:, None])
    s = s_unit[None, :] * half_len
    weights = w_unit[None, :] * half_len
    idx = np.arange(grid.size)[:, None]
    offsets = grid.momentum_offset(idx, s)
    p_i = np.broadcast_to(grid.nodes[:, None], s.shape)
    k1, k2 = _kernel_parts(channel, p_i + offsets, p_i, params, diff=offsets)
    return np.sum(weights * k1, axis=1), np.sum(weights * k2, axis=1)


def _offdiagonal_kernels(channel: Channel, grid: MomentumGrid, params: PhysicalParams
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Raw symmetric ``k1(p_i, p_j)``, ``k2(p_i, p_j)`` with zero diagonal."""
    p = grid.nodes
    N = grid.size
    iu = np.triu_indices(N, k=1)
    parts = _kernel_parts(channel, p[iu[0]], p[iu[1]], params)
    mats = []
    for upper in parts:
        M = np.zeros((N, N))
        M[iu] = upper
        mats.append(M + M.T)
    return mats[0], mats[1]


def _diagonal_values(channel, grid, params, offdiag, method, **rule):
    """Diagonal kernel values ``D_i`` (so that the weighted entry is ``w_i D_i``)."""
    if method == "cell":
        c1, c2 = _cell_integrals(channel, grid, params, **rule)
        return c1 / grid.weights, c2 / grid.weights
    if method == "subtraction":
        wx = grid.reference_weights
        m1, m2 = _mapped_integrals(channel, grid, params, **rule)
        return (m1 - offdiag[0] @ wx) / wx, (m2 - offdiag[1] @ wx) / wx
    raise ValueError(f"diagonal method must be one of {DIAGONAL_METHODS}")


def diagonal_kernel(channel: Channel, i: int, grid: MomentumGrid, params: PhysicalParams,
                    part: str = "full", method: str = "subtraction",
                    depth: int = CELL_DEPTH, ratio: float = CELL_RATIO,
                    order: int = CELL_ORDER) -> float:
    """Effective kernel value at the singular diagonal node ``i``.

    ``method="cell"`` returns the cell average
    ``(1/w_i) int_{cell_i} k(p_i, p') dp'`` over the Voronoi cell of node
    ``i``.  ``method="subtraction"`` (the one used by :func:`assemble`)
    returns the value that makes the Nystrom row integrate the kernel exactly
    against ``1/P'(x)``, the weight under which the mapped Gauss rule sees a
    constant; the row error is then driven by the smoothness of ``phi``
    instead of by the logarithm.  Both use a local rule graded toward ``p_i``.
    """
    if part not in PARTS:
        raise ValueError(f"part must be one of {PARTS}")
    if not 0 <= i < grid.size:
        raise IndexError(f"node index {i} out of range for N = {grid.size}")
    s_unit, w_unit = _local_rule(depth, ratio, order)
    p_i = grid.nodes[i]
    if method == "cell":
        edges = grid.cell_edges()
        half = np.where(s_unit < 0, p_i - edges[i], edges[i + 1] - p_i)
        offsets = s_unit * half
        k1, k2 = _kernel_parts(channel, p_i + offsets, np.full_like(offsets, p_i), params,
                               diff=offsets)
        d1, d2 = np.sum(w_unit * half * k1), np.sum(w_unit * half * k2)
        d1, d2 = d1 / grid.weights[i], d2 / grid.weights[i]
    elif method == "subtraction":
        x_i = grid.reference_nodes[i]
        half = np.where(s_unit < 0, 1.0 + x_i, 1.0 - x_i)
        s = s_unit * half
        offsets = grid.momentum_offset(i, s)
        k1, k2 = _kernel_parts(channel, p_i + offsets, np.full_like(s, p_i), params,
                               diff=offsets)
        others = np.arange(grid.size) != i
        r1, r2 = _kernel_parts(channel, grid.nodes[others],
                               np.full(grid.size - 1, p_i), params)
        wx = grid.reference_weights
        d1 = (np.sum(w_unit * half * k1) - r1 @ wx[others]) / wx[i]
        d2 = (np.sum(w_unit * half * k2) - r2 @ wx[others]) / wx[i]
    else:
        raise ValueError(f"diagonal method must be one of {DIAGONAL_METHODS}")
    return float({"k1": d1, "k2": d2, "full": d1 + d2}[part])


def weighted_kernel_matrices(channel: Channel, grid: MomentumGrid, params: PhysicalParams,
                             method: str = "subtraction") -> tuple[np.ndarray, np.ndarray]:
    """Symmetric matrices ``sqrt(w_i w_j) k1(p_i, p_j)`` and likewise for ``k2``.

    Diagonal entries are ``w_i D_i`` with ``D_i`` from :func:`diagonal_kernel`.
    """
    raw = _offdiagonal_kernels(channel, grid, params)
    diag = _diagonal_values(channel, grid, params, raw, method)
    sw = np.sqrt(grid.weights)
    out = []
    for M, D in zip(raw, diag):
        W = M * sw[:, None] * sw[None, :]
        W[np.diag_indices(grid.size)] = grid.weights * D
        # exact symmetry regardless of rounding in the row scaling
        W = np.triu(W) + np.triu(W, 1).T
        out.append(W)
    return out[0], out[1]


@dataclass(frozen=True)
class ChannelMatrix:
    """Symmetrized Nystrom matrix of one channel operator on one grid.

    ``kernel1``/``kernel2`` hold the weighted kernel parts so that
    ``matrix = diag(energies) - params.channel_coupling * (kernel1 + kernel2)``.
    """

    channel: Channel
    grid: MomentumGrid
    params: PhysicalParams
    matrix: np.ndarray
    energies: np.ndarray
    kernel1: np.ndarray
    kernel2: np.ndarray
    diagonal_method: str = "subtraction"

    @property
    def kernel_matrix(self) -> np.ndarray:
        return self.kernel1 + self.kernel2

    @property
    def size(self) -> int:
        return self.grid.size

    def metadata(self) -> dict:
        return {
            "channel": self.channel.to_dict(),
            "params": self.params.to_dict(),
            "grid": self.grid.describe(),
            "diagonal": {
                "method": self.diagonal_method,
                "depth": CELL_DEPTH,
                "ratio": CELL_RATIO,
                "order": CELL_ORDER,
            },
        }


def assemble(channel: Channel, grid: MomentumGrid, params: PhysicalParams,
             kernels: tuple[np.ndarray, np.ndarray] | None = None,
             method: str = "subtraction") -> ChannelMatrix:
    """Assemble ``A = diag(e(p_i)) - (alpha c Z / pi) W`` for one channel.

    ``kernels`` may pass precomputed output of :func:`weighted_kernel_matrices`
    for the same channel, grid, mass and ``c`` (the kernel does not depend on
    Z), in which case ``method`` only labels the result.
    """
    if not isinstance(channel, Channel):
        raise TypeError("channel must be a Channel")
    if not isinstance(grid, MomentumGrid):
        raise TypeError("grid must be a MomentumGrid")
    if kernels is None:
        kernels = weighted_kernel_matrices(channel, grid, params, method)
    k1, k2 = kernels
    if k1.shape != (grid.size, grid.size) or k2.shape != k1.shape:
        raise ValueError("kernel matrices do not match the grid")
    e = np.asarray(energy(grid.nodes, params), dtype=float)
    if params.Z == 0:
        A = np.diag(e)
    else:
        A = -params.channel_coupling * (k1 + k2)
        A[np.diag_indices(grid.size)] += e
    for arr in (A, e, k1, k2):
        arr.setflags(write=False)
    return ChannelMatrix(channel, grid, params, A, e, k1, k2, method)
