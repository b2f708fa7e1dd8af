"""Physical parameters, relativistic kinematics and critical couplings.

Internal units default to ``hbar = c = m = 1``; energies then come out in
units of the rest energy ``m c**2``.  Everything the spectral problem needs
depends on the charge only through the dimensionless coupling ``nu = alpha Z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

ALPHA_PHYS = 7.2973525693e-3

# 2 / (pi/2 + 2/pi): the critical value of alpha*Z
NU_CRITICAL = 2.0 / (math.pi / 2 + 2.0 / math.pi)
# 3/4: critical alpha*Z for channel self-adjointness and embedded-eigenvalue exclusion
NU_CRITICAL_PRIME = 0.75

_PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


@dataclass(frozen=True)
class PhysicalParams:
    """Masses, constants and nuclear charge.

    ``gamma`` and ``nu`` are properties, so they can never go stale.
    """

    mass: float = 1.0
    light_speed: float = 1.0
    hbar: float = 1.0
    alpha: float = ALPHA_PHYS
    Z: float = 0.0

    def __post_init__(self):
        values = (self.mass, self.light_speed, self.hbar, self.alpha, self.Z)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("physical parameters must be finite")
        if self.mass < 0:
            raise ValueError("mass must be >= 0")
        if self.light_speed <= 0 or self.hbar <= 0 or self.alpha <= 0:
            raise ValueError("c, hbar and alpha must be positive")
        if self.Z < 0:
            raise ValueError("nuclear charge Z must be >= 0")

    @classmethod
    def from_nu(cls, nu: float, mass: float = 1.0, light_speed: float = 1.0,
                alpha: float = ALPHA_PHYS) -> "PhysicalParams":
        """Parameters with ``alpha * Z = nu`` for the given ``alpha``."""
        if nu < 0:
            raise ValueError("nu must be >= 0")
        return cls(mass=mass, light_speed=light_speed, alpha=alpha, Z=nu / alpha)

    @property
    def nu(self) -> float:
        return self.alpha * self.Z

    @property
    def gamma(self) -> float:
        return coupling_gamma(self)

    @property
    def rest_energy(self) -> float:
        return self.mass * self.light_speed ** 2

    @property
    def channel_coupling(self) -> float:
        """``alpha c Z / pi`` multiplying the partial-wave kernel (equals ``2 pi gamma``)."""
        return self.alpha * self.light_speed * self.Z / math.pi

    def with_mass(self, mass: float) -> "PhysicalParams":
        return replace(self, mass=mass)

    def with_Z(self, Z: float) -> "PhysicalParams":
        return replace(self, Z=Z)

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "light_speed": self.light_speed,
            "hbar": self.hbar,
            "alpha": self.alpha,
            "Z": self.Z,
            "nu": self.nu,
        }


def _momentum(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(np.isnan(p)):
        raise ValueError("radial momentum must be >= 0")
    return p


def _unwrap(x):
    return float(x) if np.ndim(x) == 0 else x


def energy(p, params: PhysicalParams):
    """Free kinetic energy ``sqrt(c^2 p^2 + m^2 c^4)``; ``energy(0) = m c^2``."""
    p = _momentum(p)
    c = params.light_speed
    return _unwrap(np.hypot(c * p, params.mass * c * c))


def normalizer(p, params: PhysicalParams):
    """``n(p) = sqrt(2 e(p) (e(p) + e(0)))``."""
    e = np.asarray(energy(p, params))
    return _unwrap(np.sqrt(2.0 * e * (e + params.rest_energy)))


def coupling_gamma(params: PhysicalParams) -> float:
    """``gamma = alpha c Z / (2 pi^2)``."""
    return params.alpha * params.light_speed * params.Z / (2.0 * math.pi ** 2)


def critical_Z(alpha: float) -> float:
    """Largest charge for which the energy form stays bounded below."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return 2.0 / ((math.pi / 2 + 2.0 / math.pi) * alpha)


def critical_Z_prime(alpha: float) -> float:
    """``3 / (4 alpha)``, below which no eigenvalue is embedded in the continuum."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return 3.0 / (4.0 * alpha)


def pauli_dot(p) -> np.ndarray:
    """The 2x2 matrix ``p . sigma`` for a real or complex 3-vector ``p``."""
    p = np.asarray(p)
    if p.shape != (3,):
        raise ValueError("pauli_dot expects a 3-vector")
    return np.tensordot(p, _PAULI, axes=1)
