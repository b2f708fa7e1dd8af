import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bravl.kinematics import (ALPHA_PHYS, NU_CRITICAL, NU_CRITICAL_PRIME, PhysicalParams,
                              coupling_gamma, critical_Z, critical_Z_prime, energy,
                              normalizer, pauli_dot)


def test_energy_at_rest_and_known_point():
    p = PhysicalParams()
    assert energy(0.0, p) == 1.0
    assert energy(3.0, PhysicalParams(mass=4.0)) == pytest.approx(math.sqrt(9 + 16), rel=1e-15)
    assert energy(2.0, PhysicalParams(mass=0.0)) == 2.0


def test_energy_units():
    # c = 2, m = 3: e = sqrt(c^2 p^2 + m^2 c^4)
    p = PhysicalParams(mass=3.0, light_speed=2.0)
    assert energy(1.5, p) == pytest.approx(math.sqrt(4 * 2.25 + 9 * 16), rel=1e-15)
    assert p.rest_energy == 12.0


def test_energy_rejects_negative_momentum():
    with pytest.raises(ValueError):
        energy(-1.0, PhysicalParams())
    with pytest.raises(ValueError):
        energy(np.array([1.0, -0.1]), PhysicalParams())


def test_normalizer_values():
    p = PhysicalParams()
    assert normalizer(0.0, p) == pytest.approx(2.0)
    e = math.sqrt(2.0)
    assert normalizer(1.0, p) == pytest.approx(math.sqrt(2 * e * (e + 1)), rel=1e-15)


def test_gamma_and_channel_coupling():
    p = PhysicalParams(Z=50.0)
    assert coupling_gamma(p) == pytest.approx(ALPHA_PHYS * 50 / (2 * math.pi ** 2), rel=1e-15)
    assert p.channel_coupling == pytest.approx(2 * math.pi * p.gamma, rel=1e-15)
    assert p.nu == pytest.approx(ALPHA_PHYS * 50)


def test_critical_charges():
    assert critical_Z(ALPHA_PHYS) == pytest.approx(124.16, abs=0.01)
    assert critical_Z_prime(ALPHA_PHYS) == pytest.approx(102.78, abs=0.01)
    assert NU_CRITICAL == pytest.approx(critical_Z(ALPHA_PHYS) * ALPHA_PHYS, rel=1e-15)
    assert NU_CRITICAL_PRIME == 0.75
    with pytest.raises(ValueError):
        critical_Z(0.0)
    with pytest.raises(ValueError):
        critical_Z_prime(-1.0)


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(mass=-1.0)
    with pytest.raises(ValueError):
        PhysicalParams(Z=-1.0)
    with pytest.raises(ValueError):
        PhysicalParams(light_speed=0.0)
    with pytest.raises(ValueError):
        PhysicalParams(alpha=float("nan"))
    with pytest.raises(ValueError):
        PhysicalParams.from_nu(-0.1)


def test_from_nu_roundtrip():
    p = PhysicalParams.from_nu(0.5)
    assert p.nu == pytest.approx(0.5, rel=1e-15)
    assert p.with_Z(0.0).nu == 0.0
    assert p.with_mass(2.0).rest_energy == 2.0
    assert p.to_dict()["nu"] == p.nu


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1e6), st.floats(0.01, 100), st.floats(0.1, 10))
def test_energy_bounds(p, m, c):
    params = PhysicalParams(mass=m, light_speed=c)
    e = energy(p, params)
    assert e >= params.rest_energy * (1 - 1e-15)
    assert e >= c * p * (1 - 1e-15)
    assert normalizer(p, params) >= 2 * params.rest_energy * (1 - 1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_pauli_square(vec):
    v = np.array(vec)
    M = pauli_dot(v)
    assert np.allclose(M @ M, np.dot(v, v) * np.eye(2), atol=1e-9 * max(1, np.dot(v, v)))
    assert np.allclose(M, M.conj().T)


def test_pauli_shape_error():
    with pytest.raises(ValueError):
        pauli_dot([1.0, 2.0])
