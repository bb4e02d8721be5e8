import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlqm import core
from nlqm.core import (
    CODATA, DIFFUSIVITY, ENERGY, LENGTH, MASS, TIME, PhysicalConstants, RngStream,
    UnitSystem, planck_mass, register_theta_profile, theta_of_mass,
)


def test_planck_mass_codata():
    # sqrt(hbar c / G) by hand from the CODATA 2018 values
    expected = math.sqrt(1.054571817e-34 * 299792458.0 / 6.67430e-11)
    assert planck_mass(CODATA) == pytest.approx(expected, rel=1e-15)
    assert planck_mass() == pytest.approx(2.176e-8, rel=1e-3)


def test_planck_mass_in_grams_is_order_1e_minus_5():
    assert math.floor(math.log10(planck_mass() * 1e3)) == -5


def test_planck_mass_natural_units():
    assert planck_mass(PhysicalConstants.natural()) == 1.0


@pytest.mark.parametrize("name", ["hbar", "c", "G", "m_atom"])
@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_constants_must_be_positive(name, bad):
    with pytest.raises(ValueError):
        PhysicalConstants(**{name: bad})


def test_constants_from_config_keys():
    c = PhysicalConstants.from_mapping({"constants.hbar": "2.0", "constants.m_atom": "3e-27"})
    assert c.hbar == 2.0 and c.m_atom == 3e-27 and c.c == core.C_SI
    with pytest.raises(KeyError):
        PhysicalConstants.from_mapping({"constants.e": "1"})


def test_theta_examples():
    mp = planck_mass()
    assert theta_of_mass(0.0) == 1.0
    assert theta_of_mass(mp) == pytest.approx(0.5, rel=1e-15)
    x = 1e3
    assert theta_of_mass(x * mp) == pytest.approx(1.0 / (1.0 + x), rel=1e-14)
    assert theta_of_mass(x * mp) == pytest.approx(9.99e-4, rel=1e-3)


def test_theta_rejects_negative_mass():
    with pytest.raises(ValueError):
        theta_of_mass(-1.0)


@settings(max_examples=200)
@given(st.floats(0, 1e6), st.floats(1e-9, 1e6))
def test_theta_strictly_decreasing(m, dm):
    mp = planck_mass()
    m1, m2 = m * mp, (m + dm) * mp
    if m2 > m1:
        assert theta_of_mass(m1) > theta_of_mass(m2) or theta_of_mass(m1) == theta_of_mass(m2) == 0.0


def test_nonlinearity_has_no_cancellation():
    m = 1e9 * CODATA.m_atom
    x = m / CODATA.m_planck
    assert core.nonlinearity_of_mass(m) == pytest.approx(x / (1 + x), rel=1e-15)


def test_register_profile():
    register_theta_profile("exp_test", lambda x: math.exp(-x))
    assert theta_of_mass(planck_mass(), profile="exp_test") == pytest.approx(math.exp(-1))
    with pytest.raises(ValueError):
        register_theta_profile("bad", lambda x: 0.5)


@settings(max_examples=200)
@given(st.floats(1e-30, 1e30), st.sampled_from([MASS, LENGTH, TIME, ENERGY, DIFFUSIVITY]))
def test_unit_round_trip(value, dims):
    u = UnitSystem("natural")
    back = u.to_si(u.to_natural(value, dims), dims)
    assert back == pytest.approx(value, rel=1e-12)


def test_unit_scales_are_planck_units():
    m, length, t = UnitSystem().scales
    assert m == planck_mass()
    assert length == pytest.approx(1.616255e-35, rel=1e-5)
    assert t == pytest.approx(5.391247e-44, rel=1e-5)
    assert UnitSystem().to_natural(CODATA.hbar, (1, 2, -1)) == pytest.approx(1.0, rel=1e-12)


def test_unit_mode_validated():
    with pytest.raises(ValueError):
        UnitSystem("cgs")


def test_rng_reproducible_and_split():
    a = RngStream(42, 3).uniform(1000)
    b = RngStream(42, 3).uniform(1000)
    c = RngStream(42, 4).uniform(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all((a > 0) & (a <= 1))


def test_rng_scalar_and_block_draws_agree():
    r1, r2 = RngStream(7, 11), RngStream(7, 11)
    block = r1.uniform(5)
    singles = [r2.uniform() for _ in range(5)]
    assert np.array_equal(block, singles)
    assert r1.counter == r2.counter == 5


def test_rng_streams_uncorrelated():
    x = RngStream(1, 0).uniform(100_000)
    y = RngStream(1, 1).uniform(100_000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.02
    assert abs(x.mean() - 0.5) < 0.005


def test_rng_normal_moments():
    z = RngStream(5, 0).normal(100_000)
    assert abs(z.mean()) < 0.02 and abs(z.std() - 1) < 0.02
