import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pinchopt.channel import (
    SPEED_OF_LIGHT,
    AntennaLayout,
    DegenerateGeometryError,
    PhysicalParams,
    Scenario,
    complex_gain_sum,
    conventional_gain,
    conventional_rate,
    effective_gain,
    effective_gains,
    fixed_layout,
    ideal_gain,
    pa_rate,
    rate_threshold_distance,
)

P = PhysicalParams.from_carrier()


def test_derived_constants():
    lam = SPEED_OF_LIGHT / 28e9
    assert P.wavelength == pytest.approx(lam, rel=1e-12)
    assert P.guided_wavelength == pytest.approx(lam / 1.4, rel=1e-12)
    assert P.eta == pytest.approx((lam / (4 * math.pi)) ** 2, rel=1e-12)
    assert P.spacing == pytest.approx(lam / 2, rel=1e-12)
    assert P.noise_power == pytest.approx(1e-12, rel=1e-12)
    # 40-digit values
    assert P.wavelength == pytest.approx(0.0107068735, rel=1e-12)
    assert P.guided_wavelength == pytest.approx(0.007647766785714286, rel=1e-12)
    assert P.eta == pytest.approx(7.25948170554011539568886517902916724822e-7, rel=1e-12)


def test_bad_params_rejected():
    with pytest.raises(ValueError):
        PhysicalParams.from_carrier(carrier_frequency=0.0)


def test_single_antenna_below_origin():
    lay = AntennaLayout([0.0], 3.0)
    s = complex_gain_sum((0.0, 0.0), lay, P)
    assert abs(s) == pytest.approx(1 / 3, rel=1e-14)
    want = (P.k0 * 3.0) % (2 * math.pi)
    assert cmath.phase(s) % (2 * math.pi) == pytest.approx(want, abs=1e-9)
    assert effective_gain((0.0, 0.0), lay, P) == pytest.approx(1 / 9, rel=1e-14)
    assert ideal_gain((0.0, 0.0), lay) == pytest.approx(1 / 9, rel=1e-14)


def test_three_antenna_instance_matches_high_precision():
    lay = AntennaLayout([2.0, 6.8, 11.3], 3.0)
    s = complex_gain_sum((7.25, -1.5), lay, P)
    # evaluated term by term at 40 digits
    assert s.real == pytest.approx(0.002490108991352244, abs=1e-12)
    assert s.imag == pytest.approx(-0.10147919826420403, abs=1e-12)
    assert effective_gain((7.25, -1.5), lay, P) == pytest.approx(0.010304228323134444, rel=1e-9)
    assert ideal_gain((7.25, -1.5), lay) == pytest.approx(0.4175424459946793, rel=1e-13)


def test_aligned_equidistant_pair_is_coherent():
    # symmetric pair; waveguide phase cancelled by choosing feed in the middle
    lay = AntennaLayout([4.0, 6.0], 3.0, feed_x=5.0)
    r = math.sqrt(1 + 9)
    assert effective_gain((5.0, 0.0), lay, P) == pytest.approx(4 / r**2, rel=1e-12)


def test_zero_distance_rejected():
    with pytest.raises(DegenerateGeometryError):
        effective_gain((1.0, 0.0), AntennaLayout([1.0], 0.0), P)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(np.zeros((1, 2)), 1, 30, 10, 0.0)
    with pytest.raises(ValueError):
        Scenario(np.zeros((1, 2)), 1, 30, 10, 3.0, energies=[-1.0])
    sc = Scenario(np.zeros((2, 2)), 1, 30, 10, 3.0).with_power(10.0)
    np.testing.assert_allclose(sc.energies, 0.01)


def test_pa_rate_examples():
    assert pa_rate(1.0, 1.0, 0.0, 1, 1.0, 1.0) == 0.0
    assert pa_rate(1.0, 1.0, 1.0, 1, 1.0, 1.0) == pytest.approx(1.0)
    assert pa_rate(0.5, 3.0, 1.0, 1, 1.0, 1.0) == pytest.approx(0.5 * math.log2(7), rel=1e-14)
    assert pa_rate(0.5, 3.0, 1.0, 1, 1.0, 1.0) == pytest.approx(1.4036774610288, rel=1e-12)
    with pytest.raises(ValueError):
        pa_rate(0.0, 1.0, 1.0, 1, 1.0, 1.0)


def test_rate_threshold_inverts_ideal_rate():
    lay = AntennaLayout([3.0, 9.0], 3.0)
    dev = (5.0, 1.0)
    g = ideal_gain(dev, lay)
    r = pa_rate(0.5, 0.01, g, 2, P.noise_power, P.eta)
    assert rate_threshold_distance(r, 0.5, 0.01, 2, P.noise_power, P.eta) == pytest.approx(math.sqrt(g), rel=1e-10)


def test_conventional_examples():
    lay1 = AntennaLayout([0.0], 3.0)
    assert conventional_gain((0.0, 0.0), lay1, P) == pytest.approx(P.eta / 9, rel=1e-14)
    lay = fixed_layout(2, 3.0, P.spacing)
    assert conventional_gain((4.0, 2.0), lay, P) == pytest.approx(5.010238947569959e-08, rel=1e-12)
    assert conventional_rate(1.0, 3.0, 1.0, 1.0) == pytest.approx(2.0)
    assert conventional_rate(1.0, 3.0, 0.0, 1.0) == 0.0


def test_fixed_layout_positions():
    np.testing.assert_allclose(fixed_layout(3, 3.0, 0.1).x_coords, [0.0, 0.1, 0.2])


coord = st.floats(0.0, 30.0, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(dx=coord, dy=st.floats(-5, 5), ants=st.lists(coord, min_size=1, max_size=6), shift=st.floats(-50, 50))
def test_gain_properties(dx, dy, ants, shift):
    lay = AntennaLayout(sorted(ants), 3.0)
    g = effective_gain((dx, dy), lay, P)
    assert g <= ideal_gain((dx, dy), lay) * (1 + 1e-12)
    # common translation of devices, antennas and feed
    moved = AntennaLayout(np.asarray(sorted(ants)) + shift, 3.0, feed_x=shift)
    assert effective_gain((dx + shift, dy), moved, P) == pytest.approx(g, rel=1e-6, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(q=st.floats(0.01, 0.99), e=st.floats(1e-3, 1.0), g=st.floats(1e-3, 1.0))
def test_rate_monotone_and_concave(q, e, g):
    args = (2, P.noise_power, P.eta)
    r = pa_rate(q, e, g, *args)
    assert pa_rate(q, e, g * 1.01, *args) > r
    assert pa_rate(q, e * 1.01, g, *args) > r
    h = 1e-4 * q
    d2 = pa_rate(q + h, e, g, *args) - 2 * r + pa_rate(q - h, e, g, *args)
    assert d2 < 0


def test_vectorized_gains_match_scalar(two_device_scenario):
    lay = AntennaLayout([7.0, 20.5], 3.0)
    sc = two_device_scenario
    vec = effective_gains(sc, lay)
    for m, dev in enumerate(sc.devices):
        assert vec[m] == pytest.approx(effective_gain(dev, lay, sc.params), rel=1e-13)
