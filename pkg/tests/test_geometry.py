import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from doubleris._validation import DomainError
from doubleris.geometry import (
    LINKS,
    build_scenario,
    dbm_to_watts,
    pathloss_db,
    pathloss_linear,
    wrap_angle,
)

pos = st.floats(min_value=0.5, max_value=1e4, allow_nan=False)


# -- build_scenario ------------------------------------------------------------
def test_table_angles_at_evaluation_geometry():  # [PAPER]
    lay = build_scenario(100.0, 200.0, 2.0)
    assert lay["H1"].aoa_azimuth == pytest.approx(math.pi / 4, abs=1e-15)
    assert lay["H1"].aoa_elevation == 0.0


def test_h2_distance_at_evaluation_geometry():
    lay = build_scenario(100.0, 200.0, 2.0)
    assert lay.distance("H2") == pytest.approx(223.6068, abs=1e-4)


def test_equal_offsets_zero_h2_arrival_azimuth():
    lay = build_scenario(50.0, 50.0, 1.0)
    assert lay["H2"].aoa_azimuth == pytest.approx(0.0, abs=1e-15)


def test_angle_formulas_evaluated_verbatim():
    d1, d2, dH = 100.0, 200.0, 2.0
    lay = build_scenario(d1, d2, dH)
    assert lay["H2"].aoa_azimuth == pytest.approx(math.pi / 4 - math.atan(d2 / d1), abs=1e-15)
    assert lay["G1"].aod_elevation == pytest.approx(math.atan(dH / math.hypot(d1, d2)), abs=1e-15)


@pytest.mark.parametrize("d1,d2", [(0.0, 1.0), (1.0, 0.0), (-3.0, 2.0), (1.0, -1.0)])
def test_non_positive_offsets_rejected(d1, d2):
    with pytest.raises(DomainError):
        build_scenario(d1, d2, 1.0)


def test_negative_height_rejected():
    with pytest.raises(DomainError):
        build_scenario(1.0, 1.0, -0.1)


def test_coplanar_layout_has_zero_elevations():
    lay = build_scenario(10.0, 20.0, 0.0)
    for k in LINKS:
        assert lay[k].aoa_elevation == 0.0 and lay[k].aod_elevation == 0.0


@given(pos, pos, st.floats(min_value=0.0, max_value=1e3))
def test_distance_identities(d1, d2, dH):
    lay = build_scenario(d1, d2, dH)
    assert lay.distance("H1") == d1
    assert lay.distance("D") == d2
    assert math.isclose(lay.distance("H2"), math.sqrt(d1**2 + d2**2), rel_tol=1e-15)
    assert math.isclose(lay.distance("G1"), math.sqrt(d1**2 + d2**2 + dH**2), rel_tol=1e-15)
    assert math.isclose(lay.distance("G2"), math.sqrt(d1**2 + dH**2), rel_tol=1e-15)
    for k in LINKS:
        assert lay.distance(k) > 0
        g = lay[k]
        for a in (g.aoa_azimuth, g.aoa_elevation, g.aod_azimuth, g.aod_elevation):
            assert -math.pi < a <= math.pi


@given(pos, pos, st.floats(min_value=0.0, max_value=1e3))
def test_build_scenario_deterministic(d1, d2, dH):
    assert build_scenario(d1, d2, dH) == build_scenario(d1, d2, dH)


@given(st.floats(min_value=-50.0, max_value=50.0))
def test_wrap_angle_range(x):
    y = wrap_angle(x)
    assert -math.pi < y <= math.pi
    assert math.isclose(math.cos(y), math.cos(x), abs_tol=1e-9)
    assert math.isclose(math.sin(y), math.sin(x), abs_tol=1e-9)


def test_wrap_angle_maps_minus_pi_to_pi():
    assert wrap_angle(-math.pi) == math.pi


# -- pathloss ----------------------------------------------------------------
def test_pathloss_db_at_100m():
    assert pathloss_db(100.0) == pytest.approx(79.6, abs=1e-12)


def test_pathloss_db_at_1m():
    assert pathloss_db(1.0) == pytest.approx(35.6, abs=1e-15)


def test_pathloss_db_high_precision_oracle():  # [DERIVED]
    mpmath.mp.dps = 40
    ref = mpmath.mpf("35.6") + 22 * mpmath.log10(mpmath.mpf("223.6068"))
    assert pathloss_db(223.6068) == pytest.approx(float(ref), abs=1e-12)


@pytest.mark.parametrize("d", [0.999, 0.0, -1.0, float("nan")])
def test_pathloss_domain(d):
    with pytest.raises(DomainError):
        pathloss_db(d)
    with pytest.raises(DomainError):
        pathloss_linear(d)


def test_pathloss_linear_values():
    assert pathloss_linear(1.0) == pytest.approx(10**-3.56, rel=1e-12)
    assert pathloss_linear(1.0) == pytest.approx(2.7542e-4, rel=1e-4)
    assert pathloss_linear(100.0) == pytest.approx(1.0965e-8, rel=1e-4)
    assert pathloss_linear(200.0) < pathloss_linear(100.0)


@given(st.floats(min_value=1.0, max_value=1e6), st.floats(min_value=1.0, max_value=1e6))
def test_pathloss_strictly_decreasing(a, b):
    if a == b:
        return
    lo, hi = min(a, b), max(a, b)
    assert pathloss_linear(hi) < pathloss_linear(lo)


@given(st.floats(min_value=1.0, max_value=1e6))
def test_pathloss_decade_step_is_22_db(d):
    assert pathloss_db(10 * d) - pathloss_db(d) == pytest.approx(22.0, abs=1e-11)


def test_pathloss_vectorised():
    out = pathloss_db(np.array([1.0, 10.0]))
    np.testing.assert_allclose(out, [35.6, 57.6])


def test_dbm_conversion():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(-90.0) == pytest.approx(1e-12)
