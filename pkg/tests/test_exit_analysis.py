import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from targetzone.exit_analysis import (esq_integral, exit_probabilities,
                                      exit_profile, expected_exit_time)
from targetzone.ou import default_spec

SPEC = default_spec()
BAND = (1.98707, 2.03214)            # symmetric solved band
SHIFTED_BAND = (2.0071, 2.05217)     # band for theta = m + 0.02


def test_exit_probability_boundary_cases():
    a, b = BAND
    assert exit_probabilities(SPEC, BAND, a) == (1.0, 0.0)
    assert exit_probabilities(SPEC, BAND, b) == (0.0, 1.0)


def test_exit_probability_midpoint_symmetric():
    # even scale density about m makes the centered start a coin flip
    half = 0.021
    band = (SPEC.m - half, SPEC.m + half)
    pl, pu = exit_probabilities(SPEC, band, SPEC.m)
    assert pl == pytest.approx(0.5, abs=1e-12)
    assert pu == pytest.approx(0.5, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0))
def test_exit_probabilities_normalized(w):
    a, b = SHIFTED_BAND
    x = a + w * (b - a)
    pl, pu = exit_probabilities(SPEC, SHIFTED_BAND, x)
    assert abs(pl + pu - 1.0) <= 1e-10
    assert 0.0 <= pl <= 1.0


def test_upper_probability_strictly_increasing():
    xs = np.linspace(BAND[0], BAND[1], 60)
    pu = np.array([exit_probabilities(SPEC, BAND, x)[1] for x in xs])
    assert np.all(np.diff(pu) > 0)


def test_exit_probability_domain_error():
    with pytest.raises(ValueError):
        exit_probabilities(SPEC, BAND, BAND[0] - 1e-6)
    with pytest.raises(ValueError):
        expected_exit_time(SPEC, BAND, BAND[1] + 1e-6)
    with pytest.raises(ValueError):
        exit_probabilities(SPEC, (2.1, 2.0), 2.05)


def test_expected_exit_time_boundary_zeros():
    assert expected_exit_time(SPEC, BAND, BAND[0]) == pytest.approx(0.0,
                                                                    abs=1e-10)
    assert expected_exit_time(SPEC, BAND, BAND[1]) == pytest.approx(0.0,
                                                                    abs=1e-10)


def test_expected_exit_time_positive_inside():
    for x in np.linspace(BAND[0] + 1e-4, BAND[1] - 1e-4, 9):
        assert expected_exit_time(SPEC, BAND, x) > 0.0


def test_expected_exit_time_ode_residual():
    # 0.5 sigma^2 q'' + rho (m - x) q' + 1 = 0 on the interior
    h = 1e-4
    xs = np.linspace(BAND[0] + 5 * h, BAND[1] - 5 * h, 50)
    for x in xs:
        qm = expected_exit_time(SPEC, BAND, x - h)
        q0 = expected_exit_time(SPEC, BAND, x)
        qp = expected_exit_time(SPEC, BAND, x + h)
        d1 = (qp - qm) / (2 * h)
        d2 = (qp - 2 * q0 + qm) / (h * h)
        res = 0.5 * SPEC.sigma ** 2 * d2 + SPEC.rho * (SPEC.m - x) * d1 + 1.0
        assert abs(res) <= 1e-4


def test_symmetric_profile_and_interior_maximum():
    half = 0.0225
    band = (SPEC.m - half, SPEC.m + half)
    profile = exit_profile(SPEC, band, 201)
    q = profile.expected_time
    assert np.all(np.abs(q - q[::-1]) <= 1e-8 * (1.0 + np.abs(q)))
    assert np.all(np.abs(profile.p_lower - profile.p_upper[::-1]) <= 1e-10)
    # maximum attained at the center of the symmetric band
    i = int(np.argmax(q))
    assert profile.grid[i] == pytest.approx(SPEC.m, abs=(band[1] - band[0]) / 200)


def test_exit_profile_normalization_everywhere():
    profile = exit_profile(SPEC, SHIFTED_BAND, 101)
    np.testing.assert_allclose(profile.p_lower + profile.p_upper, 1.0,
                               atol=1e-10)
    assert profile.expected_time[0] == pytest.approx(0.0, abs=1e-10)
    assert profile.expected_time[-1] == pytest.approx(0.0, abs=1e-10)
    assert np.all(profile.expected_time >= -1e-12)


def test_exit_profile_requires_two_points():
    with pytest.raises(ValueError):
        exit_profile(SPEC, BAND, 1)


def test_scaled_dawson_integral_against_quadrature():
    for z1, z2 in ((-4.0, 4.0), (-1.0, 2.5), (0.3, 3.9), (-3.7, -0.2),
                   (2.0, 2.0)):
        direct, _ = quad(lambda w: math.exp(0.5 * w * w), z1, z2,
                         epsabs=1e-13, epsrel=1e-12, limit=300)
        assert esq_integral(z1, z2) == pytest.approx(direct, abs=1e-10,
                                                     rel=1e-10)


def test_profile_csv_round_trip(tmp_path):
    profile = exit_profile(SPEC, BAND, 11)
    path = tmp_path / "profile.csv"
    profile.write_csv(path)
    data = np.genfromtxt(path, delimiter=",", names=True)
    np.testing.assert_allclose(data["x"], profile.grid, rtol=1e-8)
    np.testing.assert_allclose(data["q_years"], profile.expected_time,
                               rtol=1e-8)
