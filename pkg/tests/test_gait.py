"""Reference trajectories: gait cosines, offsets, PD closure, roll target."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from flapsim import (DEFAULT_GAIT, DEFAULT_MANEUVER, GaitParams,
                     ManeuverParams, ModelParams, joint_reference,
                     maneuver_reference, offset_trajectory,
                     pd_acceleration_constraint, roll_reference)
from flapsim.gait import MIRROR_SIGNS


@pytest.fixture
def gait():
    return DEFAULT_GAIT


def test_reference_at_time_zero(params):
    g = GaitParams(mean=np.array([0.1, 0.2, 0.3, 0.4]),
                   amplitude=np.array([0.5, 0.6, 0.7, 0.8]),
                   phase=np.zeros(3))
    ref = joint_reference(0.0, g, params)
    assert_allclose(ref.theta[0:4], g.amplitude + g.mean, rtol=1e-15)


def test_reference_periodicity(gait, params):
    period = 1.0 / params.flap_hz
    for t in (0.0, 0.013, 0.21):
        r1 = joint_reference(t, gait, params)
        r2 = joint_reference(t + period, gait, params)
        assert_allclose(r2.theta, r1.theta, rtol=0, atol=1e-12)


def test_reference_rate_matches_finite_difference(gait, params):
    h = 1e-6
    for t in (0.0, 0.037, 0.11):
        ref = joint_reference(t, gait, params)
        rp = joint_reference(t + h, gait, params)
        rm = joint_reference(t - h, gait, params)
        assert np.abs((rp.theta - rm.theta) / (2 * h)
                      - ref.theta_dot).max() < 1e-8 * max(
                          1.0, np.abs(ref.theta_dot).max())
        assert np.abs((rp.theta_dot - rm.theta_dot) / (2 * h)
                      - ref.theta_ddot).max() < 1e-6 * max(
                          1.0, np.abs(ref.theta_ddot).max())


def test_reference_mirror_property(gait, params):
    for t in (0.0, 0.04, 0.09):
        ref = joint_reference(t, gait, params)
        assert_allclose(ref.theta[4:8], MIRROR_SIGNS * ref.theta[0:4],
                        rtol=0, atol=0)
        assert_allclose(ref.theta_dot[4:8], MIRROR_SIGNS * ref.theta_dot[0:4],
                        rtol=0, atol=0)


def test_offset_trajectory_piecewise():
    man = ManeuverParams(t0=1.0, d=np.array([0.3, -0.2, 0.1, 0.4]), T=0.2)
    off, rate = offset_trajectory(0.99, man)
    assert_allclose(off, np.zeros(4), atol=0)
    assert_allclose(rate, np.zeros(4), atol=0)
    off, rate = offset_trajectory(1.0, man)
    assert_allclose(off, np.zeros(4), atol=0)
    assert_allclose(rate, man.d / man.T, rtol=1e-15)
    off, _ = offset_trajectory(1.2, man)
    assert_allclose(off, man.d, rtol=1e-12)
    off, rate = offset_trajectory(1.4, man)
    assert_allclose(off, np.zeros(4), atol=1e-15)
    assert_allclose(rate, np.zeros(4), atol=0)
    off, rate = offset_trajectory(1.3, man)
    assert_allclose(off, 0.5 * man.d, rtol=1e-12)
    assert_allclose(rate, -man.d / man.T, rtol=1e-15)


def test_maneuver_reference_continuity(gait, params):
    """The composed reference is continuous everywhere, including the ramp
    corners (only its rate jumps there)."""
    man = DEFAULT_MANEUVER
    eps = 1e-9
    for corner in (man.t0, man.t0 + man.T, man.t0 + 2 * man.T):
        before = maneuver_reference(corner - eps, gait, man, params)
        after = maneuver_reference(corner + eps, gait, man, params)
        assert np.abs(after.theta - before.theta).max() < 1e-6


def test_maneuver_offset_applied_equally(gait, params):
    man = DEFAULT_MANEUVER
    t = man.t0 + man.T           # offset peak
    plain = joint_reference(t, gait, params)
    ref = maneuver_reference(t, gait, man, params)
    delta = ref.theta - plain.theta
    assert_allclose(delta[0:4], man.d, rtol=1e-9)
    assert_allclose(delta[4:8], man.d, rtol=1e-9)


def test_pd_acceleration_constraint_examples():
    class Ref:
        theta = np.zeros(8)
        theta_dot = np.zeros(8)

    assert_allclose(
        pd_acceleration_constraint(np.zeros(8), np.zeros(8), Ref),
        np.zeros(8), atol=0)
    tdd = pd_acceleration_constraint(np.full(8, 0.1), np.zeros(8), Ref)
    assert_allclose(tdd, np.full(8, -12.0), rtol=1e-15)
    tdd = pd_acceleration_constraint(np.zeros(8), np.full(8, 0.5), Ref)
    assert_allclose(tdd, np.full(8, -60.0), rtol=1e-15)


def test_roll_reference_midpoint_and_limits():
    t0, T = 1.0, 0.2
    phi_mid, rate_mid = roll_reference(t0 + T, t0, T)
    assert phi_mid == pytest.approx(0.0, abs=1e-12)
    # total excursion is pi (180 degrees)
    phi_lo, _ = roll_reference(t0 - 100.0, t0, T)
    phi_hi, _ = roll_reference(t0 + 100.0, t0, T)
    assert phi_hi - phi_lo == pytest.approx(math.pi, rel=1e-12)
    # the implemented rate is the analytic derivative, which at the
    # midpoint equals (pi/2)(3/T); the printed coefficient 3/(2T) would
    # give half of this (11.78 rad/s at T = 0.2 s)
    assert rate_mid == pytest.approx(0.5 * math.pi * 3.0 / T, rel=1e-12)
    assert rate_mid == pytest.approx(2.0 * 11.780972450961723, rel=1e-6)


def test_roll_reference_rate_matches_finite_difference():
    t0, T = 1.0, 0.2
    h = 1e-7
    for t in (t0, t0 + 0.5 * T, t0 + T, t0 + 1.7 * T):
        phi_p, _ = roll_reference(t + h, t0, T)
        phi_m, _ = roll_reference(t - h, t0, T)
        _, rate = roll_reference(t, t0, T)
        assert abs((phi_p - phi_m) / (2 * h) - rate) < 1e-6 * max(1.0, rate)


def test_roll_reference_rejects_bad_period():
    with pytest.raises(ValueError):
        roll_reference(0.0, 0.0, 0.0)


def test_parameter_vector_round_trip():
    k1 = DEFAULT_GAIT.as_vector()
    assert_allclose(GaitParams.from_vector(k1).as_vector(), k1, atol=0)
    k2 = DEFAULT_MANEUVER.as_vector()
    assert_allclose(ManeuverParams.from_vector(k2).as_vector(), k2, atol=0)
    with pytest.raises(ValueError):
        GaitParams.from_vector(np.zeros(10))
    with pytest.raises(ValueError):
        ManeuverParams.from_vector(np.zeros(4))
