"""Shared helpers: random states and finite-difference oracles."""

import numpy as np
import pytest

from flapsim import JointAngles, ModelParams, State
from flapsim.kinematics import skew


def axis_angle(axis, angle):
    """Rodrigues rotation about an arbitrary axis (exact)."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def random_state(rng, rate_scale=5.0):
    """A generic state: random attitude, joint angles and rates."""
    return State(
        R_B=axis_angle(rng.normal(size=3), rng.uniform(0.0, np.pi)),
        p_B=rng.normal(size=3),
        theta_L=JointAngles(*rng.uniform(-np.pi, np.pi, 4)),
        theta_R=JointAngles(*rng.uniform(-np.pi, np.pi, 4)),
        qd=rng.uniform(-rate_scale, rate_scale, 14),
    )


def perturb_direction(state, j, delta):
    """Flow the configuration by delta along quasi-velocity direction j.

    Directions 0-2 rotate the body frame (right-multiplied axis rotation,
    matching dR = R S(w) dt), 3-5 translate, 6-13 move one joint.
    """
    out = state.copy()
    if j < 3:
        e = np.zeros(3)
        e[j] = 1.0
        out.R_B = state.R_B @ axis_angle(e, delta)
    elif j < 6:
        out.p_B[j - 3] += delta
    else:
        th = state.theta.copy()
        th[j - 6] += delta
        out.theta_L = JointAngles(*th[0:4])
        out.theta_R = JointAngles(*th[4:8])
    return out


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
