"""Parametric joint reference trajectories and the roll maneuver profile.

The flapping gait drives every joint with a cosine at the flapping
frequency: amplitude, mean and phase per joint, with the plunge oscillator
defining the phase origin (11 free parameters in total). The right-wing
reference mirrors the left one, which under the rotation conventions of
:mod:`flapsim.kinematics` means every right-wing angle is the negated
left-wing angle.

The roll maneuver superimposes a triangular mean-angle offset, applied with
identical sign to both wings, which breaks the left/right force symmetry.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .params import ModelParams

# Maps a left-wing joint 4-vector to its mirror-image right-wing values.
MIRROR_SIGNS = np.array([-1.0, -1.0, -1.0, -1.0])

_DEG = math.pi / 180.0


@dataclass
class GaitParams:
    """Flapping-gait parameters (the 11-dim search vector).

    Attributes
    ----------
    mean : np.ndarray, shape (4,)
        Mean joint angles (plunge, mediolateral, elbow, feathering) [rad].
    amplitude : np.ndarray, shape (4,)
        Oscillation amplitudes in the same order [rad].
    phase : np.ndarray, shape (3,)
        Phase shifts of mediolateral, elbow and feathering relative to the
        plunge oscillator [rad].
    """

    mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    amplitude: np.ndarray = field(default_factory=lambda: np.zeros(4))
    phase: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.amplitude = np.asarray(self.amplitude, dtype=float)
        self.phase = np.asarray(self.phase, dtype=float)
        if (self.mean.shape, self.amplitude.shape, self.phase.shape) \
                != ((4,), (4,), (3,)):
            raise ValueError("gait parameter shapes must be (4,), (4,), (3,)")

    def as_vector(self) -> np.ndarray:
        """Pack as [mean (4), amplitude (4), phase (3)]."""
        return np.concatenate([self.mean, self.amplitude, self.phase])

    @classmethod
    def from_vector(cls, k1) -> "GaitParams":
        k1 = np.asarray(k1, dtype=float)
        if k1.shape != (11,):
            raise ValueError("gait vector must have 11 entries")
        return cls(k1[0:4].copy(), k1[4:8].copy(), k1[8:11].copy())


@dataclass
class ManeuverParams:
    """Triangular mean-offset maneuver (the 5-dim search vector).

    ``t0`` is the ramp start time, ``d`` the peak offsets per joint and
    ``T`` the ramp-up (and ramp-down) period, so the offset returns to zero
    at t0 + 2T.
    """

    t0: float = 0.0
    d: np.ndarray = field(default_factory=lambda: np.zeros(4))
    T: float = 0.2

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float)
        if self.d.shape != (4,):
            raise ValueError("offset amplitude d must be a 4-vector")
        if self.T <= 0:
            raise ValueError("ramp period T must be positive")

    def as_vector(self) -> np.ndarray:
        """Pack as [t0, d (4)]."""
        return np.concatenate([[self.t0], self.d])

    @classmethod
    def from_vector(cls, k2, T: float = 0.2) -> "ManeuverParams":
        k2 = np.asarray(k2, dtype=float)
        if k2.shape != (5,):
            raise ValueError("maneuver vector must have 5 entries")
        return cls(float(k2[0]), k2[1:5].copy(), T)


@dataclass
class JointReference:
    """Reference joint angles, rates and accelerations (left then right)."""

    theta: np.ndarray
    theta_dot: np.ndarray
    theta_ddot: np.ndarray


# Gait and roll-maneuver parameters published for the original vehicle
# (converted from degrees). These are the conventional starting points for
# the optimizers; in this implementation they are not momentum-neutral
# (see TUNED_GAIT below).
DEFAULT_GAIT = GaitParams(
    mean=np.array([-75.3, -16.2, -50.7, -9.2]) * _DEG,
    amplitude=np.array([45.0, 17.3, 27.2, 29.1]) * _DEG,
    phase=np.array([-91.0, -112.0, -92.5]) * _DEG,
)
DEFAULT_MANEUVER = ManeuverParams(
    t0=1.0724,
    d=np.array([-55.7, 0.0, 0.0, -16.6]) * _DEG,
    T=0.2,
)

# Parameters found by this package's own two-stage search in a -2 m/s
# headwind: `optimize-gait` (seed 0, budget 300) followed by
# `optimize-perch` (seed 1, budget 300, popsize 14). The gait holds the
# angular momentum about the system CoM near zero with an approximately
# constant flight velocity; the maneuver rolls the body past 150 degrees
# within half a second of t0. Stored at full precision so the seeded
# searches reproduce them exactly.
TUNED_GAIT = GaitParams(
    mean=np.array([0.9685701259912252, 0.19183866577752084,
                   -2.4687390277554164, -2.8313399713027447]),
    amplitude=np.array([0.913800945410739, 0.21410793268757064,
                        0.6337093611384581, 1.3409675669339054]),
    phase=np.array([-3.141592653589793, -3.141592653589793,
                    -2.157651142716485]),
)
TUNED_MANEUVER = ManeuverParams(
    t0=1.0522308760677515,
    d=np.array([-2.051075250896012, 1.2277651700732286,
                1.0430735633660264, 2.792526803190927]),
    T=0.2,
)


def joint_reference(t: float, gait: GaitParams,
                    params: ModelParams) -> JointReference:
    """Open-loop gait reference at time ``t`` for both wings."""
    omega = params.omega_flap
    ph = np.array([0.0, gait.phase[0], gait.phase[1], gait.phase[2]])
    arg = omega * t + ph
    c = np.cos(arg)
    s = np.sin(arg)
    th_l = gait.amplitude * c + gait.mean
    thd_l = -gait.amplitude * omega * s
    thdd_l = -gait.amplitude * omega * omega * c
    theta = np.concatenate([th_l, MIRROR_SIGNS * th_l])
    theta_dot = np.concatenate([thd_l, MIRROR_SIGNS * thd_l])
    theta_ddot = np.concatenate([thdd_l, MIRROR_SIGNS * thdd_l])
    return JointReference(theta, theta_dot, theta_ddot)


def offset_trajectory(t: float, maneuver: ManeuverParams):
    """Triangular mean-angle offset and its rate at time ``t``.

    The rate is d/T during [t0, t0+T), -d/T during [t0+T, t0+2T) and zero
    otherwise; the offset is the running integral (peaks at d, returns to
    zero).
    """
    t0, d, T = maneuver.t0, maneuver.d, maneuver.T
    if t < t0 or t >= t0 + 2.0 * T:
        return np.zeros(4), np.zeros(4)
    if t < t0 + T:
        return d * ((t - t0) / T), d / T
    return d * ((t0 + 2.0 * T - t) / T), -d / T


def maneuver_reference(t: float, gait: GaitParams,
                       maneuver: ManeuverParams,
                       params: ModelParams) -> JointReference:
    """Gait reference with the offset applied equally to both wings.

    Only the angles and rates carry the offset; the reference acceleration
    is left untouched because the maneuver is tracked through the PD
    acceleration closure, which never differentiates the ramp corners.
    """
    ref = joint_reference(t, gait, params)
    off, rate = offset_trajectory(t, maneuver)
    ref.theta[0:4] += off
    ref.theta[4:8] += off
    ref.theta_dot[0:4] += rate
    ref.theta_dot[4:8] += rate
    return ref


def pd_acceleration_constraint(theta, theta_dot,
                               reference: JointReference) -> np.ndarray:
    """PD acceleration command -120 (theta - ref) - 120 (rate - ref rate)."""
    return (-120.0 * (theta - reference.theta)
            - 120.0 * (theta_dot - reference.theta_dot))


def roll_reference(t: float, t0: float, T: float):
    """Target roll angle and roll rate for the upside-down maneuver.

    A tanh ramp sweeping 180 degrees over roughly [t0, t0 + 2T]:
    phi(t) = (pi/2) tanh(eta), eta = 3 (t - t0) / T - 3, with the rate being
    the exact analytic derivative (pi/2)(3/T)(1 - tanh^2 eta).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    eta = 3.0 * (t - t0) / T - 3.0
    th = math.tanh(eta)
    phi = 0.5 * math.pi * th
    phi_dot = 0.5 * math.pi * (3.0 / T) * (1.0 - th * th)
    return phi, phi_dot
