"""Multibody dynamics and gait optimization for a five-body articulated
flapping-wing robot.

The package simulates a rigid central body with two-link wings (arm plus
wing plate per side) under quasi-steady blade-element aerodynamics, drives
the eight wing joints through prescribed-acceleration constraints or joint
torques, and searches gait parameters for momentum-neutral flapping and an
upside-down roll maneuver.
"""

__version__ = "0.1.0"

from .aero import (AeroWrench, WindField, angle_of_attack, drag_coefficient,
                   generalized_aero_forces, lift_coefficient, wing_wrench)
from .dynamics import (ConstraintSpec, EomTerms, bias_vector,
                       forward_dynamics, lagrange_multiplier, mass_matrix)
from .gait import (DEFAULT_GAIT, DEFAULT_MANEUVER, TUNED_GAIT,
                   TUNED_MANEUVER, GaitParams, JointReference,
                   ManeuverParams, joint_reference, maneuver_reference,
                   offset_trajectory, pd_acceleration_constraint,
                   roll_reference)
from .kinematics import (JointAngles, Kinematics, State, angular_velocities,
                         com_positions, rot_x, rot_z, velocity_jacobians,
                         wing_rotations)
from .opt import (GaitCostConfig, OptResult, PerchCostConfig, gait_cost,
                  optimize, perch_cost)
from .params import ModelParams
from .sim import (GaitConstraint, ManeuverConstraint, PidState, PidTracker,
                  SimConfig, Trace, angular_momentum, pid_torque,
                  reorthonormalize, rk4_step, run_simulation, system_com,
                  total_energy)

__all__ = [
    "AeroWrench", "WindField", "angle_of_attack", "drag_coefficient",
    "generalized_aero_forces", "lift_coefficient", "wing_wrench",
    "ConstraintSpec", "EomTerms", "bias_vector", "forward_dynamics",
    "lagrange_multiplier", "mass_matrix",
    "DEFAULT_GAIT", "DEFAULT_MANEUVER", "TUNED_GAIT", "TUNED_MANEUVER",
    "GaitParams", "JointReference",
    "ManeuverParams", "joint_reference", "maneuver_reference",
    "offset_trajectory", "pd_acceleration_constraint", "roll_reference",
    "JointAngles", "Kinematics", "State", "angular_velocities",
    "com_positions", "rot_x", "rot_z", "velocity_jacobians",
    "wing_rotations",
    "GaitCostConfig", "OptResult", "PerchCostConfig", "gait_cost",
    "optimize", "perch_cost",
    "ModelParams",
    "GaitConstraint", "ManeuverConstraint", "PidState", "PidTracker",
    "SimConfig", "Trace", "angular_momentum", "pid_torque",
    "reorthonormalize", "rk4_step", "run_simulation", "system_com",
    "total_energy",
]
