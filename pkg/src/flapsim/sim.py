"""Time integration, momentum/energy diagnostics and tracking controllers.

The integrator is classical RK4 on the composite state

    x = [R_B (9, row-major), p_B (3), theta (8), qd (14), W (1)]

where W accumulates the work done by all non-conservative generalized
forces (aerodynamic, motor and constraint); integrating W inside RK4 makes
the energy-balance check E(t) - E(0) = W(t) hold to integrator accuracy.
The rotation block evolves through Rdot = R_B S(w_B) and is projected back
onto SO(3) once per step (one Newton-Schulz polar iteration, which is
ample for the per-step drift of RK4).

Three drive modes are supported: prescribed joint accelerations enforced by
Lagrange multipliers (open-loop gait and PD-closed maneuver) and direct
joint torques from a PID tracker.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import aero as _aero
from .aero import WindField
from .dynamics import (EomWorkspace, constrained_accel, eom_terms, free_accel,
                       kinetic_energy, potential_energy)
from .gait import (GaitParams, JointReference, ManeuverParams,
                   joint_reference, maneuver_reference,
                   pd_acceleration_constraint)
from .kinematics import (JointAngles, Kinematics, State, compute_kinematics,
                         skew)
from .params import NQ, ModelParams

NX = 35
_RB = slice(0, 9)
_PB = slice(9, 12)
_TH = slice(12, 20)
_QD = slice(20, 34)
_IW = 34

MODE_CONSTRAINED = "constrained-gait"
MODE_TORQUE_PID = "torque-pid"
MODE_FREE = "free"
_MODES = (MODE_CONSTRAINED, MODE_TORQUE_PID, MODE_FREE)


@dataclass
class SimConfig:
    """Simulation settings.

    ``record_stride`` is the number of integration steps per trace sample;
    ``n_stations`` the spanwise quadrature resolution of the aerodynamics.
    """

    dt: float = 1e-4
    t_end: float = 2.0
    wind: WindField = field(default_factory=WindField)
    mode: str = MODE_CONSTRAINED
    record_stride: int = 10
    aero_enabled: bool = True
    n_stations: int = _aero.DEFAULT_STATIONS

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least dt")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")


@dataclass
class PidState:
    """Gains and integral state of the joint-space PID tracker.

    The integral term is clamped to +-``clamp`` N.m (anti-windup).
    """

    k_p: float = 0.0012
    k_i: float = 0.006
    k_d: float = 0.0012
    clamp: float = 0.05
    integral: np.ndarray = field(default_factory=lambda: np.zeros(8))

    def reset(self):
        self.integral[:] = 0.0


def pid_torque(pid: PidState, theta, theta_dot, theta_ref, theta_dot_ref,
               dt: float) -> np.ndarray:
    """One PID update: u = -kp e - clamp(ki int e) - kd edot.

    The integral accumulates by the rectangle rule at the control rate
    before the term is formed.
    """
    e = np.asarray(theta) - np.asarray(theta_ref)
    e_dot = np.asarray(theta_dot) - np.asarray(theta_dot_ref)
    pid.integral += e * dt
    i_term = np.clip(pid.k_i * pid.integral, -pid.clamp, pid.clamp)
    return -pid.k_p * e - i_term - pid.k_d * e_dot


class Trace:
    """Time-indexed record of a simulation run.

    Arrays are trimmed to the recorded length; ``failed`` marks a run that
    blew up (non-finite state), in which case the trace is truncated at the
    last finite sample.
    """

    def __init__(self, n: int):
        self.t = np.zeros(n)
        self.R = np.zeros((n, 9))
        self.p_B = np.zeros((n, 3))
        self.theta = np.zeros((n, 8))
        self.qd = np.zeros((n, NQ))
        self.Pi = np.zeros((n, 3))
        self.E = np.zeros(n)
        self.rpy = np.zeros((n, 3))
        self.work = np.zeros(n)
        self.failed = False
        self.max_constraint_residual = 0.0

    def __len__(self):
        return len(self.t)

    def truncate(self, n: int):
        for name in ("t", "R", "p_B", "theta", "qd", "Pi", "E", "rpy",
                     "work"):
            setattr(self, name, getattr(self, name)[:n])

    def table(self) -> np.ndarray:
        """All columns in the canonical export order, shape (n, 42)."""
        return np.column_stack([
            self.t, self.R, self.p_B, self.theta, self.qd, self.Pi,
            self.E, self.rpy,
        ])


def reorthonormalize(R) -> np.ndarray:
    """Project a near-rotation matrix onto the nearest proper rotation.

    Uses the polar factor computed by SVD. The input must already be close
    to orthonormal (Frobenius deviation below 0.1); a projection that ends
    up with a non-positive determinant means the state is corrupted.
    """
    R = np.asarray(R, dtype=float)
    dev = np.linalg.norm(R.T @ R - np.eye(3))
    if not dev < 0.1:
        raise ValueError(f"matrix too far from orthonormal (deviation {dev:.3g})")
    U, _, Vt = np.linalg.svd(R)
    out = U @ Vt
    if np.linalg.det(out) <= 0:
        # A reflection is not a perturbed rotation: the state is corrupted.
        raise RuntimeError("rotation projection produced det <= 0")
    return out


def euler_zyx(R) -> np.ndarray:
    """Roll, pitch, yaw from a rotation matrix (Z-Y-X extraction).

    Reporting only; the simulation state never uses Euler angles.
    """
    pitch = -math.asin(max(-1.0, min(1.0, R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def system_com(state: State, params: ModelParams) -> np.ndarray:
    """Mass-weighted center of mass of the five bodies."""
    kin = compute_kinematics(state.R_B, state.p_B, state.theta, state.qd,
                             params)
    return params.masses @ kin.p / params.total_mass


def angular_momentum(state: State, params: ModelParams) -> np.ndarray:
    """Total angular momentum about the system CoM, inertial frame."""
    kin = compute_kinematics(state.R_B, state.p_B, state.theta, state.qd,
                             params)
    return _momentum(kin, params)


def _momentum(kin: Kinematics, params: ModelParams) -> np.ndarray:
    p_com = params.masses @ kin.p / params.total_mass
    spin = np.einsum("fij,fj->i", kin.R, params.inertias * kin.w)
    orbital = np.cross(kin.p - p_com,
                       params.masses[:, None] * kin.v).sum(axis=0)
    return spin + orbital


def total_energy(state: State, params: ModelParams) -> float:
    """Kinetic plus gravitational potential energy."""
    kin = compute_kinematics(state.R_B, state.p_B, state.theta, state.qd,
                             params)
    return kinetic_energy(kin, params) + potential_energy(kin, params)


def rk4_step(x, t, dt, derivative_fn, rot_slice=_RB):
    """Classical RK4 step on a flat state vector.

    If ``rot_slice`` selects a 9-element rotation block, that block is
    re-orthonormalized (one Newton-Schulz polar iteration) after the
    update; pass ``rot_slice=None`` for states without a rotation.
    """
    x = np.asarray(x, dtype=float)
    k1 = derivative_fn(x, t)
    k2 = derivative_fn(x + (0.5 * dt) * k1, t + 0.5 * dt)
    k3 = derivative_fn(x + (0.5 * dt) * k2, t + 0.5 * dt)
    k4 = derivative_fn(x + dt * k3, t + dt)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if rot_slice is not None:
        R = out[rot_slice].reshape(3, 3)
        R[:] = R @ (1.5 * np.eye(3) - 0.5 * (R.T @ R))
    return out


# ---------------------------------------------------------------------------
# Controllers


class GaitConstraint:
    """Open-loop joint-acceleration command from the analytic gait."""

    def __init__(self, gait: GaitParams, params: ModelParams):
        self.gait = gait
        self.params = params

    def reference(self, t: float) -> JointReference:
        return joint_reference(t, self.gait, self.params)

    def command(self, t, theta, theta_dot) -> np.ndarray:
        return self.reference(t).theta_ddot


class ManeuverConstraint:
    """PD acceleration closure around the gait + offset reference."""

    def __init__(self, gait: GaitParams, maneuver: ManeuverParams,
                 params: ModelParams):
        self.gait = gait
        self.maneuver = maneuver
        self.params = params

    def reference(self, t: float) -> JointReference:
        return maneuver_reference(t, self.gait, self.maneuver, self.params)

    def command(self, t, theta, theta_dot) -> np.ndarray:
        return pd_acceleration_constraint(theta, theta_dot,
                                          self.reference(t))


class PidTracker:
    """Joint-torque PID tracking of the gait (+ optional maneuver)."""

    def __init__(self, gait: GaitParams, params: ModelParams,
                 pid: PidState | None = None,
                 maneuver: ManeuverParams | None = None):
        self.gait = gait
        self.maneuver = maneuver
        self.params = params
        self.pid = pid if pid is not None else PidState()

    def reference(self, t: float) -> JointReference:
        if self.maneuver is not None:
            return maneuver_reference(t, self.gait, self.maneuver,
                                      self.params)
        return joint_reference(t, self.gait, self.params)

    def torque(self, t, theta, theta_dot, dt) -> np.ndarray:
        ref = self.reference(t)
        return pid_torque(self.pid, theta, theta_dot, ref.theta,
                          ref.theta_dot, dt)


def initial_state(controller=None, t: float = 0.0) -> State:
    """Rest initial condition: identity attitude at the origin, joints on
    the controller reference (angles and rates) when one is given."""
    state = State()
    if controller is not None and hasattr(controller, "reference"):
        ref = controller.reference(t)
        state = State(theta_L=JointAngles.from_array(ref.theta[0:4]),
                      theta_R=JointAngles.from_array(ref.theta[4:8]))
        state.qd[6:14] = ref.theta_dot
    return state


# ---------------------------------------------------------------------------
# Main integration loop


def run_simulation(config: SimConfig, params: ModelParams, controller=None,
                   start: State | None = None, engine: str = "auto") -> Trace:
    """Integrate the model and record a :class:`Trace`.

    The mode selects how the wing joints are driven:

    - ``constrained-gait``: ``controller.command(t, theta, theta_dot)``
      supplies prescribed joint accelerations (Lagrange multipliers).
    - ``torque-pid``: ``controller.torque(t, theta, theta_dot, dt)``
      supplies motor torques, held over each step.
    - ``free``: no joint drive at all.

    ``engine`` selects the integration path: "reference" runs the plain
    numpy implementation in this module, "compiled" the numba kernels
    (identical math, see tests for the equivalence pin), "auto" prefers
    the compiled path for the standard controllers when numba is present.
    """
    mode = config.mode
    if mode != MODE_FREE and controller is None:
        raise ValueError(f"mode {mode!r} requires a controller")
    if start is None:
        start = initial_state(controller)
    if engine not in ("auto", "compiled", "reference"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine != "reference" and _kernels.HAVE_NUMBA:
        kmode = _kernel_mode(mode, controller)
        if kmode is not None:
            return _run_compiled(config, params, controller, start, kmode)
        if engine == "compiled":
            raise ValueError("compiled engine does not support this "
                             "controller type")
    return _run_reference(config, params, controller, start)


def _kernel_mode(mode, controller):
    if mode == MODE_FREE:
        return _kernels.MODE_FREE
    if mode == MODE_CONSTRAINED:
        if type(controller) is GaitConstraint:
            return _kernels.MODE_GAIT
        if type(controller) is ManeuverConstraint:
            return _kernels.MODE_MANEUVER
        return None
    if mode == MODE_TORQUE_PID:
        return _kernels.MODE_TORQUE if type(controller) is PidTracker \
            else None
    return None


def _pack_start(start: State) -> np.ndarray:
    x = np.empty(NX)
    x[_RB] = start.R_B.reshape(9)
    x[_PB] = start.p_B
    x[_TH] = start.theta
    x[_QD] = start.qd
    x[_IW] = 0.0
    return x


def _run_compiled(config, params, controller, start, kmode) -> Trace:
    dt = config.dt
    n_steps = int(round(config.t_end / dt))
    stride = config.record_stride
    trace = Trace(n_steps // stride + 1)

    phys = _kernels.pack_params(params)
    if kmode in (_kernels.MODE_GAIT, _kernels.MODE_MANEUVER):
        gait_pack = _kernels.pack_gait(controller.gait, params)
    elif kmode == _kernels.MODE_TORQUE:
        gait_pack = _kernels.pack_gait(controller.gait, params)
    else:
        gait_pack = np.zeros(13)
    man = getattr(controller, "maneuver", None)
    man_pack = _kernels.pack_maneuver(man if kmode != _kernels.MODE_GAIT
                                      else None)
    rhat, wts = _aero.spanwise_stations(config.n_stations)
    aero_on = 1 if config.aero_enabled else 0
    wind = config.wind.v_air
    u_motor = np.zeros(8)

    kin = Kinematics()
    x = _pack_start(start)
    _record(trace, 0, 0.0, x, params, kin)
    rec = 1
    residual_max = 0.0
    per_call = 1 if kmode == _kernels.MODE_TORQUE else stride
    steps_done = 0
    while steps_done < n_steps:
        t = steps_done * dt
        if kmode == _kernels.MODE_TORQUE:
            u_motor[:] = controller.torque(t, x[_TH], x[_QD][6:14], dt)
        n_now = min(per_call, n_steps - steps_done)
        r = _kernels.simulate_chunk(x, t, dt, n_now, phys, kmode, gait_pack,
                                    man_pack, wind, aero_on, rhat, wts,
                                    u_motor)
        residual_max = max(residual_max, r)
        steps_done += n_now
        if steps_done % stride == 0:
            if not np.isfinite(x).all():
                trace.truncate(rec)
                trace.failed = True
                break
            _record(trace, rec, steps_done * dt, x, params, kin)
            rec += 1
    trace.max_constraint_residual = residual_max
    return trace


def _run_reference(config: SimConfig, params: ModelParams, controller,
                   start: State) -> Trace:
    mode = config.mode
    dt = config.dt
    n_steps = int(round(config.t_end / dt))
    stride = config.record_stride
    n_records = n_steps // stride + 1
    trace = Trace(n_records)

    kin = Kinematics()
    ws = EomWorkspace()
    v_air = config.wind.v_air
    aero_on = config.aero_enabled
    n_st = config.n_stations
    constrained = mode == MODE_CONSTRAINED
    residual_max = 0.0

    u_motor = np.zeros(8)

    def deriv(x, t):
        nonlocal residual_max
        R = x[_RB].reshape(3, 3)
        theta = x[_TH]
        qd = x[_QD]
        compute_kinematics(R, x[_PB], theta, qd, params, kin)
        M, h = eom_terms(kin, params, ws)
        if aero_on:
            u = _aero.generalized_forces(kin, v_air, params, n_st)
        else:
            u = np.zeros(NQ)
        if constrained:
            tddc = controller.command(t, theta, qd[6:14])
            qdd, lam = constrained_accel(M, h, u, tddc, ws)
            power = qd @ u + qd[6:14] @ lam
            r = qdd[6:14] - tddc
            residual_max = max(residual_max, float(np.max(np.abs(r))))
        else:
            if mode == MODE_TORQUE_PID:
                u[6:14] += u_motor
            qdd = free_accel(M, h, u)
            power = qd @ u
        xdot = np.empty(NX)
        xdot[_RB] = (R @ skew(qd[0:3])).reshape(9)
        xdot[_PB] = qd[3:6]
        xdot[_TH] = qd[6:14]
        xdot[_QD] = qdd
        xdot[_IW] = power
        return xdot

    x = _pack_start(start)
    _record(trace, 0, 0.0, x, params, kin)
    rec = 1
    eye3 = np.eye(3)
    for step in range(n_steps):
        t = step * dt
        if mode == MODE_TORQUE_PID:
            u_motor[:] = controller.torque(t, x[_TH], x[_QD][6:14], dt)
        try:
            k1 = deriv(x, t)
            k2 = deriv(x + (0.5 * dt) * k1, t + 0.5 * dt)
            k3 = deriv(x + (0.5 * dt) * k2, t + 0.5 * dt)
            k4 = deriv(x + dt * k3, t + dt)
        except np.linalg.LinAlgError:
            # State left the valid regime (overflow/NaN): blown-up run.
            trace.truncate(rec)
            trace.failed = True
            break
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        R = x[_RB].reshape(3, 3)
        R[:] = R @ (1.5 * eye3 - 0.5 * (R.T @ R))
        if (step + 1) % stride == 0:
            if not np.isfinite(x).all():
                trace.truncate(rec)
                trace.failed = True
                break
            _record(trace, rec, (step + 1) * dt, x, params, kin)
            rec += 1
    trace.max_constraint_residual = residual_max
    return trace


def _record(trace, i, t, x, params, kin):
    R = x[_RB].reshape(3, 3)
    compute_kinematics(R, x[_PB], x[_TH], x[_QD], params, kin)
    trace.t[i] = t
    trace.R[i] = x[_RB]
    trace.p_B[i] = x[_PB]
    trace.theta[i] = x[_TH]
    trace.qd[i] = x[_QD]
    trace.Pi[i] = _momentum(kin, params)
    trace.E[i] = kinetic_energy(kin, params) + potential_energy(kin, params)
    trace.rpy[i] = euler_zyx(R)
    trace.work[i] = x[_IW]
