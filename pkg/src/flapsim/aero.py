"""Quasi-steady blade-element aerodynamics of the two wing plates.

Each wing plate is reduced to its quarter-chord line. The line is sampled
spanwise at fixed Gauss-Legendre stations; every station contributes a
lift/drag force from the local relative airspeed, and the station forces
are condensed into a single wrench (force + torque) about the elbow joint,
expressed in the wing frame.

Wing-surface basis (wing-frame coordinates): chordwise e_c = +x, spanwise
e_r = +z, and the surface normal e_n = -y on the left wing / +y on the
right wing (mirror images, both normals point "up" in level flight).

The drag coefficient multiplies sgn(chordwise flow), so drag always opposes
the chordwise flow component; stations with relative airspeed below
``SPEED_FLOOR`` contribute exactly zero (force scales with speed squared,
so the cutoff is inconsequential).
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .kinematics import SIDE_INDEX, Kinematics
from .params import NQ, WING_L, WING_R, ModelParams

DEFAULT_STATIONS = 32
SPEED_FLOOR = 1e-9      # [m/s] below this the local flow counts as zero

_WING_OF_SIDE = (WING_L, WING_R)
# e_n = -sigma * e_y per side (left sigma = +1, right sigma = -1).
_EN_SIGN = np.array([[-1.0], [1.0]])

_CL_PHASE = math.radians(7.2)
_CD_PHASE = math.radians(9.82)


@dataclass
class WindField:
    """Constant ambient air velocity in the inertial frame [m/s]."""

    v_air: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.v_air = np.asarray(self.v_air, dtype=float)
        if self.v_air.shape != (3,):
            raise ValueError("v_air must be a 3-vector")


@dataclass
class AeroWrench:
    """Force and torque of one wing about its elbow joint, wing frame."""

    f: np.ndarray
    tau: np.ndarray
    side: str


def lift_coefficient(alpha_deg):
    """Quasi-steady lift coefficient; angle of attack in degrees."""
    return 0.225 + 1.58 * np.sin(np.radians(2.13 * alpha_deg - 7.2))


def drag_coefficient(alpha_deg):
    """Quasi-steady drag coefficient; angle of attack in degrees."""
    return 1.92 - 1.55 * np.cos(np.radians(2.04 * alpha_deg - 9.82))


@lru_cache(maxsize=8)
def spanwise_stations(n: int):
    """Gauss-Legendre nodes and weights on [0, 1] for spanwise quadrature."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=8)
def _chord_line(w_c: float, w_r: float, n: int):
    r_hat, weights = spanwise_stations(n)
    lf = np.zeros((3, n))
    lf[0] = 0.25 * w_c
    lf[2] = r_hat * w_r
    return lf, weights


def chord_line_points(params: ModelParams, r_hat) -> np.ndarray:
    """Quarter-chord line point(s) l_f(r_hat) in wing-frame coordinates."""
    r_hat = np.asarray(r_hat, dtype=float)
    out = np.zeros((3,) + r_hat.shape)
    out[0] = 0.25 * params.w_c
    out[2] = r_hat * params.w_r
    return out


def airfoil_velocity(kin: Kinematics, wind: WindField, side: str,
                     r_hat: float) -> np.ndarray:
    """Velocity of the wing material point at l_f(r_hat) relative to the
    ambient air, expressed in the wing frame."""
    if not 0.0 <= r_hat <= 1.0:
        raise ValueError("r_hat must lie in [0, 1]")
    if kin.params is None:
        raise ValueError("Kinematics must carry model parameters")
    s = SIDE_INDEX[side]
    wi = _WING_OF_SIDE[s]
    R_WI = kin.R[wi]
    p = kin.params
    lf = np.array([0.25 * p.w_c, 0.0, r_hat * p.w_r])
    w_I = R_WI @ kin.w[wi]
    p_dot = kin.elbow_v[s] + np.cross(w_I, R_WI @ lf)
    return R_WI.T @ (p_dot - wind.v_air)


def angle_of_attack(v_w, side: str) -> float:
    """Angle of attack in degrees from the wing-frame relative velocity.

    Defined as atan2(normal component, chordwise component); returns 0 for
    near-zero flow (the associated force vanishes quadratically anyway).
    """
    v_w = np.asarray(v_w, dtype=float)
    if np.linalg.norm(v_w) < SPEED_FLOOR:
        return 0.0
    sigma = 1.0 if side == "left" else -1.0
    return math.degrees(math.atan2(-sigma * v_w[1], v_w[0]))


def _station_data(kin: Kinematics, v_air, params: ModelParams, n: int):
    """Station force densities for both wings.

    Returns (df, lf, weights): df is the (2, 3, n) array of wing-frame
    force line densities, lf the (3, n) quarter-chord points, weights the
    quadrature weights.
    """
    lf, weights = _chord_line(params.w_c, params.w_r, n)
    R_W = kin.R[3:5]                       # wing -> inertial, both sides
    w_I = np.matmul(R_W, kin.w[3:5, :, None])[:, :, 0]
    pts = np.matmul(R_W, lf)               # (2, 3, n) station offsets
    # v_rel = elbow velocity + w_I x offset - wind, then into wing frame.
    v_rel = np.empty_like(pts)
    w0 = w_I[:, 0:1]
    w1 = w_I[:, 1:2]
    w2 = w_I[:, 2:3]
    v_rel[:, 0] = w1 * pts[:, 2] - w2 * pts[:, 1]
    v_rel[:, 1] = w2 * pts[:, 0] - w0 * pts[:, 2]
    v_rel[:, 2] = w0 * pts[:, 1] - w1 * pts[:, 0]
    v_rel += (kin.elbow_v - v_air)[:, :, None]
    v_w = np.matmul(R_W.transpose(0, 2, 1), v_rel)

    v_c = v_w[:, 0]
    v_n = _EN_SIGN * v_w[:, 1]
    speed2 = v_c * v_c + v_w[:, 1] * v_w[:, 1] + v_w[:, 2] * v_w[:, 2]
    alpha = np.arctan2(v_n, v_c)           # radians; coefficient formulas
    C_L = 0.225 + 1.58 * np.sin(2.13 * alpha - _CL_PHASE)
    C_D = 1.92 - 1.55 * np.cos(2.04 * alpha - _CD_PHASE)
    scale = (0.5 * params.rho * params.w_c * params.w_r) * speed2
    scale[speed2 < SPEED_FLOOR ** 2] = 0.0
    f_l = scale * C_L
    f_d = scale * C_D * np.sign(v_c)
    # f_l e_n - f_d e_c with e_n = (0, -sigma, 0), e_c = (1, 0, 0).
    df = np.zeros_like(pts)
    df[:, 0] = -f_d
    df[:, 1] = _EN_SIGN * f_l
    return df, lf, weights


def _wrench_from_stations(df, lf, weights, s):
    f = df[s] @ weights
    # tau = l_f x df with l_f = (lc, 0, lr) and df_z = 0.
    lc = lf[0, 0]
    lr = lf[2]
    tau = np.empty(3)
    tau[0] = -(lr * df[s, 1]) @ weights
    tau[1] = (lr * df[s, 0]) @ weights
    tau[2] = lc * (df[s, 1] @ weights)
    return f, tau


def wing_wrench(kin: Kinematics, wind: WindField, params: ModelParams,
                side: str, n_stations: int = DEFAULT_STATIONS) -> AeroWrench:
    """Aerodynamic wrench of one wing about its elbow joint (wing frame)."""
    s = SIDE_INDEX[side]
    df, lf, weights = _station_data(kin, wind.v_air, params, n_stations)
    f, tau = _wrench_from_stations(df, lf, weights, s)
    return AeroWrench(f=f, tau=tau, side=side)


def generalized_aero_forces(kin: Kinematics, wrenches) -> np.ndarray:
    """Map the two wing wrenches to generalized forces on qd.

    Equivalent to B_a @ u_a with u_a the stacked 12-vector of wing-frame
    forces and torques: the force acts through the elbow-point Jacobian
    (rotated to the inertial frame), the torque through the wing
    angular-velocity Jacobian.
    """
    Q = np.zeros(NQ)
    for wrench in wrenches:
        f = np.asarray(wrench.f, dtype=float)
        tau = np.asarray(wrench.tau, dtype=float)
        if f.shape != (3,) or tau.shape != (3,):
            raise ValueError("wrench force and torque must be 3-vectors")
        s = SIDE_INDEX[wrench.side]
        wi = _WING_OF_SIDE[s]
        R_WI = kin.R[wi]
        Q += kin.elbow_J[s].T @ (R_WI @ f)
        Q += kin.J_w[wi].T @ tau
    return Q


def aero_input_matrix(kin: Kinematics) -> np.ndarray:
    """The 14x12 matrix mapping u_a = [f_L, tau_L, f_R, tau_R] to
    generalized forces."""
    B_a = np.zeros((NQ, 12))
    for s, wi in enumerate(_WING_OF_SIDE):
        R_WI = kin.R[wi]
        B_a[:, 6 * s:6 * s + 3] = kin.elbow_J[s].T @ R_WI
        B_a[:, 6 * s + 3:6 * s + 6] = kin.J_w[wi].T
    return B_a


def generalized_forces(kin: Kinematics, v_air, params: ModelParams,
                       n_stations: int = DEFAULT_STATIONS) -> np.ndarray:
    """Fused wrench + mapping evaluation used by the simulation loop."""
    df, lf, weights = _station_data(kin, v_air, params, n_stations)
    fw = df @ weights                     # (2, 3) wing-frame forces
    lc = lf[0, 0]
    lrw = lf[2] * weights
    t0 = -df[:, 1] @ lrw
    t1 = df[:, 0] @ lrw
    t2 = lc * (df[:, 1] @ weights)
    Q = np.zeros(NQ)
    for s, wi in enumerate(_WING_OF_SIDE):
        R_WI = kin.R[wi]
        Q += kin.elbow_J[s].T @ (R_WI @ fw[s])
        JwT = kin.J_w[wi]
        Q += t0[s] * JwT[0] + t1[s] * JwT[1] + t2[s] * JwT[2]
    return Q
