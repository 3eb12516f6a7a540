"""Kinematics of the five-body chain: frames, velocities and Jacobians.

Frame conventions
-----------------
The inertial frame has x forward, y to the robot's left, z up. ``R_B`` maps
body-frame vectors to inertial vectors. Each arm frame is reached from the
body frame by a mediolateral rotation about z followed by a plunge rotation
about x; each wing frame is reached from its arm frame by an elbow rotation
about x followed by a feathering rotation about z.

Mirror convention
-----------------
Both sides use identical rotation compositions,

    R_A = Rz(theta_m) Rx(theta_p),   R_W = Rx(theta_e) Rz(theta_f),

so a mirror-symmetric posture has every right-wing angle equal to the
negated left-wing angle (Rz(-a) and Rx(-a) are the x-z-plane mirrors of
Rz(a) and Rx(a)). Consequently a joint offset added with equal sign to both
wings breaks the left/right force symmetry in every channel, which is what
the roll maneuver exploits.

Quasi-velocity vector (14 entries):

    qd = [w_B^B (3), pdot_B (3), thetadot_L (4), thetadot_R (4)]

with each joint block ordered (plunge, mediolateral, elbow, feathering).
Angular-velocity Jacobians map qd to the angular velocity of each body
expressed in that body's own frame; linear Jacobians map qd to inertial CoM
velocities.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .params import ARM_L, ARM_R, BODY, NQ, WING_L, WING_R, ModelParams

# Per-side data: (stack index of arm, stack index of wing, first joint
# column in qd).
_SIDES = (
    (ARM_L, WING_L, 6),    # left
    (ARM_R, WING_R, 10),   # right
)
SIDE_INDEX = {"left": 0, "right": 1}


def rot_x(theta: float) -> np.ndarray:
    """Rotation matrix about the x axis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array(((1.0, 0.0, 0.0), (0.0, c, -s), (0.0, s, c)))


def rot_z(theta: float) -> np.ndarray:
    """Rotation matrix about the z axis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array(((c, -s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0)))


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix S(v) with S(v) @ u = v x u."""
    return np.array(((0.0, -v[2], v[1]),
                     (v[2], 0.0, -v[0]),
                     (-v[1], v[0], 0.0)))


def unskew(m) -> np.ndarray:
    """Inverse of :func:`skew` for a skew-symmetric matrix."""
    return np.array((m[2, 1], m[0, 2], m[1, 0]))


@dataclass
class JointAngles:
    """The four joint angles of one wing side [rad]."""

    theta_p: float = 0.0
    theta_m: float = 0.0
    theta_e: float = 0.0
    theta_f: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.theta_p, self.theta_m, self.theta_e, self.theta_f])

    @classmethod
    def from_array(cls, a) -> "JointAngles":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass
class State:
    """Full kinematic state of the robot.

    Attributes
    ----------
    R_B : np.ndarray, shape (3, 3)
        Body-to-inertial rotation matrix.
    p_B : np.ndarray, shape (3,)
        Body CoM position [m].
    theta_L, theta_R : JointAngles
        Left and right joint angles.
    qd : np.ndarray, shape (14,)
        Quasi-velocity vector (see module docstring).
    """

    R_B: np.ndarray = field(default_factory=lambda: np.eye(3))
    p_B: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta_L: JointAngles = field(default_factory=JointAngles)
    theta_R: JointAngles = field(default_factory=JointAngles)
    qd: np.ndarray = field(default_factory=lambda: np.zeros(NQ))

    def __post_init__(self):
        self.R_B = np.asarray(self.R_B, dtype=float)
        self.p_B = np.asarray(self.p_B, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)

    @property
    def theta(self) -> np.ndarray:
        """All eight joint angles, left block then right block."""
        return np.concatenate(
            [self.theta_L.as_array(), self.theta_R.as_array()])

    def copy(self) -> "State":
        return State(self.R_B.copy(), self.p_B.copy(),
                     JointAngles(*self.theta_L.as_array()),
                     JointAngles(*self.theta_R.as_array()),
                     self.qd.copy())


def wing_rotations(angles: JointAngles, side: str):
    """Arm and wing rotation matrices (R_A, R_W) for one side.

    R_A maps arm-frame vectors to the body frame, R_W maps wing-frame
    vectors to the arm frame; both sides use the same composition (see the
    mirror convention above).
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    R_A = rot_z(angles.theta_m) @ rot_x(angles.theta_p)
    R_W = rot_x(angles.theta_e) @ rot_z(angles.theta_f)
    return R_A, R_W


def angular_velocities(theta_L: JointAngles, theta_R: JointAngles, qd):
    """Total angular velocities of arms and wings.

    Returns (w_AL_B, w_WL_AL, w_AR_B, w_WR_AR): each arm's angular velocity
    in the body frame and each wing's angular velocity in its arm frame,
    all including the body angular velocity w_B^B = qd[0:3].
    """
    qd = np.asarray(qd, dtype=float)
    w_B = qd[0:3]
    out = []
    for angles, base in ((theta_L, 6), (theta_R, 10)):
        dp, dm, de, df = qd[base:base + 4]
        w_arm = np.array([0.0, 0.0, dm]) \
            + rot_z(angles.theta_m) @ np.array([dp, 0.0, 0.0]) + w_B
        R_A, _ = wing_rotations(angles, "left")
        w_wing = np.array([de, 0.0, 0.0]) \
            + rot_x(angles.theta_e) @ np.array([0.0, 0.0, df]) \
            + R_A.T @ w_arm
        out.extend([w_arm, w_wing])
    return out[0], out[1], out[2], out[3]


def com_positions(R_B, p_B, theta_L: JointAngles, theta_R: JointAngles,
                  params: ModelParams):
    """CoM positions (p_AL, p_WL, p_AR, p_WR) in the inertial frame."""
    R_B = np.asarray(R_B, dtype=float)
    p_B = np.asarray(p_B, dtype=float)
    res = {}
    for side, angles in (("left", theta_L), ("right", theta_R)):
        l1, l2, l3 = params.link_vectors(side)
        R_A, R_W = wing_rotations(angles, side)
        R_AI = R_B @ R_A
        p_arm = p_B + R_B @ l1 + 0.5 * R_AI @ l2
        p_wing = p_arm + 0.5 * R_AI @ l2 + R_AI @ R_W @ l3
        res[side] = (p_arm, p_wing)
    return res["left"][0], res["left"][1], res["right"][0], res["right"][1]


class Kinematics:
    """Stacked kinematic quantities of all five bodies at one state.

    Bodies are ordered (BODY, ARM_L, ARM_R, WING_L, WING_R). All arrays are
    owned by this object and reused between evaluations when the same
    instance is passed back to :func:`compute_kinematics`.

    Attributes
    ----------
    R : (5, 3, 3) rotations body-local -> inertial.
    p : (5, 3) CoM positions [m].
    v : (5, 3) CoM velocities [m/s], v[i] = J_v[i] @ qd.
    w : (5, 3) angular velocities in each body's own frame [rad/s].
    J_v : (5, 3, 14) linear-velocity Jacobians (inertial frame).
    J_w : (5, 3, 14) angular-velocity Jacobians (local frames).
    elbow_p, elbow_v, elbow_J : (2, ...) elbow-joint point data, left then
        right; the elbow is the force reference point for the aerodynamics.
    R_arm, R_wing : (2, 3, 3) relative rotations (arm->body, wing->arm).
    w_rel_arm, w_rel_wing : (2, 3) relative angular rates, body/arm frames.
    wdot_rel_arm, wdot_rel_wing : (2, 3) their time derivatives at zero
        joint acceleration (velocity-product terms).
    """

    def __init__(self):
        self.R = np.zeros((5, 3, 3))
        self.p = np.zeros((5, 3))
        # J_v rows then J_w rows share one (30, 14) buffer so the mass
        # matrix and bias vector reduce to single matrix products; v and w
        # are views into the matching stacked velocity buffer.
        self.JJ = np.zeros((30, NQ))
        self.J_v = self.JJ[:15].reshape(5, 3, NQ)
        self.J_w = self.JJ[15:].reshape(5, 3, NQ)
        self.vw = np.zeros(30)
        self.v = self.vw[:15].reshape(5, 3)
        self.w = self.vw[15:].reshape(5, 3)
        self.elbow_p = np.zeros((2, 3))
        self.elbow_v = np.zeros((2, 3))
        self.elbow_J = np.zeros((2, 3, NQ))
        self.R_arm = np.zeros((2, 3, 3))
        self.R_wing = np.zeros((2, 3, 3))
        self.w_rel_arm = np.zeros((2, 3))
        self.w_rel_wing = np.zeros((2, 3))
        self.wdot_rel_arm = np.zeros((2, 3))
        self.wdot_rel_wing = np.zeros((2, 3))
        self.qd = np.zeros(NQ)
        self.params: ModelParams | None = None
        # Constant blocks: body rows and translational columns.
        for i in range(5):
            self.J_v[i, :, 3:6] = np.eye(3)
        self.J_w[BODY, :, 0:3] = np.eye(3)
        self.elbow_J[:, :, 3:6] = np.eye(3)
        # Constant joint columns (see module docstring for why these are
        # fixed unit vectors): plunge column of each arm frame and
        # feathering column of each wing frame.
        self.J_w[ARM_L, 0, 6] = 1.0
        self.J_w[ARM_R, 0, 10] = 1.0
        self.J_w[WING_L, 2, 9] = 1.0
        self.J_w[WING_R, 2, 13] = 1.0
        # Scratch buffers for the batched assembly (see compute_kinematics).
        self._skewT = np.zeros((6, 3, 3))
        self._blocks = np.zeros((6, 3, 3))
        self._ax = np.zeros((2, 8, 3))
        self._bx = np.zeros((2, 8, 3))
        self._cx = np.zeros((2, 8, 3))

    @property
    def R_B(self):
        return self.R[BODY]

    @property
    def p_B(self):
        return self.p[BODY]


def cross_rows(a, b, out=None):
    """Row-wise cross product without np.cross call overhead."""
    if out is None:
        out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def compute_kinematics(R_B, p_B, theta, qd, params: ModelParams,
                       kin: Kinematics | None = None) -> Kinematics:
    """Fill a :class:`Kinematics` for the given configuration and rates.

    Parameters are raw arrays for speed: ``theta`` is the 8-vector of joint
    angles (left block then right block), ``qd`` the 14-vector of
    quasi-velocities. This routine sits inside the innermost integration
    loop, hence the batched array work and scratch buffers.
    """
    if kin is None:
        kin = Kinematics()
    R = kin.R
    p = kin.p
    J_v = kin.J_v
    J_w = kin.J_w
    R[BODY] = R_B
    p[BODY] = p_B
    kin.qd[:] = qd
    kin.params = params

    for s, (ai, wi, jb) in enumerate(_SIDES):
        th_p, th_m, th_e, th_f = theta[4 * s:4 * s + 4]
        dth_p, dth_m, dth_e, dth_f = qd[jb:jb + 4]

        cm, sm = math.cos(th_m), math.sin(th_m)
        cp, sp = math.cos(th_p), math.sin(th_p)
        ce, se = math.cos(th_e), math.sin(th_e)
        cf, sf = math.cos(th_f), math.sin(th_f)
        # R_A = Rz(th_m) @ Rx(th_p), R_W = Rx(th_e) @ Rz(th_f)
        R_A = np.array(((cm, -sm * cp, sm * sp),
                        (sm, cm * cp, -cm * sp),
                        (0.0, sp, cp)))
        R_W = np.array(((cf, -sf, 0.0),
                        (ce * sf, ce * cf, -se),
                        (se * sf, se * cf, ce)))
        kin.R_arm[s] = R_A
        kin.R_wing[s] = R_W
        R_AI = R_B @ R_A
        R[ai] = R_AI
        R[wi] = R_AI @ R_W

        # Angular-velocity Jacobians (local frames); constant columns were
        # set in Kinematics.__init__. R_AW = R_A @ R_W is recovered from
        # the inertial stacks to avoid an extra product.
        J_w[ai, :, 0:3] = R_A.T
        J_w[ai, :, jb + 1] = R_A[2]
        J_w[wi, :, jb] = R_W[0]
        J_w[wi, :, jb + 2] = R_W[0]

        # Relative angular rates and their velocity-product derivatives,
        # used by the bias-force assembly.
        kin.w_rel_arm[s] = (dth_p * cm, dth_p * sm, dth_m)
        kin.wdot_rel_arm[s] = (-dth_p * dth_m * sm, dth_p * dth_m * cm, 0.0)
        kin.w_rel_wing[s] = (dth_e, -dth_f * se, dth_f * ce)
        kin.wdot_rel_wing[s] = (0.0, -dth_e * dth_f * ce,
                                -dth_e * dth_f * se)

    R_arm_I = R[1:3]            # (2,3,3) views, left row then right row
    R_wing_I = R[3:5]
    # R_AW^T = (R_B^T R_WI)^T = R_WI^T R_B
    R_AW_T = np.matmul(R_wing_I.transpose(0, 2, 1), R_B)
    J_w[3:5, :, 0:3] = R_AW_T
    J_w[WING_L, :, 7] = R_AW_T[0, :, 2]
    J_w[WING_R, :, 11] = R_AW_T[1, :, 2]

    # Positions: shoulder, arm CoM, elbow, wing CoM (batched over sides).
    u2 = np.matmul(R_arm_I, params.l_L2)
    w3 = np.matmul(R_wing_I, params.l_L3)
    o_S = params.l1_stack @ R_B.T
    o_S += p_B
    p_arm = o_S + 0.5 * u2
    o_E = o_S + u2
    p_wing = o_E + w3
    p[1:3] = p_arm
    p[3:5] = p_wing
    kin.elbow_p[:] = o_E

    # Body-rate columns of the linear Jacobians: S(p - p_B)^T R_B, batched
    # over the six chain points via a stacked skew buffer.
    sk = kin._skewT
    r0 = p_arm[:, 0], p_wing[:, 0], o_E[:, 0]
    r1 = p_arm[:, 1], p_wing[:, 1], o_E[:, 1]
    r2 = p_arm[:, 2], p_wing[:, 2], o_E[:, 2]
    for k in range(3):
        sl = slice(2 * k, 2 * k + 2)
        sk[sl, 0, 1] = r2[k] - p_B[2]
        sk[sl, 0, 2] = p_B[1] - r1[k]
        sk[sl, 1, 0] = p_B[2] - r2[k]
        sk[sl, 1, 2] = r0[k] - p_B[0]
        sk[sl, 2, 0] = r1[k] - p_B[1]
        sk[sl, 2, 1] = p_B[0] - r0[k]
    blocks = np.matmul(sk, R_B, out=kin._blocks)
    J_v[1:3, :, 0:3] = blocks[0:2]
    J_v[3:5, :, 0:3] = blocks[2:4]
    kin.elbow_J[:, :, 0:3] = blocks[4:6]

    # Joint columns: axis x (point - joint origin), one batched cross for
    # all sixteen (axis, lever) pairs. The plunge and elbow axes coincide
    # (arm-frame x), the feathering axis is the wing-frame z.
    axis_m = R_B[:, 2]
    ax_pe = R_arm_I[:, :, 0]
    ax_f = R_wing_I[:, :, 2]
    A, Bx = kin._ax, kin._bx
    A[:, 0] = ax_pe
    A[:, 1] = axis_m
    A[:, 2] = ax_pe
    A[:, 3] = axis_m
    A[:, 4] = ax_pe
    A[:, 5] = ax_f
    A[:, 6] = ax_pe
    A[:, 7] = axis_m
    d_ws = p_wing - o_S
    Bx[:, 0] = 0.5 * u2          # arm CoM - shoulder
    Bx[:, 1] = Bx[:, 0]
    Bx[:, 2] = d_ws
    Bx[:, 3] = d_ws
    Bx[:, 4] = w3                # wing CoM - elbow
    Bx[:, 5] = w3
    Bx[:, 6] = u2                # elbow - shoulder
    Bx[:, 7] = u2
    C = cross_rows(A, Bx, kin._cx)
    for s, (ai, wi, jb) in enumerate(_SIDES):
        Cs = C[s]
        J_v[ai, :, jb] = Cs[0]
        J_v[ai, :, jb + 1] = Cs[1]
        J_v[wi, :, jb] = Cs[2]
        J_v[wi, :, jb + 1] = Cs[3]
        J_v[wi, :, jb + 2] = Cs[4]
        J_v[wi, :, jb + 3] = Cs[5]
        kin.elbow_J[s, :, jb] = Cs[6]
        kin.elbow_J[s, :, jb + 1] = Cs[7]

    # Velocities from the Jacobians.
    np.matmul(kin.JJ, qd, out=kin.vw)
    np.matmul(kin.elbow_J.reshape(6, NQ), qd, out=kin.elbow_v.reshape(6))
    return kin


def velocity_jacobians(state: State, params: ModelParams) -> Kinematics:
    """Full kinematics (rotations, positions, velocities, Jacobians)."""
    return compute_kinematics(state.R_B, state.p_B, state.theta, state.qd,
                              params)


def wing_point_jacobian(kin: Kinematics, side: str, lf_local) -> np.ndarray:
    """Linear-velocity Jacobian of a material point on one wing plate.

    ``lf_local`` is the point position relative to the elbow joint in
    wing-frame coordinates.
    """
    s = SIDE_INDEX[side]
    wi = WING_L if s == 0 else WING_R
    R_WI = kin.R[wi]
    r = R_WI @ np.asarray(lf_local, dtype=float)
    return kin.elbow_J[s] - skew(r) @ (R_WI @ kin.J_w[wi])
