"""Equations of motion of the 14-DoF system and constrained dynamics.

The dynamics are assembled by projecting each body's Newton-Euler equations
onto the quasi-velocity directions (Kane / Jourdain projection), which for
this choice of quasi-velocities is equivalent to the Euler-Lagrange
equations with the body rotation handled directly on SO(3):

    M(q) qdd + h(q, qd) = B_a u_a + B_m u_m            (unconstrained)
    M qdd + h = u + J_c^T lambda,  J_c qdd = tddc      (joint constrained)

with M = sum_F (m_F J_v^T J_v + J_w^T I_F J_w) and h containing the
velocity-product (Coriolis, centrifugal, gyroscopic) forces plus gravity.
J_c = [0_{8x6} I_8] selects the joint accelerations. Linear solves use a
Cholesky factorization of M; the constraint system is solved through the
8x8 Schur complement J_c M^{-1} J_c^T.

Sign conventions are validated by conservation tests: energy balance
dE/dt = qd . Q_nc and conservation of angular momentum about the system
CoM in free fall.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import dsyrk
from scipy.linalg.lapack import dpotrf, dpotrs

from .kinematics import Kinematics, State, cross_rows, velocity_jacobians
from .params import NQ, ModelParams

NJOINT = 8

# Motor torques act directly on the eight joint rates.
B_M = np.vstack([np.zeros((6, NJOINT)), np.eye(NJOINT)])
J_C = np.hstack([np.zeros((NJOINT, 6)), np.eye(NJOINT)])


@dataclass
class EomTerms:
    """Mass matrix, bias vector and motor input map at one state."""

    M: np.ndarray
    h: np.ndarray
    B_m: np.ndarray = field(default_factory=lambda: B_M.copy())


@dataclass
class ConstraintSpec:
    """Prescribed joint accelerations enforced via Lagrange multipliers."""

    theta_ddot_c: np.ndarray

    def __post_init__(self):
        self.theta_ddot_c = np.asarray(self.theta_ddot_c, dtype=float)
        if self.theta_ddot_c.shape != (NJOINT,):
            raise ValueError("theta_ddot_c must be an 8-vector")

    @property
    def J_c(self) -> np.ndarray:
        return J_C.copy()


class EomWorkspace:
    """Reusable buffers for the hot-path assembly of M and h."""

    def __init__(self):
        self.A30 = np.zeros((30, NQ))
        self.ft = np.zeros(30)
        self.fa = self.ft[:15].reshape(5, 3)   # m_F (a_F + g e_z)
        self.ta = self.ft[15:].reshape(5, 3)   # I_F alpha_F + w x I_F w
        self.h = np.zeros(NQ)
        # Cross-product staging buffers for the bias sweep.
        self.xa = np.zeros((15, 3))
        self.xb = np.zeros((15, 3))
        self.xc = np.zeros((15, 3))
        self.ya = np.zeros((10, 3))
        self.yb = np.zeros((10, 3))
        self.yc = np.zeros((10, 3))


def eom_terms(kin: Kinematics, params: ModelParams,
              ws: EomWorkspace | None = None):
    """Lower-triangular mass matrix and bias vector from kinematics.

    Only the lower triangle of the returned M is populated (the solvers
    below reference nothing else); use :func:`mass_matrix` for the full
    symmetric matrix.
    """
    if ws is None:
        ws = EomWorkspace()
    M = _mass_matrix_lower(kin, params, ws)
    h = _bias_vector(kin, params, ws)
    return M, h


def _mass_matrix_lower(kin, params, ws):
    np.multiply(kin.JJ, params.weight_sqrt[:, None], out=ws.A30)
    return dsyrk(1.0, ws.A30, trans=1, lower=1)


def _bias_vector(kin, params, ws):
    """Velocity-product and gravity forces via a Newton-Euler sweep.

    All accelerations are evaluated at zero quasi-acceleration; gravity is
    folded in as a fictitious linear acceleration so a single projection
    through the stacked Jacobians yields h. Cross products are staged into
    batched row-wise evaluations.
    """
    w_B = kin.w[0]
    w_arm = kin.w[1:3]          # own-frame angular velocities (views)
    w_wing = kin.w[3:5]
    l2 = params.l_L2
    l3 = params.l_L3

    # Stage one: all cross products that depend on kinematics alone.
    # Rows: 0:2   w_rel_arm x w_arm_B        4:6   w_B x l1
    #       2:4   w_rel_wing x w_wing_arm    6:8   w_arm x l2
    #       8:10  w_wing x l3                10:15 w x (I w)  (gyroscopic)
    a, b = ws.xa, ws.xb
    a[0:2] = kin.w_rel_arm
    a[2:4] = kin.w_rel_wing
    a[4:6] = w_B
    a[6:8] = w_arm
    a[8:10] = w_wing
    a[10:15] = kin.w
    b[0:2] = kin.w_rel_arm
    b[0:2] += w_B
    b[2:4] = w_arm
    b[2:4] += kin.w_rel_wing
    b[4:6] = params.l1_stack
    b[6:8] = l2
    b[8:10] = l3
    b[10:15] = params.inertias * kin.w
    c1 = cross_rows(a, b, ws.xc)

    # Angular accelerations of arms and wings in their own frames.
    t1 = kin.wdot_rel_arm - c1[0:2]
    alpha_arm = np.matmul(t1[:, None, :], kin.R_arm)[:, 0, :]
    t2 = alpha_arm + kin.wdot_rel_wing
    t2 -= c1[2:4]
    alpha_wing = np.matmul(t2[:, None, :], kin.R_wing)[:, 0, :]

    # Stage two: centripetal completions and angular-acceleration levers.
    # Rows: 0:2 w_B x (w_B x l1)   2:4 w_arm x (w_arm x l2)
    #       4:6 w_wing x (w_wing x l3)   6:8 alpha_arm x l2
    #       8:10 alpha_wing x l3
    a, b = ws.ya, ws.yb
    a[0:2] = w_B
    a[2:4] = w_arm
    a[4:6] = w_wing
    a[6:8] = alpha_arm
    a[8:10] = alpha_wing
    b[0:6] = c1[4:10]
    b[6:8] = l2
    b[8:10] = l3
    c2 = cross_rows(a, b, ws.yc)

    # Linear velocity-product accelerations in the inertial frame.
    base = c2[0:2] @ kin.R[0].T
    u2 = c2[2:4] + c2[6:8]
    u2 = np.matmul(kin.R[1:3], u2[:, :, None])[:, :, 0]
    u3 = c2[4:6] + c2[8:10]
    u3 = np.matmul(kin.R[3:5], u3[:, :, None])[:, :, 0]

    fa, ta = ws.fa, ws.ta
    fa[0] = 0.0
    fa[1:3] = base
    fa[1:3] += 0.5 * u2
    a_elbow = base + u2
    fa[3:5] = a_elbow
    fa[3:5] += u3
    fa[:, 2] += params.gravity
    fa *= params.masses[:, None]

    ta[:] = c1[10:15]
    ta[1:3] += params.inertias[1:3] * alpha_arm
    ta[3:5] += params.inertias[3:5] * alpha_wing

    np.matmul(ws.ft, kin.JJ, out=ws.h)
    return ws.h


def _full_from_lower(M_low) -> np.ndarray:
    out = np.tril(M_low)
    out = out + out.T
    out[np.diag_indices_from(out)] *= 0.5
    return out


def mass_matrix(state: State, params: ModelParams) -> np.ndarray:
    """14x14 symmetric positive-definite mass matrix at the given state."""
    kin = velocity_jacobians(state, params)
    M_low, _ = eom_terms(kin, params)
    return _full_from_lower(M_low)


def bias_vector(state: State, params: ModelParams) -> np.ndarray:
    """Bias force 14-vector (Coriolis/centrifugal/gyroscopic + gravity)."""
    kin = velocity_jacobians(state, params)
    _, h = eom_terms(kin, params)
    return h.copy()


def forward_dynamics(state: State, params: ModelParams,
                     u_total) -> np.ndarray:
    """Unconstrained quasi-accelerations qdd = M^{-1} (u_total - h)."""
    kin = velocity_jacobians(state, params)
    M, h = eom_terms(kin, params)
    return free_accel(M, h, np.asarray(u_total, dtype=float))


def _factor(M_low):
    c, info = dpotrf(M_low, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError(
            f"mass matrix is not positive definite (dpotrf info={info})")
    return c


def free_accel(M_low, h, u) -> np.ndarray:
    """Solve M qdd = u - h with a Cholesky factorization.

    ``M_low`` may carry only the lower triangle.
    """
    c = _factor(M_low)
    x, info = dpotrs(c, (u - h).reshape(NQ, 1), lower=1)
    return x[:, 0]


def constrained_accel(M_low, h, u, theta_ddot_c, ws: EomWorkspace):
    """Quasi-accelerations and multipliers under J_c qdd = theta_ddot_c.

    Because J_c selects the joint block directly, the constrained system is
    solved by exact block elimination: the joint accelerations are set to
    the command, the 6x6 base block is solved for the body accelerations,
    and the multipliers follow from the joint rows. This satisfies the
    constraint identically (the Schur-complement route leaves a residual of
    order cond(M) * eps, which exceeds the 1e-9 budget at flapping
    acceleration scales).

    Returns (qdd, lam) satisfying M qdd + h = u + J_c^T lam.
    """
    M11 = M_low[:6, :6]
    M21 = M_low[6:, :6]                 # full block (below the diagonal)
    M22_low = M_low[6:, 6:]
    rhs1 = u[:6] - h[:6] - M21.T @ theta_ddot_c
    c, info = dpotrf(M11, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError("base mass block not positive definite")
    qdd1, info = dpotrs(c, rhs1.reshape(6, 1), lower=1)
    qdd1 = qdd1[:, 0]
    # M22 @ tddc using only the stored lower triangle.
    d = np.diagonal(M22_low)
    y = M22_low @ theta_ddot_c + M22_low.T @ theta_ddot_c \
        - d * theta_ddot_c
    lam = M21 @ qdd1 + y + h[6:] - u[6:]
    qdd = np.concatenate([qdd1, theta_ddot_c])
    return qdd, lam


def lagrange_multiplier(state: State, params: ModelParams, u_total,
                        constraint: ConstraintSpec):
    """Solve the joint-acceleration-constrained dynamics.

    Returns (lam, qdd) with the sign convention fixed by the post-condition
    M qdd + h = u_total + J_c^T lam, J_c qdd = theta_ddot_c.
    """
    kin = velocity_jacobians(state, params)
    ws = EomWorkspace()
    M, h = eom_terms(kin, params, ws)
    qdd, lam = constrained_accel(M, h, np.asarray(u_total, dtype=float),
                                 constraint.theta_ddot_c, ws)
    return lam, qdd


def kinetic_energy(kin: Kinematics, params: ModelParams) -> float:
    """Total kinetic energy 0.5 qd^T M qd evaluated from body velocities."""
    return 0.5 * float(kin.vw @ (params.weight_rows * kin.vw))


def potential_energy(kin: Kinematics, params: ModelParams) -> float:
    """Gravitational potential energy relative to z = 0."""
    return params.gravity * float(params.masses @ kin.p[:, 2])
