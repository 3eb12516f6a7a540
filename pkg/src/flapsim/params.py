"""Physical parameters of the five-body flapping-wing robot model.

The model consists of a central body, two arm links and two wing plates.
All quantities are stored in SI units (kg, m, s, rad); helpers are provided
to convert from the bench units commonly used for small robots (g, mm,
g.cm^2).
"""

from dataclasses import dataclass, field

import numpy as np

# Unit conversion factors (bench units -> SI)
GRAM = 1e-3               # g -> kg
MILLIMETER = 1e-3         # mm -> m
GRAM_CM2 = 1e-7           # g.cm^2 -> kg.m^2

# Body ordering used by every stacked array in the package:
# central body, left arm, right arm, left wing, right wing.
BODY, ARM_L, ARM_R, WING_L, WING_R = range(5)
BODY_NAMES = ("body", "arm_left", "arm_right", "wing_left", "wing_right")

# Quasi-velocity layout: [w_B (3), pdot_B (3), thetadot_L (4), thetadot_R (4)]
NQ = 14
# Joint ordering within each 4-block: plunge, mediolateral, elbow, feathering.
JOINT_NAMES = ("plunge", "mediolateral", "elbow", "feathering")


def _vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {v.shape}")
    return v


@dataclass
class ModelParams:
    """Masses, inertias and link geometry of the five-body model.

    Defaults are the bench values of the reference vehicle converted to SI.
    Instances must be treated as immutable after construction; they are safe
    to share between concurrent simulations.

    Attributes
    ----------
    m_B, m_A, m_W : float
        Mass of the body, one arm link, one wing plate [kg].
    I_B, I_A, I_W : np.ndarray, shape (3,)
        Diagonal of the body-frame inertia tensor of each body [kg.m^2].
    l_L1, l_L2, l_L3 : np.ndarray, shape (3,)
        Left-side link vectors in their local frames [m]: body CoM to
        shoulder joint, shoulder to elbow, elbow to wing-plate CoM offset.
    l_R1, l_R2, l_R3 : np.ndarray, shape (3,)
        Right-side counterparts; l_R1 mirrors l_L1 across the body x-z plane.
    w_c, w_r : float
        Wing chord length and wing span of one plate [m].
    rho : float
        Air density [kg/m^3].
    flap_hz : float
        Flapping frequency [Hz]; the gait generator uses 2*pi*flap_hz as the
        angular frequency of the joint cosines.
    gravity : float
        Gravitational acceleration [m/s^2].
    """

    m_B: float = 5.0 * GRAM
    m_A: float = 0.35 * GRAM
    m_W: float = 5.6 * GRAM
    I_B: np.ndarray = field(
        default_factory=lambda: np.array([0.625, 3.65, 3.65]) * GRAM_CM2)
    I_A: np.ndarray = field(
        default_factory=lambda: np.array([0.147, 0.147, 0.040]) * GRAM_CM2)
    I_W: np.ndarray = field(
        default_factory=lambda: np.array([1.05, 2.11, 2.11]) * GRAM_CM2)
    l_L1: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 25.0, 25.0]) * MILLIMETER)
    l_L2: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 50.0]) * MILLIMETER)
    l_L3: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 150.0]) * MILLIMETER)
    l_R1: np.ndarray = field(
        default_factory=lambda: np.array([0.0, -25.0, 25.0]) * MILLIMETER)
    l_R2: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 50.0]) * MILLIMETER)
    l_R3: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 150.0]) * MILLIMETER)
    w_c: float = 150.0 * MILLIMETER
    w_r: float = 150.0 * MILLIMETER
    rho: float = 1.0
    flap_hz: float = 10.0
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("I_B", "I_A", "I_W", "l_L1", "l_L2", "l_L3",
                     "l_R1", "l_R2", "l_R3"):
            setattr(self, name, _vec3(getattr(self, name)))
        self.validate()
        # Derived stacks in body order (BODY, ARM_L, ARM_R, WING_L, WING_R),
        # used throughout the dynamics hot path.
        self.masses = np.array(
            [self.m_B, self.m_A, self.m_A, self.m_W, self.m_W])
        self.inertias = np.stack(
            [self.I_B, self.I_A, self.I_A, self.I_W, self.I_W])
        self.total_mass = float(self.masses.sum())
        # Row weights matching the stacked (J_v; J_w) Jacobian buffer: the
        # mass matrix is JJ^T diag(weight_rows) JJ.
        self.weight_rows = np.concatenate(
            [np.repeat(self.masses, 3), self.inertias.reshape(15)])
        self.weight_sqrt = np.sqrt(self.weight_rows)
        self.l1_stack = np.stack([self.l_L1, self.l_R1])

    def validate(self):
        if not (self.m_B > 0 and self.m_A > 0 and self.m_W > 0):
            raise ValueError("masses must be positive")
        for name in ("I_B", "I_A", "I_W"):
            if not np.all(getattr(self, name) > 0):
                raise ValueError(f"{name} diagonal entries must be positive")
        if not (self.w_c > 0 and self.w_r > 0 and self.rho > 0):
            raise ValueError("w_c, w_r and rho must be positive")
        if self.flap_hz <= 0:
            raise ValueError("flap_hz must be positive")
        mirror = self.l_L1 * np.array([1.0, -1.0, 1.0])
        if not np.allclose(mirror, self.l_R1, rtol=0, atol=1e-12):
            raise ValueError("l_R1 must mirror l_L1 across the x-z plane")
        if not (np.array_equal(self.l_L2, self.l_R2)
                and np.array_equal(self.l_L3, self.l_R3)):
            raise ValueError("l_L2/l_L3 must equal l_R2/l_R3")

    @property
    def omega_flap(self) -> float:
        """Angular flapping frequency [rad/s]."""
        return 2.0 * np.pi * self.flap_hz

    def link_vectors(self, side: str):
        """Return (l1, l2, l3) for 'left' or 'right'."""
        if side == "left":
            return self.l_L1, self.l_L2, self.l_L3
        if side == "right":
            return self.l_R1, self.l_R2, self.l_R3
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
