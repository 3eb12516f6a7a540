"""Compiled integration kernels (numba) mirroring the reference dynamics.

The public modules (:mod:`kinematics`, :mod:`dynamics`, :mod:`aero`,
:mod:`sim`) define the readable reference implementation; this module
re-states the same math as nopython kernels so a whole record stride of
RK4 steps runs per call. Agreement between the two paths is pinned by
tests (``tests/test_engine_equivalence.py``).

State layout (35 entries): R_B row-major (9), p_B (3), theta (8),
qd (14), W (1) where W accumulates non-conservative work.

Parameter packs (flat float64 arrays, built by :func:`pack_params` and
friends):

    phys: masses (5) | inertia diagonals row-major (15) | l1 left (3) |
          l1 right (3) | l2 (3) | l3 (3) | w_c, w_r, rho, g
    gait: mean (4) | amplitude (4) | phase (4, plunge first = 0) | omega
    man:  active flag | t0 | T | d (4)

Modes: 0 free, 1 gait-constrained, 2 maneuver PD-constrained,
3 joint-torque (u_motor held over the step).
"""

import math

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


MODE_FREE = 0
MODE_GAIT = 1
MODE_MANEUVER = 2
MODE_TORQUE = 3

_SPEED_FLOOR2 = 1e-18
_CL_PHASE = math.radians(7.2)
_CD_PHASE = math.radians(9.82)


def pack_params(params) -> np.ndarray:
    out = np.empty(36)
    out[0:5] = params.masses
    out[5:20] = params.inertias.reshape(15)
    out[20:23] = params.l_L1
    out[23:26] = params.l_R1
    out[26:29] = params.l_L2
    out[29:32] = params.l_L3
    out[32] = params.w_c
    out[33] = params.w_r
    out[34] = params.rho
    out[35] = params.gravity
    return out


def pack_gait(gait, params) -> np.ndarray:
    out = np.zeros(13)
    out[0:4] = gait.mean
    out[4:8] = gait.amplitude
    out[9:12] = gait.phase
    out[12] = params.omega_flap
    return out


def pack_maneuver(maneuver) -> np.ndarray:
    out = np.zeros(7)
    if maneuver is not None:
        out[0] = 1.0
        out[1] = maneuver.t0
        out[2] = maneuver.T
        out[3:7] = maneuver.d
    return out


@njit(cache=True)
def _mat3mul(A, B, C):
    for i in range(3):
        for j in range(3):
            C[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] \
                + A[i, 2] * B[2, j]


@njit(cache=True)
def _cholesky(M, n):
    """In-place lower Cholesky factor of the leading n x n block."""
    for j in range(n):
        d = M[j, j]
        for k in range(j):
            d -= M[j, k] * M[j, k]
        d = np.sqrt(d)
        M[j, j] = d
        for i in range(j + 1, n):
            s = M[i, j]
            for k in range(j):
                s -= M[i, k] * M[j, k]
            M[i, j] = s / d


@njit(cache=True)
def _chol_solve(L, b, n):
    """Solve L L^T x = b in place (b overwritten with x)."""
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * b[k]
        b[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k, i] * b[k]
        b[i] = s / L[i, i]


@njit(cache=True)
def _reference(t, gait, man, theta_r, rate_r, acc_r):
    """Gait (+ optional maneuver offset) joint reference at time t."""
    omega = gait[12]
    for j in range(4):
        arg = omega * t + gait[8 + j]
        c = math.cos(arg)
        s = math.sin(arg)
        a = gait[4 + j]
        th = a * c + gait[j]
        rate = -a * omega * s
        acc = -a * omega * omega * c
        mir = -1.0
        theta_r[j] = th
        theta_r[4 + j] = mir * th
        rate_r[j] = rate
        rate_r[4 + j] = mir * rate
        acc_r[j] = acc
        acc_r[4 + j] = mir * acc
    if man[0] != 0.0:
        t0 = man[1]
        T = man[2]
        if t0 <= t < t0 + 2.0 * T:
            if t < t0 + T:
                frac = (t - t0) / T
                sgn = 1.0
            else:
                frac = (t0 + 2.0 * T - t) / T
                sgn = -1.0
            for j in range(4):
                off = man[3 + j] * frac
                rate = sgn * man[3 + j] / T
                theta_r[j] += off
                theta_r[4 + j] += off
                rate_r[j] += rate
                rate_r[4 + j] += rate


@njit(cache=True)
def _deriv(x, t, phys, mode, gait, man, wind, aero_on, rhat, wts, u_motor,
           xdot, resid_out):
    # --- unpack state -----------------------------------------------------
    Rb = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            Rb[i, j] = x[3 * i + j]
    p_B = x[9:12]
    theta = x[12:20]
    qd = x[20:34]
    w_B = qd[0:3]

    g = phys[35]
    wc = phys[32]
    wr = phys[33]
    rho = phys[34]
    l2 = phys[26:29]
    l3 = phys[29:32]

    # --- kinematics: rotations, points, Jacobians -------------------------
    # J rows: 0:15 linear CoM, 15:30 angular (local frames), 30:36 elbows.
    J = np.zeros((36, 14))
    J[0, 3] = 1.0
    J[1, 4] = 1.0
    J[2, 5] = 1.0
    J[15, 0] = 1.0
    J[16, 1] = 1.0
    J[17, 2] = 1.0
    J[30, 3] = 1.0
    J[31, 4] = 1.0
    J[32, 5] = 1.0
    J[33, 3] = 1.0
    J[34, 4] = 1.0
    J[35, 5] = 1.0

    R_arm_I = np.empty((2, 3, 3))
    R_wing_I = np.empty((2, 3, 3))
    R_arm = np.empty((2, 3, 3))
    R_wing = np.empty((2, 3, 3))
    w_rel_arm = np.empty((2, 3))
    wdot_rel_arm = np.empty((2, 3))
    w_rel_wing = np.empty((2, 3))
    wdot_rel_wing = np.empty((2, 3))

    RA = np.empty((3, 3))
    RW = np.empty((3, 3))
    tmp = np.empty((3, 3))

    for s in range(2):
        jb = 6 + 4 * s
        ai = 1 + s
        wi = 3 + s
        thp = theta[4 * s]
        thm = theta[4 * s + 1]
        the = theta[4 * s + 2]
        thf = theta[4 * s + 3]
        dthp = qd[jb]
        dthm = qd[jb + 1]
        dthe = qd[jb + 2]
        dthf = qd[jb + 3]

        cm = math.cos(thm)
        sm = math.sin(thm)
        cp = math.cos(thp)
        sp = math.sin(thp)
        ce = math.cos(the)
        se = math.sin(the)
        cf = math.cos(thf)
        sf = math.sin(thf)

        RA[0, 0] = cm
        RA[0, 1] = -sm * cp
        RA[0, 2] = sm * sp
        RA[1, 0] = sm
        RA[1, 1] = cm * cp
        RA[1, 2] = -cm * sp
        RA[2, 0] = 0.0
        RA[2, 1] = sp
        RA[2, 2] = cp
        RW[0, 0] = cf
        RW[0, 1] = -sf
        RW[0, 2] = 0.0
        RW[1, 0] = ce * sf
        RW[1, 1] = ce * cf
        RW[1, 2] = -se
        RW[2, 0] = se * sf
        RW[2, 1] = se * cf
        RW[2, 2] = ce

        _mat3mul(Rb, RA, R_arm_I[s])
        _mat3mul(R_arm_I[s], RW, R_wing_I[s])
        _mat3mul(RA, RW, tmp)       # R_AW, reused below
        for i in range(3):
            for j in range(3):
                R_arm[s, i, j] = RA[i, j]
                R_wing[s, i, j] = RW[i, j]

        RAI = R_arm_I[s]
        RWI = R_wing_I[s]
        l1 = phys[20 + 3 * s:23 + 3 * s]

        # Points along the chain.
        oS = np.empty(3)
        u2 = np.empty(3)
        w3 = np.empty(3)
        for i in range(3):
            oS[i] = p_B[i] + Rb[i, 0] * l1[0] + Rb[i, 1] * l1[1] \
                + Rb[i, 2] * l1[2]
            u2[i] = RAI[i, 0] * l2[0] + RAI[i, 1] * l2[1] + RAI[i, 2] * l2[2]
            w3[i] = RWI[i, 0] * l3[0] + RWI[i, 1] * l3[1] + RWI[i, 2] * l3[2]
        p_arm = np.empty(3)
        o_E = np.empty(3)
        p_wing = np.empty(3)
        for i in range(3):
            p_arm[i] = oS[i] + 0.5 * u2[i]
            o_E[i] = oS[i] + u2[i]
            p_wing[i] = o_E[i] + w3[i]

        # Joint axes (inertial).
        ax_pe0 = RAI[0, 0]
        ax_pe1 = RAI[1, 0]
        ax_pe2 = RAI[2, 0]
        ax_m0 = Rb[0, 2]
        ax_m1 = Rb[1, 2]
        ax_m2 = Rb[2, 2]
        ax_f0 = RWI[0, 2]
        ax_f1 = RWI[1, 2]
        ax_f2 = RWI[2, 2]

        # Linear Jacobians: body-rate columns S(r)^T R_B and joint columns
        # axis x lever, for arm CoM, wing CoM and elbow point.
        for prow, px in ((3 * ai, p_arm), (3 * wi, p_wing), (30 + 3 * s, o_E)):
            r0 = px[0] - p_B[0]
            r1 = px[1] - p_B[1]
            r2 = px[2] - p_B[2]
            for j in range(3):
                J[prow + 0, j] = r2 * Rb[1, j] - r1 * Rb[2, j]
                J[prow + 1, j] = r0 * Rb[2, j] - r2 * Rb[0, j]
                J[prow + 2, j] = r1 * Rb[0, j] - r0 * Rb[1, j]
                J[prow + j, 3 + j] = 1.0
            # plunge/mediolateral levers relative to the shoulder
            d0 = px[0] - oS[0]
            d1 = px[1] - oS[1]
            d2 = px[2] - oS[2]
            J[prow + 0, jb] = ax_pe1 * d2 - ax_pe2 * d1
            J[prow + 1, jb] = ax_pe2 * d0 - ax_pe0 * d2
            J[prow + 2, jb] = ax_pe0 * d1 - ax_pe1 * d0
            J[prow + 0, jb + 1] = ax_m1 * d2 - ax_m2 * d1
            J[prow + 1, jb + 1] = ax_m2 * d0 - ax_m0 * d2
            J[prow + 2, jb + 1] = ax_m0 * d1 - ax_m1 * d0
        # elbow/feathering levers act only on the wing CoM
        wrow = 3 * wi
        J[wrow + 0, jb + 2] = ax_pe1 * w3[2] - ax_pe2 * w3[1]
        J[wrow + 1, jb + 2] = ax_pe2 * w3[0] - ax_pe0 * w3[2]
        J[wrow + 2, jb + 2] = ax_pe0 * w3[1] - ax_pe1 * w3[0]
        J[wrow + 0, jb + 3] = ax_f1 * w3[2] - ax_f2 * w3[1]
        J[wrow + 1, jb + 3] = ax_f2 * w3[0] - ax_f0 * w3[2]
        J[wrow + 2, jb + 3] = ax_f0 * w3[1] - ax_f1 * w3[0]

        # Angular Jacobians (local frames).
        arow = 15 + 3 * ai
        for i in range(3):
            for j in range(3):
                J[arow + i, j] = RA[j, i]
        J[arow + 0, jb] = 1.0
        for i in range(3):
            J[arow + i, jb + 1] = RA[2, i]
        wraw = 15 + 3 * wi
        for i in range(3):
            for j in range(3):
                J[wraw + i, j] = tmp[j, i]          # R_AW^T
        for i in range(3):
            J[wraw + i, jb] = RW[0, i]
            J[wraw + i, jb + 2] = RW[0, i]
            J[wraw + i, jb + 1] = tmp[2, i]
        J[wraw + 2, jb + 3] = 1.0

        # Relative rates and their velocity-product derivatives.
        w_rel_arm[s, 0] = dthp * cm
        w_rel_arm[s, 1] = dthp * sm
        w_rel_arm[s, 2] = dthm
        wdot_rel_arm[s, 0] = -dthp * dthm * sm
        wdot_rel_arm[s, 1] = dthp * dthm * cm
        wdot_rel_arm[s, 2] = 0.0
        w_rel_wing[s, 0] = dthe
        w_rel_wing[s, 1] = -dthf * se
        w_rel_wing[s, 2] = dthf * ce
        wdot_rel_wing[s, 0] = 0.0
        wdot_rel_wing[s, 1] = -dthe * dthf * ce
        wdot_rel_wing[s, 2] = -dthe * dthf * se

    # Body velocities v = J qd (36 rows).
    v = np.empty(36)
    for i in range(36):
        s_ = 0.0
        for j in range(14):
            s_ += J[i, j] * qd[j]
        v[i] = s_

    # --- bias vector via Newton-Euler sweep --------------------------------
    ft = np.empty(30)
    masses = phys[0:5]
    # body rows: gravity only
    ft[0] = 0.0
    ft[1] = 0.0
    ft[2] = masses[0] * g
    c1 = np.empty(3)
    c2 = np.empty(3)
    c3 = np.empty(3)
    alpha_arm = np.empty((2, 3))
    alpha_wing = np.empty((2, 3))
    for s in range(2):
        ai = 1 + s
        wi = 3 + s
        w_arm = v[15 + 3 * ai:18 + 3 * ai]
        w_wing = v[15 + 3 * wi:18 + 3 * wi]
        # alpha_arm = R_A^T (wdot_rel - w_rel x (w_B + w_rel))
        b0 = w_B[0] + w_rel_arm[s, 0]
        b1 = w_B[1] + w_rel_arm[s, 1]
        b2 = w_B[2] + w_rel_arm[s, 2]
        c1[0] = wdot_rel_arm[s, 0] - (w_rel_arm[s, 1] * b2
                                      - w_rel_arm[s, 2] * b1)
        c1[1] = wdot_rel_arm[s, 1] - (w_rel_arm[s, 2] * b0
                                      - w_rel_arm[s, 0] * b2)
        c1[2] = wdot_rel_arm[s, 2] - (w_rel_arm[s, 0] * b1
                                      - w_rel_arm[s, 1] * b0)
        for i in range(3):
            alpha_arm[s, i] = R_arm[s, 0, i] * c1[0] \
                + R_arm[s, 1, i] * c1[1] + R_arm[s, 2, i] * c1[2]
        # alpha_wing = R_W^T (alpha_arm + wdot_rel_w - w_rel_w x w_wing_arm)
        b0 = w_arm[0] + w_rel_wing[s, 0]
        b1 = w_arm[1] + w_rel_wing[s, 1]
        b2 = w_arm[2] + w_rel_wing[s, 2]
        c1[0] = alpha_arm[s, 0] + wdot_rel_wing[s, 0] \
            - (w_rel_wing[s, 1] * b2 - w_rel_wing[s, 2] * b1)
        c1[1] = alpha_arm[s, 1] + wdot_rel_wing[s, 1] \
            - (w_rel_wing[s, 2] * b0 - w_rel_wing[s, 0] * b2)
        c1[2] = alpha_arm[s, 2] + wdot_rel_wing[s, 2] \
            - (w_rel_wing[s, 0] * b1 - w_rel_wing[s, 1] * b0)
        for i in range(3):
            alpha_wing[s, i] = R_wing[s, 0, i] * c1[0] \
                + R_wing[s, 1, i] * c1[1] + R_wing[s, 2, i] * c1[2]

        # base = R_B (w_B x (w_B x l1))
        l1 = phys[20 + 3 * s:23 + 3 * s]
        c1[0] = w_B[1] * l1[2] - w_B[2] * l1[1]
        c1[1] = w_B[2] * l1[0] - w_B[0] * l1[2]
        c1[2] = w_B[0] * l1[1] - w_B[1] * l1[0]
        c2[0] = w_B[1] * c1[2] - w_B[2] * c1[1]
        c2[1] = w_B[2] * c1[0] - w_B[0] * c1[2]
        c2[2] = w_B[0] * c1[1] - w_B[1] * c1[0]
        base0 = Rb[0, 0] * c2[0] + Rb[0, 1] * c2[1] + Rb[0, 2] * c2[2]
        base1 = Rb[1, 0] * c2[0] + Rb[1, 1] * c2[1] + Rb[1, 2] * c2[2]
        base2 = Rb[2, 0] * c2[0] + Rb[2, 1] * c2[1] + Rb[2, 2] * c2[2]
        # u2a = R_AI (w_arm x (w_arm x l2) + alpha_arm x l2)
        c1[0] = w_arm[1] * l2[2] - w_arm[2] * l2[1]
        c1[1] = w_arm[2] * l2[0] - w_arm[0] * l2[2]
        c1[2] = w_arm[0] * l2[1] - w_arm[1] * l2[0]
        c2[0] = w_arm[1] * c1[2] - w_arm[2] * c1[1] \
            + alpha_arm[s, 1] * l2[2] - alpha_arm[s, 2] * l2[1]
        c2[1] = w_arm[2] * c1[0] - w_arm[0] * c1[2] \
            + alpha_arm[s, 2] * l2[0] - alpha_arm[s, 0] * l2[2]
        c2[2] = w_arm[0] * c1[1] - w_arm[1] * c1[0] \
            + alpha_arm[s, 0] * l2[1] - alpha_arm[s, 1] * l2[0]
        RAI = R_arm_I[s]
        u2a0 = RAI[0, 0] * c2[0] + RAI[0, 1] * c2[1] + RAI[0, 2] * c2[2]
        u2a1 = RAI[1, 0] * c2[0] + RAI[1, 1] * c2[1] + RAI[1, 2] * c2[2]
        u2a2 = RAI[2, 0] * c2[0] + RAI[2, 1] * c2[1] + RAI[2, 2] * c2[2]
        # u3a = R_WI (w_wing x (w_wing x l3) + alpha_wing x l3)
        c1[0] = w_wing[1] * l3[2] - w_wing[2] * l3[1]
        c1[1] = w_wing[2] * l3[0] - w_wing[0] * l3[2]
        c1[2] = w_wing[0] * l3[1] - w_wing[1] * l3[0]
        c3[0] = w_wing[1] * c1[2] - w_wing[2] * c1[1] \
            + alpha_wing[s, 1] * l3[2] - alpha_wing[s, 2] * l3[1]
        c3[1] = w_wing[2] * c1[0] - w_wing[0] * c1[2] \
            + alpha_wing[s, 2] * l3[0] - alpha_wing[s, 0] * l3[2]
        c3[2] = w_wing[0] * c1[1] - w_wing[1] * c1[0] \
            + alpha_wing[s, 0] * l3[1] - alpha_wing[s, 1] * l3[0]
        RWI = R_wing_I[s]
        u3a0 = RWI[0, 0] * c3[0] + RWI[0, 1] * c3[1] + RWI[0, 2] * c3[2]
        u3a1 = RWI[1, 0] * c3[0] + RWI[1, 1] * c3[1] + RWI[1, 2] * c3[2]
        u3a2 = RWI[2, 0] * c3[0] + RWI[2, 1] * c3[1] + RWI[2, 2] * c3[2]

        m_arm = masses[ai]
        m_wing = masses[wi]
        ft[3 * ai + 0] = m_arm * (base0 + 0.5 * u2a0)
        ft[3 * ai + 1] = m_arm * (base1 + 0.5 * u2a1)
        ft[3 * ai + 2] = m_arm * (base2 + 0.5 * u2a2 + g)
        ft[3 * wi + 0] = m_wing * (base0 + u2a0 + u3a0)
        ft[3 * wi + 1] = m_wing * (base1 + u2a1 + u3a1)
        ft[3 * wi + 2] = m_wing * (base2 + u2a2 + u3a2 + g)

    # gyroscopic + inertial angular terms
    for f in range(5):
        I0 = phys[5 + 3 * f]
        I1 = phys[6 + 3 * f]
        I2 = phys[7 + 3 * f]
        wf = v[15 + 3 * f:18 + 3 * f]
        g0 = wf[1] * I2 * wf[2] - wf[2] * I1 * wf[1]
        g1 = wf[2] * I0 * wf[0] - wf[0] * I2 * wf[2]
        g2 = wf[0] * I1 * wf[1] - wf[1] * I0 * wf[0]
        if f >= 1 and f <= 2:
            g0 += I0 * alpha_arm[f - 1, 0]
            g1 += I1 * alpha_arm[f - 1, 1]
            g2 += I2 * alpha_arm[f - 1, 2]
        elif f >= 3:
            g0 += I0 * alpha_wing[f - 3, 0]
            g1 += I1 * alpha_wing[f - 3, 1]
            g2 += I2 * alpha_wing[f - 3, 2]
        ft[15 + 3 * f + 0] = g0
        ft[15 + 3 * f + 1] = g1
        ft[15 + 3 * f + 2] = g2

    h = np.empty(14)
    for j in range(14):
        s_ = 0.0
        for i in range(30):
            s_ += J[i, j] * ft[i]
        h[j] = s_

    # --- mass matrix (lower triangle) --------------------------------------
    wrow = np.empty(30)
    for f in range(5):
        wrow[3 * f] = masses[f]
        wrow[3 * f + 1] = masses[f]
        wrow[3 * f + 2] = masses[f]
    for k in range(15):
        wrow[15 + k] = phys[5 + k]
    M = np.empty((14, 14))
    for i in range(14):
        for j in range(i + 1):
            s_ = 0.0
            for k in range(30):
                s_ += wrow[k] * J[k, i] * J[k, j]
            M[i, j] = s_

    # --- generalized forces -------------------------------------------------
    u = np.zeros(14)
    if aero_on == 1:
        n_st = rhat.shape[0]
        coef = 0.5 * rho * wc * wr
        lfx = 0.25 * wc
        for s in range(2):
            en_sign = -1.0 + 2.0 * s     # e_n = -y left wing, +y right wing
            wi = 3 + s
            RWI = R_wing_I[s]
            ww = v[15 + 3 * wi:18 + 3 * wi]
            wI0 = RWI[0, 0] * ww[0] + RWI[0, 1] * ww[1] + RWI[0, 2] * ww[2]
            wI1 = RWI[1, 0] * ww[0] + RWI[1, 1] * ww[1] + RWI[1, 2] * ww[2]
            wI2 = RWI[2, 0] * ww[0] + RWI[2, 1] * ww[1] + RWI[2, 2] * ww[2]
            ev = v[30 + 3 * s:33 + 3 * s]
            rel0 = ev[0] - wind[0]
            rel1 = ev[1] - wind[1]
            rel2 = ev[2] - wind[2]
            fx = 0.0
            fy = 0.0
            t0_ = 0.0
            t1_ = 0.0
            t2_ = 0.0
            for k in range(n_st):
                lfz = rhat[k] * wr
                # station offset in the inertial frame
                q0 = lfx * RWI[0, 0] + lfz * RWI[0, 2]
                q1 = lfx * RWI[1, 0] + lfz * RWI[1, 2]
                q2 = lfx * RWI[2, 0] + lfz * RWI[2, 2]
                vr0 = rel0 + wI1 * q2 - wI2 * q1
                vr1 = rel1 + wI2 * q0 - wI0 * q2
                vr2 = rel2 + wI0 * q1 - wI1 * q0
                vw0 = RWI[0, 0] * vr0 + RWI[1, 0] * vr1 + RWI[2, 0] * vr2
                vw1 = RWI[0, 1] * vr0 + RWI[1, 1] * vr1 + RWI[2, 1] * vr2
                vw2 = RWI[0, 2] * vr0 + RWI[1, 2] * vr1 + RWI[2, 2] * vr2
                sp2 = vw0 * vw0 + vw1 * vw1 + vw2 * vw2
                if sp2 < _SPEED_FLOOR2:
                    continue
                vn = en_sign * vw1
                al = math.atan2(vn, vw0)
                C_L = 0.225 + 1.58 * math.sin(2.13 * al - _CL_PHASE)
                C_D = 1.92 - 1.55 * math.cos(2.04 * al - _CD_PHASE)
                sc = coef * sp2 * wts[k]
                f_l = sc * C_L
                if vw0 > 0.0:
                    f_d = sc * C_D
                elif vw0 < 0.0:
                    f_d = -sc * C_D
                else:
                    f_d = 0.0
                dfx = -f_d
                dfy = en_sign * f_l
                fx += dfx
                fy += dfy
                t0_ += -lfz * dfy
                t1_ += lfz * dfx
                t2_ += lfx * dfy
            fI0 = RWI[0, 0] * fx + RWI[0, 1] * fy
            fI1 = RWI[1, 0] * fx + RWI[1, 1] * fy
            fI2 = RWI[2, 0] * fx + RWI[2, 1] * fy
            erow = 30 + 3 * s
            arow = 15 + 3 * wi
            for j in range(14):
                u[j] += J[erow, j] * fI0 + J[erow + 1, j] * fI1 \
                    + J[erow + 2, j] * fI2 \
                    + J[arow, j] * t0_ + J[arow + 1, j] * t1_ \
                    + J[arow + 2, j] * t2_

    # --- joint drive ---------------------------------------------------------
    resid = 0.0
    power_extra = 0.0
    if mode == MODE_GAIT or mode == MODE_MANEUVER:
        theta_r = np.empty(8)
        rate_r = np.empty(8)
        acc_r = np.empty(8)
        _reference(t, gait, man, theta_r, rate_r, acc_r)
        tddc = np.empty(8)
        if mode == MODE_GAIT:
            for j in range(8):
                tddc[j] = acc_r[j]
        else:
            for j in range(8):
                tddc[j] = -120.0 * (theta[j] - theta_r[j]) \
                    - 120.0 * (qd[6 + j] - rate_r[j])
        # Exact block elimination: joint accelerations are prescribed, the
        # 6x6 base block is solved, and the multipliers come from the
        # joint rows (constraint satisfied identically).
        qdd = np.empty(14)
        rhs1 = np.empty(6)
        for i in range(6):
            s_ = u[i] - h[i]
            for j in range(8):
                s_ -= M[6 + j, i] * tddc[j]     # M12 = M21^T (lower stored)
            rhs1[i] = s_
        _cholesky(M, 6)
        _chol_solve(M, rhs1, 6)
        for i in range(6):
            qdd[i] = rhs1[i]
        for j in range(8):
            qdd[6 + j] = tddc[j]
        for i in range(8):
            # lam_i = M21 qdd1 + M22 tddc + h2 - u2 (symmetric M22 from the
            # stored lower triangle)
            s_ = h[6 + i] - u[6 + i]
            for j in range(6):
                s_ += M[6 + i, j] * qdd[j]
            for j in range(8):
                if j <= i:
                    s_ += M[6 + i, 6 + j] * tddc[j]
                else:
                    s_ += M[6 + j, 6 + i] * tddc[j]
            power_extra += qd[6 + i] * s_
        # residual is zero by construction; keep the diagnostic contract
        resid = 0.0
    else:
        if mode == MODE_TORQUE:
            for j in range(8):
                u[6 + j] += u_motor[j]
        _cholesky(M, 14)
        qdd = np.empty(14)
        for i in range(14):
            qdd[i] = u[i] - h[i]
        _chol_solve(M, qdd, 14)

    # --- assemble xdot -------------------------------------------------------
    # Rdot = R_B S(w_B)
    w0 = qd[0]
    w1 = qd[1]
    w2 = qd[2]
    for i in range(3):
        r0 = Rb[i, 0]
        r1 = Rb[i, 1]
        r2 = Rb[i, 2]
        xdot[3 * i + 0] = r1 * w2 - r2 * w1
        xdot[3 * i + 1] = r2 * w0 - r0 * w2
        xdot[3 * i + 2] = r0 * w1 - r1 * w0
    for i in range(3):
        xdot[9 + i] = qd[3 + i]
    for j in range(8):
        xdot[12 + j] = qd[6 + j]
    for i in range(14):
        xdot[20 + i] = qdd[i]
    pw = power_extra
    for i in range(14):
        pw += qd[i] * u[i]
    xdot[34] = pw
    resid_out[0] = resid


@njit(cache=True)
def simulate_chunk(x, t_start, dt, n_steps, phys, mode, gait, man, wind,
                   aero_on, rhat, wts, u_motor):
    """Advance ``n_steps`` RK4 steps in place; returns the largest
    joint-constraint residual seen."""
    k1 = np.empty(35)
    k2 = np.empty(35)
    k3 = np.empty(35)
    k4 = np.empty(35)
    xs = np.empty(35)
    rout = np.empty(1)
    resid_max = 0.0
    for step in range(n_steps):
        t = t_start + step * dt
        _deriv(x, t, phys, mode, gait, man, wind, aero_on, rhat, wts,
               u_motor, k1, rout)
        if rout[0] > resid_max:
            resid_max = rout[0]
        for i in range(35):
            xs[i] = x[i] + 0.5 * dt * k1[i]
        _deriv(xs, t + 0.5 * dt, phys, mode, gait, man, wind, aero_on,
               rhat, wts, u_motor, k2, rout)
        if rout[0] > resid_max:
            resid_max = rout[0]
        for i in range(35):
            xs[i] = x[i] + 0.5 * dt * k2[i]
        _deriv(xs, t + 0.5 * dt, phys, mode, gait, man, wind, aero_on,
               rhat, wts, u_motor, k3, rout)
        if rout[0] > resid_max:
            resid_max = rout[0]
        for i in range(35):
            xs[i] = x[i] + dt * k3[i]
        _deriv(xs, t + dt, phys, mode, gait, man, wind, aero_on, rhat, wts,
               u_motor, k4, rout)
        if rout[0] > resid_max:
            resid_max = rout[0]
        for i in range(35):
            x[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i]
                                        + k4[i])
        # One Newton-Schulz polar iteration keeps R_B on SO(3).
        a00 = x[0]
        a01 = x[1]
        a02 = x[2]
        a10 = x[3]
        a11 = x[4]
        a12 = x[5]
        a20 = x[6]
        a21 = x[7]
        a22 = x[8]
        g00 = 1.5 - 0.5 * (a00 * a00 + a10 * a10 + a20 * a20)
        g11 = 1.5 - 0.5 * (a01 * a01 + a11 * a11 + a21 * a21)
        g22 = 1.5 - 0.5 * (a02 * a02 + a12 * a12 + a22 * a22)
        g01 = -0.5 * (a00 * a01 + a10 * a11 + a20 * a21)
        g02 = -0.5 * (a00 * a02 + a10 * a12 + a20 * a22)
        g12 = -0.5 * (a01 * a02 + a11 * a12 + a21 * a22)
        x[0] = a00 * g00 + a01 * g01 + a02 * g02
        x[1] = a00 * g01 + a01 * g11 + a02 * g12
        x[2] = a00 * g02 + a01 * g12 + a02 * g22
        x[3] = a10 * g00 + a11 * g01 + a12 * g02
        x[4] = a10 * g01 + a11 * g11 + a12 * g12
        x[5] = a10 * g02 + a11 * g12 + a12 * g22
        x[6] = a20 * g00 + a21 * g01 + a22 * g02
        x[7] = a20 * g01 + a21 * g11 + a22 * g12
        x[8] = a20 * g02 + a21 * g12 + a22 * g22
    return resid_max


def derivative(x, t, phys, mode, gait, man, wind, aero_on, rhat, wts,
               u_motor):
    """Single derivative evaluation (python-facing, for equivalence tests)."""
    xdot = np.empty(35)
    rout = np.empty(1)
    _deriv(np.ascontiguousarray(x), t, phys, mode, gait, man, wind,
           aero_on, rhat, wts, u_motor, xdot, rout)
    return xdot, rout[0]
