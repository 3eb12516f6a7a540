"""Pins the compiled kernels to the reference numpy implementation.

The compiled path re-states the same math for speed; these tests keep the
two implementations from drifting apart.
"""

import numpy as np
import pytest

from flapsim import (DEFAULT_GAIT, DEFAULT_MANEUVER, GaitConstraint,
                     ManeuverConstraint, PidState, State, WindField,
                     run_simulation)
from flapsim.sim import (MODE_CONSTRAINED, MODE_FREE, MODE_TORQUE_PID,
                         PidTracker, SimConfig)
from flapsim import _kernels

from conftest import random_state

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA,
                                reason="numba unavailable")


def _compare(trace_a, trace_b, atol):
    for name in ("t", "R", "p_B", "theta", "qd", "Pi", "E", "work"):
        a = getattr(trace_a, name)
        b = getattr(trace_b, name)
        assert np.abs(a - b).max() < atol, name


def test_free_mode_trajectories_agree(params, rng):
    state = random_state(rng, rate_scale=2.0)
    cfg = SimConfig(dt=1e-4, t_end=0.05, mode=MODE_FREE, aero_enabled=False)
    tc = run_simulation(cfg, params, None, start=state, engine="compiled")
    tr = run_simulation(cfg, params, None, start=state, engine="reference")
    _compare(tc, tr, 1e-10)


def test_gait_mode_trajectories_agree(params):
    gc = GaitConstraint(DEFAULT_GAIT, params)
    cfg = SimConfig(dt=1e-4, t_end=0.05, mode=MODE_CONSTRAINED,
                    wind=WindField([-2.0, 0.0, 0.0]))
    tc = run_simulation(cfg, params, gc, engine="compiled")
    tr = run_simulation(cfg, params, gc, engine="reference")
    _compare(tc, tr, 5e-7)
    assert tc.max_constraint_residual == tr.max_constraint_residual == 0.0


def test_maneuver_mode_trajectories_agree(params):
    man = DEFAULT_MANEUVER
    import dataclasses
    man = dataclasses.replace(man, t0=0.02)
    mc = ManeuverConstraint(DEFAULT_GAIT, man, params)
    cfg = SimConfig(dt=1e-4, t_end=0.06, mode=MODE_CONSTRAINED,
                    wind=WindField([-2.0, 0.0, 0.0]))
    tc = run_simulation(cfg, params, mc, engine="compiled")
    tr = run_simulation(cfg, params, mc, engine="reference")
    _compare(tc, tr, 1e-7)


def test_pid_mode_short_trajectories_agree(params):
    """PID mode is chaotic (free wings flutter), so only a short window is
    comparable before round-off divergence amplifies."""
    cfg = SimConfig(dt=1e-5, t_end=3e-4, mode=MODE_TORQUE_PID,
                    wind=WindField([-2.0, 0.0, 0.0]), record_stride=1)
    tc = run_simulation(cfg, params, PidTracker(DEFAULT_GAIT, params),
                        engine="compiled")
    tr = run_simulation(cfg, params, PidTracker(DEFAULT_GAIT, params),
                        engine="reference")
    _compare(tc, tr, 1e-9)


def test_compiled_rejects_unknown_controller(params):
    class Odd:
        def command(self, t, theta, theta_dot):
            return np.zeros(8)

    cfg = SimConfig(dt=1e-3, t_end=0.01, mode=MODE_CONSTRAINED,
                    aero_enabled=False)
    with pytest.raises(ValueError):
        run_simulation(cfg, params, Odd(), engine="compiled")
    # but the reference engine accepts any object with the right method
    trace = run_simulation(cfg, params, Odd(), engine="reference")
    assert not trace.failed
