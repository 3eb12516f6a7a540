"""Gait and maneuver cost functions plus a bounded derivative-free search.

Both optimization problems evaluate a full simulation rollout per
candidate, so gradients are unavailable; the search is a small CMA-ES with
box projection, seeded and therefore reproducible. Candidate evaluations
are independent and may be dispatched through any order-preserving map
(e.g. ``multiprocessing.Pool.map``).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .aero import WindField
from .gait import GaitParams, ManeuverParams, roll_reference
from .params import ModelParams
from .sim import (MODE_CONSTRAINED, GaitConstraint, ManeuverConstraint,
                  SimConfig, Trace, run_simulation)

_DEG = math.pi / 180.0


@dataclass
class GaitCostConfig:
    """Settings for the flapping-gait momentum cost.

    The cost is the sum over recorded samples of z^T Q z with
    z = [Pi (3), vertical body velocity]. Rollouts default to a coarser
    integration step than the headline simulations (the cost landscape is
    insensitive at these scales) while keeping the 1 kHz sample rate.
    """

    params: ModelParams = field(default_factory=ModelParams)
    wind: WindField = field(default_factory=lambda: WindField([-2.0, 0.0, 0.0]))
    Q: np.ndarray = field(
        default_factory=lambda: np.array([5.0, 5.0, 5.0, 1e-5]))
    horizon: float = 2.0
    dt: float = 1e-4
    record_stride: int = 10
    lower: np.ndarray = field(default_factory=lambda: _default_gait_bounds()[0])
    upper: np.ndarray = field(default_factory=lambda: _default_gait_bounds()[1])

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.Q.shape != (4,) or np.any(self.Q < 0):
            raise ValueError("Q must be 4 nonnegative diagonal entries")
        if np.any(self.lower >= self.upper):
            raise ValueError("lower bounds must be below upper bounds")

    def sim_config(self) -> SimConfig:
        return SimConfig(dt=self.dt, t_end=self.horizon, wind=self.wind,
                         mode=MODE_CONSTRAINED,
                         record_stride=self.record_stride)


@dataclass
class PerchCostConfig:
    """Settings for the roll-maneuver tracking cost.

    The cost sums the squared error between the body roll rate and the
    target roll-rate profile over the window [t0, t0 + 2T].
    """

    params: ModelParams = field(default_factory=ModelParams)
    wind: WindField = field(default_factory=lambda: WindField([-2.0, 0.0, 0.0]))
    T: float = 0.2
    dt: float = 1e-4
    record_stride: int = 10
    lower: np.ndarray = field(
        default_factory=lambda: _default_perch_bounds()[0])
    upper: np.ndarray = field(
        default_factory=lambda: _default_perch_bounds()[1])

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.T <= 0:
            raise ValueError("T must be positive")
        if np.any(self.lower >= self.upper):
            raise ValueError("lower bounds must be below upper bounds")

    def sim_config(self, t_end: float) -> SimConfig:
        return SimConfig(dt=self.dt, t_end=t_end, wind=self.wind,
                         mode=MODE_CONSTRAINED,
                         record_stride=self.record_stride)


def _default_gait_bounds():
    lower = np.concatenate([np.full(4, -180.0), np.zeros(4),
                            np.full(3, -180.0)]) * _DEG
    upper = np.concatenate([np.full(4, 180.0), np.full(4, 90.0),
                            np.full(3, 180.0)]) * _DEG
    return lower, upper


def _default_perch_bounds():
    # Offsets need room beyond +-90 deg: the roll authority of the tuned
    # gait saturates the smaller box well short of a half turn.
    lower = np.concatenate([[1.0], np.full(4, -160.0) * _DEG])
    upper = np.concatenate([[1.1], np.full(4, 160.0) * _DEG])
    return lower, upper


def _check_bounds(x, lower, upper, what):
    if np.any(x < lower) or np.any(x > upper):
        raise ValueError(f"{what} outside the configured box bounds")


def gait_cost_from_trace(trace: Trace, Q) -> float:
    """Accumulate sum_i z_i^T Q z_i from a recorded trace."""
    z2 = np.column_stack([trace.Pi, trace.qd[:, 5]]) ** 2
    return float((z2 @ np.asarray(Q)).sum())


def gait_cost(k1, config: GaitCostConfig) -> float:
    """Momentum + vertical-velocity cost of a gait parameter vector."""
    k1 = np.asarray(k1, dtype=float)
    _check_bounds(k1, config.lower, config.upper, "gait parameters")
    gait = GaitParams.from_vector(k1)
    controller = GaitConstraint(gait, config.params)
    trace = run_simulation(config.sim_config(), config.params, controller)
    if trace.failed:
        return float("inf")
    return gait_cost_from_trace(trace, config.Q)


def perch_cost_from_trace(trace: Trace, t0: float, T: float) -> float:
    """Accumulate the squared roll-rate tracking error over the window."""
    mask = (trace.t >= t0) & (trace.t <= t0 + 2.0 * T)
    err = 0.0
    for t, wx in zip(trace.t[mask], trace.qd[mask, 0]):
        _, phi_dot = roll_reference(t, t0, T)
        err += (wx - phi_dot) ** 2
    return float(err)


def perch_cost(k2, k1, config: PerchCostConfig) -> float:
    """Roll-rate tracking cost of a maneuver parameter vector.

    ``k1`` is the (fixed) gait the maneuver is superimposed on.
    """
    k2 = np.asarray(k2, dtype=float)
    _check_bounds(k2, config.lower, config.upper, "maneuver parameters")
    gait = GaitParams.from_vector(np.asarray(k1, dtype=float))
    maneuver = ManeuverParams.from_vector(k2, T=config.T)
    controller = ManeuverConstraint(gait, maneuver, config.params)
    t_end = maneuver.t0 + 2.0 * maneuver.T
    trace = run_simulation(config.sim_config(t_end), config.params,
                           controller)
    if trace.failed:
        return float("inf")
    return perch_cost_from_trace(trace, maneuver.t0, maneuver.T)


@dataclass
class OptResult:
    """Outcome of a derivative-free search."""

    best_params: np.ndarray
    best_cost: float
    history: np.ndarray          # best-so-far after each evaluation
    n_evals: int
    success: bool
    message: str = ""


def optimize(cost_fn, bounds, budget: int, seed: int = 0, x0=None,
             popsize: int | None = None, sigma0: float = 0.25,
             map_fn=None) -> OptResult:
    """Minimize ``cost_fn`` over a box with seeded CMA-ES.

    The search runs in coordinates normalized to [0, 1] per dimension;
    sampled candidates are clipped into the box before evaluation, so every
    evaluated point is feasible. ``x0`` (when given) is always the first
    evaluation, making ``budget=1`` a pure evaluation of the start point.
    ``map_fn`` must be an order-preserving map (defaults to the builtin).
    """
    lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise ValueError("bounds must be two equal-length vectors")
    if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
        raise ValueError("bounds must be finite")
    if np.any(lower >= upper):
        raise ValueError("lower bounds must be below upper bounds")
    if budget < 1:
        raise ValueError("budget must be at least 1")
    n = lower.size
    span = upper - lower
    if map_fn is None:
        map_fn = map

    def denorm(z):
        return lower + np.clip(z, 0.0, 1.0) * span

    rng = np.random.default_rng(seed)
    if popsize is None:
        popsize = 4 + int(3 * math.log(n))
    mu = popsize // 2
    log_w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    weights = log_w / log_w.sum()
    mu_eff = 1.0 / float(weights @ weights)
    c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0))
                              - 1.0) + c_sigma
    c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
    c_1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1.0 - c_1,
               2.0 * (mu_eff - 2.0 + 1.0 / mu_eff)
               / ((n + 2.0) ** 2 + mu_eff))
    chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

    mean = np.full(n, 0.5) if x0 is None \
        else (np.asarray(x0, dtype=float) - lower) / span
    mean = np.clip(mean, 0.0, 1.0)
    sigma = sigma0
    C = np.eye(n)
    p_sigma = np.zeros(n)
    p_c = np.zeros(n)

    history = []
    best_cost = math.inf
    best_params = None
    n_evals = 0

    def record(costs, candidates):
        nonlocal best_cost, best_params, n_evals
        for cost, cand in zip(costs, candidates):
            n_evals += 1
            if cost < best_cost:
                best_cost = cost
                best_params = cand.copy()
            history.append(best_cost)

    # Evaluate the start point first so budget=1 degenerates to it.
    start = np.clip(np.asarray(x0, dtype=float), lower, upper) \
        if x0 is not None else denorm(mean)
    record(list(map_fn(cost_fn, [start])), [start])

    while n_evals < budget:
        sqrt_C = _sqrt_spd(C)
        k = min(popsize, budget - n_evals)
        y = rng.standard_normal((popsize, n))
        z_all = mean + sigma * (y @ sqrt_C.T)
        z_all = np.clip(z_all, 0.0, 1.0)
        cands = [denorm(z_all[i]) for i in range(k)]
        costs = np.array(list(map_fn(cost_fn, cands)), dtype=float)
        record(costs, cands)
        if k < popsize:
            break                     # budget exhausted mid-generation
        order = np.argsort(costs, kind="stable")
        sel = order[:mu]
        y_sel = (z_all[sel] - mean) / sigma
        y_w = weights @ y_sel
        mean = np.clip(mean + sigma * y_w, 0.0, 1.0)
        inv_sqrt = np.linalg.inv(sqrt_C)
        p_sigma = (1.0 - c_sigma) * p_sigma \
            + math.sqrt(c_sigma * (2.0 - c_sigma) * mu_eff) * (inv_sqrt @ y_w)
        sigma *= math.exp((c_sigma / d_sigma)
                          * (np.linalg.norm(p_sigma) / chi_n - 1.0))
        sigma = min(sigma, 1.0)
        h_sig = 1.0 if np.linalg.norm(p_sigma) \
            / math.sqrt(1.0 - (1.0 - c_sigma) ** (2 * (n_evals // popsize + 1))) \
            < (1.4 + 2.0 / (n + 1.0)) * chi_n else 0.0
        p_c = (1.0 - c_c) * p_c \
            + h_sig * math.sqrt(c_c * (2.0 - c_c) * mu_eff) * y_w
        rank_mu = (y_sel * weights[:, None]).T @ y_sel
        C = (1.0 - c_1 - c_mu) * C \
            + c_1 * (np.outer(p_c, p_c)
                     + (1.0 - h_sig) * c_c * (2.0 - c_c) * C) \
            + c_mu * rank_mu
        C = 0.5 * (C + C.T)

    if best_params is None or not math.isfinite(best_cost):
        return OptResult(best_params=np.array([]), best_cost=math.inf,
                         history=np.asarray(history), n_evals=n_evals,
                         success=False,
                         message="all candidate evaluations were non-finite")
    return OptResult(best_params=np.asarray(best_params),
                     best_cost=float(best_cost),
                     history=np.asarray(history), n_evals=n_evals,
                     success=True)


def _sqrt_spd(C) -> np.ndarray:
    vals, vecs = np.linalg.eigh(C)
    vals = np.maximum(vals, 1e-20)
    return (vecs * np.sqrt(vals)) @ vecs.T
