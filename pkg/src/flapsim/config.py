"""Scenario configuration files: schema validation and unit conversion.

Configs are single JSON documents with optional sections; missing sections
fall back to the built-in bench values. Model quantities accept bench units
(grams, millimeters, g.cm^2) or SI, declared in the ``units`` section. All
angles in config files are degrees and are converted to radians on load.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .aero import DEFAULT_STATIONS, WindField
from .gait import DEFAULT_GAIT, DEFAULT_MANEUVER, GaitParams, ManeuverParams
from .params import GRAM, GRAM_CM2, MILLIMETER, ModelParams
from .sim import PidState

_DEG = math.pi / 180.0

MASS_UNITS = {"g": GRAM, "kg": 1.0}
LENGTH_UNITS = {"mm": MILLIMETER, "m": 1.0}
INERTIA_UNITS = {"g.cm^2": GRAM_CM2, "kg.m^2": 1.0}

_MODEL_FIELDS = ("m_B", "m_A", "m_W", "I_B", "I_A", "I_W",
                 "l_L1", "l_L2", "l_L3", "l_R1", "l_R2", "l_R3",
                 "w_c", "w_r", "rho", "flap_hz", "gravity")


class ConfigError(Exception):
    """Invalid configuration; the message carries the offending field path."""


@dataclass
class OptimizerSettings:
    budget: int = 300
    popsize: int | None = None
    sigma0: float = 0.25
    gait_lower: np.ndarray | None = None
    gait_upper: np.ndarray | None = None
    perch_lower: np.ndarray | None = None
    perch_upper: np.ndarray | None = None


@dataclass
class ScenarioConfig:
    """Fully resolved scenario: model, simulation, gait and tool settings."""

    params: ModelParams = field(default_factory=ModelParams)
    dt: float = 1e-4
    t_end: float = 2.0
    record_stride: int = 10
    wind: WindField = field(default_factory=lambda: WindField([-2.0, 0.0, 0.0]))
    aero_enabled: bool = True
    n_stations: int = DEFAULT_STATIONS
    gait: GaitParams = field(default_factory=lambda: DEFAULT_GAIT)
    maneuver: ManeuverParams = field(default_factory=lambda: DEFAULT_MANEUVER)
    pid: PidState = field(default_factory=PidState)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    seed: int = 0
    raw: dict = field(default_factory=dict)


def _expect(cond, path, msg):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def _number(doc, key, path, default=None):
    if key not in doc:
        _expect(default is not None, f"{path}.{key}", "missing required field")
        return default
    v = doc[key]
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool),
            f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    return float(v)


def _integer(doc, key, path, default):
    if key not in doc:
        return default
    v = doc[key]
    _expect(isinstance(v, int) and not isinstance(v, bool),
            f"{path}.{key}", f"expected an integer, got {type(v).__name__}")
    return v


def _vector(doc, key, path, n, default=None):
    if key not in doc:
        _expect(default is not None, f"{path}.{key}", "missing required field")
        return np.asarray(default, dtype=float)
    v = doc[key]
    _expect(isinstance(v, (list, tuple)) and len(v) == n
            and all(isinstance(x, (int, float)) and not isinstance(x, bool)
                    for x in v),
            f"{path}.{key}", f"expected a list of {n} numbers")
    return np.asarray(v, dtype=float)


def _no_unknown_keys(doc, known, path):
    for key in doc:
        _expect(key in known, f"{path}.{key}", "unknown field")


def _unit_factor(units, key, table, path):
    name = units.get(key, next(iter(table)))
    _expect(name in table, f"{path}.{key}",
            f"unknown unit {name!r}, expected one of {sorted(table)}")
    return table[name]


def parse_config(doc: dict) -> ScenarioConfig:
    """Validate a parsed JSON document and resolve it to SI objects."""
    _expect(isinstance(doc, dict), "$", "config root must be an object")
    _no_unknown_keys(doc, {"units", "model", "sim", "gait", "maneuver",
                           "pid", "optimizer", "seed"}, "$")

    units = doc.get("units", {})
    _expect(isinstance(units, dict), "$.units", "must be an object")
    _no_unknown_keys(units, {"mass", "length", "inertia"}, "$.units")
    f_m = _unit_factor(units, "mass", MASS_UNITS, "$.units")
    f_l = _unit_factor(units, "length", LENGTH_UNITS, "$.units")
    f_i = _unit_factor(units, "inertia", INERTIA_UNITS, "$.units")

    if "model" in doc:
        m = doc["model"]
        _expect(isinstance(m, dict), "$.model", "must be an object")
        _no_unknown_keys(m, set(_MODEL_FIELDS), "$.model")
        try:
            params = ModelParams(
                m_B=_number(m, "m_B", "$.model") * f_m,
                m_A=_number(m, "m_A", "$.model") * f_m,
                m_W=_number(m, "m_W", "$.model") * f_m,
                I_B=_vector(m, "I_B", "$.model", 3) * f_i,
                I_A=_vector(m, "I_A", "$.model", 3) * f_i,
                I_W=_vector(m, "I_W", "$.model", 3) * f_i,
                l_L1=_vector(m, "l_L1", "$.model", 3) * f_l,
                l_L2=_vector(m, "l_L2", "$.model", 3) * f_l,
                l_L3=_vector(m, "l_L3", "$.model", 3) * f_l,
                l_R1=_vector(m, "l_R1", "$.model", 3) * f_l,
                l_R2=_vector(m, "l_R2", "$.model", 3) * f_l,
                l_R3=_vector(m, "l_R3", "$.model", 3) * f_l,
                w_c=_number(m, "w_c", "$.model") * f_l,
                w_r=_number(m, "w_r", "$.model") * f_l,
                rho=_number(m, "rho", "$.model"),
                flap_hz=_number(m, "flap_hz", "$.model"),
                gravity=_number(m, "gravity", "$.model", 9.81),
            )
        except ValueError as exc:
            raise ConfigError(f"$.model: {exc}") from exc
    else:
        params = ModelParams()

    cfg = ScenarioConfig(params=params, raw=doc)

    if "sim" in doc:
        s = doc["sim"]
        _expect(isinstance(s, dict), "$.sim", "must be an object")
        _no_unknown_keys(s, {"dt", "t_end", "record_stride", "wind", "aero",
                             "n_stations"}, "$.sim")
        cfg.dt = _number(s, "dt", "$.sim", cfg.dt)
        _expect(cfg.dt > 0, "$.sim.dt", "must be positive")
        cfg.t_end = _number(s, "t_end", "$.sim", cfg.t_end)
        _expect(cfg.t_end >= cfg.dt, "$.sim.t_end", "must be at least dt")
        cfg.record_stride = _integer(s, "record_stride", "$.sim",
                                     cfg.record_stride)
        _expect(cfg.record_stride >= 1, "$.sim.record_stride", "must be >= 1")
        cfg.wind = WindField(_vector(s, "wind", "$.sim", 3,
                                     default=cfg.wind.v_air))
        if "aero" in s:
            _expect(isinstance(s["aero"], bool), "$.sim.aero",
                    "expected true/false")
            cfg.aero_enabled = s["aero"]
        cfg.n_stations = _integer(s, "n_stations", "$.sim", cfg.n_stations)
        _expect(cfg.n_stations >= 1, "$.sim.n_stations", "must be >= 1")

    if "gait" in doc:
        gsec = doc["gait"]
        _expect(isinstance(gsec, dict), "$.gait", "must be an object")
        _no_unknown_keys(gsec, {"mean_deg", "amplitude_deg", "phase_deg"},
                         "$.gait")
        cfg.gait = GaitParams(
            mean=_vector(gsec, "mean_deg", "$.gait", 4) * _DEG,
            amplitude=_vector(gsec, "amplitude_deg", "$.gait", 4) * _DEG,
            phase=_vector(gsec, "phase_deg", "$.gait", 3) * _DEG,
        )

    if "maneuver" in doc:
        msec = doc["maneuver"]
        _expect(isinstance(msec, dict), "$.maneuver", "must be an object")
        _no_unknown_keys(msec, {"t0", "offset_deg", "ramp_period"},
                         "$.maneuver")
        t0 = _number(msec, "t0", "$.maneuver")
        T = _number(msec, "ramp_period", "$.maneuver", 0.2)
        _expect(T > 0, "$.maneuver.ramp_period", "must be positive")
        cfg.maneuver = ManeuverParams(
            t0=t0, d=_vector(msec, "offset_deg", "$.maneuver", 4) * _DEG, T=T)

    if "pid" in doc:
        psec = doc["pid"]
        _expect(isinstance(psec, dict), "$.pid", "must be an object")
        _no_unknown_keys(psec, {"kp", "ki", "kd", "clamp"}, "$.pid")
        cfg.pid = PidState(
            k_p=_number(psec, "kp", "$.pid", 0.0012),
            k_i=_number(psec, "ki", "$.pid", 0.006),
            k_d=_number(psec, "kd", "$.pid", 0.0012),
            clamp=_number(psec, "clamp", "$.pid", 0.05),
        )

    if "optimizer" in doc:
        osec = doc["optimizer"]
        _expect(isinstance(osec, dict), "$.optimizer", "must be an object")
        _no_unknown_keys(osec, {"budget", "popsize", "sigma0",
                                "t0_bounds", "offset_bound_deg"},
                         "$.optimizer")
        opt = OptimizerSettings()
        opt.budget = _integer(osec, "budget", "$.optimizer", opt.budget)
        _expect(opt.budget >= 1, "$.optimizer.budget", "must be >= 1")
        if "popsize" in osec and osec["popsize"] is not None:
            opt.popsize = _integer(osec, "popsize", "$.optimizer", None)
            _expect(opt.popsize >= 2, "$.optimizer.popsize", "must be >= 2")
        opt.sigma0 = _number(osec, "sigma0", "$.optimizer", opt.sigma0)
        if "t0_bounds" in osec:
            b = _vector(osec, "t0_bounds", "$.optimizer", 2)
            _expect(b[0] < b[1], "$.optimizer.t0_bounds", "must be ordered")
            opt.perch_lower = np.concatenate([[b[0]], np.full(4, -90 * _DEG)])
            opt.perch_upper = np.concatenate([[b[1]], np.full(4, 90 * _DEG)])
        if "offset_bound_deg" in osec:
            d = _number(osec, "offset_bound_deg", "$.optimizer")
            _expect(d > 0, "$.optimizer.offset_bound_deg", "must be positive")
            lo = opt.perch_lower if opt.perch_lower is not None \
                else np.array([1.0, 0, 0, 0, 0.0])
            hi = opt.perch_upper if opt.perch_upper is not None \
                else np.array([1.1, 0, 0, 0, 0.0])
            opt.perch_lower = np.concatenate([[lo[0]], np.full(4, -d * _DEG)])
            opt.perch_upper = np.concatenate([[hi[0]], np.full(4, d * _DEG)])
        cfg.optimizer = opt

    cfg.seed = _integer(doc, "seed", "$", 0)
    return cfg


def load_config(path) -> ScenarioConfig:
    """Load and validate a JSON scenario file."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return parse_config(doc)


def canonical_config() -> dict:
    """The bench-value scenario document (units: g, mm, g.cm^2, degrees)."""
    return {
        "units": {"mass": "g", "length": "mm", "inertia": "g.cm^2"},
        "model": {
            "m_B": 5.0, "m_A": 0.35, "m_W": 5.6,
            "I_B": [0.625, 3.65, 3.65],
            "I_A": [0.147, 0.147, 0.040],
            "I_W": [1.05, 2.11, 2.11],
            "l_L1": [0.0, 25.0, 25.0],
            "l_L2": [0.0, 0.0, 50.0],
            "l_L3": [0.0, 0.0, 150.0],
            "l_R1": [0.0, -25.0, 25.0],
            "l_R2": [0.0, 0.0, 50.0],
            "l_R3": [0.0, 0.0, 150.0],
            "w_c": 150.0, "w_r": 150.0,
            "rho": 1.0, "flap_hz": 10.0, "gravity": 9.81,
        },
        "sim": {
            "dt": 1e-4, "t_end": 2.0, "record_stride": 10,
            "wind": [-2.0, 0.0, 0.0], "aero": True,
            "n_stations": DEFAULT_STATIONS,
        },
        "gait": {
            "mean_deg": [-75.3, -16.2, -50.7, -9.2],
            "amplitude_deg": [45.0, 17.3, 27.2, 29.1],
            "phase_deg": [-91.0, -112.0, -92.5],
        },
        "maneuver": {
            "t0": 1.0724,
            "offset_deg": [-55.7, 0.0, 0.0, -16.6],
            "ramp_period": 0.2,
        },
        "pid": {"kp": 0.0012, "ki": 0.006, "kd": 0.0012, "clamp": 0.05},
        "optimizer": {"budget": 300, "popsize": None, "sigma0": 0.25,
                      "t0_bounds": [1.0, 1.1], "offset_bound_deg": 90.0},
        "seed": 0,
    }
