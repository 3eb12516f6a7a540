"""Configuration ingestion, CSV export and the command-line interface."""

import json
import math
import os

import numpy as np
import pytest

from flapsim.cli import COLUMNS, main, read_trace_csv, write_trace_csv
from flapsim.config import (ConfigError, canonical_config, load_config,
                            parse_config)


@pytest.fixture
def config_doc():
    return canonical_config()


@pytest.fixture
def config_file(tmp_path, config_doc):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(config_doc))
    return str(path)


def test_parse_canonical(config_doc):
    cfg = parse_config(config_doc)
    p = cfg.params
    assert p.m_B == pytest.approx(5e-3)
    assert p.m_W == pytest.approx(5.6e-3)
    assert p.I_B[0] == pytest.approx(0.625e-7)
    assert p.l_L1[1] == pytest.approx(0.025)
    assert p.w_c == pytest.approx(0.15)
    assert cfg.gait.mean[0] == pytest.approx(math.radians(-75.3))
    assert cfg.maneuver.t0 == pytest.approx(1.0724)
    assert cfg.pid.k_i == pytest.approx(0.006)
    assert cfg.optimizer.budget == 300


def test_parse_si_units(config_doc):
    doc = config_doc
    doc["units"] = {"mass": "kg", "length": "m", "inertia": "kg.m^2"}
    doc["model"]["m_B"] = 5e-3
    doc["model"]["m_A"] = 0.35e-3
    doc["model"]["m_W"] = 5.6e-3
    for key in ("I_B", "I_A", "I_W"):
        doc["model"][key] = [v * 1e-7 for v in doc["model"][key]]
    for key in ("l_L1", "l_L2", "l_L3", "l_R1", "l_R2", "l_R3"):
        doc["model"][key] = [v * 1e-3 for v in doc["model"][key]]
    doc["model"]["w_c"] = 0.15
    doc["model"]["w_r"] = 0.15
    cfg = parse_config(doc)
    assert cfg.params.m_B == pytest.approx(5e-3)
    assert cfg.params.I_B[1] == pytest.approx(3.65e-7)


def test_unit_round_trip_through_config(config_doc):
    """Bench-unit ingestion is lossless to 1e-12 relative when converted
    back to the declared units."""
    cfg = parse_config(config_doc)
    model = config_doc["model"]
    assert cfg.params.m_B / 1e-3 == pytest.approx(model["m_B"], rel=1e-12)
    for i in range(3):
        assert cfg.params.I_W[i] / 1e-7 == pytest.approx(model["I_W"][i],
                                                         rel=1e-12)
        assert cfg.params.l_L3[i] / 1e-3 == pytest.approx(model["l_L3"][i],
                                                          rel=1e-12, abs=0)


@pytest.mark.parametrize("mutate,path_fragment", [
    (lambda d: d["model"].pop("m_B"), "$.model.m_B"),
    (lambda d: d["model"].__setitem__("m_B", "five"), "$.model.m_B"),
    (lambda d: d["model"].__setitem__("I_B", [1.0, 2.0]), "$.model.I_B"),
    (lambda d: d["sim"].__setitem__("dt", -1.0), "$.sim.dt"),
    (lambda d: d["sim"].__setitem__("banana", 1), "$.sim.banana"),
    (lambda d: d["units"].__setitem__("mass", "stone"), "$.units.mass"),
    (lambda d: d["gait"].__setitem__("mean_deg", [0, 0]), "$.gait.mean_deg"),
    (lambda d: d.__setitem__("surprise", {}), "$.surprise"),
])
def test_schema_errors_carry_field_path(config_doc, mutate, path_fragment):
    mutate(config_doc)
    with pytest.raises(ConfigError) as err:
        parse_config(config_doc)
    assert path_fragment in str(err.value)


def test_load_config_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_csv_round_trip(tmp_path, params):
    from flapsim import DEFAULT_GAIT, GaitConstraint, WindField
    from flapsim.sim import MODE_CONSTRAINED, SimConfig, run_simulation

    cfg = SimConfig(dt=1e-3, t_end=0.02, mode=MODE_CONSTRAINED,
                    wind=WindField([-2.0, 0.0, 0.0]), record_stride=2)
    trace = run_simulation(cfg, params, GaitConstraint(DEFAULT_GAIT, params))
    path = tmp_path / "t.csv"
    write_trace_csv(trace, str(path))
    text = path.read_text()
    header = text.splitlines()[0].split(",")
    assert header == COLUMNS
    assert len(header) == 42
    assert text.endswith("\n")
    table = read_trace_csv(str(path))
    # 17 significant digits round-trip exactly
    assert np.array_equal(table, trace.table())


def _run(args):
    return main(args)


def test_simulate_gait_ballistic(tmp_path):
    """Zero-amplitude gait, no aerodynamics: the body falls ballistically,
    p_z(t) = -g t^2 / 2 to 1e-6 m at t = 0.1 s."""
    doc = canonical_config()
    doc["gait"]["amplitude_deg"] = [0.0, 0.0, 0.0, 0.0]
    doc["sim"]["aero"] = False
    doc["sim"]["wind"] = [0.0, 0.0, 0.0]
    doc["sim"]["t_end"] = 0.1
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    rc = _run(["simulate-gait", "--config", str(cfg_path), "--out",
               str(out)])
    assert rc == 0
    table = read_trace_csv(str(out / "simulate-gait_trace.csv"))
    t = table[:, 0]
    pz = table[:, 12]
    expect = -0.5 * 9.81 * t[-1] ** 2
    assert abs(t[-1] - 0.1) < 1e-12
    assert abs(pz[-1] - expect) < 1e-6


def test_simulate_gait_deterministic_bytes(tmp_path, config_file):
    doc = json.loads(open(config_file).read())
    doc["sim"]["t_end"] = 0.05
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert _run(["simulate-gait", "--config", str(cfg_path), "--out",
                 str(out1)]) == 0
    assert _run(["simulate-gait", "--config", str(cfg_path), "--out",
                 str(out2)]) == 0
    b1 = (out1 / "simulate-gait_trace.csv").read_bytes()
    b2 = (out2 / "simulate-gait_trace.csv").read_bytes()
    assert b1 == b2


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"unknown_section": 1}))
    rc = _run(["simulate-gait", "--config", str(bad), "--out",
               str(tmp_path / "o")])
    assert rc == 1


def test_cli_blowup_exit_code(tmp_path):
    """An absurd integration step makes the run blow up; exit code 2 and a
    truncated trace with finite rows."""
    doc = canonical_config()
    doc["sim"]["t_end"] = 1.0
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    rc = _run(["track-pid", "--config", str(cfg_path), "--out", str(out),
               "--dt", "0.02"])
    assert rc == 2
    meta = json.loads((out / "track-pid_metadata.json").read_text())
    assert meta["failed"] is True


def test_optimize_gait_degenerate_budget(tmp_path):
    """Budget 1 returns the configured gait and its cost."""
    doc = canonical_config()
    doc["sim"]["t_end"] = 0.1
    doc["optimizer"]["budget"] = 1
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    rc = _run(["optimize-gait", "--config", str(cfg_path), "--out",
               str(out), "--workers", "1"])
    assert rc == 0
    meta = json.loads((out / "optimize-gait_metadata.json").read_text())
    assert meta["n_evals"] == 1
    assert meta["best_cost"] == meta["initial_cost"]
    best = json.loads((out / "optimize-gait_params.json").read_text())
    assert best["mean_deg"] == pytest.approx([-75.3, -16.2, -50.7, -9.2])


def test_optimize_gait_improves(tmp_path):
    doc = canonical_config()
    doc["sim"]["t_end"] = 0.1
    doc["optimizer"]["budget"] = 25
    doc["optimizer"]["popsize"] = 6
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    rc = _run(["optimize-gait", "--config", str(cfg_path), "--out",
               str(out), "--workers", "1"])
    assert rc == 0
    meta = json.loads((out / "optimize-gait_metadata.json").read_text())
    assert meta["best_cost"] <= meta["initial_cost"]
    hist = np.asarray(meta["cost_history"])
    assert np.all(np.diff(hist) <= 0)


def test_optimize_gait_parallel_workers_match_serial(tmp_path):
    """Two workers give the identical history (deterministic reduction)."""
    doc = canonical_config()
    doc["sim"]["t_end"] = 0.05
    doc["optimizer"]["budget"] = 8
    doc["optimizer"]["popsize"] = 4
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    outs = []
    for name, workers in (("s", "1"), ("p", "2")):
        out = tmp_path / name
        rc = _run(["optimize-gait", "--config", str(cfg_path), "--out",
                   str(out), "--workers", workers])
        assert rc == 0
        meta = json.loads((out / "optimize-gait_metadata.json").read_text())
        outs.append(meta["cost_history"])
    assert outs[0] == outs[1]


def test_optimize_perch_runs(tmp_path):
    doc = canonical_config()
    doc["maneuver"] = {"t0": 0.15, "offset_deg": [-30.0, 0.0, 0.0, -10.0],
                       "ramp_period": 0.05}
    doc["optimizer"] = {"budget": 3, "popsize": 4,
                        "t0_bounds": [0.1, 0.2], "offset_bound_deg": 60.0}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    rc = _run(["optimize-perch", "--config", str(cfg_path), "--out",
               str(out), "--workers", "1"])
    assert rc == 0
    meta = json.loads((out / "optimize-perch_metadata.json").read_text())
    assert meta["best_cost"] <= meta["initial_cost"]
    best = json.loads((out / "optimize-perch_params.json").read_text())
    assert 0.1 <= best["t0"] <= 0.2
    assert best["ramp_period"] == pytest.approx(0.05)


def test_simulate_perch_outputs(tmp_path):
    doc = canonical_config()
    doc["maneuver"]["t0"] = 0.15
    doc["sim"]["t_end"] = 0.6
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    rc = _run(["simulate-perch", "--config", str(cfg_path), "--out",
               str(out)])
    assert rc == 0
    meta = json.loads((out / "simulate-perch_metadata.json").read_text())
    assert "roll_excursion_deg_within_0p5s" in meta
    assert (out / "plot_simulate-perch.py").exists()
    script = (out / "plot_simulate-perch.py").read_text()
    assert "wx" in script and "roll" in script


def test_perch_start_phase_reporting(tmp_path):
    """t0 = 1.0724 s is 72.4% of a 10 Hz wingbeat."""
    doc = canonical_config()
    doc["sim"]["t_end"] = 0.01
    doc["maneuver"]["t0"] = 1.0724
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    rc = _run(["simulate-perch", "--config", str(cfg_path), "--out",
               str(out), "--dt", "0.001"])
    meta = json.loads((out / "simulate-perch_metadata.json").read_text())
    assert meta["start_phase_fraction"] == pytest.approx(0.724, abs=1e-6)
    assert rc == 0


def test_track_pid_outputs(tmp_path):
    doc = canonical_config()
    doc["maneuver"]["t0"] = 0.05
    doc["sim"]["t_end"] = 0.1
    doc["sim"]["dt"] = 2e-5
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    rc = _run(["track-pid", "--config", str(cfg_path), "--out", str(out)])
    meta = json.loads((out / "track-pid_metadata.json").read_text())
    assert "joint_rms_max_rad" in meta
    assert "reached_minus_150deg" in meta
    assert rc in (0, 2)


def test_metadata_contains_rerun_information(tmp_path, config_file):
    doc = json.loads(open(config_file).read())
    doc["sim"]["t_end"] = 0.02
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    _run(["simulate-gait", "--config", str(cfg_path), "--out", str(out),
          "--seed", "42"])
    meta = json.loads((out / "simulate-gait_metadata.json").read_text())
    for key in ("format_version", "package_version", "command", "seed",
                "dt", "config", "runtime_s"):
        assert key in meta
    assert meta["seed"] == 42
    assert meta["config"]["model"]["m_B"] == 5.0


def test_plot_script_emitted_for_gait(tmp_path, config_file):
    doc = json.loads(open(config_file).read())
    doc["sim"]["t_end"] = 0.02
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "out"
    _run(["simulate-gait", "--config", str(cfg_path), "--out", str(out)])
    script = (out / "plot_simulate-gait.py").read_text()
    for name in ("Pix", "vx", "thL_p"):
        assert name in script


def test_repo_example_config_loads():
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    cfg = load_config(os.path.join(here, "configs", "bench.json"))
    assert cfg.params.total_mass == pytest.approx(0.0169)
