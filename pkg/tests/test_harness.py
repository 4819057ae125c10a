"""Runner commands, CLI wiring, and the registered verification suites."""

import csv
import json
import math

import numpy as np
import pytest

from dpflsim import cli
from dpflsim.config import config_from_dict
from dpflsim.engine import load_checkpoint
from dpflsim.runner import cmd_plan, cmd_run, cmd_sweep, parse_sweep
from dpflsim.verify import format_report, run_suites

TINY = {
    "seed": 5,
    "rounds": 4,
    "clients": 6,
    "alpha": 8.0,
    "group_budgets": [2.0, 5.0, 10.0],
    "saving_rates": [0.3, 0.5, 0.7],
    "transition_rounds": [3, 3, 3],
    "data": {"dimension": 4, "classes": 2, "separation": 5.0,
             "samples_per_client": 20},
    "trainer": {"local_epochs": 1, "batch_size": 8, "learning_rate": 0.3},
}


def tiny_cfg(scheme, **over):
    raw = dict(TINY)
    raw["scheme"] = scheme
    raw.update(over)
    return config_from_dict(raw)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ plan

def test_cmd_plan_writes_schedule_and_adherence(tmp_path):
    out = cmd_plan(tiny_cfg("time_adaptive"), tmp_path)
    rows = read_csv(out / "schedule.csv")
    assert len(rows) == 4 * 6
    adh = read_csv(out / "adherence.csv")
    assert len(adh) == 6
    assert all(r["status"] == "ok" for r in adh)


def test_cmd_plan_idp_spend_is_flat(tmp_path):
    out = cmd_plan(tiny_cfg("idp_fedavg"), tmp_path)
    rows = read_csv(out / "schedule.csv")
    by_client = {}
    for r in rows:
        by_client.setdefault(r["client"], []).append(float(r["rdp_spent_this_round"]))
    for spends in by_client.values():
        assert np.allclose(spends, spends[0], rtol=1e-9)


def test_cmd_plan_time_adaptive_spend_nondecreasing_then_flat(tmp_path):
    out = cmd_plan(tiny_cfg("time_adaptive"), tmp_path)
    rows = read_csv(out / "schedule.csv")
    by_client = {}
    for r in rows:
        by_client.setdefault(r["client"], []).append(float(r["rdp_spent_this_round"]))
    for spends in by_client.values():
        diffs = np.diff(spends)
        assert np.all(diffs >= -1e-12 * max(spends))
        assert spends[-1] == pytest.approx(spends[2], rel=1e-9)  # flat after T_n=3


def test_cmd_plan_single_round_spends_everything(tmp_path):
    cfg = tiny_cfg("idp_fedavg", rounds=1, transition_rounds=[1, 1, 1])
    out = cmd_plan(cfg, tmp_path)
    rows = read_csv(out / "schedule.csv")
    assert len(rows) == 6
    for r in rows:
        assert float(r["rdp_remaining"]) == pytest.approx(0.0, abs=1e-9)


# ------------------------------------------------------------------- run

def test_cmd_run_writes_manifest_metrics_and_model(tmp_path):
    out = cmd_run(tiny_cfg("time_adaptive"), tmp_path)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["artifact_version"]
    assert manifest["config"]["scheme"] == "time_adaptive"
    assert len(manifest["config_digest"]) == 64
    assert len(manifest["schedule_digest"]) == 64
    assert manifest["wall_clock_seconds"] >= 0.0
    assert len(manifest["metrics"]) == 4
    assert len(manifest["privacy_report"]) == 6
    assert len(manifest["groups"]) == 6
    params = load_checkpoint(out / "model.ckpt")
    assert params.ndim == 1 and params.size > 0
    assert (out / "metrics.csv").exists() and (out / "schedule.csv").exists()


def test_cmd_run_same_seed_byte_identical_metrics(tmp_path):
    a = cmd_run(tiny_cfg("dp_fedavg"), tmp_path / "a")
    b = cmd_run(tiny_cfg("dp_fedavg"), tmp_path / "b")
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["schedule_digest"] == mb["schedule_digest"]
    assert ma["config_digest"] == mb["config_digest"]


def test_cmd_run_fedavg_easy_task_reaches_095(tmp_path):
    cfg = tiny_cfg("fedavg", rounds=8,
                   data={"dimension": 4, "classes": 2, "separation": 10.0,
                         "samples_per_client": 20})
    out = cmd_run(cfg, tmp_path)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["metrics"][-1]["test_acc"] >= 0.95


def test_run_dir_name_carries_config_digest(tmp_path):
    cfg = tiny_cfg("fedavg")
    out = cmd_run(cfg, tmp_path)
    from dpflsim.config import config_digest
    assert out.name.endswith(config_digest(cfg)[:12])


# ----------------------------------------------------------------- sweep

def test_parse_sweep_validates_axes(tmp_path):
    doc = {"base": TINY, "sweep": {"bogus_field": [1, 2]}}
    p = tmp_path / "sweep.json"
    p.write_text(json.dumps(doc))
    from dpflsim.errors import ConfigError
    with pytest.raises(ConfigError, match="bogus_field"):
        parse_sweep(p)


def test_cmd_sweep_scheme_axis_emits_per_scheme_and_summary(tmp_path):
    doc = {"base": dict(TINY, scheme="fedavg"),
           "sweep": {"scheme": ["fedavg", "dp_fedavg"], "seed": [1, 2]}}
    p = tmp_path / "sweep.json"
    p.write_text(json.dumps(doc))
    base, axes = parse_sweep(p)
    out = cmd_sweep(base, axes, tmp_path / "out")
    summary = read_csv(out / "summary.csv")
    assert len(summary) == 4
    assert {r["scheme"] for r in summary} == {"fedavg", "dp_fedavg"}
    fa = read_csv(out / "metrics_fedavg.csv")
    assert len(fa) == 2 * TINY["rounds"]  # two seeds, per-round rows
    assert (out / "metrics_dp_fedavg.csv").exists()


def test_cmd_sweep_runs_are_isolated_and_deterministic(tmp_path):
    doc = {"base": dict(TINY, scheme="dp_fedavg"),
           "sweep": {"seed": [3, 4]}}
    p = tmp_path / "sweep.json"
    p.write_text(json.dumps(doc))
    base, axes = parse_sweep(p)
    out1 = cmd_sweep(base, axes, tmp_path / "o1")
    out2 = cmd_sweep(base, axes, tmp_path / "o2")
    assert (out1 / "summary.csv").read_text() == (out2 / "summary.csv").read_text()


# ------------------------------------------------------------------- cli

def write_cfg(tmp_path, **over):
    raw = dict(TINY, scheme="dp_fedavg")
    raw.update(over)
    p = tmp_path / "run.json"
    p.write_text(json.dumps(raw))
    return p


def test_cli_plan_run_exit_zero(tmp_path):
    p = write_cfg(tmp_path)
    assert cli.main(["plan", "--config", str(p), "--out", str(tmp_path / "p")]) == 0
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "r")]) == 0


def test_cli_overrides_scheme_and_seed(tmp_path):
    p = write_cfg(tmp_path)
    out = tmp_path / "r"
    assert cli.main(["run", "--config", str(p), "--out", str(out),
                     "--scheme", "fedavg", "--seed", "9"]) == 0
    run_dir = next(out.iterdir())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["config"]["scheme"] == "fedavg"
    assert manifest["config"]["seed"] == 9


def test_cli_bad_config_exits_nonzero(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"scheme": "sgd"}))
    rc = cli.main(["run", "--config", str(p), "--out", str(tmp_path)])
    assert rc != 0
    assert "scheme" in capsys.readouterr().err


def test_cli_verify_unknown_suite(tmp_path, capsys):
    assert cli.main(["verify", "--suite", "nope"]) != 0


# ---------------------------------------------------------------- verify

def test_verify_suites_pass_at_reduced_size():
    results = run_suites(["accounting", "permutation", "noise", "lattice"],
                         accounting_tuples=60, permutation_instances=40,
                         noise_draws=1500)
    assert results, "suites returned no checks"
    assert all(r.passed for r in results), format_report(results)
    suites = {r.suite for r in results}
    assert suites == {"accounting", "permutation", "noise", "lattice"}


def test_verify_report_is_machine_readable():
    results = run_suites(["lattice"])
    text = format_report(results)
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        assert line.startswith(("PASS ", "FAIL "))
    assert all(np.isfinite(r.delta) or math.isinf(r.budget) for r in results)


def test_cli_verify_suite_exits_zero():
    assert cli.main(["verify", "--suite", "lattice"]) == 0
