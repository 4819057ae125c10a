"""Run orchestration: plan, run, and sweep commands plus manifest output.

Each run gets its own directory named by timestamp and config digest. The
manifest echoes the fully resolved config, so a run is reproducible from
its manifest alone.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, config_digest, config_from_dict, resolved_dict
from .engine import save_checkpoint, write_metrics_csv
from .errors import ConfigError
from .schemes import RunResult, make_schedule, privacy_spec, run_scheme
from .scheduling import assign_privacy_groups, verify_budget_adherence

ADHERENCE_CSV_COLUMNS = ("client", "rdp_budget", "rdp_spent", "dp_budget",
                         "dp_spent", "slack_dp", "status")


def _jsonable(obj):
    """Make numpy scalars/arrays and non-finite floats JSON-safe."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def run_dir_for(cfg: RunConfig, out_dir) -> Path:
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    path = Path(out_dir) / f"{stamp}-{config_digest(cfg)[:12]}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_adherence_csv(path, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ADHERENCE_CSV_COLUMNS)
        for r in report.rows:
            w.writerow([r.client_id, repr(r.rdp_budget), repr(r.rdp_spent),
                        repr(r.dp_budget), repr(r.dp_spent), repr(r.slack_dp),
                        r.status])


def _schedule_digest(schedule_csv: Path) -> str:
    return hashlib.sha256(schedule_csv.read_bytes()).hexdigest()


def cmd_plan(cfg: RunConfig, out_dir) -> Path:
    """Dry-run the scheduler: schedule dump + adherence report, no training."""
    spec = privacy_spec(cfg)
    groups = assign_privacy_groups(cfg.clients, cfg.group_fractions, seed=cfg.seed)
    if cfg.scheme == "adaptive_clip":
        raise ConfigError(
            "adaptive_clip has no pre-training schedule; its clip sequence "
            "is data-dependent. Use cmd_run."
        )
    schedule = make_schedule(cfg, spec, groups)
    report = verify_budget_adherence(schedule)
    out = run_dir_for(cfg, out_dir)
    schedule.to_csv(out / "schedule.csv")
    write_adherence_csv(out / "adherence.csv", report)
    return out


def build_manifest(cfg: RunConfig, rr: RunResult, schedule_digest: str,
                   wall_clock: float) -> dict:
    metrics = []
    for m in rr.train.history:
        metrics.append({
            "round": m.round_index,
            "test_acc": m.test_acc,
            "test_loss": m.test_loss,
            "n_sampled": m.n_sampled,
            "mean_update_norm": m.mean_update_norm,
            "frac_clipped": m.frac_clipped,
        })
    manifest = {
        "artifact_version": __version__,
        "config": resolved_dict(cfg),
        "config_digest": config_digest(cfg),
        "schedule_digest": schedule_digest,
        "wall_clock_seconds": wall_clock,
        "groups": rr.groups.tolist(),
        "metrics": metrics,
        "privacy_report": [asdict(r) for r in rr.adherence.rows],
    }
    if rr.clip_trajectory is not None:
        manifest["clip_trajectory"] = list(rr.clip_trajectory)
    return _jsonable(manifest)


def cmd_run(cfg: RunConfig, out_dir) -> Path:
    """Schedule, train, and persist manifest + metrics + final model."""
    started = time.monotonic()
    rr = run_scheme(cfg)
    wall = time.monotonic() - started
    out = run_dir_for(cfg, out_dir)
    rr.schedule.to_csv(out / "schedule.csv")
    write_metrics_csv(out / "metrics.csv", rr.train.history)
    save_checkpoint(out / "model.ckpt", rr.train.final_params)
    write_adherence_csv(out / "adherence.csv", rr.adherence)
    manifest = build_manifest(cfg, rr, _schedule_digest(out / "schedule.csv"), wall)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


# ----------------------------------------------------------------- sweeps

_TOP_FIELDS = tuple(RunConfig.__dataclass_fields__)


def parse_sweep(path):
    """Read a sweep document: {"base": run config, "sweep": {field: [values]}}."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"sweep file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from None
    if not isinstance(doc, dict) or "sweep" not in doc:
        raise ConfigError("sweep document needs a 'sweep' section")
    base = doc.get("base", {})
    axes = doc["sweep"]
    if not isinstance(axes, dict) or not axes:
        raise ConfigError("'sweep' must map config fields to value lists")
    for key, values in axes.items():
        if key not in _TOP_FIELDS:
            raise ConfigError(f"unknown sweep axis {key!r}")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep axis {key!r} needs a non-empty list")
    config_from_dict(base)  # fail fast if the base is malformed
    return base, axes


def sweep_members(base: dict, axes: dict):
    """Cartesian product over the sweep axes, in axis declaration order."""
    names = list(axes)
    members = []
    for combo in itertools.product(*(axes[n] for n in names)):
        raw = dict(base)
        raw.update(dict(zip(names, combo)))
        members.append((dict(zip(names, combo)), config_from_dict(raw)))
    return members


def cmd_sweep(base: dict, axes: dict, out_dir, max_workers: int = 4) -> Path:
    """Run every member config; aggregate per-scheme curves and a summary."""
    members = sweep_members(base, axes)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(item):
        combo, cfg = item
        run_path = cmd_run(cfg, out / "runs")
        return combo, cfg, run_path

    with ThreadPoolExecutor(max_workers=min(max_workers, len(members))) as pool:
        done = list(pool.map(one, members))

    axis_names = list(axes)
    by_scheme = {}
    summary_rows = []
    for combo, cfg, run_path in done:
        manifest = json.loads((run_path / "manifest.json").read_text())
        last = manifest["metrics"][-1]
        row = {name: combo[name] for name in axis_names}
        row.setdefault("scheme", cfg.scheme)
        row.setdefault("seed", cfg.seed)
        row.update({"final_test_acc": last["test_acc"],
                    "final_test_loss": last["test_loss"],
                    "run_dir": run_path.name})
        summary_rows.append(row)
        for m in manifest["metrics"]:
            by_scheme.setdefault(cfg.scheme, []).append(
                {"seed": cfg.seed, **m})

    summary_rows.sort(key=lambda r: tuple(str(r[n]) for n in axis_names))
    cols = list(summary_rows[0])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        w.writerows(summary_rows)

    for scheme, rows in sorted(by_scheme.items()):
        rows.sort(key=lambda r: (r["seed"], r["round"]))
        with open(out / f"metrics_{scheme}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return out
