"""Run an experiment's (cell, seed) grid, aggregate, check and write artifacts.

Output layout under ``out``::

    cells/<cell>/seed<s>.csv        one summary row per variant of the cell
    runs/<cell>/seed<s>_<tag>.csv   per-round trace (+ .json manifest)
    aggregate.csv                   mean ± stderr over seeds
    checks.csv                      pass/fail verdicts
    plot.svg                        where the experiment defines a plot
    manifest.json                   config echo, hash, version, partitions
"""
from __future__ import annotations

import csv
import json
import logging
import math
import subprocess
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import DomainError, NumericalFailure
from .config import config_hash
from .experiments import REGISTRY, Check, stats

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ("cell", "seed", "variant", "eta", "regret")


@dataclass
class ExperimentResult:
    cfg: dict
    rows: list
    agg: dict
    checks: list
    failures: list = field(default_factory=list)
    out: Path | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _scalar(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


def run_cell(cfg: dict, cell_index: int, seed: int, out: str | None = None):
    """Run one (cell, seed) pair; returns ``(rows, partitions, failure)``.

    Module level so process pools can pickle it.  Trace files are written
    here, so large iterate arrays never travel between processes.
    """
    exp = REGISTRY[cfg["experiment"]]
    cell = exp.cells(cfg)[cell_index]
    try:
        res = exp.run(cfg, cell, cell_index, seed)
    except (NumericalFailure, DomainError) as exc:
        msg = f"{type(exc).__name__} at step {getattr(exc, 'step', None)}: {exc}"
        log.error("cell %s seed %d failed: %s", cell["id"], seed, msg)
        return [{"cell": cell["id"], "seed": seed, "variant": "-", "failed": True, "error": msg}], {}, msg
    rows = [dict({k: _scalar(v) for k, v in r.items()}, cell=cell["id"], seed=seed, failed=False)
            for r in res.rows]
    partitions = dict(res.partitions)
    for tag, rec in res.records:
        part = rec.manifest.get("map", {}).get("partition")
        if part is not None:
            partitions.setdefault(tag, part)
    if out is not None:
        root = Path(out)
        (root / "cells" / cell["id"]).mkdir(parents=True, exist_ok=True)
        _write_rows(root / "cells" / cell["id"] / f"seed{seed}.csv", rows)
        if res.records:
            (root / "runs" / cell["id"]).mkdir(parents=True, exist_ok=True)
        for tag, rec in res.records:
            rec.manifest.setdefault("config_hash", config_hash(cfg))
            rec.manifest.setdefault("cell", cell["id"])
            rec.to_csv(root / "runs" / cell["id"] / f"seed{seed}_{tag}.csv")
    return rows, partitions, None


def _write_rows(path: Path, rows: list) -> None:
    keys = list(SUMMARY_FIELDS)
    for r in rows:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def aggregate(rows: list) -> dict:
    """``{(cell, variant): {mean, stderr, count, failed, eta, flags}}`` over seeds."""
    groups = defaultdict(list)
    failed = defaultdict(int)
    for r in rows:
        if r.get("failed"):
            failed[r["cell"]] += 1
        else:
            groups[(r["cell"], r["variant"])].append(r)
    agg = {}
    for key, rs in groups.items():
        mean, se = stats([r["regret"] for r in rs])
        etas = [r.get("eta") for r in rs if isinstance(r.get("eta"), (int, float))]
        flags = {}
        for k in rs[0]:
            if k != "failed" and isinstance(rs[0][k], bool):
                flags[k] = f"{sum(bool(r[k]) for r in rs)}/{len(rs)}"
        agg[key] = {"mean": mean, "stderr": se, "count": len(rs), "failed": failed[key[0]],
                    "eta": float(np.mean(etas)) if etas else None, "flags": flags}
    for cell, k in failed.items():
        if not any(c == cell for c, _ in agg):
            agg[(cell, "-")] = {"mean": float("nan"), "stderr": float("nan"), "count": 0,
                                "failed": k, "eta": float("nan"), "flags": {}}
    return agg


def run_experiment(cfg: dict, out=None, workers: int | None = None) -> ExperimentResult:
    """Run every (cell, seed) of a validated config, then aggregate and check."""
    exp = REGISTRY[cfg["experiment"]]
    cells = exp.cells(cfg)
    out = Path(out) if out is not None else (Path(cfg["out"]) if cfg.get("out") else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    tasks = [(ci, s) for ci in range(len(cells)) for s in cfg["seeds"]]
    workers = cfg.get("workers", 1) if workers is None else workers
    out_arg = str(out) if out is not None else None
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, cfg, ci, s, out_arg) for ci, s in tasks]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(cfg, ci, s, out_arg) for ci, s in tasks]

    rows, failures = [], []
    partitions = defaultdict(dict)
    for (ci, s), (rs, parts, fail) in zip(tasks, results):
        rows += rs
        if fail:
            failures.append({"cell": cells[ci]["id"], "seed": s, "error": fail})
        if parts:
            partitions[cells[ci]["id"]][str(s)] = parts
    agg = aggregate(rows)
    try:
        checks = list(exp.checks(cfg, agg, rows))
    except (KeyError, ZeroDivisionError, ValueError) as exc:
        checks = [Check(f"{cfg['experiment']} checks", False, f"could not be evaluated: {exc!r}")]
    result = ExperimentResult(cfg, rows, agg, checks, failures, out)
    if out is not None:
        _write_outputs(result, exp, cells, dict(partitions))
    return result


def _write_outputs(result: ExperimentResult, exp, cells, partitions) -> None:
    out, cfg = result.out, result.cfg
    n_of = {c["id"]: c.get("n", "") for c in cells}
    order = {c["id"]: i for i, c in enumerate(cells)}
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "variant", "n", "eta", "mean_regret", "stderr", "count", "failed",
                    "pass_flags"])
        for (cell, variant), a in sorted(result.agg.items(), key=lambda kv: (order[kv[0][0]], kv[0][1])):
            flags = ";".join(f"{k}={v}" for k, v in a["flags"].items())
            eta = "" if a["eta"] is None else repr(a["eta"])
            w.writerow([cell, variant, n_of[cell], eta, repr(a["mean"]),
                        repr(a["stderr"]), a["count"], a["failed"], flags])
    with open(out / "checks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "passed", "detail"])
        for c in result.checks:
            w.writerow([c.name, int(c.passed), c.detail])
    plot = exp.plot(cfg, result.agg, result.rows) if exp.plot is not None else None
    if plot:
        (out / "plot.svg").write_text(plot)
    manifest = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "version": version_string(),
        "cells": cells,
        "seeding": {
            "instance": "derive_seed(master_seed, 0, seed)",
            "cell": "derive_seed(master_seed, cell_index + 1, seed)",
            "cell_index": {c["id"]: i for i, c in enumerate(cells)},
        },
        "failures": result.failures,
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in result.checks],
        "partitions": partitions,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def summary_lines(result: ExperimentResult) -> list[str]:
    lines = [f"experiment {result.cfg['experiment']}: {len(result.rows)} rows, "
             f"{len(result.failures)} failed cells"]
    for (cell, variant), a in result.agg.items():
        lab = cell if variant == "-" else f"{cell}/{variant}"
        lines.append(f"  {lab:<28} mean {a['mean']:.4g} ± {a['stderr']:.3g} (n={a['count']})")
    lines += [c.line() for c in result.checks]
    return lines
