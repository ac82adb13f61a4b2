"""Multi-seed benchmark sweeps: generate, fit DICD and its baseline, score.

Every (setting, seed) pair is fitted once with the invariance penalty switched
off (``method=baseline``) and once per ``lambdaD`` grid value
(``method=dicd``), on the same generated dataset. Raw rows go to
``raw.csv``; ``aggregate.csv`` holds mean and standard deviation per setting
and method and is recomputed from the raw rows on every run.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import metrics
from .linear import LinearFitConfig, fit_linear
from .nonlinear import MlpFitConfig, fit_mlp
from .simdata import generate
from .solver import SolverConfig

logger = logging.getLogger(__name__)

KEY_FIELDS = ["graph_type", "d", "degree", "model", "method", "lambda1", "lambda2", "lambdaD", "seed"]
RAW_FIELDS = KEY_FIELDS + ["fdr", "tpr", "shd", "nnz", "wall_time_sec", "converged", "error"]
AGG_FIELDS = KEY_FIELDS[:-1] + [
    "runs", "errors", "fdr_mean", "fdr_std", "tpr_mean", "tpr_std", "shd_mean", "shd_std", "wall_time_mean",
]


@dataclass
class BenchConfig:
    graph_type: str = "er"
    d: list = field(default_factory=lambda: [10])
    degree: list = field(default_factory=lambda: [4])
    env_count: int = 5
    n_per_env: int = 200
    noise_scales: list = field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8, 1.0])
    seeds: list = field(default_factory=lambda: list(range(10)))
    model: str = "linear"
    lambda1: list = field(default_factory=lambda: [0.01])
    lambda2: list = field(default_factory=lambda: [0.01])
    lambdaD: list = field(default_factory=lambda: [1.0])
    threshold: float = 0.3
    output: str = "bench_out"
    workers: int = 1
    hidden: list = field(default_factory=lambda: [10])
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.graph_type not in ("er", "sf"):
            raise ValueError(f"graph_type must be er or sf, got {self.graph_type!r}")
        if self.model not in ("linear", "mlp"):
            raise ValueError(f"model must be linear or mlp, got {self.model!r}")
        for name in ("d", "degree", "seeds", "lambda1", "lambda2", "lambdaD", "noise_scales"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be a non-empty list")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if len(self.noise_scales) != self.env_count:
            raise ValueError(f"env_count={self.env_count} but {len(self.noise_scales)} noise scales")
        if any(v <= 0 for v in self.lambdaD):
            raise ValueError("lambdaD grid values must be positive; the baseline is added automatically")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        SolverConfig(**self.solver)  # validate overrides early

    @classmethod
    def from_json(cls, path) -> "BenchConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown BenchConfig keys: {sorted(unknown)}")
        return cls(**data)

    def tasks(self) -> list[dict]:
        """One task per raw row, in a deterministic order."""
        l2_grid = self.lambda2 if self.model == "mlp" else [0.0]
        out = []
        for d, k, l1, l2, seed in itertools.product(self.d, self.degree, self.lambda1, l2_grid, self.seeds):
            base = {"graph_type": self.graph_type, "d": d, "degree": k, "model": self.model,
                    "lambda1": l1, "lambda2": l2, "seed": seed}
            out.append({**base, "method": "baseline", "lambdaD": 0.0})
            out.extend({**base, "method": "dicd", "lambdaD": lam} for lam in self.lambdaD)
        return out


def row_key(row: dict) -> tuple:
    return tuple(str(_canon(row[k])) for k in KEY_FIELDS)


def _canon(v):
    # CSV round-trips everything as text; normalize numbers so keys compare
    try:
        f = float(v)
    except (TypeError, ValueError):
        return v
    return repr(f)


def run_task(task: dict, cfg: BenchConfig) -> dict:
    row = {k: task[k] for k in KEY_FIELDS}
    try:
        ds = generate(
            cfg.graph_type, task["d"], task["degree"], cfg.noise_scales, cfg.n_per_env,
            cfg.model, task["seed"],
        )
        solver = SolverConfig(**cfg.solver)
        if cfg.model == "linear":
            res = fit_linear(ds, LinearFitConfig(
                lambda1=task["lambda1"], lambdaD=task["lambdaD"], threshold=cfg.threshold, solver=solver))
        else:
            res = fit_mlp(ds, MlpFitConfig(
                lambda1=task["lambda1"], lambda2=task["lambda2"], lambdaD=task["lambdaD"],
                hidden=tuple(cfg.hidden), threshold=cfg.threshold, init_seed=task["seed"], solver=solver))
        rep = metrics(res.binary(), ds.true_adjacency)
        row.update(rep.to_dict(), wall_time_sec=res.wall_time_sec, converged=res.converged, error="")
    except Exception as exc:  # a failing row is recorded, the sweep continues
        logger.warning("row %s failed: %s", row_key(row), exc)
        row.update(fdr="", tpr="", shd="", nnz="", wall_time_sec="", converged="",
                   error=f"{type(exc).__name__}: {exc}".replace("\n", " "))
        logger.debug(traceback.format_exc())
    return row


def read_rows(path: Path) -> list[dict]:
    if not path.is_file():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def aggregate(rows: list[dict]) -> list[dict]:
    groups: dict = {}
    for r in rows:
        groups.setdefault(tuple(str(_canon(r[k])) for k in KEY_FIELDS[:-1]), []).append(r)
    out = []
    for rs in groups.values():
        ok = [r for r in rs if not r["error"]]
        agg = {k: rs[0][k] for k in KEY_FIELDS[:-1]}
        agg.update(runs=len(ok), errors=len(rs) - len(ok))
        for m in ("fdr", "tpr", "shd"):
            vals = np.array([float(r[m]) for r in ok])
            agg[f"{m}_mean"] = float(vals.mean()) if vals.size else math.nan
            agg[f"{m}_std"] = float(vals.std()) if vals.size else math.nan
        agg["wall_time_mean"] = float(np.mean([float(r["wall_time_sec"]) for r in ok])) if ok else math.nan
        out.append(agg)
    return out


def format_aggregate(agg: list[dict]) -> str:
    lines = ["method    lambdaD  d   k  runs  FDR          TPR          SHD"]
    for a in agg:
        lines.append(
            f"{a['method']:<9} {float(a['lambdaD']):<8g} {a['d']:<3} {a['degree']:<2} {a['runs']:<5} "
            f"{a['fdr_mean']:.2f}+-{a['fdr_std']:.2f}    {a['tpr_mean']:.2f}+-{a['tpr_std']:.2f}    "
            f"{a['shd_mean']:.1f}+-{a['shd_std']:.1f}"
        )
    return "\n".join(lines)


def run_bench(cfg: BenchConfig, out_dir=None) -> tuple[list[dict], list[dict], int]:
    """Run all missing rows; returns (raw rows, aggregate rows, rows computed now)."""
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    raw_path = out / "raw.csv"
    done = {row_key(r) for r in read_rows(raw_path)}
    pending = [t for t in cfg.tasks() if row_key(t) not in done]
    new_file = not raw_path.is_file()

    # the parent process is the only writer of raw.csv
    with open(raw_path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RAW_FIELDS)
        if new_file:
            writer.writeheader()

        def emit(row):
            writer.writerow(row)
            fh.flush()
            logger.info("row done: %s shd=%s", row_key(row), row["shd"])

        if cfg.workers == 1 or len(pending) <= 1:
            for t in pending:
                emit(run_task(t, cfg))
        else:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                futures = [pool.submit(run_task, t, cfg) for t in pending]
                for fut in as_completed(futures):
                    emit(fut.result())

    rows = read_rows(raw_path)
    agg = aggregate(rows)
    with open(out / "aggregate.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=AGG_FIELDS)
        writer.writeheader()
        writer.writerows(agg)
    return rows, agg, len(pending)
