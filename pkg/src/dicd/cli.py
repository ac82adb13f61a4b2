"""Command-line interface: ``dicd gen|fit|eval|toy|bench``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, toy
from .graphs import metrics, threshold
from .linear import LinearFitConfig, fit_linear
from .nonlinear import MlpFitConfig, fit_mlp
from .simdata import DatasetLoadError, generate, load_dataset, save_dataset
from .solver import DivergenceError, SolverConfig

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _write_json(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1))


def cmd_gen(args) -> int:
    if len(args.noise) != args.envs:
        raise UsageError(f"--envs {args.envs} needs {args.envs} noise scales, got {len(args.noise)}")
    ds = generate(
        args.graph, args.d, args.degree, args.noise, args.n, args.mechanism, args.seed,
        fraction=args.fraction, env_wiring=args.env_wiring, hidden=args.hidden,
    )
    out = args.out or f"data/{args.graph}{args.degree}_d{args.d}_{args.mechanism}_s{args.seed}"
    path = save_dataset(ds, out)
    print(path)
    print(f"d={ds.d} edges={int(ds.true_adjacency.sum())} envs={len(ds.envs)} n={ds.spec.n_per_env} "
          f"mechanism={ds.mechanism} seed={ds.seed}")
    return EXIT_OK


def _solver_from(args) -> SolverConfig:
    return SolverConfig(
        inner_steps=args.inner_steps, max_outer=args.max_outer, adam_lr=args.lr, h_tol=args.h_tol,
    )


def cmd_fit(args) -> int:
    ds = load_dataset(args.data)
    solver = _solver_from(args)
    if args.model == "linear":
        cfg = LinearFitConfig(lambda1=args.lambda1, lambdaD=args.lambdad, threshold=args.threshold,
                              l1_mode=args.l1_mode, solver=solver)
        res = fit_linear(ds, cfg)
    else:
        cfg = MlpFitConfig(lambda1=args.lambda1, lambda2=args.lambda2, lambdaD=args.lambdad,
                           hidden=tuple(args.hidden), threshold=args.threshold,
                           init_seed=args.seed, solver=solver)
        res = fit_mlp(ds, cfg)
    out = args.out or str(Path(args.data) / f"result_{args.model}.json")
    _write_json(res.to_dict(seed=args.seed), out)
    if args.trace:
        Path(args.trace).write_text(res.trace.to_jsonl() + "\n")
    print(out)
    print(f"converged={res.converged} h={res.h_final:.3e} edges={int(res.binary().sum())} "
          f"time={res.wall_time_sec:.1f}s")
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    result = json.loads(Path(args.result).read_text())
    w = np.array(result["weighted_adjacency"], dtype=float)
    if w.shape != ds.true_adjacency.shape:
        raise ValueError(f"result has d={w.shape[0]} but dataset has d={ds.d}")
    omegas = args.threshold if args.threshold else [result.get("config_echo", {}).get("threshold", 0.3)]
    rows = []
    for omega in omegas:
        rep = metrics(threshold(w, omega), ds.true_adjacency)
        rows.append({"threshold": omega, **rep.to_dict()})
    payload = rows[0] if len(rows) == 1 else rows
    text = json.dumps(payload)
    print(text)
    if args.out:
        _write_json(payload, args.out)
    return EXIT_OK


def cmd_toy(args) -> int:
    checks = toy.verify_toy(args.tol) + toy.verify_confounder(args.tol)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} cells within {args.tol}")
    if args.out:
        _write_json([{
            "example": c.example, "case": c.case, "env": c.env, "loss": c.loss,
            "coefs": list(c.coefs), "expected_loss": c.expected_loss,
            "expected_coefs": list(c.expected_coefs), "passed": c.passed,
        } for c in checks], args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = bench.BenchConfig.from_json(args.config)
    if args.workers:
        cfg.workers = args.workers
    _, agg, computed = bench.run_bench(cfg, args.out)
    print(f"computed {computed} new rows; results in {args.out or cfg.output}")
    print(bench.format_aggregate(agg))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path")

    p = Parser(prog="dicd", description="Differentiable invariant causal discovery.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a multi-environment dataset")
    g.add_argument("--graph", choices=["er", "sf"], default="er")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--degree", type=int, default=4)
    g.add_argument("--envs", type=int, required=True)
    g.add_argument("--n", type=int, required=True, help="samples per environment")
    g.add_argument("--noise", type=_floats, required=True, help="comma-separated env noise scales")
    g.add_argument("--mechanism", choices=["linear", "mlp"], default="linear")
    g.add_argument("--fraction", type=float, default=None)
    g.add_argument("--env-wiring", choices=["one_to_one", "complete"], default="one_to_one")
    g.add_argument("--hidden", type=int, default=100, help="hidden width of simulated MLPs")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", parents=[common], help="fit a model to a dataset directory")
    f.add_argument("--data", required=True)
    f.add_argument("--model", choices=["linear", "mlp"], default="linear")
    f.add_argument("--lambda1", type=float, default=0.01)
    f.add_argument("--lambda2", type=float, default=0.01)
    f.add_argument("--lambdad", type=float, default=None)
    f.add_argument("--threshold", type=float, default=0.3)
    f.add_argument("--l1-mode", choices=["subgradient", "proximal"], default="subgradient")
    f.add_argument("--hidden", type=_ints, default=[10], help="hidden widths of the fitted MLPs")
    f.add_argument("--inner-steps", type=int, default=3000)
    f.add_argument("--max-outer", type=int, default=100)
    f.add_argument("--lr", type=float, default=1e-3)
    f.add_argument("--h-tol", type=float, default=1e-8)
    f.add_argument("--trace", default=None, help="write the outer-loop trace as JSON lines")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", parents=[common], help="score a fit result against the truth")
    e.add_argument("--result", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--threshold", type=_floats, default=None, help="one value or a comma-separated sweep")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("toy", parents=[common], help="verify the worked examples analytically")
    t.add_argument("--tol", type=float, default=0.02)
    t.set_defaults(func=cmd_toy)

    b = sub.add_parser("bench", parents=[common], help="run a benchmark sweep from a JSON config")
    b.add_argument("config")
    b.add_argument("--workers", type=int, default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "lambdad", "unset") is None:
        args.lambdad = 1.0 if args.model == "linear" else 0.1
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dicd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetLoadError, FileNotFoundError, ValueError, DivergenceError, np.linalg.LinAlgError) as exc:
        print(f"dicd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
