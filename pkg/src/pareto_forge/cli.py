"""``pareto-forge`` command-line interface.

Subcommands::

    solve    one preference vector (model training or analytic solve)
    sweep    a preference sweep with a Pareto archive, front CSV and report
    filter   epsilon-nondominance filter over a points CSV
    metrics  SR, CR and PS of a checkpoint
    report   front report over a sweep archive

Exit status: 0 success, 2 usage or configuration error (including missing
or malformed inputs), 3 numeric failure, 4 other I/O failure. Every command
validates its configuration and inputs before writing anything, and every
artifact is written atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint, to_bytes
from .config import MODEL, ConfigError, SolveConfig, SweepConfig, apply_overrides, read_json
from .errors import DomainError, NumericError
from .moo import ParetoArchive, eps_nondominance_filter, read_points_csv

log = logging.getLogger("pareto_forge")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _json_bytes(obj):
    return (json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n").encode("utf-8")


def _write_atomic(path, data: bytes):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _emit(out_dir, artifacts):
    """Write ``{file name: bytes}`` into ``out_dir`` (created if needed)."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, data in artifacts.items():
        path = os.path.join(out_dir, name)
        _write_atomic(path, data)
        paths.append(path)
    return paths


def _portable(cfg):
    """Config record embedded in artifacts, minus the output location and
    worker count so that the bytes depend only on the computation."""
    d = cfg.to_json()
    d.pop("out_dir", None)
    d.pop("jobs", None)
    return d


def _require_file(path, what):
    if not os.path.isfile(path):
        raise ConfigError(f"{what} {path!r} does not exist")


def _load_config(args, cls, sweep=False):
    _require_file(args.config, "config file")
    raw = read_json(args.config)
    flags = {"seed": args.seed, "out_dir": args.out_dir}
    if sweep:
        flags.update(epsilon=args.epsilon, jobs=args.jobs, sweep=True)
    return cls.from_json(apply_overrides(raw, **flags))


# ------------------------------------------------------------------- solve


def _solve_model(cfg: SolveConfig):
    from .bench.dataset import make_dataset
    from .net import MultiTaskNet
    from .trainer import train

    data = make_dataset(cfg.dataset)
    net = MultiTaskNet(cfg.net)
    result = train(net, data, cfg.train, cfg.scalarization())
    metrics = {
        "problem": MODEL,
        "preference": list(cfg.preference),
        "seed": cfg.seed,
        "objectives": [float(v) for v in result.objectives],
        "metrics": result.metrics.to_json(),
        "phase1_saved": bool(result.phase1_saved),
        "clusters": {name: len(a.exemplars) for name, a in sorted(result.clusters.items())},
    }
    extra = {"config": _portable(cfg),
             "clusters": {name: a.to_json() for name, a in sorted(result.clusters.items())}}
    return {
        "metrics.json": _json_bytes(metrics),
        "model.ckpt": to_bytes(cfg.net, result.params, result.metrics.to_json(), extra),
        "run_log.csv": result.log.to_csv().encode("utf-8"),
    }


def _solve_analytic(cfg: SolveConfig):
    from .bench.problems import get_problem
    from .bench.solvers import solve_chebyshev

    prob = get_problem(cfg.problem, **cfg.analytic.problem_kwargs)
    scal = cfg.scalarization()
    res = solve_chebyshev(prob, scal.preference, scal.reference, eps=cfg.epsilon_disturbance,
                          seed=cfg.seed, **cfg.analytic.solver_kwargs())
    f = prob.true_objectives(res.x) if hasattr(prob, "true_objectives") else res.objectives
    if not (np.all(np.isfinite(res.z)) and np.isfinite(res.t)):
        raise NumericError("analytic solve produced a non-finite result")
    metrics = {
        "problem": cfg.problem,
        "preference": list(cfg.preference),
        "reference": [float(v) for v in scal.reference],
        "seed": cfg.seed,
        "x": [float(v) for v in res.x],
        "objectives": [float(v) for v in f],
        "t": float(res.t),
        "max_H": float(np.max(res.H)),
        "lambda": [float(v) for v in res.lam],
        "converged": bool(res.converged),
        "outer_iterations": int(res.outer_iterations),
    }
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    m = len(scal.preference)
    w.writerow(["iteration", "t", "max_H", "mu"] + [f"L{i}" for i in range(m)])
    for h in res.history:
        w.writerow([h["iteration"], repr(h["t"]), repr(h["max_H"]), repr(h["mu"])]
                   + [repr(v) for v in h["objectives"]])
    return {
        "metrics.json": _json_bytes(metrics),
        "solution.json": _json_bytes({"z": [float(v) for v in res.z], "t": float(res.t),
                                      "config": _portable(cfg)}),
        "run_log.csv": buf.getvalue().encode("utf-8"),
    }


def cmd_solve(args):
    cfg = _load_config(args, SolveConfig)
    artifacts = _solve_model(cfg) if cfg.problem == MODEL else _solve_analytic(cfg)
    for path in _emit(cfg.out_dir, artifacts):
        print(path)
    return EXIT_OK


# ------------------------------------------------------------------- sweep


def _sweep_job(cfg: SweepConfig, runs_dir):
    from .bench.sweep import AnalyticJob, ModelJob

    if cfg.problem == MODEL:
        return ModelJob(cfg.dataset, cfg.net, cfg.train, runs_dir)
    return AnalyticJob(cfg.problem, cfg.method, cfg.budget, cfg.plan.reference,
                       cfg.plan.epsilon_disturbance,
                       tuple(sorted(cfg.analytic.problem_kwargs.items())),
                       tuple(sorted(cfg.analytic.solver_kwargs().items()))
                       if cfg.method == "chebyshev" else ())


def _report_artifacts(archive, problem, problem_kwargs, n_bins=10):
    from .bench.problems import CATALOGUE, get_problem
    from .bench.report import front_report

    prob = get_problem(problem, **problem_kwargs) if problem in CATALOGUE else None
    rep = front_report(archive, prob, n_bins)
    return {"front.csv": rep.to_csv().encode("utf-8"),
            "report.md": rep.to_markdown().encode("utf-8")}


def cmd_sweep(args):
    from .bench.sweep import sweep

    cfg = _load_config(args, SweepConfig, sweep=True)
    runs_dir = os.path.join(cfg.out_dir, "runs")
    os.makedirs(runs_dir if cfg.problem == MODEL else cfg.out_dir, exist_ok=True)
    manifest = os.path.join(cfg.out_dir, "manifest.json")
    result = sweep(cfg.plan, _sweep_job(cfg, runs_dir), jobs=cfg.jobs, manifest=manifest,
                   context=_portable(cfg))
    if not result.archive.candidates:
        raise NumericError(f"all {len(result.records)} sweep runs failed")
    archive = {**result.archive.to_json(), "problem": cfg.problem,
               "problem_kwargs": cfg.analytic.problem_kwargs, "config": _portable(cfg)}
    artifacts = {"archive.json": _json_bytes(archive)}
    artifacts.update(_report_artifacts(result.archive, cfg.problem, cfg.analytic.problem_kwargs))
    for path in _emit(cfg.out_dir, artifacts):
        print(path)
    print(f"{len(result.records)} runs, {len(result.failures)} failed, "
          f"{len(result.archive)} archive entries", file=sys.stderr)
    return EXIT_OK


# ------------------------------------------------------------------ filter


def cmd_filter(args):
    _require_file(args.points, "points file")
    eps = 0.0 if args.epsilon is None else args.epsilon
    if not eps >= 0:
        raise ConfigError(f"--epsilon must be >= 0, got {eps}")
    pts = read_points_csv(args.points)
    kept = eps_nondominance_filter(pts, eps)
    buf = io.StringIO()
    buf.write(",".join(f"f{j}" for j in range(pts.shape[1])) + "\n")
    for row in pts[kept]:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    text = buf.getvalue()
    if args.out_dir:
        for path in _emit(args.out_dir, {"filtered.csv": text.encode("utf-8")}):
            print(path)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ----------------------------------------------------------------- metrics


def cmd_metrics(args):
    from .trainer import compute_metrics

    _require_file(args.checkpoint, "checkpoint")
    spec, params, header = load_checkpoint(args.checkpoint)
    stored = header.get("metrics") or {}
    rec = compute_metrics(params, stored.get("task_accuracy") or ())
    out = rec.to_json()
    payload = _json_bytes(out)
    if args.out_dir:
        for path in _emit(args.out_dir, {"metrics.json": payload}):
            print(path)
    else:
        sys.stdout.write(payload.decode("utf-8"))
    return EXIT_OK


# ------------------------------------------------------------------ report


def cmd_report(args):
    path = args.archive
    if os.path.isdir(path):
        path = os.path.join(path, "archive.json")
    _require_file(path, "archive")
    data = read_json(path)
    try:
        archive = ParetoArchive.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not an archive file ({exc})") from exc
    if not archive.candidates:
        raise ConfigError(f"{path}: archive is empty")
    problem = args.problem or data.get("problem", MODEL)
    artifacts = _report_artifacts(archive, problem, data.get("problem_kwargs") or {}, args.bins)
    if args.out_dir:
        for p in _emit(args.out_dir, artifacts):
            print(p)
    else:
        sys.stdout.write(artifacts["report.md"].decode("utf-8"))
    return EXIT_OK


# -------------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(prog="pareto-forge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one preference vector")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--out-dir", help="override the output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run a preference sweep")
    p.add_argument("--config", required=True, help="JSON sweep configuration")
    p.add_argument("--seed", type=int, help="override the plan seed")
    p.add_argument("--epsilon", type=float, help="archive epsilon (0 = exact nondominance)")
    p.add_argument("--out-dir", help="override the output directory")
    p.add_argument("--jobs", type=int, help="worker processes (default PARETO_FORGE_JOBS or 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("filter", help="epsilon-nondominance filter over a points CSV")
    p.add_argument("points", help="CSV with header f0,f1,...")
    p.add_argument("--epsilon", type=float, help="tolerance (default 0)")
    p.add_argument("--out-dir", help="write filtered.csv here instead of stdout")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("metrics", help="SR, CR and PS of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--out-dir", help="write metrics.json here instead of stdout")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("report", help="front report over a sweep archive")
    p.add_argument("archive", help="archive.json or a sweep output directory")
    p.add_argument("--problem", help="analytic problem for the generational distance")
    p.add_argument("--bins", type=int, default=10, help="sparsity-rate bins (default 10)")
    p.add_argument("--out-dir", help="write report.md and front.csv here instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
