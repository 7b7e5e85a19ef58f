"""Command-line entry point: ``hmcss run | demo | bench-list``.

Exit status: 0 success, 2 usage error, 3 configuration error, 4 estimation
failure at run time, 5 I/O error.
"""

import argparse
import json
import logging
import sys

import numpy as np

from .benchmarks import REGISTRY, make_problem
from .experiment import DEMO_TARGETS, demo_trajectories, emit_report, load_configs, resolve_output, run_experiment
from .subsim import KERNELS, ConfigurationError, LevelFailure

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_RUNTIME = 4
EXIT_IO = 5


def _parser():
    ap = argparse.ArgumentParser(prog="hmcss", description="Subset Simulation with HMC kernels")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment file (JSON)")
    run.add_argument("config")
    run.add_argument("--reps", type=int, help="override repetitions")
    run.add_argument("--seed", type=int, help="override master seed")
    run.add_argument("--out", help="override output path")
    run.add_argument("--workers", type=int, help="worker processes")
    run.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    demo = sub.add_parser("demo", help="emit a 2-D chain trajectory")
    demo.add_argument("target", help=f"one of {sorted(DEMO_TARGETS)} or a 2-D benchmark")
    demo.add_argument("kernel", choices=KERNELS)
    demo.add_argument("--steps", type=int, default=500)
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--start", type=float, nargs=2, metavar=("Q1", "Q2"))
    demo.add_argument("--t-f", type=float, default=np.pi / 3)
    demo.add_argument("--alpha", type=float, default=0.0)
    demo.add_argument("--dt", type=float, default=0.05)
    demo.add_argument("--hit-solver", default="secant")
    demo.add_argument("--mh-width", type=float, default=2.0)
    demo.add_argument("--out", default="demo.csv")

    sub.add_parser("bench-list", help="list registered benchmarks")
    return ap


def _run(args):
    configs = load_configs(args.config)
    reports = []
    for cfg in configs:
        if args.reps is not None:
            cfg.repetitions = args.reps
        if args.seed is not None:
            cfg.seed = args.seed
        if args.workers is not None:
            cfg.workers = args.workers
        if args.reps is not None and args.reps < 1:
            raise ConfigurationError("repetitions must be >= 1")
        rep = run_experiment(cfg)
        print(f"{cfg.benchmark} {cfg.kernel} {rep.param_label}: pf={rep.mean_pf:.4g} "
              f"cov={rep.empirical_cov:.3f} NG={rep.mean_NG:.0f} eff={rep.eff:.2f}")
        reports.append(rep)
    out = resolve_output(args.out or configs[0].output)
    summary, detail = emit_report(reports, out, args.format)
    print(f"wrote {summary} and {detail}")


def _demo(args):
    out = resolve_output(args.out)
    rows = demo_trajectories(
        args.target, args.kernel, steps=args.steps, seed=args.seed, start=args.start,
        path=out, t_f=args.t_f, alpha=args.alpha, dt=args.dt,
        hit_solver=args.hit_solver, mh_width=args.mh_width,
    )
    acc = rows[:, 3].mean() if len(rows) else float("nan")
    print(f"wrote {len(rows)} steps to {out} (acceptance {acc:.3f})")


def _bench_list(_args):
    for name in sorted(REGISTRY):
        p = make_problem(name)
        space = "standard normal" if p.gaussian else "original space"
        ref = "-" if p.reference is None else f"{p.reference:.3g}"
        print(f"{name:16s} dim={p.dim:<4d} {space:16s} reference={ref} defaults={json.dumps(p.params)}")


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _run, "demo": _demo, "bench-list": _bench_list}[args.command]
    try:
        handler(args)
    except (ConfigurationError, ValueError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (LevelFailure, RuntimeError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
