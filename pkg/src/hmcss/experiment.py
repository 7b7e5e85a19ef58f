"""Repeated-run experiments, report files and 2-D demo trajectories.

An experiment runs ``R`` independent Subset Simulation repetitions of one
(benchmark, kernel) pair.  Repetition ``i`` draws from substream ``i`` of
the master seed, so results do not depend on the number of workers.
"""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .benchmarks import REGISTRY, make_problem
from .prob_core import RandomStream
from .samplers import ChainState, SamplerConfig
from .subsim import (
    ConfigurationError,
    SubsetConfig,
    _check_kernel,
    _make_step,
    eff_metric,
    run_subset_simulation,
)

log = logging.getLogger(__name__)

CSV_HEADER = ["benchmark", "kernel", "param", "pf_mean", "cov_emp", "delta_f_mean",
              "ng_mean", "eff", "reps", "seed"]
DETAIL_HEADER = ["rep", "pf_hat", "delta_f_hat", "ng", "levels"]
DEMO_HEADER = ["step", "q1", "q2", "accepted"]
OUTPUT_DIR_ENV = "HMCSS_OUTPUT_DIR"


@dataclass
class ExperimentConfig:
    """One (benchmark, kernel) experiment.

    ``params`` go to the benchmark factory.  ``subset`` and ``sampler`` hold
    :class:`SubsetConfig` / :class:`SamplerConfig` field overrides.
    """

    benchmark: str
    kernel: str
    params: dict = field(default_factory=dict)
    subset: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    repetitions: int = 200
    seed: int = 0
    output: str = "results.csv"
    workers: int = 1

    def __post_init__(self):
        if self.benchmark not in REGISTRY:
            raise ConfigurationError(f"unknown benchmark {self.benchmark!r}; known: {sorted(REGISTRY)}")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        try:
            self.subset_config()
            self.sampler_config()
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from exc

    def subset_config(self):
        return SubsetConfig(**self.subset)

    def sampler_config(self):
        return SamplerConfig(**self.sampler)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys {sorted(extra)}")
        return cls(**d)


def load_configs(path):
    """Read a JSON experiment file.

    The file holds one experiment object.  An optional ``"sweep"`` entry maps
    a benchmark parameter to a list of values and expands into one
    experiment per value, e.g. ``{"sweep": {"beta0": [2, 3, 4, 5, 6]}}``.
    """
    with open(path) as fh:
        raw = json.load(fh)
    sweep = raw.pop("sweep", None)
    if not sweep:
        return [ExperimentConfig.from_dict(raw)]
    if len(sweep) != 1:
        raise ConfigurationError("sweep takes exactly one parameter")
    (name, values), = sweep.items()
    out = []
    for v in values:
        d = dict(raw)
        d["params"] = {**raw.get("params", {}), name: v}
        out.append(ExperimentConfig.from_dict(d))
    return out


@dataclass
class RepetitionRow:
    rep: int
    pf_hat: float
    delta_f_hat: float
    ng: int
    levels: int


@dataclass
class AggregateReport:
    benchmark: str
    kernel: str
    params: dict
    mean_pf: float
    empirical_cov: float
    mean_delta_f: float
    mean_NG: float
    eff: float
    reps: int
    seed: int
    rows: list = field(default_factory=list)

    @property
    def param_label(self):
        return ";".join(f"{k}={v}" for k, v in sorted(self.params.items()))


def _one_repetition(args):
    benchmark, params, kernel, scfg, kcfg, seed, rep = args
    problem = make_problem(benchmark, **params)
    r = run_subset_simulation(problem, kernel, scfg, kcfg, RandomStream(seed, rep))
    return RepetitionRow(rep, float(r.pf_hat), float(r.delta_f_hat), int(r.NG), r.n_levels)


def aggregate(cfg, rows):
    rows = sorted(rows, key=lambda r: r.rep)
    pf = np.array([r.pf_hat for r in rows])
    mean_pf = float(pf.mean())
    if len(pf) > 1 and mean_pf > 0:
        cov = float(pf.std(ddof=1) / mean_pf)
    else:
        cov = 0.0
    ng = float(np.mean([r.ng for r in rows]))
    return AggregateReport(
        cfg.benchmark, cfg.kernel, dict(cfg.params), mean_pf, cov,
        float(np.mean([r.delta_f_hat for r in rows])), ng, eff_metric(cov, ng),
        len(rows), cfg.seed, rows,
    )


def run_experiment(cfg: ExperimentConfig):
    """Run ``cfg.repetitions`` independent repetitions and aggregate them.

    Kernel/benchmark mismatches raise :class:`ConfigurationError` before any
    sampling happens.
    """
    problem = make_problem(cfg.benchmark, **cfg.params)
    scfg, kcfg = cfg.subset_config(), cfg.sampler_config()
    _check_kernel(problem, cfg.kernel, kcfg)
    jobs = [(cfg.benchmark, cfg.params, cfg.kernel, scfg, kcfg, cfg.seed, i)
            for i in range(cfg.repetitions)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(_one_repetition, jobs, chunksize=4))
    else:
        rows = [_one_repetition(j) for j in jobs]
    return aggregate(cfg, rows)


def resolve_output(path):
    """Prefix relative paths with ``$HMCSS_OUTPUT_DIR`` when it is set."""
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _detail_path(path):
    path = Path(path)
    return path.with_name(f"{path.stem}_reps{path.suffix}")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def emit_report(reports, path, fmt="csv"):
    """Write summary rows to ``path`` and per-repetition rows alongside.

    ``reports`` is one :class:`AggregateReport` or a list of them (one
    summary row each).  The detail file is ``<stem>_reps<suffix>`` and adds
    ``benchmark``/``kernel``/``param`` columns when several reports share it.
    Returns ``(summary_path, detail_path)``.
    """
    if isinstance(reports, AggregateReport):
        reports = [reports]
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    detail = _detail_path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            _write_csv(reports, path, detail)
        else:
            _write_jsonl(reports, path, detail)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path, detail


def _summary_values(r):
    return [r.benchmark, r.kernel, r.param_label, _fmt(r.mean_pf), _fmt(r.empirical_cov),
            _fmt(r.mean_delta_f), _fmt(r.mean_NG), _fmt(r.eff), _fmt(r.reps), _fmt(r.seed)]


def _write_csv(reports, path, detail):
    multi = len(reports) > 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in reports:
            w.writerow(_summary_values(r))
    with open(detail, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["benchmark", "kernel", "param"] if multi else []) + DETAIL_HEADER)
        for r in reports:
            head = [r.benchmark, r.kernel, r.param_label] if multi else []
            for row in r.rows:
                w.writerow(head + [_fmt(row.rep), _fmt(row.pf_hat), _fmt(row.delta_f_hat),
                                   _fmt(row.ng), _fmt(row.levels)])


def _write_jsonl(reports, path, detail):
    with open(path, "w") as fh:
        for r in reports:
            vals = _summary_values(r)
            rec = dict(zip(CSV_HEADER, vals[:3] + [json.loads(v) for v in vals[3:]]))
            fh.write(json.dumps(rec) + "\n")
    with open(detail, "w") as fh:
        for r in reports:
            for row in r.rows:
                rec = {"benchmark": r.benchmark, "kernel": r.kernel, "param": r.param_label}
                rec.update(asdict(row))
                fh.write(json.dumps(rec) + "\n")


def read_report(path):
    """Parse a summary CSV back into a list of dicts with numeric fields."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            for k in ("pf_mean", "cov_emp", "delta_f_mean", "ng_mean", "eff"):
                rec[k] = float(rec[k])
            rec["reps"] = int(rec["reps"])
            rec["seed"] = int(rec["seed"])
            out.append(rec)
    return out


# --- demo trajectories -------------------------------------------------------

DEMO_TARGETS = {
    # name: (benchmark, params, threshold, default start)
    "normal": ("linear", {"beta0": 2.0, "n": 2}, np.inf, (10.0, 10.0)),
    "halfplane": ("linear", {"beta0": 2.0, "n": 2}, 0.0, (10.0, 10.0)),
    "banana": ("banana-ellipse", {"r": 6.0}, np.inf, (4.0, 5.0)),
    "banana-ellipse": ("banana-ellipse", {"r": 6.0}, 0.0, None),
}


def _demo_problem(target, params):
    if target in DEMO_TARGETS:
        bench, base, threshold, start = DEMO_TARGETS[target]
        return make_problem(bench, **{**base, **(params or {})}), threshold, start
    if target in REGISTRY:
        return make_problem(target, **(params or {})), 0.0, None
    raise ConfigurationError(f"unknown demo target {target!r}; known: {sorted(DEMO_TARGETS)}")


def demo_trajectories(target, kernel, steps=500, seed=0, start=None, path=None,
                      params=None, **sampler):
    """Run one chain on a 2-D target and return its states.

    The ``halfplane`` target is the standard normal restricted to
    ``2 sqrt(2) - u1 - u2 <= 0``; ``normal`` and ``banana`` are unconstrained.
    Without ``start`` a constrained target starts from the first i.i.d. draw
    inside the domain.  Rows are ``(step, q1, q2, accepted)`` for steps
    ``1..steps``; when ``path`` is given they are also written as CSV.
    """
    problem, threshold, default_start = _demo_problem(target, params)
    if problem.dim != 2:
        raise ValueError(f"demo needs a 2-D target, {target!r} has dimension {problem.dim}")
    cfg = SamplerConfig(**sampler)
    _check_kernel(problem, kernel, cfg)
    rng = RandomStream(seed, 0).generator()
    if start is None:
        start = default_start
    if start is None:
        for _ in range(10_000):
            q = problem.sample(rng, 1000)
            inside = np.flatnonzero(problem.limit_state(q) <= threshold)
            if inside.size:
                start = q[inside[0]]
                break
        else:
            raise RuntimeError("no starting point found inside the domain")
    q0 = np.asarray(start, dtype=float).reshape(1, 2)
    g0 = problem.limit_state(q0)
    if g0[0] > threshold:
        raise ValueError(f"start {tuple(q0[0])} lies outside the domain")
    step = _make_step(problem, kernel)
    chain = ChainState(q0, g0)
    rows = np.empty((steps, 4))
    for i in range(steps):
        out = step(chain, threshold, cfg, rng)
        chain = out.state
        rows[i] = (i + 1, chain.position[0, 0], chain.position[0, 1], float(out.accepted[0]))
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DEMO_HEADER)
            for r in rows:
                w.writerow([int(r[0]), _fmt(r[1]), _fmt(r[2]), int(r[3])])
    return rows
