"""Subset Simulation driver and its estimators."""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import PhaseState
from .prob_core import RandomStream
from .samplers import (
    ChainState,
    LimitState,
    SamplerConfig,
    adapt_tf,
    bb_hmc_step_gaussian,
    bb_hmc_step_generic,
    block_mh_step,
    cwmh_step,
    estimate_mean_period,
    rs_hmc_step_gaussian,
    rs_hmc_step_generic,
)

log = logging.getLogger(__name__)

KERNELS = ("rs_g", "bb_g", "rs_l", "bb_l", "cwmh", "block_mh")
HMC_KERNELS = ("rs_g", "bb_g", "rs_l", "bb_l")


class ConfigurationError(ValueError):
    """Kernel, problem and settings are incompatible."""


class LevelFailure(RuntimeError):
    """A level produced too few usable limit-state values."""


@dataclass(frozen=True)
class SubsetConfig:
    """Subset Simulation settings.

    ``thinning_lag`` switches the level-0 population from i.i.d. draws to a
    single HMC chain thinned every ``k`` states (``k = 0`` keeps consecutive
    states).  ``initial`` selects ``"iid"`` or ``"mcmc"`` explicitly.
    """

    N: int = 1000
    p0: float = 0.1
    max_levels: int = 20
    repetitions: int = 1
    thinning_lag: int = 0
    initial: str = "iid"

    def __post_init__(self):
        if not 0 < self.p0 < 1:
            raise ValueError("p0 must lie in (0, 1)")
        nc = self.N * self.p0
        if abs(nc - round(nc)) > 1e-9 or round(nc) < 1:
            raise ValueError("N * p0 must be a positive integer")
        inv = 1.0 / self.p0
        if abs(inv - round(inv)) > 1e-9:
            raise ValueError("1 / p0 must be an integer")
        if self.thinning_lag < 0 or self.max_levels < 1 or self.repetitions < 1:
            raise ValueError("thinning_lag >= 0, max_levels >= 1 and repetitions >= 1 required")
        if self.initial not in ("iid", "mcmc"):
            raise ValueError("initial must be 'iid' or 'mcmc'")

    @property
    def n_chains(self):
        return int(round(self.N * self.p0))

    @property
    def chain_length(self):
        return int(round(1.0 / self.p0))


@dataclass
class SubsetLevelRecord:
    level: int
    threshold: float
    P: float
    acceptance_rate: float = float("nan")
    t_f_used: float = float("nan")
    gamma: float = 0.0
    delta: float = 0.0
    g_evals: int = 0


@dataclass
class RunReport:
    pf_hat: float
    delta_f_hat: float
    NG: int
    levels: list = field(default_factory=list)
    eff: float = float("nan")
    converged: bool = True
    n_initial: int = 0

    @property
    def n_levels(self):
        return len(self.levels)


# --- estimators ------------------------------------------------------------

def select_threshold(g_values, p0):
    """Order-statistic threshold and seed indices.

    Returns ``(threshold, seeds, final)``.  ``threshold`` is the
    ``N p0``-th smallest value; seeds are the ``N p0`` smallest values with
    ties broken by index.  A non-positive threshold is clamped to 0 and
    flags the final level, whose seeds are then all failing samples.
    """
    g = np.asarray(g_values, dtype=float)
    N = g.size
    nc = int(round(N * p0))
    if np.count_nonzero(~np.isnan(g)) < nc:
        raise LevelFailure(f"only {np.count_nonzero(~np.isnan(g))} usable values, need {nc}")
    key = np.where(np.isnan(g), np.inf, g)
    order = np.argsort(key, kind="stable")
    b = key[order[nc - 1]]
    if b <= 0:
        return 0.0, np.flatnonzero(key <= 0), True
    return float(b), order[:nc], False


def level_gamma(indicators, P=None):
    """Chain-correlation factor from indicator chains of shape ``(Nc, Ns)``.

    ``gamma = 2 sum_k (1 - k / Ns) rho(k)`` with ``rho(k)`` the lag-``k``
    autocovariance averaged over chains and normalized by ``P (1 - P)``.
    """
    I = np.asarray(indicators, dtype=float)
    Nc, Ns = I.shape
    if P is None:
        P = I.mean()
    var = P * (1.0 - P)
    if var <= 0 or Ns < 2:
        return 0.0
    N = Nc * Ns
    gamma = 0.0
    for k in range(1, Ns):
        R = np.sum(I[:, : Ns - k] * I[:, k:]) / (N - k * Nc) - P * P
        gamma += (1.0 - k / Ns) * R / var
    return 2.0 * gamma


def level_delta(P, N, gamma=0.0):
    """Coefficient of variation of one conditional probability estimate."""
    if P <= 0 or P >= 1:
        if P in (0.0, 1.0):
            log.warning("degenerate level with P = %s contributes zero c.o.v.", P)
        return 0.0
    return float(np.sqrt((1.0 - P) / (N * P) * (1.0 + gamma)))


def estimate_cov(probs, indicator_chains, N):
    """Total c.o.v.: root sum of squares of per-level ``delta_j``.

    ``indicator_chains[j]`` is the ``(Nc, Ns)`` indicator array of level
    ``j`` or ``None`` for independent samples.  Returns
    ``(delta_f, deltas, gammas)``.
    """
    deltas, gammas = [], []
    for P, ind in zip(probs, indicator_chains):
        gam = 0.0 if ind is None else level_gamma(ind, P)
        gammas.append(gam)
        deltas.append(level_delta(P, N, gam))
    return float(np.sqrt(np.sum(np.square(deltas)))), deltas, gammas


def eff_metric(cov, NG):
    if NG <= 0:
        raise ValueError("NG must be positive")
    return float(cov * np.sqrt(NG))


def thin_initial_chain(chain_samples, k, N):
    """Keep every ``k``-th state (``k <= 1`` keeps consecutive states)."""
    step = max(int(k), 1)
    chain_samples = np.asarray(chain_samples)
    need = step * (N - 1) + 1
    if chain_samples.shape[0] < need:
        raise ValueError(f"chain of length {chain_samples.shape[0]} too short; need at least {need}")
    return chain_samples[: step * N : step][:N]


def crude_monte_carlo(problem, n, rng, batch=100_000):
    """Crude Monte Carlo: returns ``(pf, standard_error, n_fail)``."""
    fails = 0
    done = 0
    while done < n:
        m = min(batch, n - done)
        fails += int(np.count_nonzero(problem.limit_state(problem.sample(rng, m)) <= 0))
        done += m
    pf = fails / n
    return pf, float(np.sqrt(pf * (1 - pf) / n)), fails


# --- kernels ---------------------------------------------------------------

def _check_kernel(problem, kernel, kcfg):
    if kernel not in KERNELS:
        raise ConfigurationError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
    if kernel in ("rs_g", "bb_g") and not problem.gaussian:
        raise ConfigurationError(f"kernel {kernel} needs a standard-normal problem")
    if kernel in ("rs_l", "bb_l") and not problem.system.target.has_gradient:
        raise ConfigurationError(f"kernel {kernel} needs a target gradient")
    if kernel.startswith("bb"):
        if kcfg.hit_solver == "newton" and not problem.limit_state.has_gradient:
            raise ConfigurationError("Newton hitting time needs a limit-state gradient")
        if kcfg.hit_solver == "analytic" and (kernel != "bb_g" or problem.limit_state.linear is None):
            raise ConfigurationError("analytic hitting time needs bb_g on a linear limit state")


def _make_step(problem, kernel):
    ls = problem.limit_state
    system = problem.system
    if kernel == "rs_g":
        return lambda c, b, cfg, rng: rs_hmc_step_gaussian(c, ls, b, cfg, rng)
    if kernel == "bb_g":
        return lambda c, b, cfg, rng: bb_hmc_step_gaussian(c, ls, b, cfg, rng, cfg.hit_solver)
    if kernel == "rs_l":
        return lambda c, b, cfg, rng: rs_hmc_step_generic(c, system, ls, b, cfg, rng)
    if kernel == "bb_l":
        return lambda c, b, cfg, rng: bb_hmc_step_generic(c, system, ls, b, cfg, rng, cfg.hit_solver)
    if kernel == "cwmh":
        target = None if problem.gaussian else system.target
        return lambda c, b, cfg, rng: cwmh_step(c, ls, b, cfg, rng, target=target)
    return lambda c, b, cfg, rng: block_mh_step(c, system.target, ls, b, cfg, rng)


def _period(problem, q, rng, dt):
    """Mean orbital period estimated at positions ``q`` with fresh momenta."""
    p = problem.system.mass.sample(rng, q.shape)
    T, excluded = estimate_mean_period(problem.system, PhaseState(q, p), dt)
    if excluded:
        log.debug("period estimate excluded %d states", excluded)
    return T


def initial_population(problem, scfg, kcfg, rng):
    """Level-0 positions: i.i.d. draws or a thinned single HMC chain.

    The chain starts from one unconditional draw and runs leapfrog HMC with
    the trajectory duration set to a quarter of the mean period at the start.
    No limit-state evaluations happen here.
    """
    N = scfg.N
    if scfg.initial == "iid" and scfg.thinning_lag == 0:
        return problem.sample(rng, N), False
    step = max(scfg.thinning_lag, 1)
    total = step * (N - 1) + 1
    q = problem.sample(rng, 1)
    if problem.gaussian:
        t_f = kcfg.t_f
    else:
        starts = np.repeat(q, 20, axis=0)
        # a quarter period decorrelates far faster than the T/8 used to start
        # the conditional levels; level 0 has no acceptance signal to adapt on
        t_f = _period(problem, starts, rng, kcfg.dt) / 4
    cfg = kcfg.with_tf(t_f)
    free = LimitState(lambda x: np.zeros(x.shape[0]), label="unconstrained")
    chain = ChainState(q, np.zeros(1))
    out = np.empty((total, problem.dim))
    out[0] = q[0]
    for i in range(1, total):
        if problem.gaussian:
            res = rs_hmc_step_gaussian(chain, free, np.inf, cfg, rng)
        else:
            res = rs_hmc_step_generic(chain, problem.system, free, np.inf, cfg, rng)
        chain = res.state
        out[i] = chain.position[0]
    return thin_initial_chain(out, step, N), True


def run_subset_simulation(problem, kernel, scfg: SubsetConfig, kcfg: SamplerConfig,
                          stream, record_chains=False):
    """One Subset Simulation run.

    Parameters
    ----------
    problem : benchmarks.ReliabilityProblem
    kernel : str
        One of ``rs_g``, ``bb_g``, ``rs_l``, ``bb_l``, ``cwmh``, ``block_mh``.
    scfg : SubsetConfig
    kcfg : SamplerConfig
        Kernel settings.  ``t_f`` is the starting duration in Gaussian space;
        general-space kernels start from an eighth of the estimated period.
    stream : RandomStream or numpy.random.Generator
    record_chains : bool
        Keep the final-level samples on the report (``report.samples``).
    """
    _check_kernel(problem, kernel, kcfg)
    rng = stream.generator() if isinstance(stream, RandomStream) else stream
    step_fn = _make_step(problem, kernel)
    N, p0 = scfg.N, scfg.p0
    nc, ns = scfg.n_chains, scfg.chain_length
    ls = problem.limit_state
    hmc = kernel in HMC_KERNELS
    mode = "bb" if kernel.startswith("bb") else "rs"
    generic = kernel in ("rs_l", "bb_l")

    q, correlated0 = initial_population(problem, scfg, kcfg, rng)
    g = ls(q)
    NG = N
    if generic:
        period = _period(problem, q[: min(N, 100)], rng, kcfg.dt)
        t_f = period / 8
    else:
        period = 2.0 * np.pi
        t_f = kcfg.t_f
    cfg = kcfg.with_tf(t_f)

    levels = []
    chains_g = None  # (nc, ns) limit-state values of the previous level's chains
    indicator_chains, probs = [], []
    converged = False
    b_prev = np.inf
    for j in range(1, scfg.max_levels + 1):
        b, seeds, final = select_threshold(g, p0)
        cut = 0.0 if final else b
        if final:
            P = float(np.count_nonzero(g <= 0)) / N
        else:
            P = p0
        probs.append(P)
        indicator_chains.append(None if chains_g is None else chains_g <= cut)
        if final:
            levels.append(SubsetLevelRecord(j, 0.0, P))
            converged = True
            break
        if b >= b_prev:
            log.warning("threshold did not decrease at level %d (%.6g >= %.6g)", j, b, b_prev)
        b_prev = b
        rec = SubsetLevelRecord(j, b, P)

        # seeds come sorted by G; shuffling keeps the adapted t_f of a batch
        # independent of where its seeds sit in the failure domain
        seeds = rng.permutation(seeds)
        seed_q, seed_g = q[seeds], g[seeds]
        new_q = np.empty((nc, ns, problem.dim))
        new_g = np.empty((nc, ns))
        new_q[:, 0], new_g[:, 0] = seed_q, seed_g
        n_acc = n_prop = lvl_evals = 0
        tfs = []
        for start in range(0, nc, cfg.N_a):
            rows = slice(start, min(start + cfg.N_a, nc))
            chain = ChainState(seed_q[rows], seed_g[rows])
            tfs.append(cfg.t_f)
            acc = 0
            for s in range(1, ns):
                out = step_fn(chain, b, cfg, rng)
                chain = out.state
                new_q[rows, s], new_g[rows, s] = chain.position, chain.g_value
                acc += int(np.count_nonzero(out.accepted))
                lvl_evals += out.total_g_evals
            n_batch = chain.size * (ns - 1)
            n_acc += acc
            n_prop += n_batch
            if hmc and cfg.adapt:
                if generic:
                    # period from the batch's end states only: choosing the
                    # kernel from the seeds it is about to move would bias
                    # the conditional samples
                    try:
                        period = _period(problem, chain.position, rng, cfg.dt)
                    except RuntimeError:
                        pass
                cfg = cfg.with_tf(adapt_tf(cfg.t_f, acc / n_batch, period, cfg, mode))
        rec.acceptance_rate = n_acc / n_prop if n_prop else float("nan")
        rec.t_f_used = float(np.mean(tfs))
        rec.g_evals = lvl_evals
        NG += lvl_evals
        levels.append(rec)
        chains_g = new_g
        q = new_q.reshape(N, problem.dim)
        g = new_g.reshape(N)

    if not converged:
        # ran out of levels: report the partial product with the failures seen so far
        P = float(np.count_nonzero(g <= 0)) / N
        probs.append(P)
        indicator_chains.append(chains_g <= 0 if chains_g is not None else None)
        levels.append(SubsetLevelRecord(len(levels) + 1, 0.0, P))

    if correlated0:
        log.debug("level-0 population from an MCMC chain; its c.o.v. term assumes independence")
    delta_f, deltas, gammas = estimate_cov(probs, indicator_chains, N)
    for rec, d, gam in zip(levels, deltas, gammas):
        rec.delta, rec.gamma = d, gam
    M = len(levels)
    pf = p0 ** (M - 1) * probs[-1]
    report = RunReport(pf, delta_f, NG, levels, eff_metric(delta_f, NG), converged, N)
    if record_chains:
        report.samples = (q, g)
    return report
