import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hmcss.benchmarks import make_linear, make_problem
from hmcss.prob_core import RandomStream
from hmcss.samplers import LimitState, SamplerConfig
from hmcss.subsim import (
    KERNELS,
    ConfigurationError,
    LevelFailure,
    SubsetConfig,
    crude_monte_carlo,
    eff_metric,
    estimate_cov,
    level_delta,
    level_gamma,
    run_subset_simulation,
    select_threshold,
    thin_initial_chain,
)


def counted(problem):
    """Copy of ``problem`` whose limit state counts evaluated rows."""
    ls = problem.limit_state
    box = {"rows": 0}

    def func(u):
        box["rows"] += u.shape[0]
        return ls.func(u)

    new = dataclasses.replace(problem, limit_state=dataclasses.replace(ls, func=func))
    return new, box


# --- threshold selection ----------------------------------------------------------

def test_select_threshold_order_statistic():
    b, seeds, final = select_threshold(np.arange(1.0, 11.0), 0.1)
    assert b == 1.0 and list(seeds) == [0] and not final


def test_select_threshold_all_failing_is_final():
    b, seeds, final = select_threshold(-np.ones(10), 0.1)
    assert final and b == 0.0 and seeds.size == 10


def test_select_threshold_ties_by_index():
    b, seeds, final = select_threshold(np.full(100, 0.5), 0.1)
    assert b == 0.5 and list(seeds) == list(range(10)) and not final


def test_select_threshold_nan_and_shortage():
    g = np.array([np.nan] * 5 + [1.0, 2.0, 3.0, 4.0, 5.0])
    b, seeds, _ = select_threshold(g, 0.1)
    assert b == 1.0 and list(seeds) == [5]
    with pytest.raises(LevelFailure):
        select_threshold(np.full(10, np.nan), 0.1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=20, max_size=20))
def test_select_threshold_seeds_below_cut(vals):
    g = np.array(vals)
    b, seeds, final = select_threshold(g, 0.1)
    assert np.all(g[seeds] <= b)
    if final:
        assert np.count_nonzero(g <= 0) >= 2 and seeds.size == np.count_nonzero(g <= 0)
    else:
        assert seeds.size == 2 and np.count_nonzero(g < b) <= 1


# --- c.o.v. estimator ---------------------------------------------------------------

def test_delta_independent_level():
    assert level_delta(0.1, 1000) == pytest.approx(np.sqrt(0.9 / 100))
    assert level_delta(0.1, 1000) == pytest.approx(0.0949, abs=5e-5)


def test_gamma_perfectly_correlated_chains():
    I = np.zeros((100, 10))
    I[:10] = 1.0
    assert level_gamma(I, 0.1) == pytest.approx(9.0)


def test_gamma_independent_chains_near_zero():
    rng = np.random.default_rng(0)
    I = (rng.random((10_000, 10)) < 0.1).astype(float)
    assert abs(level_gamma(I)) < 0.1


def test_gamma_ar1_indicator_chains():
    # two-state Markov chain: stationary P, lag-k correlation lam**k
    P, lam, Nc, Ns = 0.1, 0.6, 10_000, 10
    rng = np.random.default_rng(1)
    up, down = P * (1 - lam), (1 - P) * (1 - lam)
    I = np.empty((Nc, Ns))
    I[:, 0] = rng.random(Nc) < P
    for s in range(1, Ns):
        u = rng.random(Nc)
        I[:, s] = np.where(I[:, s - 1] == 1, u >= down, u < up)
    exact = 2 * sum((1 - k / Ns) * lam**k for k in range(1, Ns))
    assert level_gamma(I) == pytest.approx(exact, rel=0.10)


def test_degenerate_level_contributes_zero(caplog):
    assert level_delta(1.0, 1000) == 0.0
    assert "degenerate" in caplog.text


def test_estimate_cov_root_sum_of_squares():
    d, deltas, gammas = estimate_cov([0.1, 0.1, 0.35], [None, None, None], 1000)
    assert gammas == [0.0, 0.0, 0.0]
    assert d == pytest.approx(np.sqrt(2 * 0.009 + 0.65 / 350))


# --- thinning and eff -----------------------------------------------------------

def test_thin_identity_and_lag10():
    chain = np.arange(100.0)[:, None]
    np.testing.assert_array_equal(thin_initial_chain(chain, 1, 10), chain[:10])
    out = thin_initial_chain(np.arange(100.0), 10, 10)
    np.testing.assert_array_equal(out, np.arange(0, 100, 10))


def test_thin_too_short_names_length():
    with pytest.raises(ValueError, match="91"):
        thin_initial_chain(np.arange(50.0), 10, 10)


def test_eff_examples():
    assert eff_metric(0.35, 4600) == pytest.approx(23.738, abs=1e-3)
    assert eff_metric(0.0, 10) == 0.0
    assert eff_metric(0.2, 800) == pytest.approx(np.sqrt(2) * eff_metric(0.2, 400))
    with pytest.raises(ValueError):
        eff_metric(0.1, 0)


# --- configuration ---------------------------------------------------------------

@pytest.mark.parametrize("kw", [{"p0": 0.0}, {"p0": 0.3}, {"N": 1005}, {"thinning_lag": -1},
                                {"max_levels": 0}, {"initial": "lhs"}])
def test_subset_config_rejects(kw):
    with pytest.raises(ValueError):
        SubsetConfig(**kw)


def test_kernel_capability_mismatch():
    ban = make_problem("banana-ellipse", r=6)
    frame = make_problem("shear-frame")
    for prob, kernel, kcfg in ((ban, "rs_g", SamplerConfig()),
                               (frame, "bb_l", SamplerConfig(hit_solver="newton")),
                               (ban, "bb_l", SamplerConfig(hit_solver="analytic")),
                               (ban, "hmc", SamplerConfig())):
        with pytest.raises(ConfigurationError):
            run_subset_simulation(prob, kernel, SubsetConfig(), kcfg, np.random.default_rng(0))


# --- whole runs --------------------------------------------------------------------

def test_pf_exact_product_and_integer_count():
    rep = run_subset_simulation(make_linear(3.0, 20), "rs_g", SubsetConfig(), SamplerConfig(),
                                RandomStream(0))
    M = rep.n_levels
    count = rep.pf_hat * 0.1 ** -(M - 1) * 1000
    assert count == pytest.approx(round(count), abs=1e-6)
    assert rep.converged and rep.levels[-1].threshold == 0.0
    th = [lv.threshold for lv in rep.levels]
    assert all(a > b for a, b in zip(th, th[1:]))


@pytest.mark.parametrize("kernel", KERNELS)
def test_ng_reconciles_with_actual_evaluations(kernel):
    base = make_linear(2.5, 10)
    kcfg = SamplerConfig(hit_solver="analytic" if kernel == "bb_g" else "secant")
    prob, box = counted(base)
    rep = run_subset_simulation(prob, kernel, SubsetConfig(), kcfg, RandomStream(3))
    assert rep.NG == 1000 + sum(lv.g_evals for lv in rep.levels)
    assert rep.NG == box["rows"]


def test_ng_reconciles_for_secant_bouncing_and_thinning():
    prob, box = counted(make_problem("banana-ellipse", r=6))
    rep = run_subset_simulation(prob, "bb_l", SubsetConfig(thinning_lag=2), SamplerConfig(),
                                RandomStream(4))
    assert rep.NG == box["rows"] == 1000 + sum(lv.g_evals for lv in rep.levels)


def test_max_levels_not_converged():
    rep = run_subset_simulation(make_linear(5.0, 10), "rs_g", SubsetConfig(max_levels=2),
                                SamplerConfig(), RandomStream(5))
    assert not rep.converged
    assert rep.n_levels == 3


def test_reproducible_from_stream():
    a = run_subset_simulation(make_linear(3.0, 10), "bb_g", SubsetConfig(), SamplerConfig(),
                              RandomStream(9, 2))
    b = run_subset_simulation(make_linear(3.0, 10), "bb_g", SubsetConfig(), SamplerConfig(),
                              RandomStream(9, 2))
    assert a.pf_hat == b.pf_hat and a.NG == b.NG


def test_level0_unbiased():
    # P(G <= 0) = Phi(-0.5) > p0: the run stops after level 0, so pf_hat is a
    # plain sample fraction
    prob = make_linear(0.5, 2)
    pf = [run_subset_simulation(prob, "rs_g", SubsetConfig(), SamplerConfig(), RandomStream(11, i)).pf_hat
          for i in range(200)]
    exact = stats.norm.cdf(-0.5)
    se = np.sqrt(exact * (1 - exact) / (1000 * 200))
    assert abs(np.mean(pf) - exact) <= 3 * se


def test_record_chains_final_level():
    rep = run_subset_simulation(make_linear(2.0, 5), "rs_g", SubsetConfig(), SamplerConfig(),
                                RandomStream(12), record_chains=True)
    q, g = rep.samples
    assert q.shape == (1000, 5) and g.shape == (1000,)


def test_crude_monte_carlo_linear():
    pf, se, fails = crude_monte_carlo(make_linear(1.0, 3), 200_000, np.random.default_rng(0), batch=50_000)
    assert fails == round(pf * 200_000)
    assert abs(pf - stats.norm.cdf(-1.0)) <= 3 * se
