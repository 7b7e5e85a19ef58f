"""HMC transition kernels for conditional sampling given ``G <= threshold``.

Every kernel advances a batch of chains by one step and reports per-row
acceptance and limit-state evaluation counts.  Rejected rows keep their
position.  For partial refreshment a rejected row stores the negated initial
momentum, so that ``alpha = 1`` retraces the orbit instead of freezing.
"""

import numpy as np

from ..dynamics import (
    HamiltonianSystem,
    MassMatrix,
    PhaseState,
    analytic_flow,
    hamiltonian,
    integrate_to,
    leapfrog,
    n_leapfrog_steps,
    reflect_momentum,
)
from .base import ChainState, _check_seeds, _outcome, draw_momentum
from .hitting import linear_hit_times, newton_core, secant_core

HIT_SOLVERS = ("secant", "newton", "analytic")


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _finish(chain, q_new, g_new, p_end, p_init, accept, g_evals, bounced=None, diverged=None):
    pos = np.where(accept[:, None], q_new, chain.position)
    g = np.where(accept, g_new, chain.g_value)
    p_keep = np.where(accept[:, None], p_end, -p_init)
    return _outcome(ChainState(pos, g, p_keep), accept, g_evals, bounced, diverged)


def rs_hmc_step_gaussian(chain, limit_state, threshold, cfg, rng, p_rand=None):
    """Rejection-sampling HMC step in standard-normal space (exact flow)."""
    _check_seeds(chain, threshold)
    m = chain.size
    p0 = draw_momentum(rng, MassMatrix.identity(chain.position.shape[1]), cfg.alpha,
                       chain.last_momentum, size=m, p_rand=p_rand)
    end = analytic_flow(PhaseState(chain.position, p0), cfg.t_f)
    g = limit_state(end.q)
    accept = g <= threshold
    return _finish(chain, end.q, g, end.p, p0, accept, np.ones(m))


def _bounce_normal(kind, limit_state, u_b, p_b, res, sel):
    if kind == "secant":
        v = res.aux_last[sel] - res.aux_prev[sel]
        norm = np.linalg.norm(v, axis=1, keepdims=True)
        # degenerate secant pair: fall back to reversing along the momentum
        v = np.where(norm > 0, v / np.where(norm > 0, norm, 1.0), _unit(p_b))
        flip = np.sum(p_b * v, axis=1) > 0
        v[flip] *= -1.0
        return v
    return _unit(limit_state.grad(u_b))


def bb_hmc_step_gaussian(chain, limit_state, threshold, cfg, rng, hit_solver="secant", p_rand=None):
    """Barrier-bouncing HMC step in standard-normal space.

    At most one reflection per step.  ``hit_solver`` is ``"secant"``
    (gradient-free, secant-direction normal), ``"newton"`` or
    ``"analytic"`` (linear limit states only).
    """
    if hit_solver not in HIT_SOLVERS:
        raise ValueError(f"unknown hit solver {hit_solver!r}")
    _check_seeds(chain, threshold)
    u0 = chain.position
    m, n = u0.shape
    p0 = draw_momentum(rng, MassMatrix.identity(n), cfg.alpha, chain.last_momentum,
                       size=m, p_rand=p_rand)
    start = PhaseState(u0, p0)
    t_f = cfg.t_f

    if hit_solver == "analytic":
        if limit_state.linear is None:
            raise ValueError("analytic hitting time needs a linear limit state")
        t_h = linear_hit_times(limit_state.linear, threshold, u0, p0, t_f)
        hit = ~np.isnan(t_h)
        end = analytic_flow(start, t_f)
        q_fin, p_fin = end.q.copy(), end.p.copy()
        if np.any(hit):
            b = analytic_flow(PhaseState(u0[hit], p0[hit]), t_h[hit])
            w = np.broadcast_to(limit_state.linear[1], b.q.shape)
            p_a = reflect_momentum(b.p, _unit(w))
            after = analytic_flow(PhaseState(b.q, p_a), t_f - t_h[hit])
            q_fin[hit], p_fin[hit] = after.q, after.p
        g = limit_state(q_fin)
        accept = g <= threshold
        return _finish(chain, q_fin, g, p_fin, p0, accept, np.ones(m), bounced=hit)

    end = analytic_flow(start, t_f)
    g1 = limit_state(end.q)
    evals = np.ones(m, dtype=np.int64)
    accept = g1 <= threshold
    q_fin, p_fin, g_fin = end.q.copy(), end.p.copy(), g1.copy()
    bounced = np.zeros(m, dtype=bool)
    out = np.flatnonzero(~accept)
    if out.size:
        u_o, p_o = u0[out], p0[out]

        if hit_solver == "secant":
            def evaluate(t, idx):
                s = analytic_flow(PhaseState(u_o[idx], p_o[idx]), t)
                return limit_state(s.q) - threshold, s.q

            res = secant_core(evaluate, np.full(out.size, t_f), chain.g_value[out] - threshold,
                              g1[out] - threshold, cfg.toll, cfg.max_iter,
                              aux0=u_o, aux1=end.q[out])
        else:
            def evaluate(t, idx):
                s = analytic_flow(PhaseState(u_o[idx], p_o[idx]), t)
                dh = np.sum(limit_state.grad(s.q) * s.p, axis=1)
                return limit_state(s.q) - threshold, dh

            res = newton_core(evaluate, np.full(out.size, t_f), chain.g_value[out] - threshold,
                              g1[out] - threshold, cfg.toll, cfg.max_iter)
        evals[out] += res.g_evals
        ok = res.converged
        rows = out[ok]
        if rows.size:
            t_h = res.t_h[ok]
            b = analytic_flow(PhaseState(u0[rows], p0[rows]), t_h)
            v = _bounce_normal(hit_solver, limit_state, b.q, b.p, res, ok)
            p_a = reflect_momentum(b.p, v)
            after = analytic_flow(PhaseState(b.q, p_a), t_f - t_h)
            g2 = limit_state(after.q)
            evals[rows] += 1
            q_fin[rows], p_fin[rows], g_fin[rows] = after.q, after.p, g2
            bounced[rows] = True
            accept[rows] = g2 <= threshold
    return _finish(chain, q_fin, g_fin, p_fin, p0, accept, evals, bounced=bounced)


def _metropolis(rng, h0, h1):
    with np.errstate(invalid="ignore"):
        log_ratio = h0 - h1
    return np.log(rng.random(h0.shape)) < np.where(np.isnan(log_ratio), -np.inf, log_ratio)


def rs_hmc_step_generic(chain, system: HamiltonianSystem, limit_state, threshold, cfg, rng, p_rand=None):
    """Rejection-sampling HMC step with leapfrog and a Metropolis correction."""
    if not system.target.has_gradient:
        raise TypeError("leapfrog HMC needs a target gradient")
    _check_seeds(chain, threshold)
    q0 = chain.position
    m = q0.shape[0]
    p0 = draw_momentum(rng, system.mass, cfg.alpha, chain.last_momentum, size=m, p_rand=p_rand)
    start = PhaseState(q0, p0)
    L = n_leapfrog_steps(cfg.t_f, cfg.dt)
    end, div = leapfrog(system, start, cfg.dt, L)
    g = limit_state(end.q)
    mh = _metropolis(rng, hamiltonian(system, start), hamiltonian(system, end))
    accept = (g <= threshold) & mh & ~div
    return _finish(chain, end.q, g, end.p, p0, accept, np.ones(m), diverged=div)


def bb_hmc_step_generic(chain, system: HamiltonianSystem, limit_state, threshold, cfg, rng,
                        hit_solver="secant", p_rand=None):
    """Barrier-bouncing HMC step with leapfrog and a Metropolis correction.

    The bounce is attempted only for rows whose first proposal left the
    domain.  Hitting times are solved on the leapfrog trajectory through
    :func:`integrate_to`, which finishes with a partial step so the residual
    is continuous in ``t``.
    """
    if hit_solver not in ("secant", "newton"):
        raise ValueError(f"hit solver {hit_solver!r} not available in general space")
    if not system.target.has_gradient:
        raise TypeError("leapfrog HMC needs a target gradient")
    _check_seeds(chain, threshold)
    q0 = chain.position
    m = q0.shape[0]
    minv = system.mass.inv
    dt = cfg.dt
    p0 = draw_momentum(rng, system.mass, cfg.alpha, chain.last_momentum, size=m, p_rand=p_rand)
    start = PhaseState(q0, p0)
    h_init = hamiltonian(system, start)
    L = n_leapfrog_steps(cfg.t_f, dt)
    T = L * dt
    end, div = leapfrog(system, start, dt, L)
    g1 = limit_state(end.q)
    evals = np.ones(m, dtype=np.int64)
    inside = g1 <= threshold
    accept = inside & _metropolis(rng, h_init, hamiltonian(system, end)) & ~div
    q_fin, p_fin, g_fin = end.q.copy(), end.p.copy(), g1.copy()
    bounced = np.zeros(m, dtype=bool)
    div = div.copy()

    out = np.flatnonzero(~inside & ~div)
    if out.size:
        q_o, p_o = q0[out], p0[out]

        def flow(t, idx):
            s, d = integrate_to(system, PhaseState(q_o[idx], p_o[idx]), t, dt)
            return s, d

        if hit_solver == "secant":
            def evaluate(t, idx):
                s, _ = flow(t, idx)
                return limit_state(s.q) - threshold, s.q

            res = secant_core(evaluate, np.full(out.size, T), chain.g_value[out] - threshold,
                              g1[out] - threshold, cfg.toll, cfg.max_iter,
                              aux0=q_o, aux1=end.q[out])
        else:
            def evaluate(t, idx):
                s, _ = flow(t, idx)
                dh = np.sum(limit_state.grad(s.q) * (minv * s.p), axis=1)
                return limit_state(s.q) - threshold, dh

            res = newton_core(evaluate, np.full(out.size, T), chain.g_value[out] - threshold,
                              g1[out] - threshold, cfg.toll, cfg.max_iter)
        evals[out] += res.g_evals
        ok = res.converged
        rows = out[ok]
        if rows.size:
            t_h = res.t_h[ok]
            b, d1 = integrate_to(system, PhaseState(q0[rows], p0[rows]), t_h, dt)
            v = _bounce_normal(hit_solver, limit_state, b.q, b.p, res, ok)
            p_a = reflect_momentum(b.p, v)
            after, d2 = integrate_to(system, PhaseState(b.q, p_a), np.maximum(T - t_h, 0.0), dt)
            g2 = limit_state(after.q)
            evals[rows] += 1
            bad = d1 | d2
            div[rows] |= bad
            mh = _metropolis(rng, h_init[rows], hamiltonian(system, after))
            q_fin[rows], p_fin[rows], g_fin[rows] = after.q, after.p, g2
            bounced[rows] = True
            accept[rows] = (g2 <= threshold) & mh & ~bad
    return _finish(chain, q_fin, g_fin, p_fin, p0, accept, evals, bounced=bounced, diverged=div)
