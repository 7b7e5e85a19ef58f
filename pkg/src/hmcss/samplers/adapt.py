"""Trajectory-length adaptation and mean orbital period estimation."""

import numpy as np

from .. import _accel
from .._accel import njit
from ..dynamics import HamiltonianSystem, PhaseState

UTURN_CAP = 10_000


def adapt_tf(current_tf, acceptance_rate, period, cfg, mode="rs"):
    """Update the trajectory duration from a batch acceptance rate.

    The duration is mapped through ``S(t) = sin(2 pi t / period)``, scaled by
    ``exp((a - a_ref) / 2)`` and mapped back, so corrections shrink near the
    quarter period.  ``mode="rs"`` applies the two-sided band
    ``[a_low, a_up]``; ``mode="bb"`` only shortens when ``a < a_star``.
    The result is clamped to ``[0.01, 1] * period / 4``.
    """
    a = float(acceptance_rate)
    if not 0.0 <= a <= 1.0:
        raise ValueError("acceptance rate must lie in [0, 1]")
    if period <= 0:
        raise ValueError("period must be positive")
    lo, hi = 0.01 * period / 4, period / 4
    t = min(max(float(current_tf), lo), hi)
    if mode == "rs":
        if a < cfg.a_low:
            ref = cfg.a_low
        elif a > cfg.a_up:
            ref = cfg.a_up
        else:
            return t
    elif mode == "bb":
        if a >= cfg.a_star:
            return t
        ref = cfg.a_star
    else:
        raise ValueError(f"unknown adaptation mode {mode!r}")
    scale = 2.0 * np.pi / period
    y = min(np.sin(scale * t) * np.exp(0.5 * (a - ref)), 1.0)
    return min(max(np.arcsin(y) / scale, lo), hi)


def estimate_periods(system: HamiltonianSystem, states: PhaseState, dt, cap=UTURN_CAP):
    """Per-state orbital period from the separation-contraction rule.

    Each state is integrated forward from ``(q, p)`` and backward from
    ``(q, -p)`` one leapfrog step at a time.  Integration stops at the first
    ``L`` where the distance between the two ends starts shrinking, i.e.
    ``(q+ - q-) . M^-1 (p+ - p-) < 0`` with ``p-`` the backward momentum.
    The period is ``2 L dt``.  States that hit ``cap`` steps or leave the
    support give ``nan``.
    """
    q = np.atleast_2d(np.asarray(states.q, dtype=float))
    p = np.atleast_2d(np.asarray(states.p, dtype=float))
    jit = system.target.jit
    if _accel.numba_enabled() and jit is not None:
        logpdf_row, grad_row, params = jit
        out = np.full(q.shape[0], np.nan)
        _uturn_rows(logpdf_row, grad_row, params, system.target.bounded_support,
                    q.copy(), p.copy(), system.mass.inv, float(dt), int(cap), out)
        return out
    return _uturn_numpy(system, q, p, float(dt), int(cap))


def estimate_mean_period(system: HamiltonianSystem, states: PhaseState, dt, cap=UTURN_CAP):
    """Mean of :func:`estimate_periods` over the states that stopped.

    Returns ``(T_bar, n_excluded)``.  Raises ``RuntimeError`` when every
    state is excluded.
    """
    periods = estimate_periods(system, states, dt, cap)
    good = np.isfinite(periods)
    if not np.any(good):
        raise RuntimeError(f"period estimation failed for all {periods.size} states (cap {cap})")
    return float(np.mean(periods[good])), int(np.count_nonzero(~good))


def _uturn_numpy(system, q, p, dt, cap):
    target = system.target
    minv = system.mass.inv
    m = q.shape[0]
    # stack forward and backward ends so each step is one batched evaluation
    x = np.concatenate([q, q])
    v = np.concatenate([p, -p])
    g = target.gradient(x)
    out = np.full(m, np.nan)
    live = np.ones(m, dtype=bool)
    for L in range(1, cap + 1):
        v = v + 0.5 * dt * g
        x = x + dt * minv * v
        if target.bounded_support:
            bad = ~np.isfinite(target.log_density(x))
            lost = bad[:m] | bad[m:]
            live &= ~lost
            x = np.where(np.concatenate([lost, lost])[:, None], np.concatenate([q, q]), x)
        g = target.gradient(x)
        v = v + 0.5 * dt * g
        d = x[:m] - x[m:]
        growth = np.sum(d * minv * (v[:m] - v[m:]), axis=1)
        stop = live & (growth < 0)
        out[stop] = 2 * L * dt
        live &= ~stop
        if not np.any(live):
            break
    return out


@njit(cache=True)
def _uturn_rows(logpdf_row, grad_row, params, bounded, q, p, minv, dt, cap, out):
    m, n = q.shape
    xf = np.empty(n)
    vf = np.empty(n)
    xb = np.empty(n)
    vb = np.empty(n)
    gf = np.empty(n)
    gb = np.empty(n)
    for r in range(m):
        for i in range(n):
            xf[i] = q[r, i]
            xb[i] = q[r, i]
            vf[i] = p[r, i]
            vb[i] = -p[r, i]
        grad_row(xf, params, gf)
        grad_row(xb, params, gb)
        for L in range(1, cap + 1):
            for i in range(n):
                vf[i] += 0.5 * dt * gf[i]
                vb[i] += 0.5 * dt * gb[i]
                xf[i] += dt * minv[i] * vf[i]
                xb[i] += dt * minv[i] * vb[i]
            if bounded and (not np.isfinite(logpdf_row(xf, params))
                            or not np.isfinite(logpdf_row(xb, params))):
                break
            grad_row(xf, params, gf)
            grad_row(xb, params, gb)
            growth = 0.0
            for i in range(n):
                vf[i] += 0.5 * dt * gf[i]
                vb[i] += 0.5 * dt * gb[i]
                growth += (xf[i] - xb[i]) * minv[i] * (vf[i] - vb[i])
            if growth < 0.0:
                out[r] = 2.0 * L * dt
                break
