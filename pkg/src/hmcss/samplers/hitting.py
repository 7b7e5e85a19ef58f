"""First-hit times of a trajectory on a limit-state surface.

The batched cores work on a residual ``h(t) = G(u(t)) - threshold`` over
many chains at once.  ``evaluate(t, idx)`` returns the residual for the rows
``idx`` at times ``t`` (one limit-state evaluation per row) plus an auxiliary
array: positions for the secant solver, ``dh/dt`` for Newton.

Both cores keep a sign-change bracket ``h(lo) <= 0 < h(hi)``.  An iterate
that falls outside it is replaced by the bracket midpoint.  Without this the
open secant/Newton iterations stall at ``t = 0`` when the residual first dips
before crossing.
"""

from dataclasses import dataclass

import numpy as np


class HitTimeError(RuntimeError):
    """Root finder did not reach the residual tolerance."""


@dataclass
class HitResult:
    t_h: np.ndarray
    iterations: np.ndarray
    g_evals: np.ndarray
    converged: np.ndarray
    aux_last: object = None
    aux_prev: object = None


def _damped(t_cur, step, t_max):
    """``t_cur - lam * step`` with ``lam`` halved until inside ``[0, t_max]``."""
    lam = np.ones_like(t_cur)
    t_new = t_cur - step
    for _ in range(60):
        out = (t_new < 0) | (t_new > t_max)
        if not np.any(out):
            break
        lam = np.where(out, 0.5 * lam, lam)
        t_new = np.where(out, t_cur - lam * step, t_new)
    return np.clip(t_new, 0.0, t_max)


def _safeguard(t_new, lo, hi):
    inside = (t_new > np.minimum(lo, hi)) & (t_new < np.maximum(lo, hi))
    return np.where(inside, t_new, 0.5 * (lo + hi))


def _update_bracket(lo, hi, idx, t_new, h_new):
    neg = h_new <= 0
    lo[idx[neg]] = t_new[neg]
    hi[idx[~neg]] = t_new[~neg]


def secant_core(evaluate, t_max, h0, h1, toll, max_iter, aux0=None, aux1=None):
    """Damped secant iteration started from ``(0, h0)`` and ``(t_max, h1)``."""
    t_max = np.asarray(t_max, dtype=float)
    m = t_max.size
    t_prev, t_cur = np.zeros(m), t_max.copy()
    h_prev, h_cur = np.asarray(h0, float).copy(), np.asarray(h1, float).copy()
    a_prev = None if aux0 is None else np.array(aux0, dtype=float)
    a_cur = None if aux1 is None else np.array(aux1, dtype=float)
    iters = np.zeros(m, dtype=np.int64)
    done = np.abs(h_cur) <= toll
    lo, hi = np.zeros(m), t_max.copy()
    for _ in range(max_iter):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        denom = h_cur[idx] - h_prev[idx]
        # a flat secant falls back to bisection of the bracket
        denom = np.where(denom == 0, np.inf, denom)
        step = h_cur[idx] * (t_cur[idx] - t_prev[idx]) / denom
        t_new = _safeguard(_damped(t_cur[idx], step, t_max[idx]), lo[idx], hi[idx])
        h_new, a_new = evaluate(t_new, idx)
        _update_bracket(lo, hi, idx, t_new, h_new)
        iters[idx] += 1
        t_prev[idx], h_prev[idx] = t_cur[idx], h_cur[idx]
        t_cur[idx], h_cur[idx] = t_new, h_new
        if a_cur is not None:
            a_prev[idx] = a_cur[idx]
            a_cur[idx] = a_new
        done[idx] = np.abs(h_new) <= toll
    return HitResult(t_cur, iters, iters.copy(), done, a_cur, a_prev)


def newton_core(evaluate, t_max, h0, h1, toll, max_iter):
    """Regula-falsi first iterate, then damped Newton.

    ``evaluate(t, idx)`` returns ``(h, dh_dt)``.  Where ``|dh/dt| < 1e-14`` a
    single secant step through the previous iterate is taken instead.
    """
    t_max = np.asarray(t_max, dtype=float)
    m = t_max.size
    h0 = np.asarray(h0, float)
    h1 = np.asarray(h1, float)
    iters = np.zeros(m, dtype=np.int64)
    t_cur = t_max.copy()
    h_cur = h1.copy()
    d_cur = np.full(m, np.nan)
    done = np.abs(h_cur) <= toll
    t_prev, h_prev = np.zeros(m), h0.copy()
    lo, hi = np.zeros(m), t_max.copy()

    idx = np.flatnonzero(~done)
    if idx.size and max_iter > 0:
        t2 = -t_max[idx] * h0[idx] / (h1[idx] - h0[idx])
        h2, d2 = evaluate(t2, idx)
        _update_bracket(lo, hi, idx, t2, h2)
        iters[idx] += 1
        t_prev[idx], h_prev[idx] = t_cur[idx], h_cur[idx]
        t_cur[idx], h_cur[idx], d_cur[idx] = t2, h2, d2
        done[idx] = np.abs(h2) <= toll
    for _ in range(max_iter - 1):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        d = d_cur[idx]
        h = h_cur[idx]
        step = np.empty(idx.size)
        ok = np.abs(d) >= 1e-14
        step[ok] = h[ok] / d[ok]
        sec = ~ok
        if np.any(sec):
            denom = h[sec] - h_prev[idx[sec]]
            with np.errstate(divide="ignore", invalid="ignore"):
                step[sec] = h[sec] * (t_cur[idx[sec]] - t_prev[idx[sec]]) / denom
        step = np.where(np.isfinite(step), step, np.inf)
        t_new = _safeguard(_damped(t_cur[idx], step, t_max[idx]), lo[idx], hi[idx])
        h_new, d_new = evaluate(t_new, idx)
        _update_bracket(lo, hi, idx, t_new, h_new)
        iters[idx] += 1
        t_prev[idx], h_prev[idx] = t_cur[idx], h_cur[idx]
        t_cur[idx], h_cur[idx], d_cur[idx] = t_new, h_new, d_new
        done[idx] = np.abs(h_new) <= toll
    return HitResult(t_cur, iters, iters.copy(), done)


def secant_hit_time(g_of_t, t0, t1, g0, g1, cfg):
    """Secant hitting time of a scalar residual ``g_of_t``.

    Parameters
    ----------
    g_of_t : callable
        ``t -> G(u(t)) - threshold``.
    t0, t1 : float
        Bracket; ``t0`` must be 0 (start of the trajectory).
    g0, g1 : float
        Residuals at ``t0`` (inside, ``<= 0``) and ``t1`` (outside).
    cfg : SamplerConfig

    Returns
    -------
    (t_h, iterations, g_evals)

    Raises
    ------
    HitTimeError
        When ``cfg.max_iter`` iterations do not reach ``cfg.toll``.
    """
    if t0 != 0:
        raise ValueError("trajectories start at t0 = 0")

    def evaluate(t, idx):
        return np.array([g_of_t(float(t[0]))]), None

    res = secant_core(evaluate, np.array([t1], float), [g0], [g1], cfg.toll, cfg.max_iter)
    if not res.converged[0]:
        raise HitTimeError(f"secant did not converge in {cfg.max_iter} iterations")
    return float(res.t_h[0]), int(res.iterations[0]), int(res.g_evals[0])


def newton_hit_time(g_of_t, dg_du, trajectory, t0, t1, g0, g1, cfg, minv=None):
    """Newton hitting time using ``dG/dt = grad G . M^-1 p``.

    ``trajectory(t)`` returns ``(u, p)`` at time ``t``; ``dg_du(u)`` the
    limit-state gradient.  Same contract as :func:`secant_hit_time`.
    """
    if t0 != 0:
        raise ValueError("trajectories start at t0 = 0")

    def evaluate(t, idx):
        u, p = trajectory(float(t[0]))
        mp = p if minv is None else minv * p
        return np.array([g_of_t(float(t[0]))]), np.array([np.dot(dg_du(u), mp)])

    res = newton_core(evaluate, np.array([t1], float), [g0], [g1], cfg.toll, cfg.max_iter)
    if not res.converged[0]:
        raise HitTimeError(f"Newton did not converge in {cfg.max_iter} iterations")
    return float(res.t_h[0]), int(res.iterations[0]), int(res.g_evals[0])


def sinusoid_first_root(c, A, B, t_max=2 * np.pi, eps=1e-12):
    """Smallest ``t`` in ``(eps, t_max]`` solving ``c - A sin t - B cos t = 0``.

    Works element-wise; ``nan`` marks rows without a root in the window.
    """
    c, A, B = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (c, A, B)))
    R = np.hypot(A, B)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = c / R
    reach = np.abs(ratio) <= 1.0 + 1e-12
    x = np.arcsin(np.clip(np.where(reach, ratio, 0.0), -1.0, 1.0))
    phi = np.arctan2(B, A)
    two_pi = 2.0 * np.pi
    roots = []
    for base in (x - phi, np.pi - x - phi):
        t = np.mod(base, two_pi)
        t = np.where(t <= eps, t + two_pi, t)
        roots.append(t)
    t = np.minimum(*roots)
    ok = reach & (R > 0) & (t <= t_max)
    return np.where(ok, t, np.nan)


def analytic_hit_time_linear(beta0, n, u_init, p_init, t_max=2 * np.pi, threshold=0.0):
    """Exact first hit of ``beta0 - sum(u)/sqrt(n) = threshold`` along the
    Gaussian flow.  Returns ``None`` (scalar input) or ``nan`` rows when the
    trajectory does not reach the surface by ``t_max``.
    """
    u = np.asarray(u_init, dtype=float)
    p = np.asarray(p_init, dtype=float)
    A = p.sum(axis=-1) / np.sqrt(n)
    B = u.sum(axis=-1) / np.sqrt(n)
    t = sinusoid_first_root(beta0 - threshold, A, B, t_max)
    if np.ndim(t) == 0:
        return None if np.isnan(t) else float(t)
    return t


def linear_hit_times(linear, threshold, u_init, p_init, t_max):
    """First hit of ``G(u) = c + w . u`` at ``threshold`` along the Gaussian flow."""
    c, w = linear
    A = -(p_init @ w)
    B = -(u_init @ w)
    return sinusoid_first_root(c - threshold, A, B, t_max)
