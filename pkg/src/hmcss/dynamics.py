"""Hamiltonian evaluation, closed-form Gaussian flow, leapfrog, reflections."""

from collections import Counter
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _accel
from ._accel import njit
from .prob_core import TargetDensity, standard_normal_target

# diagnostic counters (e.g. reflections that had to renormalize their normal)
counters = Counter()


@dataclass
class PhaseState:
    """Position/momentum pair; rows are independent chains."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.q.shape != self.p.shape:
            raise ValueError(f"position {self.q.shape} and momentum {self.p.shape} differ in shape")

    def copy(self):
        return PhaseState(self.q.copy(), self.p.copy())


@dataclass(frozen=True)
class MassMatrix:
    """Diagonal mass matrix ``M``; ``K(p) = p . M^-1 p / 2``."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.diag, dtype=float))
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise ValueError("mass matrix entries must be positive and finite")
        object.__setattr__(self, "diag", d)

    @classmethod
    def identity(cls, dim):
        return cls(np.ones(dim))

    @property
    def inv(self):
        return 1.0 / self.diag

    def kinetic(self, p):
        p = np.asarray(p, dtype=float)
        return 0.5 * np.sum(p * p * self.inv, axis=-1)

    def sample(self, rng, shape):
        return rng.standard_normal(shape) * np.sqrt(self.diag)


@dataclass(frozen=True)
class HamiltonianSystem:
    target: TargetDensity
    mass: Optional[MassMatrix] = None

    def __post_init__(self):
        if self.mass is None:
            object.__setattr__(self, "mass", MassMatrix.identity(self.target.dim))

    @classmethod
    def standard_normal(cls, dim):
        return cls(standard_normal_target(dim))


def hamiltonian(system: HamiltonianSystem, state: PhaseState):
    """``H = V(q) + K(p)`` with ``V = -log pi`` (unnormalized).

    Out-of-support positions give ``+inf``.
    """
    lp = system.target.logpdf(state.q)
    return -lp + system.mass.kinetic(state.p)


def analytic_flow(state: PhaseState, t) -> PhaseState:
    """Exact flow for ``V(u) = u.u/2`` and ``M = I``: a rotation in phase space."""
    t = np.asarray(t, dtype=float)
    if t.ndim == 1 and state.q.ndim == 2:
        t = t[:, None]
    c, s = np.cos(t), np.sin(t)
    return PhaseState(state.p * s + state.q * c, state.p * c - state.q * s)


def reflect_momentum(p_b, v):
    """Mirror the momentum across the plane with unit normal ``v``.

    Rows of ``v`` that are not unit length (tolerance 1e-9) are normalized and
    counted under ``counters["reflect_renormalized"]``.
    """
    p_b = np.asarray(p_b, dtype=float)
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    off = np.abs(norm - 1.0) > 1e-9
    if np.any(off):
        counters["reflect_renormalized"] += int(np.count_nonzero(off))
        v = v / norm
    return p_b - 2.0 * np.sum(p_b * v, axis=-1, keepdims=True) * v


def n_leapfrog_steps(t, dt):
    """Nearest-integer step count, at least one."""
    return max(1, int(np.floor(t / dt + 0.5)))


def leapfrog(system: HamiltonianSystem, state: PhaseState, dt, n_steps, last_dt=0.0):
    """Run ``n_steps`` leapfrog steps plus an optional shorter final step.

    ``n_steps`` and ``last_dt`` may be per-row arrays.  Returns
    ``(PhaseState, diverged)``.  A row whose position leaves the target's
    support is rolled back to its last in-support state, flagged in
    ``diverged`` and not integrated further.
    """
    if not system.target.has_gradient:
        raise TypeError(f"leapfrog needs a gradient; target {system.target.label!r} has none")
    if dt <= 0:
        raise ValueError("leapfrog step must be positive")
    q, single = _rows(state.q)
    p, _ = _rows(state.p)
    q = q.copy()
    p = p.copy()
    m = q.shape[0]
    steps = np.broadcast_to(np.asarray(n_steps, dtype=np.int64), (m,)).copy()
    last = np.broadcast_to(np.asarray(last_dt, dtype=float), (m,)).copy()
    if np.any(steps < 0) or np.any(last < 0):
        raise ValueError("step counts and final step must be nonnegative")
    diverged = np.zeros(m, dtype=bool)
    jit = system.target.jit
    if _accel.numba_enabled() and jit is not None:
        logpdf_row, grad_row, params = jit
        _leapfrog_rows(logpdf_row, grad_row, params, system.target.bounded_support,
                       q, p, system.mass.inv, float(dt), steps, last, diverged)
    else:
        _leapfrog_numpy(system, q, p, float(dt), steps, last, diverged)
    if single:
        return PhaseState(q[0], p[0]), bool(diverged[0])
    return PhaseState(q, p), diverged


def integrate_to(system: HamiltonianSystem, state: PhaseState, t, dt):
    """Leapfrog to time ``t`` (scalar or per row): ``floor(t/dt)`` full steps
    then one partial step for the remainder.

    Unlike a rounded step count this is continuous in ``t``, which the
    hitting-time root finders rely on.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("integration time must be nonnegative")
    full = np.floor(t / dt + 1e-12)
    rest = t - full * dt
    rest = np.where(rest < 1e-12 * dt, 0.0, rest)
    return leapfrog(system, state, dt, full.astype(np.int64), last_dt=rest)


def _rows(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _leapfrog_numpy(system, q, p, dt, steps, last, diverged):
    target = system.target
    minv = system.mass.inv
    total = int(np.max(steps + (last > 0))) if steps.size else 0
    if total == 0:
        return
    live = np.ones(q.shape[0], dtype=bool)
    grad = target.gradient(q)
    for k in range(total):
        # rows past their own horizon take a zero-length step (the identity)
        h = np.where(k < steps, dt, np.where(k == steps, last, 0.0))
        h = np.where(live, h, 0.0)[:, None]
        p_half = p + 0.5 * h * grad
        q_new = q + h * minv * p_half
        if target.bounded_support:
            bad = live & ~np.isfinite(target.log_density(q_new))
            if np.any(bad):
                diverged |= bad
                live &= ~bad
                keep = bad[:, None]
                q_new = np.where(keep, q, q_new)
                p_half = np.where(keep, p, p_half)
                h = np.where(keep, 0.0, h)
        g_new = target.gradient(q_new)
        p_new = p_half + 0.5 * h * g_new
        q[...] = q_new
        p[...] = p_new
        grad = g_new


@njit(cache=True)
def _leapfrog_rows(logpdf_row, grad_row, params, bounded, q, p, minv, dt, steps, last, diverged):
    m, n = q.shape
    grad = np.empty(n)
    q_prev = np.empty(n)
    p_prev = np.empty(n)
    for r in range(m):
        total = steps[r] + (1 if last[r] > 0.0 else 0)
        if total == 0:
            continue
        qr = q[r]
        pr = p[r]
        grad_row(qr, params, grad)
        for k in range(total):
            h = dt if k < steps[r] else last[r]
            for i in range(n):
                q_prev[i] = qr[i]
                p_prev[i] = pr[i]
            for i in range(n):
                pr[i] += 0.5 * h * grad[i]
                qr[i] += h * minv[i] * pr[i]
            if bounded and not np.isfinite(logpdf_row(qr, params)):
                for i in range(n):
                    qr[i] = q_prev[i]
                    pr[i] = p_prev[i]
                diverged[r] = True
                break
            grad_row(qr, params, grad)
            for i in range(n):
                pr[i] += 0.5 * h * grad[i]
