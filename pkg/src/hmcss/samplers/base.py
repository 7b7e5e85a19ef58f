"""Shared sampler types: configuration, batched chain state, limit states."""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class SamplerConfig:
    """Kernel and adaptation parameters.

    Attributes
    ----------
    t_f : float
        Trajectory duration.  In Gaussian space this is the rotation angle.
    alpha : float
        Partial momentum refreshment weight; 0 draws a fresh momentum.
    dt : float
        Leapfrog step (general-space kernels only).
    a_low, a_up : float
        Acceptance band of the two-sided trajectory-length rule.
    a_star : float
        Target acceptance of the one-sided rule used by bouncing kernels.
    N_a : int
        Chains per adaptation batch.
    toll : float
        Residual tolerance of the hitting-time solvers, in limit-state units.
    max_iter : int
        Iteration cap of the hitting-time solvers.
    mh_width : float
        Width of the uniform Metropolis-Hastings proposal.
    hit_solver : str
        ``"secant"``, ``"newton"`` or ``"analytic"`` for bouncing kernels.
    adapt : bool
        Turn trajectory-length adaptation on or off.
    """

    t_f: float = np.pi / 4
    alpha: float = 0.0
    dt: float = 0.05
    a_low: float = 0.3
    a_up: float = 0.5
    a_star: float = 0.8
    N_a: int = 10
    toll: float = 1e-6
    max_iter: int = 50
    mh_width: float = 2.0
    hit_solver: str = "secant"
    adapt: bool = True

    def __post_init__(self):
        if not 0 < self.a_low < self.a_up < 1:
            raise ValueError("need 0 < a_low < a_up < 1")
        if not 0 < self.a_star < 1:
            raise ValueError("need 0 < a_star < 1")
        if self.t_f <= 0 or self.dt <= 0:
            raise ValueError("t_f and dt must be positive")
        if abs(self.alpha) > 1:
            raise ValueError("alpha must lie in [-1, 1]")
        if self.N_a < 1 or self.max_iter < 1:
            raise ValueError("N_a and max_iter must be positive")
        if self.hit_solver not in ("secant", "newton", "analytic"):
            raise ValueError(f"unknown hit solver {self.hit_solver!r}")
        if self.toll <= 0 or self.mh_width <= 0:
            raise ValueError("toll and mh_width must be positive")

    def with_tf(self, t_f):
        return replace(self, t_f=float(t_f))


@dataclass(frozen=True)
class LimitState:
    """Performance function ``G``; a point fails when ``G <= threshold``.

    ``func`` and ``gradient`` act row-wise on ``(m, n)`` arrays.  ``linear``
    optionally records ``(c, w)`` with ``G(u) = c + w . u``, which unlocks the
    closed-form hitting time.
    """

    func: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""
    linear: Optional[tuple] = None

    @property
    def has_gradient(self):
        return self.gradient is not None

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            return float(self.func(u[None, :])[0])
        return self.func(u)

    def grad(self, u):
        if self.gradient is None:
            raise TypeError(f"limit state {self.label!r} has no gradient")
        u = np.asarray(u, dtype=float)
        if u.ndim == 1:
            return self.gradient(u[None, :])[0]
        return self.gradient(u)


@dataclass
class ChainState:
    """State of a batch of chains; row ``i`` is chain ``i``.

    ``last_momentum`` is the end-of-trajectory momentum kept for partial
    refreshment.  ``None`` means no previous trajectory.
    """

    position: np.ndarray
    g_value: np.ndarray
    last_momentum: Optional[np.ndarray] = None

    def __post_init__(self):
        self.position = np.atleast_2d(np.asarray(self.position, dtype=float))
        self.g_value = np.atleast_1d(np.asarray(self.g_value, dtype=float))
        if self.g_value.shape != (self.position.shape[0],):
            raise ValueError("one cached limit-state value per chain required")

    @property
    def size(self):
        return self.position.shape[0]

    def check_cache(self, limit_state, rtol=1e-10):
        """Debug helper: recompute ``G`` and compare with the cache."""
        fresh = limit_state(self.position)
        return np.allclose(fresh, self.g_value, rtol=rtol, atol=1e-12)


@dataclass
class StepOutcome:
    """Result of one kernel step over a batch of chains (per-row arrays)."""

    state: ChainState
    accepted: np.ndarray
    g_evals: np.ndarray
    bounced: np.ndarray
    diverged: np.ndarray

    @property
    def total_g_evals(self):
        return int(np.sum(self.g_evals))


def draw_momentum(rng, mass, alpha, p_star, size=None, p_rand=None):
    """Partially refreshed momentum ``alpha p* + sqrt(1 - alpha^2) p_rand``.

    Parameters
    ----------
    rng : numpy.random.Generator
    mass : MassMatrix
    alpha : float
    p_star : ndarray or None
        Previous end-of-trajectory momentum; ``None`` forces a full refresh.
    size : int, optional
        Number of rows when ``p_star`` is ``None``.
    p_rand : ndarray, optional
        Supply the fresh Gaussian part instead of drawing it.
    """
    if abs(alpha) > 1:
        raise ValueError("alpha must lie in [-1, 1]")
    if p_rand is None:
        shape = np.shape(p_star) if p_star is not None else (size, mass.diag.size)
        p_rand = mass.sample(rng, shape)
    if p_star is None or alpha == 0:
        return np.asarray(p_rand, dtype=float)
    return alpha * np.asarray(p_star, dtype=float) + np.sqrt(1.0 - alpha * alpha) * p_rand


def _outcome(state, accepted, g_evals, bounced=None, diverged=None):
    m = state.size
    z = np.zeros(m, dtype=bool)
    return StepOutcome(
        state=state,
        accepted=np.asarray(accepted, dtype=bool),
        g_evals=np.asarray(g_evals, dtype=np.int64),
        bounced=z.copy() if bounced is None else np.asarray(bounced, dtype=bool),
        diverged=z.copy() if diverged is None else np.asarray(diverged, dtype=bool),
    )


def _check_seeds(chain, threshold):
    if np.any(chain.g_value > threshold):
        raise ValueError("seed outside the conditioning domain (G > threshold)")
