"""Probability-space primitives.

Densities are evaluated row-wise: a position array of shape ``(m, n)`` holds
``m`` independent points (one per chain), a 1-D array is a single point.
Out-of-support points get ``-inf`` log-density and a zero gradient instead of
raising, so samplers can treat support edges like failure-domain barriers.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._accel import njit

LOG_2PI = np.log(2.0 * np.pi)


def _as_rows(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


@dataclass(frozen=True)
class RandomStream:
    """Reproducible random substream identified by ``(seed, stream_id)``.

    Each stream id spawns an independent child of the master seed through
    ``numpy.random.SeedSequence``, so the draw sequence depends only on the
    pair and never on how work is scheduled.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class TargetDensity:
    """Unnormalized log-density with optional gradient.

    Parameters
    ----------
    dim : int
        Dimension of the position space.
    log_density : callable
        Maps ``(m, n)`` positions to ``(m,)`` log-density values.
    gradient : callable, optional
        Maps ``(m, n)`` positions to the ``(m, n)`` gradient of the
        log-density.  ``None`` marks a gradient-free target.
    label : str
    bounded_support : bool
        ``True`` when some finite positions are outside the support; the
        leapfrog integrator then checks the log-density after every drift.
    jit : tuple, optional
        ``(logpdf_row, grad_row, params)`` numba kernels for the compiled
        integration path.
    """

    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""
    bounded_support: bool = False
    jit: Optional[tuple] = field(default=None, repr=False, compare=False)

    @property
    def has_gradient(self) -> bool:
        return self.gradient is not None

    def logpdf(self, q):
        rows, single = _as_rows(q)
        out = self.log_density(rows)
        return out[0] if single else out

    def grad(self, q):
        if self.gradient is None:
            raise TypeError(f"target {self.label!r} has no gradient")
        rows, single = _as_rows(q)
        out = self.gradient(rows)
        return out[0] if single else out


# --- standard normal -------------------------------------------------------

def std_normal_logpdf_grad(u):
    """Normalized standard-normal log-density and its gradient ``-u``."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("standard normal log-density needs finite input")
    n = u.shape[-1]
    logpdf = -0.5 * n * LOG_2PI - 0.5 * np.sum(u * u, axis=-1)
    return logpdf, -u


@njit(cache=True)
def _std_normal_logpdf_row(q, params):
    s = 0.0
    for i in range(q.shape[0]):
        s += q[i] * q[i]
    return -0.5 * s


@njit(cache=True)
def _std_normal_grad_row(q, params, out):
    for i in range(q.shape[0]):
        out[i] = -q[i]


def standard_normal_target(dim: int) -> TargetDensity:
    """Standard normal with the constant dropped, so ``V(u) = u.u / 2``."""
    return TargetDensity(
        dim=dim,
        log_density=lambda q: -0.5 * np.einsum("ij,ij->i", q, q),
        gradient=lambda q: -q,
        label=f"std-normal-{dim}d",
        jit=(_std_normal_logpdf_row, _std_normal_grad_row, np.zeros(1)),
    )


# --- correlated lognormal --------------------------------------------------

@dataclass(frozen=True)
class CorrelatedLognormal:
    """Lognormal vector ``q = exp(g)`` with ``g ~ N(mu_g, cov_g)``."""

    means: np.ndarray
    covs: np.ndarray
    corr: np.ndarray
    mu_g: np.ndarray
    cov_g: np.ndarray
    chol: np.ndarray

    @property
    def dim(self) -> int:
        return self.means.size

    @property
    def std(self) -> np.ndarray:
        """Marginal standard deviations of ``q`` in physical units."""
        return self.means * self.covs

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.dim))
        return np.exp(self.mu_g + z @ self.chol.T)

    def target(self) -> TargetDensity:
        params = _lognormal_params(self)
        return TargetDensity(
            dim=self.dim,
            log_density=lambda q: lognormal_logpdf_grad(self, q)[0],
            gradient=lambda q: lognormal_logpdf_grad(self, q)[1],
            label="correlated-lognormal",
            bounded_support=True,
            jit=(_lognormal_logpdf_row, _lognormal_grad_row, params),
        )


def lognormal_from_moments(means, covs, corr) -> CorrelatedLognormal:
    """Underlying Gaussian of a lognormal vector with given moments.

    Uses the exact lognormal correlation map
    ``corr_g[i, j] = ln(1 + corr[i, j] cov_i cov_j) / (sigma_i sigma_j)``.
    """
    means = np.atleast_1d(np.asarray(means, dtype=float))
    covs = np.atleast_1d(np.asarray(covs, dtype=float))
    corr = np.atleast_2d(np.asarray(corr, dtype=float))
    n = means.size
    if covs.size != n or corr.shape != (n, n):
        raise ValueError("means, covs and corr dimensions disagree")
    if np.any(means <= 0) or np.any(covs <= 0):
        raise ValueError("lognormal means and covs must be positive")
    if not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
        raise ValueError("corr must be symmetric with unit diagonal")

    var_g = np.log1p(covs**2)
    sig_g = np.sqrt(var_g)
    mu_g = np.log(means) - 0.5 * var_g
    corr_g = np.log1p(corr * np.outer(covs, covs)) / np.outer(sig_g, sig_g)
    np.fill_diagonal(corr_g, 1.0)
    cov_g = corr_g * np.outer(sig_g, sig_g)
    try:
        chol = np.linalg.cholesky(cov_g)
    except np.linalg.LinAlgError:
        bad = _first_bad_pair(corr_g)
        raise ValueError(f"underlying Gaussian covariance not positive definite (pair {bad})") from None
    return CorrelatedLognormal(means, covs, corr, mu_g, cov_g, chol)


def _first_bad_pair(corr_g):
    n = corr_g.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if abs(corr_g[i, j]) >= 1.0:
                return (i, j)
    # no single pair is degenerate; report the leading minor that fails
    for k in range(2, n + 1):
        if np.linalg.eigvalsh(corr_g[:k, :k]).min() <= 0:
            return (k - 2, k - 1)
    return (0, 1)


def lognormal_logpdf_grad(model: CorrelatedLognormal, q):
    """Log-density of ``q`` (change of variables from ``ln q``) and gradient.

    Any non-positive coordinate is out of support: ``-inf`` and zero gradient.
    """
    rows, single = _as_rows(q)
    inside = np.all(rows > 0, axis=1)
    safe = np.where(inside[:, None], rows, 1.0)
    y = np.log(safe)
    d = y - model.mu_g
    z = np.linalg.solve(model.chol, d.T).T
    w = np.linalg.solve(model.chol.T, z.T).T  # cov_g^-1 (y - mu)
    logdet = np.sum(np.log(np.diag(model.chol)))
    n = model.dim
    lp = -0.5 * np.sum(z * z, axis=1) - logdet - 0.5 * n * LOG_2PI - np.sum(y, axis=1)
    grad = (-w - 1.0) / safe
    lp = np.where(inside, lp, -np.inf)
    grad = np.where(inside[:, None], grad, 0.0)
    return (lp[0], grad[0]) if single else (lp, grad)


def _lognormal_params(model):
    n = model.dim
    linv = np.linalg.inv(model.chol)
    const = -np.sum(np.log(np.diag(model.chol))) - 0.5 * n * LOG_2PI
    return np.concatenate(([float(n), const], model.mu_g, linv.ravel()))


@njit(cache=True)
def _lognormal_logpdf_row(q, params):
    n = int(params[0])
    const = params[1]
    mu = params[2:2 + n]
    linv = params[2 + n:2 + n + n * n].reshape((n, n))
    acc = 0.0
    sum_y = 0.0
    for i in range(n):
        if q[i] <= 0.0:
            return -np.inf
    for i in range(n):
        zi = 0.0
        for j in range(i + 1):
            zi += linv[i, j] * (np.log(q[j]) - mu[j])
        acc += zi * zi
        sum_y += np.log(q[i])
    return -0.5 * acc + const - sum_y


@njit(cache=True)
def _lognormal_grad_row(q, params, out):
    n = int(params[0])
    mu = params[2:2 + n]
    linv = params[2 + n:2 + n + n * n].reshape((n, n))
    for i in range(n):
        if q[i] <= 0.0:
            for k in range(n):
                out[k] = 0.0
            return
    z = np.empty(n)
    for i in range(n):
        zi = 0.0
        for j in range(i + 1):
            zi += linv[i, j] * (np.log(q[j]) - mu[j])
        z[i] = zi
    for i in range(n):
        w = 0.0
        for k in range(i, n):
            w += linv[k, i] * z[k]
        out[i] = (-w - 1.0) / q[i]
