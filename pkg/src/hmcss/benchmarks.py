"""Benchmark reliability problems with reference probabilities.

Each factory returns a :class:`ReliabilityProblem`; :data:`REGISTRY` maps the
command-line identifiers to factories.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats

from ._accel import njit
from .dynamics import HamiltonianSystem, MassMatrix
from .prob_core import TargetDensity, lognormal_from_moments, standard_normal_target
from .samplers import LimitState


@dataclass
class ReliabilityProblem:
    """Unconditional distribution plus limit state.

    Attributes
    ----------
    name : str
    dim : int
    limit_state : LimitState
    system : HamiltonianSystem
        Target density and mass matrix for leapfrog kernels.
    sampler : callable
        ``(rng, size) -> (size, dim)`` i.i.d. unconditional draws.
    gaussian : bool
        ``True`` when the space is independent standard normal.
    reference : float, optional
        Exact or reference failure probability.
    params : dict
    """

    name: str
    dim: int
    limit_state: LimitState
    system: HamiltonianSystem
    sampler: Callable
    gaussian: bool = False
    reference: Optional[float] = None
    params: dict = field(default_factory=dict)

    def sample(self, rng, size):
        return self.sampler(rng, size)


def _std_normal_sampler(n):
    return lambda rng, size: rng.standard_normal((size, n))


# --- linear / parabolic ----------------------------------------------------

@dataclass(frozen=True)
class LinearProblem:
    beta0: float = 3.0
    n: int = 100

    @property
    def exact(self):
        return float(stats.norm.cdf(-self.beta0))

    def problem(self):
        n, beta0 = self.n, self.beta0
        w = np.full(n, -1.0 / np.sqrt(n))
        ls = LimitState(
            func=lambda u: linear_g(self, u),
            gradient=lambda u: np.broadcast_to(w, u.shape).copy(),
            label="linear",
            linear=(beta0, w),
        )
        return ReliabilityProblem("linear", n, ls, HamiltonianSystem(standard_normal_target(n)),
                                  _std_normal_sampler(n), True, self.exact,
                                  {"beta0": beta0, "n": n})


def linear_g(problem, u):
    u = np.asarray(u, dtype=float)
    return problem.beta0 - u.sum(axis=-1) / np.sqrt(problem.n)


# reference values for the parabolic limit state at beta0 = 4, n = 100
NONLINEAR_TABLE = {0.2: 6.41e-5, 0.6: 1.41e-3, 1.0: 8.99e-3, -1.0: 1.37e-5}


@dataclass(frozen=True)
class NonlinearProblem:
    beta0: float = 4.0
    n: int = 100
    kappa: float = 1.0

    @property
    def exact(self):
        """``E_w[Phi(kappa w^2 / 2 - beta0)]`` by quadrature.

        The linear part and ``(u1 - u2) / sqrt(2)`` are independent standard
        normals, which reduces the probability to a 1-D integral.
        """
        k, b = self.kappa, self.beta0
        f = lambda w: stats.norm.cdf(0.5 * k * w * w - b) * stats.norm.pdf(w)
        return float(integrate.quad(f, -np.inf, np.inf, epsabs=1e-15, epsrel=1e-10)[0])

    def problem(self):
        if self.n < 2:
            raise ValueError("parabolic limit state needs n >= 2")
        return ReliabilityProblem(
            "nonlinear", self.n,
            LimitState(lambda u: nonlinear_g(self, u), lambda u: nonlinear_grad(self, u), "nonlinear"),
            HamiltonianSystem(standard_normal_target(self.n)),
            _std_normal_sampler(self.n), True, self.exact,
            {"beta0": self.beta0, "n": self.n, "kappa": self.kappa},
        )


def nonlinear_g(problem, u):
    u = np.asarray(u, dtype=float)
    d = u[..., 0] - u[..., 1]
    return problem.beta0 - u.sum(axis=-1) / np.sqrt(problem.n) - 0.25 * problem.kappa * d * d


def nonlinear_grad(problem, u):
    u = np.asarray(u, dtype=float)
    g = np.full(u.shape, -1.0 / np.sqrt(problem.n))
    d = u[..., 0] - u[..., 1]
    g[..., 0] -= 0.5 * problem.kappa * d
    g[..., 1] += 0.5 * problem.kappa * d
    return g


# --- SDOF oscillator under white noise ------------------------------------

@dataclass(frozen=True)
class SDOFProblem:
    """Linear oscillator driven by spectrally represented white noise.

    ``u[:nh]`` multiply the cosine terms and ``u[nh:]`` the sine terms.  The
    response is exact per harmonic (particular plus homogeneous part from
    rest), sampled every ``dt_resp`` seconds.  By default the peak is the
    one-sided ``max X(t)``; ``two_sided=True`` uses ``max |X(t)|``.
    """

    x: float = 0.020
    m: float = 6e4
    k: float = 2e7
    zeta: float = 0.10
    S: float = 0.01
    omega_cut: float = 15 * np.pi
    n: int = 200
    duration: float = 10.0
    dt_resp: float = 0.05
    two_sided: bool = False

    @property
    def natural_period(self):
        return 2 * np.pi * np.sqrt(self.m / self.k)

    @cached_property
    def response_matrix(self):
        """``(n_t, n)`` matrix ``A`` with ``X(t_k) = (A u)_k``."""
        nh = self.n // 2
        wn = np.sqrt(self.k / self.m)
        z = self.zeta
        wd = wn * np.sqrt(1 - z * z)
        dw = self.omega_cut / nh
        w = dw * np.arange(1, nh + 1)
        sig = np.sqrt(2 * self.S * dw)
        t = np.arange(0.0, self.duration + 1e-9, self.dt_resp)
        H = 1.0 / (wn**2 - w**2 + 2j * z * wn * w)
        # ground acceleration enters as -a_g(t); complex steady-state amplitude per unit u
        Z = -sig * H * np.exp(1j * np.outer(t, w))
        V0 = -sig * H * 1j * w
        env = np.exp(-z * wn * t)[:, None]
        c, s = np.cos(wd * t)[:, None], np.sin(wd * t)[:, None]
        blocks = []
        for xp, v0 in ((Z.real, V0.real), (Z.imag, V0.imag)):
            A0 = -xp[0]
            B0 = (-v0 + z * wn * A0) / wd
            blocks.append(xp + env * (A0 * c + B0 * s))
        return np.hstack(blocks)

    def problem(self):
        A = self.response_matrix
        return ReliabilityProblem(
            "sdof", self.n,
            LimitState(lambda u: self.x - sdof_response_max(self, u),
                       lambda u: -_sdof_peak_grad(self, u), "sdof"),
            HamiltonianSystem(standard_normal_target(self.n)),
            _std_normal_sampler(self.n), True, None,
            {"x": self.x, "dt_resp": self.dt_resp, "two_sided": self.two_sided, "n_t": A.shape[0]},
        )


def sdof_response_max(problem, u):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != problem.n:
        raise ValueError(f"expected {problem.n} variables, got {u.shape[-1]}")
    X = u @ problem.response_matrix.T
    return np.abs(X).max(axis=-1) if problem.two_sided else X.max(axis=-1)


def _sdof_peak_grad(problem, u):
    A = problem.response_matrix
    X = u @ A.T
    if problem.two_sided:
        k = np.abs(X).argmax(axis=-1)
        sign = np.sign(np.take_along_axis(X, k[:, None], axis=-1))
        return sign * A[k]
    return A[X.argmax(axis=-1)]


# --- banana distribution with elliptical limit state ----------------------

@dataclass(frozen=True)
class BananaProblem:
    a: float = 1.15
    b: float = 0.5
    rho: float = 0.9
    c1: float = 1.0
    c2: float = 0.5
    theta: float = np.pi / 4
    r: float = 6.0

    def sample(self, rng, size):
        """Exact draws: push correlated standard normals through the transform."""
        z = rng.standard_normal((size, 2))
        u1 = z[:, 0]
        u2 = self.rho * z[:, 0] + np.sqrt(1 - self.rho**2) * z[:, 1]
        return np.column_stack([self.a * u1, u2 / self.a + self.b * (u1 * u1 + self.a**2)])

    def target(self):
        params = np.array([self.a, self.b, self.rho])
        return TargetDensity(
            dim=2,
            log_density=lambda xy: banana_logpdf_grad(self, xy)[0],
            gradient=lambda xy: banana_logpdf_grad(self, xy)[1],
            label="banana",
            jit=(_banana_logpdf_row, _banana_grad_row, params),
        )

    def problem(self):
        return ReliabilityProblem(
            "banana-ellipse", 2,
            LimitState(lambda xy: ellipse_g(self, xy), lambda xy: ellipse_grad(self, xy), "ellipse"),
            HamiltonianSystem(self.target()),
            self.sample, False, BANANA_TABLE.get(float(self.r)),
            {"r": self.r},
        )


# reference probabilities for the elliptical limit state on the banana density
BANANA_TABLE = {6.0: 2.63e-2, 8.0: 6.85e-3, 10.0: 1.90e-3, 12.0: 4.91e-4, 14.0: 1.36e-4}


def _banana_u(pb, xy):
    x, y = xy[..., 0], xy[..., 1]
    u1 = x / pb.a
    u2 = pb.a * (y - pb.b * x * x / pb.a**2 - pb.b * pb.a**2)
    return x, u1, u2


def banana_logpdf_grad(problem, xy):
    """Unnormalized log-density of the banana distribution and its gradient."""
    xy = np.asarray(xy, dtype=float)
    x, u1, u2 = _banana_u(problem, xy)
    r2 = 1.0 - problem.rho**2
    lp = -(u1 * u1 + u2 * u2 - 2 * problem.rho * u1 * u2) / (2 * r2)
    d1 = (u1 - problem.rho * u2) / r2
    d2 = (u2 - problem.rho * u1) / r2
    gx = -(d1 / problem.a + d2 * (-2 * problem.b * x / problem.a))
    gy = -d2 * problem.a
    return lp, np.stack([gx, gy], axis=-1)


@njit(cache=True)
def _banana_logpdf_row(q, params):
    a, b, rho = params[0], params[1], params[2]
    u1 = q[0] / a
    u2 = a * (q[1] - b * q[0] * q[0] / (a * a) - b * a * a)
    return -(u1 * u1 + u2 * u2 - 2.0 * rho * u1 * u2) / (2.0 * (1.0 - rho * rho))


@njit(cache=True)
def _banana_grad_row(q, params, out):
    a, b, rho = params[0], params[1], params[2]
    r2 = 1.0 - rho * rho
    u1 = q[0] / a
    u2 = a * (q[1] - b * q[0] * q[0] / (a * a) - b * a * a)
    d1 = (u1 - rho * u2) / r2
    d2 = (u2 - rho * u1) / r2
    out[0] = -(d1 / a - d2 * 2.0 * b * q[0] / a)
    out[1] = -d2 * a


def ellipse_g(problem, xy):
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    c, s = np.cos(problem.theta), np.sin(problem.theta)
    s1 = x * c + y * s
    s2 = x * s - y * c
    return problem.r**2 - s1 * s1 / problem.c1**2 - s2 * s2 / problem.c2**2


def ellipse_grad(problem, xy):
    xy = np.asarray(xy, dtype=float)
    x, y = xy[..., 0], xy[..., 1]
    c, s = np.cos(problem.theta), np.sin(problem.theta)
    s1 = x * c + y * s
    s2 = x * s - y * c
    k1, k2 = 2 * s1 / problem.c1**2, 2 * s2 / problem.c2**2
    return np.stack([-k1 * c - k2 * s, -k1 * s + k2 * c], axis=-1)


# --- three-story shear frame ----------------------------------------------

FRAME_FORCES = np.array([1.645e8, 2.585e8, 4.7e8])
FRAME_MEANS = np.array([3.0e8, 2.8e8, 1.5e8])


def calibrate_force_scale(means=FRAME_MEANS, forces=FRAME_FORCES, target_drift=0.03):
    """Scale making the largest elastic drift at mean stiffness ``target_drift``."""
    shear = np.cumsum(forces[::-1])[::-1]
    return float(target_drift / np.max(shear / means))


@dataclass(frozen=True)
class ShearFrameProblem:
    """Elastic-perfectly-plastic three-story shear frame under static load.

    Story stiffnesses are correlated lognormal.  Stories are listed bottom
    up; the story shear is the sum of the forces at and above the story.
    A story whose shear exceeds its yield capacity ``k u_y`` cannot carry the
    load (zero hardening) and its drift is reported as ``+inf``.
    """

    x: float = 0.12
    u_y: float = 0.04
    cov: float = 0.1
    rho: float = 0.6
    force_scale: Optional[float] = None
    means: tuple = tuple(FRAME_MEANS)
    forces: tuple = tuple(FRAME_FORCES)

    @cached_property
    def model(self):
        n = len(self.means)
        corr = np.full((n, n), self.rho)
        np.fill_diagonal(corr, 1.0)
        return lognormal_from_moments(np.array(self.means), np.full(n, self.cov), corr)

    @property
    def scale(self):
        if self.force_scale is not None:
            return self.force_scale
        return calibrate_force_scale(np.array(self.means), np.array(self.forces))

    @property
    def shears(self):
        f = np.array(self.forces) * self.scale
        return np.cumsum(f[::-1])[::-1]

    def problem(self):
        model = self.model
        # mass matched to the marginal scales keeps one leapfrog step size sensible
        mass = MassMatrix(1.0 / model.std**2)
        return ReliabilityProblem(
            "shear-frame", model.dim,
            LimitState(lambda k: self.x - frame_drifts(self, k).max(axis=-1), label="max-drift"),
            HamiltonianSystem(model.target(), mass),
            model.sample, False, None,
            {"x": self.x, "force_scale": self.scale},
        )


def frame_drifts(problem, k_sample):
    """Interstory drifts at full load (load factor 1).

    With proportional loading and no hardening the drift path is elastic up
    to yield, so the drift at load factor 1 is ``V / k`` unless the story
    shear exceeds ``k u_y``, in which case it is ``+inf``.
    """
    k = np.asarray(k_sample, dtype=float)
    V = problem.shears
    with np.errstate(divide="ignore"):
        drift = V / k
    return np.where((V > k * problem.u_y) | (k <= 0), np.inf, drift)


# --- registry --------------------------------------------------------------

def make_linear(beta0=3.0, n=100):
    return LinearProblem(float(beta0), int(n)).problem()


def make_nonlinear(beta0=4.0, n=100, kappa=1.0):
    return NonlinearProblem(float(beta0), int(n), float(kappa)).problem()


def make_sdof(x=0.020, dt_resp=0.05, two_sided=False):
    return SDOFProblem(x=float(x), dt_resp=float(dt_resp), two_sided=bool(two_sided)).problem()


def make_banana_ellipse(r=6.0):
    return BananaProblem(r=float(r)).problem()


def make_shear_frame(x=0.12, force_scale=None):
    fs = None if force_scale is None else float(force_scale)
    return ShearFrameProblem(x=float(x), force_scale=fs).problem()


REGISTRY = {
    "linear": make_linear,
    "nonlinear": make_nonlinear,
    "sdof": make_sdof,
    "banana-ellipse": make_banana_ellipse,
    "shear-frame": make_shear_frame,
}


def make_problem(name, **params):
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(**params)
