"""Random-walk Metropolis-Hastings baselines for conditional sampling.

Both kernels follow the modified scheme of Subset Simulation: an
unconditional MH move yields a candidate, which replaces the current state
only if it lies in the conditioning domain.  The limit state is evaluated
only when the candidate differs from the current state.
"""

import numpy as np

from .base import ChainState, _check_seeds, _outcome


def _domain_test(chain, cand, moved, limit_state, threshold):
    m = chain.size
    g = chain.g_value.copy()
    evals = moved.astype(np.int64)
    if np.any(moved):
        g[moved] = limit_state(cand[moved])
    accept = moved & (g <= threshold)
    pos = np.where(accept[:, None], cand, chain.position)
    g_new = np.where(accept, g, chain.g_value)
    return _outcome(ChainState(pos, g_new, None), accept, evals)


def cwmh_step(chain, limit_state, threshold, cfg, rng, target=None):
    """Component-wise MH with uniform proposals of width ``cfg.mh_width``.

    Without ``target`` the coordinates are independent standard normals and
    each coordinate uses its marginal ratio.  With ``target`` the coordinates
    are updated in turn using the joint-density ratio.
    """
    _check_seeds(chain, threshold)
    u = chain.position
    m, n = u.shape
    w = cfg.mh_width
    xi = u + w * (rng.random((m, n)) - 0.5)
    log_unif = np.log(rng.random((m, n)))
    if target is None:
        keep = log_unif < -0.5 * (xi * xi - u * u)
        cand = np.where(keep, xi, u)
    else:
        cand = u.copy()
        lp = target.log_density(cand)
        for i in range(n):
            trial = cand.copy()
            trial[:, i] = xi[:, i]
            lp_t = target.log_density(trial)
            ok = log_unif[:, i] < lp_t - lp
            cand[ok, i] = xi[ok, i]
            lp = np.where(ok, lp_t, lp)
    moved = np.any(cand != u, axis=1)
    return _domain_test(chain, cand, moved, limit_state, threshold)


def block_mh_step(chain, target, limit_state, threshold, cfg, rng):
    """Block MH: uniform proposal on a cube of side ``cfg.mh_width`` centred
    on the current state, joint-density ratio, then the domain test."""
    _check_seeds(chain, threshold)
    q = chain.position
    m, n = q.shape
    cand = q + cfg.mh_width * (rng.random((m, n)) - 0.5)
    with np.errstate(invalid="ignore"):
        log_ratio = target.log_density(cand) - target.log_density(q)
    moved = np.log(rng.random(m)) < np.nan_to_num(log_ratio, nan=-np.inf)
    return _domain_test(chain, cand, moved, limit_state, threshold)
