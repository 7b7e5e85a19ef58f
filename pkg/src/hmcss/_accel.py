"""Numba switch for the hot integration loops.

Set ``HMCSS_DISABLE_NUMBA=1`` to force the pure-numpy code paths.  The flag is
read once at import; :func:`set_numba_enabled` flips it at runtime (used by the
benchmark script and the equivalence tests).
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_env = os.environ.get("HMCSS_DISABLE_NUMBA", "").strip().lower()
_enabled = HAVE_NUMBA and _env not in {"1", "true", "yes", "on"}


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def numba_enabled():
    return _enabled


def set_numba_enabled(flag):
    """Toggle the compiled kernels; returns the previous setting."""
    global _enabled
    previous = _enabled
    _enabled = bool(flag) and HAVE_NUMBA
    return previous
