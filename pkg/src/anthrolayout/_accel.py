"""Kernel backend selection.

Hot loops ship twice: a numba ``@njit`` version and a vectorized numpy
version. ``ANTHROLAYOUT_NUMBA=0`` (or a missing numba install) routes every
dispatcher to the numpy path and leaves the loop kernels as plain Python.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a soft dependency
    numba = None

_FLAG = os.environ.get("ANTHROLAYOUT_NUMBA", "1").strip().lower()

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")


def njit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""

    def wrap(f):
        if not USE_NUMBA:
            return f
        return numba.njit(cache=True, **kwargs)(f)

    if fn is None:
        return wrap
    return wrap(fn)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
