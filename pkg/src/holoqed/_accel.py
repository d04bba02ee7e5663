"""Numba switch.

Set ``HOLOQED_NUMBA=0`` to force the pure-numpy kernels; otherwise the numba
versions are used whenever numba imports cleanly.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("HOLOQED_NUMBA", "1") not in ("0", "false", "no")


def njit(func):
    """Compile ``func`` with numba, or return None when numba is unavailable."""
    if numba is None:  # pragma: no cover
        return None
    return numba.njit(cache=True)(func)
