"""Optional numba acceleration for the hot loops.

Kernels are decorated with :func:`njit`. When numba is missing, or the
environment variable ``ADHPL_DISABLE_NUMBA`` is set to ``1``, the decorator
is a no-op and every caller takes its pure-numpy path instead.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

ENV_FLAG = "ADHPL_DISABLE_NUMBA"

NUMBA_ENABLED = numba is not None and os.environ.get(ENV_FLAG, "0") != "1"


def njit(fn):
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
