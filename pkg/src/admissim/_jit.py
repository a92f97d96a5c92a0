"""Kernel compilation switch.

Hot loops are written in the numba-compatible subset of Python and wrapped
with :func:`kernel`.  Setting ``ADMISSIM_DISABLE_JIT=1`` (or running without
numba installed) leaves them as plain Python functions operating on numpy
arrays, which is slow but produces bit-identical results.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_ENABLED = numba is not None and os.environ.get(
    "ADMISSIM_DISABLE_JIT", "").strip().lower() not in ("1", "true", "yes")


def kernel(fn):
    if not JIT_ENABLED:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
