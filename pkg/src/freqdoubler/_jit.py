"""Numba switch.

Set ``FREQDOUBLER_DISABLE_NUMBA=1`` before import to run every kernel as
plain Python/numpy. The compiled dispatcher keeps the original function on
``.py_func`` either way, which is what the benchmark compares against.
"""
import os

_FLAG = "FREQDOUBLER_DISABLE_NUMBA"

NUMBA_ENABLED = os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")

if NUMBA_ENABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is an optional extra
        NUMBA_ENABLED = False


def njit(func):
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(func)
    func.py_func = func
    return func
