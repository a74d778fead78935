"""Numba acceleration shim.

Hot kernels are written twice: an ``@njit`` version and a pure-numpy
fallback.  Selection happens once at import time:

* ``KINCHANNEL_DISABLE_NUMBA=1`` forces the numpy path,
* otherwise numba is used when importable.

``jit_or_fallback(numba_fn, numpy_fn)`` returns the active implementation,
so call sites stay oblivious.
"""
import os

NUMBA_ENABLED = False

if os.environ.get("KINCHANNEL_DISABLE_NUMBA", "0") != "1":
    try:
        import numba  # noqa: F401
        from numba import njit, prange

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is an optional extra
        pass

if not NUMBA_ENABLED:
    def njit(*args, **kwargs):
        """No-op decorator stand-in used when numba is unavailable/disabled."""
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    prange = range


def jit_or_fallback(numba_impl, numpy_impl):
    return numba_impl if NUMBA_ENABLED else numpy_impl
