"""Selects numba or plain-Python execution for the hot kernels.

Set ``RETENTION_LAB_DISABLE_NUMBA=1`` to run every kernel as ordinary Python
over numpy arrays. Results are identical either way; only speed differs.
"""

import os

DISABLE_ENV = "RETENTION_LAB_DISABLE_NUMBA"


def _numba_wanted():
    return os.environ.get(DISABLE_ENV, "").strip().lower() not in ("1", "true", "yes", "on")


try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

USING_NUMBA = _numba is not None and _numba_wanted()


def njit(func=None, *, inline=False):
    """``numba.njit`` with caching, or the identity when numba is off.

    Kernels never allocate, so the runtime's reference counting is switched
    off; with it on, each helper call pays an atomic round trip per array
    argument. ``error_model="numpy"`` drops the ZeroDivisionError path that
    integer modulo would otherwise carry. ``inline=True`` is for helpers
    called from inside other kernels.
    """
    if func is None:
        return lambda f: njit(f, inline=inline)
    if USING_NUMBA:
        opts = {"inline": "always"} if inline else {}
        return _numba.njit(cache=True, nogil=True, error_model="numpy", _nrt=False, **opts)(func)
    return func


def backend_name():
    return "numba" if USING_NUMBA else "python"
