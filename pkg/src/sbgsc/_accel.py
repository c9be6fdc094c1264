"""JIT switch.

Numba-compiled kernels are used when numba imports and ``SBGSC_DISABLE_JIT``
is unset or ``0``.  Setting ``SBGSC_DISABLE_JIT=1`` selects the pure-numpy
implementations, which compute the same results.
"""

import os

_flag = os.environ.get("SBGSC_DISABLE_JIT", "0").strip().lower()

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _flag in ("", "0", "false", "no")


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        import numba

        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap
