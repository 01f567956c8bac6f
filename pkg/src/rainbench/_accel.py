"""Backend selection for the hot kernels.

Set ``RAINBENCH_DISABLE_JIT=1`` before importing :mod:`rainbench` to force the
pure-numpy code paths. Numba is used whenever it imports cleanly otherwise.
"""
import os

_FLAG = "RAINBENCH_DISABLE_JIT"


def _truthy(value):
    return value.strip().lower() not in ("", "0", "false", "no", "off")


JIT_REQUESTED = not _truthy(os.environ.get(_FLAG, ""))

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_JIT = JIT_REQUESTED and HAVE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` with our defaults, or a no-op when numba is missing.

    Kernels are always compiled lazily and cached on disk; ``fastmath`` stays
    off so the jitted and numpy paths agree to the last bit where possible.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_JIT else "numpy"
