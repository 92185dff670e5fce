"""Backend selection for the compiled kernels.

Set ``LPREWARD_NUMBA=0`` to force the pure-numpy kernels. The flag is read
once at import time; the numba path is also skipped when numba is missing.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("LPREWARD_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
