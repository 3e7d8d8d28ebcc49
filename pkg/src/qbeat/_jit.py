"""Backend switch: numba kernels unless QBEAT_DISABLE_NUMBA is set (or numba is missing)."""
import os

_flag = os.environ.get("QBEAT_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and not DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def jit(fn):
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn
