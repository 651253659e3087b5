"""Backend selection for the Monte Carlo kernels.

Set ``HYBRIDCARE_NUMBA=0`` before import to force the pure-numpy path.
"""
import os

_flag = os.environ.get("HYBRIDCARE_NUMBA", "1").strip().lower()
_wanted = _flag not in ("0", "false", "no", "off")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = _wanted and HAVE_NUMBA
BACKEND = "numba" if USE_NUMBA else "numpy"

numba_opts = {
    "nogil": True,
    "cache": True,
    "fastmath": False,
    "error_model": "numpy",
}


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(**numba_opts)(func)
