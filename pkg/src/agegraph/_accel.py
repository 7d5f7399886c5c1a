"""Backend selection for the hot kernels.

``AGEGRAPH_BACKEND=numpy`` forces the pure-numpy code paths; the default is
``numba`` when it can be imported. The choice is fixed at import time.
"""

import os

# the bundled TBB is too old for numba; probing it only emits a warning
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    prange = range


def _select_backend() -> str:
    requested = os.environ.get("AGEGRAPH_BACKEND", "").strip().lower()
    if requested in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if requested not in ("numba", "numpy"):
        raise ValueError(f"AGEGRAPH_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        raise ImportError("AGEGRAPH_BACKEND=numba but numba is not installed")
    return requested


BACKEND = _select_backend()

__all__ = ["BACKEND", "HAVE_NUMBA", "njit", "prange"]
