"""Backend switch for the hot kernels.

Kernels come in pairs: a numba ``@njit`` loop version and a vectorized
pure-numpy version.  ``EXFLOW_BACKEND=numpy`` (or ``EXFLOW_DISABLE_NUMBA=1``)
forces the numpy path; otherwise numba is used when importable.
"""

import os

# the bundled TBB is too old for numba; pick a layer that needs no extras
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False


def _wants_numpy():
    backend = os.environ.get("EXFLOW_BACKEND", "").strip().lower()
    if backend == "numpy":
        return True
    return os.environ.get("EXFLOW_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")


USE_NUMBA = HAVE_NUMBA and not _wants_numpy()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Compilation is always attempted when numba exists, so both backends stay
    testable in one process; ``select`` decides which one callers get.
    """
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def select(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n):
    """Bound numba's thread pool; no-op on the numpy backend."""
    if HAVE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
