"""Backend selection for the hot kernels.

Per-chain kernels are numba ``@njit`` functions; every engine driver also has
a vectorized pure-numpy path.  ``DIFFRESTORE_DISABLE_NUMBA=1`` (or a missing
numba) makes the numpy path the default.  Drivers accept an explicit
``backend=`` argument so both paths can be exercised in one process.
"""

import os

try:
    import numba as nb

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None
    NUMBA_AVAILABLE = False

BACKENDS = ("numba", "numpy")


def njit(func=None, **kwargs):
    """``numba.njit`` with cache/nogil on; identity when numba is missing."""
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)

    def wrap(f):
        if not NUMBA_AVAILABLE:
            return f
        return nb.njit(**kwargs)(f)

    return wrap(func) if func is not None else wrap


def default_backend():
    flag = os.environ.get("DIFFRESTORE_DISABLE_NUMBA", "").strip().lower()
    if NUMBA_AVAILABLE and flag in ("", "0", "false", "no"):
        return "numba"
    return "numpy"


def resolve_backend(backend=None):
    backend = backend or default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
