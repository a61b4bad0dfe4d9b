"""Kernel backend selection: numba-jitted loops or a numpy/scipy fallback.

The hot inner loops (time marching of the evolution scheme and the
column march of the triangle kernel solver) exist in two equivalent
implementations.  The active one is chosen by the ``XFORMLAB_BACKEND``
environment variable:

* ``auto``  (default) use numba when importable, else numpy
* ``numba`` force the jitted path (falls back with a warning if numba
  is missing)
* ``numpy`` force the pure numpy/scipy path

``set_backend`` switches at runtime; ``benchmarks/bench_backends.py``
times both paths against each other.
"""

from __future__ import annotations

import os
import warnings

VALID_BACKENDS = ("auto", "numba", "numpy")

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return decorator


def _resolve(requested: str) -> str:
    requested = requested.strip().lower()
    if requested not in VALID_BACKENDS:
        raise ValueError(
            f"unknown backend {requested!r}; expected one of {VALID_BACKENDS}"
        )
    if requested == "numpy":
        return "numpy"
    if requested == "numba" and not NUMBA_AVAILABLE:
        warnings.warn("numba requested but not importable; using numpy backend")
        return "numpy"
    return "numba" if NUMBA_AVAILABLE else "numpy"


_active = _resolve(os.environ.get("XFORMLAB_BACKEND", "auto"))


def active_backend() -> str:
    """Name of the backend currently used by the hot kernels."""
    return _active


def set_backend(name: str) -> str:
    """Switch the kernel backend at runtime; returns the resolved name."""
    global _active
    _active = _resolve(name)
    return _active
