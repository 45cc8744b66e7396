"""Kernel backend selection.

The hot kernels (tiled GEMM, fused score-prune-compress, sparse softmax,
SpMM gather) exist twice: numba-jitted loops and a pure-numpy fallback.
Set ``NMATTN_BACKEND=numpy`` or ``NMATTN_BACKEND=numba`` to force one; the
default is numba when it imports, numpy otherwise. Both backends follow
the same per-element accumulation order, so results agree bitwise for the
multiply kernels; transcendental-heavy kernels may differ in the last ulp
between backends but every bitwise contract holds within a backend.
"""

from __future__ import annotations

import importlib
import os

_ENV_VAR = "NMATTN_BACKEND"
_VALID = ("numba", "numpy")

_active: str | None = None
_module = None


def _numba_available() -> bool:
    try:
        importlib.import_module("numba")
    except ImportError:
        return False
    return True


def _resolve_default() -> str:
    requested = os.environ.get(_ENV_VAR, "").strip().lower()
    if requested:
        if requested not in _VALID:
            raise ValueError(
                f"{_ENV_VAR}={requested!r} is not a valid backend; pick one of {_VALID}"
            )
        if requested == "numba" and not _numba_available():
            raise ImportError(f"{_ENV_VAR}=numba requested but numba is not importable")
        return requested
    return "numba" if _numba_available() else "numpy"


def set_backend(name: str) -> None:
    """Switch the kernel backend ('numba' or 'numpy')."""
    global _active, _module
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}; pick one of {_VALID}")
    if name == "numba" and not _numba_available():
        raise ImportError("numba backend requested but numba is not importable")
    _active = name
    _module = importlib.import_module(f".{'_kernels_' + name}", __package__)


def active_backend() -> str:
    """Name of the backend currently serving kernel calls."""
    if _active is None:
        set_backend(_resolve_default())
    return _active  # type: ignore[return-value]


def kernels():
    """Module implementing the kernel API for the active backend."""
    if _module is None:
        set_backend(_resolve_default())
    return _module
