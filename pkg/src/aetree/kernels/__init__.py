"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time. Set ``AETREE_DISABLE_NUMBA=1`` to
force the numpy path (also used automatically when numba is not importable).
Both backends stay importable through :func:`get_backend` for tests and
benchmarks.
"""
import importlib
import os

from . import _numpy

_FLAG = "AETREE_DISABLE_NUMBA"


def _numba_requested():
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def get_backend(name):
    """Return the kernel module for ``"numba"`` or ``"numpy"``."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        return importlib.import_module(f"{__name__}._numba")
    raise ValueError(f"unknown kernel backend {name!r}")


_impl = _numpy
BACKEND = "numpy"
if _numba_requested():
    try:
        _impl = get_backend("numba")
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass

normalize_angle = _impl.normalize_angle
affine = _impl.affine
lstm_pointwise = _impl.lstm_pointwise
min_sq_dists = _impl.min_sq_dists
convex_hull = _impl.convex_hull
mbr = _impl.mbr
clip_area = _impl.clip_area

__all__ = [
    "BACKEND", "get_backend", "normalize_angle", "affine", "lstm_pointwise",
    "min_sq_dists", "convex_hull", "mbr", "clip_area",
]
