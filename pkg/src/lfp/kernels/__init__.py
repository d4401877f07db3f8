"""Hot kernels with a compiled core and a pure-NumPy fallback.

The compiled extension is preferred when importable; set
``LFP_KERNEL_BACKEND=python`` to force the fallback (used by the
benchmark and the equivalence tests).
"""

from __future__ import annotations

import importlib
import os

from . import fallback
from .fallback import mirror_indices

_impl = fallback
if os.environ.get("LFP_KERNEL_BACKEND", "") != "python":
    try:
        _impl = importlib.import_module("lfp.kernels._native")
    except ImportError:
        _impl = fallback


def backend() -> str:
    """Name of the kernel backend in use: 'native' or 'python'."""
    return "native" if _impl is not fallback else "python"


def edt_sq(mask):
    """Exact squared Euclidean distance to the nearest nonzero pixel."""
    return _impl.edt_sq(mask)


def erode_binary(mask, ksize: int):
    """Binary erosion with a square element and reflect-101 border."""
    return _impl.erode_binary(mask, ksize)


__all__ = ["backend", "edt_sq", "erode_binary", "mirror_indices", "fallback"]
