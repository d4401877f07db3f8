"""Trimap-based natural image matting with long-range context propagation."""

__version__ = "0.1.0"

from .core import (
    TRIMAP_BG,
    TRIMAP_FG,
    TRIMAP_UNKNOWN,
    RegionMasks,
    Sample,
    clamp_by_trimap,
    composite,
    encode_trimap,
    region_masks,
)

__all__ = [
    "__version__",
    "TRIMAP_BG",
    "TRIMAP_FG",
    "TRIMAP_UNKNOWN",
    "RegionMasks",
    "Sample",
    "clamp_by_trimap",
    "composite",
    "encode_trimap",
    "region_masks",
]
