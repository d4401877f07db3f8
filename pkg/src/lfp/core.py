"""Domain types, the compositing equation, and trimap encodings.

Conventions used across the package:

- Images and color maps are float arrays of shape (H, W, 3) in [0, 1].
- Alpha mattes are float arrays of shape (H, W) in [0, 1].
- Trimaps are uint8 arrays of shape (H, W) whose only legal values are
  0 (background), 128 (unknown) and 255 (foreground) — the same codes
  the PNG files use.

All operations are pure functions; arrays are never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DataError, DimensionError

TRIMAP_BG = 0
TRIMAP_UNKNOWN = 128
TRIMAP_FG = 255

_VALID_TRIMAP_CODES = (TRIMAP_BG, TRIMAP_UNKNOWN, TRIMAP_FG)


@dataclass(frozen=True)
class RegionMasks:
    """Boolean masks derived from a trimap."""

    unknown: np.ndarray
    fg_or_unknown: np.ndarray
    bg_or_unknown: np.ndarray


@dataclass(frozen=True)
class Sample:
    """One training/eval unit: image, trimap and the three ground truths."""

    image: np.ndarray
    trimap: np.ndarray
    alpha: np.ndarray
    fg: np.ndarray
    bg: np.ndarray

    def validate(self) -> "Sample":
        h, w = self.alpha.shape
        for name in ("image", "fg", "bg"):
            arr = getattr(self, name)
            if arr.shape != (h, w, 3):
                raise DimensionError(f"{name} shape {arr.shape} != {(h, w, 3)}")
        if self.trimap.shape != (h, w):
            raise DimensionError(f"trimap shape {self.trimap.shape} != {(h, w)}")
        validate_trimap(self.trimap)
        return self


def validate_trimap(trimap: np.ndarray) -> np.ndarray:
    if trimap.ndim != 2:
        raise DataError(f"trimap must be 2-D, got shape {trimap.shape}")
    bad = ~np.isin(trimap, _VALID_TRIMAP_CODES)
    if bad.any():
        values = np.unique(np.asarray(trimap)[bad])
        raise DataError(f"trimap contains invalid codes {values.tolist()}; "
                        f"expected 0 (bg), 128 (unknown), 255 (fg)")
    return trimap


def composite(fg: np.ndarray, bg: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Blend foreground over background: out = alpha*fg + (1-alpha)*bg."""
    fg = np.asarray(fg, dtype=np.float64)
    bg = np.asarray(bg, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if fg.shape != bg.shape:
        raise DimensionError(f"fg shape {fg.shape} != bg shape {bg.shape}")
    if alpha.shape != fg.shape[:2]:
        raise DimensionError(f"alpha shape {alpha.shape} != spatial shape {fg.shape[:2]}")
    a = alpha[..., None]
    return a * fg + (1.0 - a) * bg


def encode_trimap(trimap: np.ndarray, dtype=np.float32) -> np.ndarray:
    """One-hot encode a trimap as a (3, H, W) map: fg, bg, unknown."""
    validate_trimap(trimap)
    planes = np.stack([
        trimap == TRIMAP_FG,
        trimap == TRIMAP_BG,
        trimap == TRIMAP_UNKNOWN,
    ])
    return planes.astype(dtype)


def region_masks(trimap: np.ndarray) -> RegionMasks:
    """Unknown / fg-or-unknown / bg-or-unknown masks of a trimap."""
    validate_trimap(trimap)
    unknown = trimap == TRIMAP_UNKNOWN
    return RegionMasks(
        unknown=unknown,
        fg_or_unknown=unknown | (trimap == TRIMAP_FG),
        bg_or_unknown=unknown | (trimap == TRIMAP_BG),
    )


def clamp_by_trimap(alpha: np.ndarray, trimap: np.ndarray) -> np.ndarray:
    """Force alpha to 1 on known foreground and 0 on known background."""
    alpha = np.asarray(alpha)
    if alpha.shape != trimap.shape:
        raise DimensionError(f"alpha shape {alpha.shape} != trimap shape {trimap.shape}")
    validate_trimap(trimap)
    out = alpha.copy()
    out[trimap == TRIMAP_FG] = 1.0
    out[trimap == TRIMAP_BG] = 0.0
    return out


# ---------------------------------------------------------------------------
# PNG I/O. Images: 8-bit RGB. Alphas: 8-bit grayscale (16-bit accepted).
# Trimaps: grayscale with codes 0/128/255; anything else is rejected.
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> np.ndarray:
    img = PILImage.open(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def load_alpha(path: str | Path) -> np.ndarray:
    img = PILImage.open(path)
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[..., 0]
    if arr.dtype == np.uint16:
        return arr.astype(np.float64) / 65535.0
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    if arr.dtype == np.int32:  # PIL mode "I" for some 16-bit PNGs
        return arr.astype(np.float64) / 65535.0
    raise DataError(f"unsupported alpha dtype {arr.dtype} in {path}")


def load_trimap(path: str | Path) -> np.ndarray:
    img = PILImage.open(path)
    if img.mode != "L":
        img = img.convert("L")
    arr = np.asarray(img, dtype=np.uint8)
    validate_trimap(arr)
    return arr


def save_image(path: str | Path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path)


def save_alpha(path: str | Path, alpha: np.ndarray) -> None:
    arr = np.clip(np.asarray(alpha, dtype=np.float64), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(path)


def save_trimap(path: str | Path, trimap: np.ndarray) -> None:
    validate_trimap(trimap)
    PILImage.fromarray(trimap.astype(np.uint8), mode="L").save(path)
