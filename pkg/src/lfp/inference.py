"""Patch-based crop-and-stitch inference.

Large images are tiled into inner windows of side ``s``; each tile is
evaluated together with a 2s x 2s context window centered on it, so the
network sees four times the area of the patch it predicts. Context
windows that leave the image are filled by reflect-101 padding (labels
are reflected for trimaps). Tile outputs are stitched back, optionally
blended, and the result is clamped to the trimap's known regions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .core import TRIMAP_FG, TRIMAP_UNKNOWN, clamp_by_trimap, validate_trimap
from .errors import ConfigError, DimensionError, GeometryError
from .kernels import mirror_indices


@dataclass(frozen=True)
class PatchGeometry:
    """One tile: inner window, its 2x context window, and padding info.

    ``pad`` is the per-edge width (left, top, right, bottom) by which the
    context window leaves the image; ``inner_pad`` the same for the inner
    window (nonzero only when the image is smaller than the tile).
    """

    inner_x: int
    inner_y: int
    inner_side: int
    image_h: int
    image_w: int

    @property
    def context_side(self) -> int:
        return 2 * self.inner_side

    @property
    def context_x(self) -> int:
        return self.inner_x - self.inner_side // 2

    @property
    def context_y(self) -> int:
        return self.inner_y - self.inner_side // 2

    @property
    def pad(self) -> tuple[int, int, int, int]:
        s2 = self.context_side
        left = max(0, -self.context_x)
        top = max(0, -self.context_y)
        right = max(0, self.context_x + s2 - self.image_w)
        bottom = max(0, self.context_y + s2 - self.image_h)
        return (left, top, right, bottom)

    @property
    def inner_pad(self) -> tuple[int, int, int, int]:
        s = self.inner_side
        left = max(0, -self.inner_x)
        top = max(0, -self.inner_y)
        right = max(0, self.inner_x + s - self.image_w)
        bottom = max(0, self.inner_y + s - self.image_h)
        return (left, top, right, bottom)

    def __post_init__(self):
        if self.inner_side < 1 or self.inner_side % 2:
            raise GeometryError(f"inner side must be positive and even, got {self.inner_side}")


@dataclass(frozen=True)
class ContextPair:
    """Context image/trimap window bound to its inner patch geometry."""

    image: np.ndarray
    trimap: np.ndarray
    geometry: PatchGeometry


@dataclass
class InferenceConfig:
    inner_side: int = 1024
    overlap: int = 0
    blend: str = "none"  # none | linear
    pad_mode: str = "reflect"  # reflect | replicate
    tta: bool = False
    skip_known_tiles: bool = True

    def __post_init__(self):
        if self.inner_side < 8 or self.inner_side % 8:
            raise ConfigError(f"inference.inner_side must be a positive multiple of 8, got {self.inner_side}")
        if not 0 <= self.overlap < self.inner_side:
            raise ConfigError(f"inference.overlap must be in [0, inner_side), got {self.overlap}")
        if self.blend not in ("none", "linear"):
            raise ConfigError(f"inference.blend must be 'none' or 'linear', got {self.blend!r}")
        if self.pad_mode not in ("reflect", "replicate"):
            raise ConfigError(f"inference.pad_mode must be 'reflect' or 'replicate', got {self.pad_mode!r}")


class TileModel(Protocol):
    """Per-tile predictor; the network adapter and test dummies implement this."""

    def predict_tile(self, inner_image, inner_trimap, context_image, context_trimap):
        """Return (alpha s x s, fg s x s x 3, bg s x s x 3) for the inner window."""
        ...


def _window_indices(start: int, side: int, n: int, pad_mode: str) -> np.ndarray:
    if pad_mode == "reflect":
        return mirror_indices(start, start + side, n)
    idx = np.arange(start, start + side, dtype=np.int64)
    return np.clip(idx, 0, n - 1)


def _axis_positions(n: int, side: int, stride: int) -> list[int]:
    if n <= side:
        return [0]
    positions = list(range(0, n - side, stride))
    positions.append(n - side)
    return positions


def plan_tiles(h: int, w: int, cfg: InferenceConfig) -> list[PatchGeometry]:
    """Tile an h x w image with inner windows of side cfg.inner_side.

    The last row/column is shifted inward so tiles never exceed bounds;
    images smaller than the tile yield one padded tile. The union of the
    inner windows covers the whole image.
    """
    if h < 1 or w < 1:
        raise GeometryError(f"image dims must be positive, got {h}x{w}")
    s = cfg.inner_side
    stride = s - cfg.overlap
    return [
        PatchGeometry(inner_x=x, inner_y=y, inner_side=s, image_h=h, image_w=w)
        for y in _axis_positions(h, s, stride)
        for x in _axis_positions(w, s, stride)
    ]


def extract_context(image: np.ndarray, trimap: np.ndarray, g: PatchGeometry,
                    pad_mode: str = "reflect") -> ContextPair:
    """Cut the 2s x 2s context window centered on the inner window."""
    if image.shape[:2] != (g.image_h, g.image_w) or trimap.shape != (g.image_h, g.image_w):
        raise DimensionError("image/trimap shapes do not match the tile geometry")
    rows = _window_indices(g.context_y, g.context_side, g.image_h, pad_mode)
    cols = _window_indices(g.context_x, g.context_side, g.image_w, pad_mode)
    return ContextPair(image=image[np.ix_(rows, cols)],
                       trimap=trimap[np.ix_(rows, cols)],
                       geometry=g)


def extract_inner(arr: np.ndarray, g: PatchGeometry, pad_mode: str = "reflect") -> np.ndarray:
    """Cut the inner s x s window (padded the same way as the context)."""
    rows = _window_indices(g.inner_y, g.inner_side, g.image_h, pad_mode)
    cols = _window_indices(g.inner_x, g.inner_side, g.image_w, pad_mode)
    return arr[np.ix_(rows, cols)]


def _ramp_weights(positions: list[int], side: int) -> list[np.ndarray]:
    """Per-tile 1-D blend weights; overlapping ramps of adjacent tiles sum to 1."""
    weights = []
    for i, p in enumerate(positions):
        w = np.ones(side, dtype=np.float64)
        if i > 0:
            o = positions[i - 1] + side - p
            if o > 0:
                o = min(o, side)
                w[:o] = np.arange(1, o + 1, dtype=np.float64) / (o + 1)
        if i + 1 < len(positions):
            o = p + side - positions[i + 1]
            if o > 0:
                o = min(o, side)
                w[side - o:] = np.arange(o, 0, -1, dtype=np.float64) / (o + 1)
        weights.append(w)
    return weights


def _partition_bounds(positions: list[int], side: int, n: int) -> list[tuple[int, int]]:
    """Write windows that partition [0, n) across the tiles of one axis."""
    bounds = []
    for i, p in enumerate(positions):
        stop = positions[i + 1] if i + 1 < len(positions) else min(p + side, n)
        bounds.append((p, stop))
    return bounds


class _TileEvaluation:
    """Evaluates one tile, bisecting once on out-of-memory."""

    def __init__(self, image, trimap, model, pad_mode):
        self.image = image
        self.trimap = trimap
        self.model = model
        self.pad_mode = pad_mode

    def __call__(self, g: PatchGeometry, allow_bisect: bool = True):
        try:
            return self._run(g)
        except (MemoryError, RuntimeError) as exc:
            oom = isinstance(exc, MemoryError) or "out of memory" in str(exc).lower()
            if not (oom and allow_bisect and g.inner_side >= 16 and g.inner_side % 16 == 0):
                raise
        s2 = g.inner_side // 2
        alpha = np.empty((g.inner_side, g.inner_side))
        fg = np.empty((g.inner_side, g.inner_side, 3))
        bg = np.empty((g.inner_side, g.inner_side, 3))
        for dy in (0, s2):
            for dx in (0, s2):
                sub = PatchGeometry(inner_x=g.inner_x + dx, inner_y=g.inner_y + dy,
                                    inner_side=s2, image_h=g.image_h, image_w=g.image_w)
                a, f, b = self(sub, allow_bisect=False)
                alpha[dy:dy + s2, dx:dx + s2] = a
                fg[dy:dy + s2, dx:dx + s2] = f
                bg[dy:dy + s2, dx:dx + s2] = b
        return alpha, fg, bg

    def _run(self, g: PatchGeometry):
        ctx = extract_context(self.image, self.trimap, g, self.pad_mode)
        s = g.inner_side
        c0 = s // 2
        inner_img = ctx.image[c0:c0 + s, c0:c0 + s]
        inner_tri = ctx.trimap[c0:c0 + s, c0:c0 + s]
        alpha, fg, bg = self.model.predict_tile(inner_img, inner_tri, ctx.image, ctx.trimap)
        alpha = np.asarray(alpha, dtype=np.float64)
        fg = np.asarray(fg, dtype=np.float64)
        bg = np.asarray(bg, dtype=np.float64)
        if alpha.shape != (s, s) or fg.shape != (s, s, 3) or bg.shape != (s, s, 3):
            raise DimensionError(f"model returned wrong shapes for a {s}-px tile: "
                                 f"{alpha.shape}, {fg.shape}, {bg.shape}")
        return alpha, fg, bg


def run_tiled(image: np.ndarray, trimap: np.ndarray, model: TileModel,
              cfg: InferenceConfig, clamp: bool = True):
    """Tile, evaluate, stitch. Returns (alpha, fg, bg) at image resolution."""
    validate_trimap(trimap)
    if image.shape[:2] != trimap.shape:
        raise DimensionError(f"image {image.shape} vs trimap {trimap.shape}")
    h, w = trimap.shape
    s = cfg.inner_side
    xs = _axis_positions(w, s, s - cfg.overlap)
    ys = _axis_positions(h, s, s - cfg.overlap)

    if cfg.blend == "linear":
        wx = _ramp_weights(xs, s)
        wy = _ramp_weights(ys, s)
    else:
        bx = _partition_bounds(xs, s, w)
        by = _partition_bounds(ys, s, h)

    alpha_acc = np.zeros((h, w), dtype=np.float64)
    fg_acc = np.zeros((h, w, 3), dtype=np.float64)
    bg_acc = np.zeros((h, w, 3), dtype=np.float64)
    weight_acc = np.zeros((h, w), dtype=np.float64)
    evaluate = _TileEvaluation(image, trimap, model, cfg.pad_mode)
    n_evals = 0

    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            g = PatchGeometry(inner_x=x, inner_y=y, inner_side=s, image_h=h, image_w=w)
            y0, y1 = max(0, y), min(h, y + s)
            x0, x1 = max(0, x), min(w, x + s)
            tri_in = trimap[y0:y1, x0:x1]
            if cfg.skip_known_tiles and not (tri_in == TRIMAP_UNKNOWN).any():
                a_tile = (extract_inner(trimap, g, cfg.pad_mode) == TRIMAP_FG).astype(np.float64)
                f_tile = b_tile = extract_inner(image, g, cfg.pad_mode)
            else:
                a_tile, f_tile, b_tile = evaluate(g)
                n_evals += 1

            if cfg.blend == "linear":
                wmap = np.outer(wy[iy], wx[ix])
                ty0, tx0 = y0 - y, x0 - x
                sub = (slice(ty0, ty0 + (y1 - y0)), slice(tx0, tx0 + (x1 - x0)))
                dst = (slice(y0, y1), slice(x0, x1))
            else:
                py0, py1 = by[iy]
                px0, px1 = bx[ix]
                sub = (slice(py0 - y, py1 - y), slice(px0 - x, px1 - x))
                dst = (slice(py0, py1), slice(px0, px1))
                wmap = np.ones((s, s), dtype=np.float64)
            wsub = wmap[sub]
            alpha_acc[dst] += wsub * a_tile[sub]
            fg_acc[dst] += wsub[..., None] * f_tile[sub]
            bg_acc[dst] += wsub[..., None] * b_tile[sub]
            weight_acc[dst] += wsub

    alpha = alpha_acc / weight_acc
    fg = fg_acc / weight_acc[..., None]
    bg = bg_acc / weight_acc[..., None]
    if clamp:
        alpha = clamp_by_trimap(alpha, trimap)
    return alpha, fg, bg


_TTA_TRANSFORMS: list[tuple[Callable, Callable]] = [
    (lambda a: a, lambda a: a),
    (lambda a: a[:, ::-1], lambda a: a[:, ::-1]),
    (lambda a: a[::-1, :], lambda a: a[::-1, :]),
    (lambda a: a[::-1, ::-1], lambda a: a[::-1, ::-1]),
]


def run_tta(image: np.ndarray, trimap: np.ndarray, model: TileModel,
            cfg: InferenceConfig) -> np.ndarray:
    """Average tiled predictions over {id, h-flip, v-flip, 180} transforms."""
    total = np.zeros(trimap.shape, dtype=np.float64)
    for fwd, inv in _TTA_TRANSFORMS:
        a, _, _ = run_tiled(np.ascontiguousarray(fwd(image)),
                            np.ascontiguousarray(fwd(trimap)), model, cfg)
        total += inv(a)
    return clamp_by_trimap(total / len(_TTA_TRANSFORMS), trimap)
