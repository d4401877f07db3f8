"""Synthetic composite generation and training-time augmentation.

Training samples are built by compositing a foreground asset (color map +
alpha) over a background image, synthesizing a trimap from the ground-truth
alpha by random erosion/dilation, and cropping an inner patch together with
its 2x context window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import (
    TRIMAP_BG,
    TRIMAP_FG,
    TRIMAP_UNKNOWN,
    Sample,
    composite,
    save_alpha,
    save_image,
    save_trimap,
    load_alpha,
    load_image,
)
from .errors import ConfigError, DataError, ParameterError
from .inference import PatchGeometry, extract_context
from .kernels import erode_binary, mirror_indices

ALPHA_EPS = 1.0 / 255.0


@dataclass(frozen=True)
class FgAsset:
    """Foreground color map plus its alpha matte."""

    color: np.ndarray
    alpha: np.ndarray
    name: str = ""

    def __post_init__(self):
        if self.color.shape[:2] != self.alpha.shape:
            raise DataError(f"fg asset {self.name!r}: color {self.color.shape} "
                            f"does not match alpha {self.alpha.shape}")


@dataclass(frozen=True)
class BgAsset:
    image: np.ndarray
    name: str = ""


@dataclass
class AugmentConfig:
    crop_sizes: tuple[int, ...] = (768, 640, 512, 448, 320)
    trimap_kernel_range: tuple[int, int] = (3, 35)
    fg_to_unknown_prob: float = 0.1
    rotation_deg: tuple[float, float] = (-15.0, 15.0)
    scale_range: tuple[float, float] = (0.8, 1.25)
    shear_deg: tuple[float, float] = (-10.0, 10.0)
    flip_prob: float = 0.5
    saturation_range: tuple[float, float] = (0.7, 1.3)
    grayscale_prob: float = 0.1
    gamma_range: tuple[float, float] = (0.7, 1.5)
    contrast_range: tuple[float, float] = (0.8, 1.2)
    rng_seed: int = 0

    def __post_init__(self):
        for s in self.crop_sizes:
            if s <= 0 or s % 2:
                raise ConfigError(f"crop sizes must be positive and even, got {s}")
        lo, hi = self.trimap_kernel_range
        if not (1 <= lo <= hi <= 99):
            raise ConfigError(f"trimap kernel range must satisfy 1 <= lo <= hi <= 99, got {lo}..{hi}")
        for name in ("fg_to_unknown_prob", "flip_prob", "grayscale_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p}")

    def identity(self) -> "AugmentConfig":
        """Copy with all augmentation draws collapsed to the identity."""
        return AugmentConfig(
            crop_sizes=self.crop_sizes,
            trimap_kernel_range=self.trimap_kernel_range,
            fg_to_unknown_prob=self.fg_to_unknown_prob,
            rotation_deg=(0.0, 0.0), scale_range=(1.0, 1.0), shear_deg=(0.0, 0.0),
            flip_prob=0.0, saturation_range=(1.0, 1.0), grayscale_prob=0.0,
            gamma_range=(1.0, 1.0), contrast_range=(1.0, 1.0), rng_seed=self.rng_seed)


def synth_trimap(alpha: np.ndarray, erode_k: int, dilate_k: int) -> np.ndarray:
    """Trimap from ground-truth alpha: eroded fg / eroded bg / unknown rest.

    The background erosion kernel plays the role of dilating the unknown
    band outward. Borders are handled by reflection.
    """
    for k in (erode_k, dilate_k):
        if k < 1 or k % 2 == 0:
            raise ParameterError(f"morphology kernels must be odd and >= 1, got {k}")
    alpha = np.asarray(alpha, dtype=np.float64)
    fg = erode_binary((alpha >= 1.0 - ALPHA_EPS).astype(np.uint8), erode_k)
    bg = erode_binary((alpha <= ALPHA_EPS).astype(np.uint8), dilate_k)
    out = np.full(alpha.shape, TRIMAP_UNKNOWN, dtype=np.uint8)
    out[fg == 1] = TRIMAP_FG
    out[bg == 1] = TRIMAP_BG
    return out


def fg_regions_to_unknown(trimap: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """With probability p, relabel every known-fg pixel as unknown."""
    if rng.random() >= p:
        return trimap
    out = trimap.copy()
    out[out == TRIMAP_FG] = TRIMAP_UNKNOWN
    return out


def _luma(rgb: np.ndarray) -> np.ndarray:
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def _affine_matrix(rot_deg, scale, shear_deg, flip, h, w):
    th = np.deg2rad(rot_deg)
    sh = np.deg2rad(shear_deg)
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    shear = np.array([[1.0, np.tan(sh)], [0.0, 1.0]])
    fl = np.diag([1.0, -1.0 if flip else 1.0])
    m = rot @ shear @ fl * scale
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    # output coord o maps to input coord m_inv @ (o - c) + c
    m_inv = np.linalg.inv(m)
    offset = center - m_inv @ center
    return m, m_inv, offset


def augment(asset: FgAsset, rng: np.random.Generator, cfg: AugmentConfig) -> FgAsset:
    """Geometric + photometric augmentation; alpha gets only the geometry."""
    h, w = asset.alpha.shape
    for _ in range(16):
        rot = rng.uniform(*cfg.rotation_deg)
        scale = rng.uniform(*cfg.scale_range)
        shear = rng.uniform(*cfg.shear_deg)
        flip = rng.random() < cfg.flip_prob
        m, m_inv, offset = _affine_matrix(rot, scale, shear, flip, h, w)
        if abs(np.linalg.det(m)) >= 1e-6:
            break
    else:
        raise ParameterError("could not draw a non-degenerate affine transform")

    def warp(plane):
        return ndimage.affine_transform(plane, m_inv, offset=offset, order=1, mode="mirror")

    color = np.stack([warp(asset.color[..., c]) for c in range(3)], axis=-1)
    alpha = warp(asset.alpha)

    sat = rng.uniform(*cfg.saturation_range)
    gray = _luma(color)[..., None]
    color = gray + sat * (color - gray)
    if rng.random() < cfg.grayscale_prob:
        color = np.repeat(gray, 3, axis=-1)
    gamma = rng.uniform(*cfg.gamma_range)
    color = np.clip(color, 0.0, 1.0) ** gamma
    contrast = rng.uniform(*cfg.contrast_range)
    color = 0.5 + contrast * (color - 0.5)

    return FgAsset(color=np.clip(color, 0.0, 1.0),
                   alpha=np.clip(alpha, 0.0, 1.0),
                   name=asset.name)


def _resize(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = plane.shape[:2]
    if (h, w) == (out_h, out_w):
        return plane
    zoom = (out_h / h, out_w / w) + (1,) * (plane.ndim - 2)
    out = ndimage.zoom(plane, zoom, order=3, mode="mirror", grid_mode=True)
    # grid_mode zoom can land one pixel off on exotic ratios; trim or pad
    out = out[:out_h, :out_w]
    if out.shape[:2] != (out_h, out_w):
        pad = [(0, out_h - out.shape[0]), (0, out_w - out.shape[1])] + [(0, 0)] * (plane.ndim - 2)
        out = np.pad(out, pad, mode="edge")
    return np.clip(out, 0.0, 1.0)


def _draw_odd_kernel(rng: np.random.Generator, lo: int, hi: int) -> int:
    odds = np.arange(lo if lo % 2 else lo + 1, hi + 1, 2)
    if len(odds) == 0:
        raise ConfigError(f"no odd kernel sizes in range {lo}..{hi}")
    return int(rng.choice(odds))


def make_training_sample(fg: FgAsset, bg: BgAsset, rng: np.random.Generator,
                         cfg: AugmentConfig):
    """Build one (inner Sample, ContextPair, context ground-truth alpha) unit."""
    if not (np.asarray(fg.alpha) > 0).any():
        raise DataError(f"fg asset {fg.name!r} has empty alpha support")
    fg = augment(fg, rng, cfg)
    s = int(rng.choice(np.asarray(cfg.crop_sizes)))

    scene_bg = np.asarray(bg.image, dtype=np.float64)
    if min(scene_bg.shape[:2]) < 2 * s:
        f = 2 * s / min(scene_bg.shape[:2])
        scene_bg = _resize(scene_bg, int(np.ceil(scene_bg.shape[0] * f)),
                           int(np.ceil(scene_bg.shape[1] * f)))
    h, w = scene_bg.shape[:2]
    scene_fg = _resize(fg.color, h, w)
    scene_alpha = _resize(fg.alpha, h, w)
    scene_img = composite(scene_fg, scene_bg, scene_alpha)

    erode_k = _draw_odd_kernel(rng, *cfg.trimap_kernel_range)
    dilate_k = _draw_odd_kernel(rng, *cfg.trimap_kernel_range)
    scene_tri = synth_trimap(scene_alpha, erode_k, dilate_k)
    scene_tri = fg_regions_to_unknown(scene_tri, cfg.fg_to_unknown_prob, rng)

    unknown = np.argwhere(scene_tri == TRIMAP_UNKNOWN)
    if len(unknown):
        cy, cx = unknown[rng.integers(len(unknown))]
    else:
        cy, cx = rng.integers(h), rng.integers(w)
    y = int(np.clip(cy - s // 2, 0, h - s))
    x = int(np.clip(cx - s // 2, 0, w - s))

    g = PatchGeometry(inner_x=x, inner_y=y, inner_side=s, image_h=h, image_w=w)
    inner = Sample(
        image=scene_img[y:y + s, x:x + s],
        trimap=scene_tri[y:y + s, x:x + s],
        alpha=scene_alpha[y:y + s, x:x + s],
        fg=scene_fg[y:y + s, x:x + s],
        bg=scene_bg[y:y + s, x:x + s],
    ).validate()
    context = extract_context(scene_img, scene_tri, g)
    rows = mirror_indices(g.context_y, g.context_y + 2 * s, h)
    cols = mirror_indices(g.context_x, g.context_x + 2 * s, w)
    context_alpha_gt = scene_alpha[np.ix_(rows, cols)]
    return inner, context, context_alpha_gt


# ---------------------------------------------------------------------------
# Synthetic assets for smoke training, demos and tests.
# ---------------------------------------------------------------------------

def synthetic_foreground(rng: np.random.Generator, size: int = 128) -> FgAsset:
    """Soft-edged random blob: solid core, semi-transparent rim, empty outside."""
    yy, xx = np.mgrid[0:size, 0:size]
    cy, cx = rng.uniform(0.35, 0.65, 2) * size
    radius = rng.uniform(size / 5, size / 3)
    band = rng.uniform(2.0, size / 8)
    dist = np.hypot(yy - cy, xx - cx)
    wobble = ndimage.gaussian_filter(rng.standard_normal((size, size)), size / 16)
    wobble *= radius / (4 * max(np.abs(wobble).max(), 1e-9))
    alpha = np.clip((radius - dist + wobble) / band, 0.0, 1.0)
    base = rng.uniform(0.2, 0.9, 3)
    texture = ndimage.gaussian_filter(rng.random((size, size, 3)), (size / 12, size / 12, 0))
    color = np.clip(base[None, None] * 0.7 + texture * 0.6, 0.0, 1.0)
    return FgAsset(color=color, alpha=alpha, name="synthetic-fg")


def synthetic_background(rng: np.random.Generator, size: int = 256) -> BgAsset:
    img = ndimage.gaussian_filter(rng.random((size, size, 3)), (size / 10, size / 10, 0))
    lo, hi = img.min(), img.max()
    img = (img - lo) / max(hi - lo, 1e-9)
    return BgAsset(image=img, name="synthetic-bg")


# ---------------------------------------------------------------------------
# On-disk datasets: fg/ + alpha/ (matching stems, or a manifest) and bg/.
# ---------------------------------------------------------------------------

class FolderAssets:
    """Dataset rooted at a directory with fg/, alpha/ and bg/ subfolders."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        manifest = self.root / "manifest.json"
        if manifest.exists():
            listing = json.loads(manifest.read_text())
            self.pairs = [(self.root / "fg" / p["fg"], self.root / "alpha" / p["alpha"])
                          for p in listing["pairs"]]
            self.backgrounds = [self.root / "bg" / b for b in listing["backgrounds"]]
        else:
            fgs = sorted((self.root / "fg").glob("*.png"))
            self.pairs = []
            for f in fgs:
                a = self.root / "alpha" / f.name
                if not a.exists():
                    raise DataError(f"no alpha for foreground {f.name}")
                self.pairs.append((f, a))
            self.backgrounds = sorted((self.root / "bg").glob("*.png"))
        if not self.pairs:
            raise DataError(f"no fg/alpha pairs under {self.root}")
        if not self.backgrounds:
            raise DataError(f"no backgrounds under {self.root}")

    def __len__(self) -> int:
        return len(self.pairs)

    def load_fg(self, i: int) -> FgAsset:
        f, a = self.pairs[i]
        return FgAsset(color=load_image(f), alpha=load_alpha(a), name=f.stem)

    def load_bg(self, j: int) -> BgAsset:
        b = self.backgrounds[j]
        return BgAsset(image=load_image(b), name=b.stem)


def generate_samples(out_dir: str | Path, count: int, cfg: AugmentConfig,
                     assets: FolderAssets | None = None, seed: int = 0) -> list[dict]:
    """Emit training samples as PNG triples + JSON sidecars; returns metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(count):
        if assets is None:
            fg = synthetic_foreground(rng, size=max(cfg.crop_sizes))
            bg = synthetic_background(rng, size=2 * max(cfg.crop_sizes))
        else:
            fg = assets.load_fg(int(rng.integers(len(assets))))
            bg = assets.load_bg(int(rng.integers(len(assets.backgrounds))))
        sample, context, _ = make_training_sample(fg, bg, rng, cfg)
        stem = f"{i:06d}"
        save_image(out / f"{stem}_image.png", sample.image)
        save_trimap(out / f"{stem}_trimap.png", sample.trimap)
        save_alpha(out / f"{stem}_alpha.png", sample.alpha)
        g = context.geometry
        meta = {
            "stem": stem,
            "seed": seed,
            "fg": fg.name,
            "bg": bg.name,
            "inner_origin": [g.inner_x, g.inner_y],
            "inner_side": g.inner_side,
            "context_origin": [g.context_x, g.context_y],
            "context_side": g.context_side,
            "context_pad": list(g.pad),
            "scene_size": [g.image_h, g.image_w],
        }
        (out / f"{stem}_meta.json").write_text(json.dumps(meta, indent=2))
        records.append(meta)
    return records
