"""Training objectives: context-alpha loss and the full matting loss
(weighted alpha L1, compositing L1, Laplacian-pyramid terms, and the
foreground/background reconstruction / compositing / pyramid terms).

All functions take torch tensors and are differentiable; gradient tests
run them in float64. Spatial tensors are (..., H, W); color maps carry a
leading channel axis of size 3. Masks are boolean (H, W) tensors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError, DimensionError, MattingWarning, ParameterError
from .kernels import mirror_indices


@dataclass
class LossConfig:
    lambda_alpha: float = 1.0
    lambda_fb: float = 0.25
    gamma: float = 5.0e4
    pyramid_levels: int = 4
    composite_region: str = "unknown"  # unknown | full
    laplacian_region: str = "full"  # full | unknown

    def __post_init__(self):
        if self.lambda_alpha < 0 or self.lambda_fb < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.gamma <= 0:
            raise ConfigError("losses.gamma must be positive")
        if self.pyramid_levels < 1:
            raise ConfigError("losses.pyramid_levels must be >= 1")
        if self.composite_region not in ("unknown", "full"):
            raise ConfigError("losses.composite_region must be 'unknown' or 'full'")
        if self.laplacian_region not in ("full", "unknown"):
            raise ConfigError("losses.laplacian_region must be 'full' or 'unknown'")


@dataclass
class LossTargets:
    """Ground truths + region masks for one inner patch, as tensors."""

    image: torch.Tensor  # (3, H, W)
    alpha: torch.Tensor  # (H, W)
    fg: torch.Tensor  # (3, H, W)
    bg: torch.Tensor  # (3, H, W)
    unknown: torch.Tensor  # bool (H, W)
    fg_or_unknown: torch.Tensor
    bg_or_unknown: torch.Tensor


def targets_from_sample(sample, dtype=torch.float32) -> LossTargets:
    from .core import region_masks

    masks = region_masks(sample.trimap)

    def chw(arr):
        return torch.from_numpy(np.moveaxis(np.asarray(arr, np.float64), -1, 0)).to(dtype)

    return LossTargets(
        image=chw(sample.image),
        alpha=torch.from_numpy(np.asarray(sample.alpha, np.float64)).to(dtype),
        fg=chw(sample.fg),
        bg=chw(sample.bg),
        unknown=torch.from_numpy(masks.unknown.copy()),
        fg_or_unknown=torch.from_numpy(masks.fg_or_unknown.copy()),
        bg_or_unknown=torch.from_numpy(masks.bg_or_unknown.copy()),
    )


def _zero_like(x: torch.Tensor) -> torch.Tensor:
    return x.sum() * 0.0


def _masked_mean(values: torch.Tensor, mask: torch.Tensor, what: str) -> torch.Tensor:
    """Mean of per-pixel values over a boolean mask; 0 (+warning) if empty."""
    n = int(mask.sum())
    if n == 0:
        warnings.warn(f"{what}: empty region mask, loss term is 0", MattingWarning)
        return _zero_like(values)
    return values[..., mask].sum() / n


def propagating_loss(pred: torch.Tensor, gt: torch.Tensor,
                     unknown: torch.Tensor) -> torch.Tensor:
    """Mean absolute context-alpha error over the unknown region."""
    if pred.shape != gt.shape:
        raise DimensionError(f"pred {tuple(pred.shape)} vs gt {tuple(gt.shape)}")
    return _masked_mean((pred - gt).abs(), unknown, "propagating_loss")


def weighted_alpha_loss(alpha: torch.Tensor, alpha_gt: torch.Tensor,
                        unknown: torch.Tensor, gamma: float) -> torch.Tensor:
    """Unknown-region L1, upweighted for large unknown regions:
    max(1, sqrt(|U|/gamma)) / |U| * sum |alpha - alpha_gt|."""
    n = int(unknown.sum())
    if n == 0:
        warnings.warn("weighted_alpha_loss: empty unknown region", MattingWarning)
        return _zero_like(alpha)
    weight = max(1.0, float(np.sqrt(n / gamma)))
    return weight * (alpha - alpha_gt).abs()[unknown].sum() / n


def composite_loss(alpha: torch.Tensor, image: torch.Tensor, fg_gt: torch.Tensor,
                   bg_gt: torch.Tensor, unknown: torch.Tensor,
                   region: str = "unknown") -> torch.Tensor:
    """L1 of the recomposited image against the observed one; per-pixel
    values are summed over the 3 channels, then averaged over the region."""
    recon = alpha.unsqueeze(0) * fg_gt + (1.0 - alpha.unsqueeze(0)) * bg_gt
    per_pixel = (recon - image).abs().sum(dim=0)
    if region == "full":
        return per_pixel.mean()
    return _masked_mean(per_pixel, unknown, "composite_loss")


# ---------------------------------------------------------------------------
# Laplacian pyramid with a 5-tap binomial low-pass and reflect-101 borders.
# ---------------------------------------------------------------------------

_BINOMIAL5 = torch.tensor([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _mirror_pad2(x: torch.Tensor, pad: int) -> torch.Tensor:
    h, w = x.shape[-2:]
    rows = torch.from_numpy(mirror_indices(-pad, h + pad, h))
    cols = torch.from_numpy(mirror_indices(-pad, w + pad, w))
    return x.index_select(-2, rows).index_select(-1, cols)


def _blur(x: torch.Tensor) -> torch.Tensor:
    """Separable 5-tap binomial blur on (B, C, H, W)."""
    c = x.shape[1]
    k = _BINOMIAL5.to(x.dtype)
    kh = k.view(1, 1, 1, 5).expand(c, 1, 1, 5)
    kv = k.view(1, 1, 5, 1).expand(c, 1, 5, 1)
    x = _mirror_pad2(x, 2)
    x = F.conv2d(x, kh, groups=c)
    return F.conv2d(x, kv, groups=c)


def _down(x: torch.Tensor) -> torch.Tensor:
    return _blur(x)[..., ::2, ::2]


def _up(x: torch.Tensor, size) -> torch.Tensor:
    b, c, h, w = x.shape
    stuffed = x.new_zeros(b, c, 2 * h, 2 * w)
    stuffed[..., ::2, ::2] = x
    return (4.0 * _blur(stuffed))[..., :size[0], :size[1]]


def _as_bchw(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 2:
        return x[None, None]
    if x.dim() == 3:
        return x[None]
    return x


def laplacian_pyramid(x: torch.Tensor, levels: int) -> list[torch.Tensor]:
    """Band-pass levels 0..levels-1 plus the low-pass residual at the end.

    The recursion is x_{j+1} = down(x_j), band_j = x_j - up(x_{j+1}), so
    reconstruct_pyramid inverts it exactly up to float round-off.
    """
    x = _as_bchw(x)
    if min(x.shape[-2:]) < 2 ** levels:
        raise ParameterError(f"input sides {tuple(x.shape[-2:])} must be >= 2^{levels}")
    out = []
    cur = x
    for _ in range(levels):
        nxt = _down(cur)
        out.append(cur - _up(nxt, cur.shape[-2:]))
        cur = nxt
    out.append(cur)
    return out


def reconstruct_pyramid(levels: list[torch.Tensor]) -> torch.Tensor:
    x = levels[-1]
    for band in reversed(levels[:-1]):
        x = band + _up(x, band.shape[-2:])
    return x


def laplacian_loss(x: torch.Tensor, y: torch.Tensor, levels: int,
                   mask: torch.Tensor | None = None) -> torch.Tensor:
    """sum_j 2^j * mean-L1 between pyramid levels of x and y.

    With a mask, both inputs are restricted to the region before the
    pyramid is built (the 'unknown'-region variant).
    """
    if x.shape != y.shape:
        raise DimensionError(f"laplacian_loss: {tuple(x.shape)} vs {tuple(y.shape)}")
    if mask is not None:
        m = mask.to(x.dtype)
        x = x * m
        y = y * m
    px = laplacian_pyramid(x, levels)
    py = laplacian_pyramid(y, levels)
    total = _zero_like(x)
    for j, (a, b) in enumerate(zip(px, py)):
        total = total + (2.0 ** j) * (a - b).abs().mean()
    return total


def alpha_loss(alpha: torch.Tensor, t: LossTargets, cfg: LossConfig):
    """Weighted L1 + compositing + Laplacian terms for the alpha matte."""
    lw = weighted_alpha_loss(alpha, t.alpha, t.unknown, cfg.gamma)
    li = composite_loss(alpha, t.image, t.fg, t.bg, t.unknown, cfg.composite_region)
    mask = t.unknown if cfg.laplacian_region == "unknown" else None
    ll = laplacian_loss(alpha, t.alpha, cfg.pyramid_levels, mask)
    return lw + li + ll, {"alpha_weighted": lw, "alpha_composite": li, "alpha_laplacian": ll}


def fb_reconstruction_loss(fg: torch.Tensor, bg: torch.Tensor, t: LossTargets) -> torch.Tensor:
    """L1 against the fg/bg ground truths over their supervised regions."""
    f_term = _masked_mean((fg - t.fg).abs().sum(dim=0), t.fg_or_unknown,
                          "fb_reconstruction_loss[fg]")
    b_term = _masked_mean((bg - t.bg).abs().sum(dim=0), t.bg_or_unknown,
                          "fb_reconstruction_loss[bg]")
    return f_term + b_term


def fb_composite_loss(fg: torch.Tensor, bg: torch.Tensor, t: LossTargets,
                      region: str = "unknown") -> torch.Tensor:
    """Recomposition with the ground-truth alpha against the image."""
    recon = t.alpha.unsqueeze(0) * fg + (1.0 - t.alpha.unsqueeze(0)) * bg
    per_pixel = (recon - t.image).abs().sum(dim=0)
    if region == "full":
        return per_pixel.mean()
    return _masked_mean(per_pixel, t.unknown, "fb_composite_loss")


def fb_laplacian_loss(fg: torch.Tensor, bg: torch.Tensor, t: LossTargets,
                      levels: int, mask: torch.Tensor | None = None) -> torch.Tensor:
    return (laplacian_loss(fg, t.fg, levels, mask)
            + laplacian_loss(bg, t.bg, levels, mask))


def matting_loss(alpha: torch.Tensor, fg: torch.Tensor, bg: torch.Tensor,
                 t: LossTargets, cfg: LossConfig):
    """Full objective; returns (total, per-term breakdown dict)."""
    a_total, parts = alpha_loss(alpha, t, cfg)
    lap_mask = t.unknown if cfg.laplacian_region == "unknown" else None
    fbr = fb_reconstruction_loss(fg, bg, t)
    fbc = fb_composite_loss(fg, bg, t, cfg.composite_region)
    flb = fb_laplacian_loss(fg, bg, t, cfg.pyramid_levels, lap_mask)
    fb_total = fbr + fbc + flb
    total = cfg.lambda_alpha * a_total + cfg.lambda_fb * fb_total
    parts.update({
        "fb_reconstruction": fbr,
        "fb_composite": fbc,
        "fb_laplacian": flb,
        "alpha_total": a_total,
        "fb_total": fb_total,
        "total": total,
    })
    return total, parts
