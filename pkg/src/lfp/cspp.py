"""Center-surround pyramid pooling bottleneck and its ablation variants.

The full bottleneck stacks two stages: multi-grid block-wise average
pooling that mixes surround statistics into every location, followed by
atrous spatial pyramid pooling that smooths the mixed features while
further enlarging the receptive field. Variants `none` (plain 1x1
projection), `nonlocal` (one global self-attention block) and `aspp`
cover the ablation axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .blocks import ConvBlock, resize_to
from .errors import ConfigError, ParameterError

VARIANTS = ("none", "nonlocal", "aspp", "cspp")


@dataclass
class CsppConfig:
    variant: str = "cspp"
    grids: tuple[int, ...] = (1, 2, 3, 6)
    csp_branch_channels: int | None = None  # default: in_channels // 4
    aspp_rates: tuple[int, ...] = (3, 7, 12, 18)
    aspp_branch_channels: int | None = None  # default: fuse_channels
    fuse_channels: int | None = None  # default: in_channels
    upsample_mode: str = "bilinear"
    norm: str = "gn"
    activation: str = "relu"
    weight_standardization: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"bottleneck.variant must be one of {VARIANTS}, got {self.variant!r}")
        for name, seq in (("grids", self.grids), ("rates", self.aspp_rates)):
            if any(v < 1 for v in seq) or list(seq) != sorted(set(seq)):
                raise ConfigError(f"bottleneck.{name} must be strictly increasing positives, got {seq}")
        if self.upsample_mode not in ("bilinear", "nearest"):
            raise ConfigError(f"bottleneck.upsample_mode must be bilinear or nearest")


def _block_bounds(n: int, grid: int) -> list[int]:
    # round-half-up proportional boundaries; tile [0, n) exactly
    return [math.floor(k * n / grid + 0.5) for k in range(grid + 1)]


def csp_pool(x: torch.Tensor, grid: int) -> torch.Tensor:
    """Block-wise average pooling onto a grid x grid map.

    Blocks are delimited at round(k*H/grid) / round(k*W/grid), so they
    tile the input exactly with no overlap.
    """
    h, w = x.shape[-2:]
    if grid > min(h, w):
        raise ParameterError(f"pool grid {grid} exceeds spatial size {h}x{w}")
    by = _block_bounds(h, grid)
    bx = _block_bounds(w, grid)
    rows = []
    for i in range(grid):
        cells = [x[..., by[i]:by[i + 1], bx[j]:bx[j + 1]].mean(dim=(-2, -1))
                 for j in range(grid)]
        rows.append(torch.stack(cells, dim=-1))
    return torch.stack(rows, dim=-2)


class MultiGridPooling(nn.Module):
    """Pool to several grids, project, upsample, concatenate with the input.

    Used both as the center-surround pooling stage of the bottleneck and
    as the pyramid pooling module of the matting decoder.
    """

    def __init__(self, in_channels, grids=(1, 2, 3, 6), branch_channels=None,
                 upsample_mode="bilinear", norm="gn", act="relu", ws=True):
        super().__init__()
        self.grids = tuple(grids)
        self.branch_channels = branch_channels or max(1, in_channels // 4)
        self.upsample_mode = upsample_mode
        self.proj = nn.ModuleList([
            ConvBlock(in_channels, self.branch_channels, k=1, norm=norm, act=act, ws=ws)
            for _ in self.grids
        ])
        self.out_channels = in_channels + len(self.grids) * self.branch_channels

    def forward(self, x):
        size = x.shape[-2:]
        branches = [x]
        for grid, proj in zip(self.grids, self.proj):
            pooled = proj(csp_pool(x, grid))
            branches.append(resize_to(pooled, size, mode=self.upsample_mode))
        return torch.cat(branches, dim=1)


class Aspp(nn.Module):
    """Parallel 1x1 / global-pool / dilated 3x3 branches plus a 1x1 fusion."""

    def __init__(self, in_channels, rates=(3, 7, 12, 18), branch_channels=None,
                 fuse_channels=None, norm="gn", act="relu", ws=True):
        super().__init__()
        self.out_channels = fuse_channels or in_channels
        bc = branch_channels or self.out_channels
        self.branch_channels = bc
        self.local = ConvBlock(in_channels, bc, k=1, norm=norm, act=act, ws=ws)
        self.global_proj = ConvBlock(in_channels, bc, k=1, norm=norm, act=act, ws=ws)
        self.dilated = nn.ModuleList([
            ConvBlock(in_channels, bc, k=3, dilation=r, norm=norm, act=act, ws=ws)
            for r in rates
        ])
        self.fuse = ConvBlock(bc * (2 + len(rates)), self.out_channels, k=1,
                              norm=norm, act=act, ws=ws)

    def forward(self, x):
        size = x.shape[-2:]
        pooled = x.mean(dim=(-2, -1), keepdim=True)
        branches = [self.local(x),
                    self.global_proj(pooled).expand(-1, -1, *size)]
        branches += [conv(x) for conv in self.dilated]
        return self.fuse(torch.cat(branches, dim=1))


class NonLocalBlock(nn.Module):
    """One global self-attention block over flattened spatial positions."""

    def __init__(self, in_channels, fuse_channels):
        super().__init__()
        inner = max(1, in_channels // 2)
        self.theta = nn.Conv2d(in_channels, inner, 1)
        self.phi = nn.Conv2d(in_channels, inner, 1)
        self.g = nn.Conv2d(in_channels, inner, 1)
        self.out = nn.Conv2d(inner, in_channels, 1)
        self.proj = nn.Conv2d(in_channels, fuse_channels, 1)
        self.out_channels = fuse_channels

    def forward(self, x):
        b, c, h, w = x.shape
        q = self.theta(x).flatten(2).transpose(1, 2)  # b, hw, inner
        k = self.phi(x).flatten(2)  # b, inner, hw
        v = self.g(x).flatten(2).transpose(1, 2)  # b, hw, inner
        attn = torch.softmax(q @ k / (q.shape[-1] ** 0.5), dim=-1)
        y = (attn @ v).transpose(1, 2).reshape(b, -1, h, w)
        return self.proj(x + self.out(y))


class Bottleneck(nn.Module):
    """Variant dispatch: none | nonlocal | aspp | cspp."""

    def __init__(self, in_channels, cfg: CsppConfig):
        super().__init__()
        self.variant = cfg.variant
        fuse = cfg.fuse_channels or in_channels
        kw = dict(norm=cfg.norm, act=cfg.activation, ws=cfg.weight_standardization)
        self.csp = None
        self.aspp = None
        self.inner = None
        if cfg.variant == "none":
            self.inner = nn.Conv2d(in_channels, fuse, 1)
            self.out_channels = fuse
        elif cfg.variant == "nonlocal":
            self.inner = NonLocalBlock(in_channels, fuse)
            self.out_channels = fuse
        else:
            c = in_channels
            if cfg.variant == "cspp":
                self.csp = MultiGridPooling(
                    in_channels, grids=cfg.grids,
                    branch_channels=cfg.csp_branch_channels,
                    upsample_mode=cfg.upsample_mode, **kw)
                c = self.csp.out_channels
            self.aspp = Aspp(c, rates=cfg.aspp_rates,
                             branch_channels=cfg.aspp_branch_channels,
                             fuse_channels=fuse, **kw)
            self.out_channels = self.aspp.out_channels

    def forward(self, x):
        if self.csp is not None:
            x = self.csp(x)
        if self.aspp is not None:
            return self.aspp(x)
        return self.inner(x)


def build_bottleneck(in_channels: int, cfg: CsppConfig) -> Bottleneck:
    return Bottleneck(in_channels, cfg)
