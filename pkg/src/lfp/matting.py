"""Matting network: deep-stem dilated encoder over the inner patch,
context-feature fusion at the bottleneck, and a pyramid-pooling decoder
with residual upsampling blocks emitting alpha, foreground and background.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import ConvBlock, ResidualBlock, ResidualStage, resize_to
from .cspp import MultiGridPooling
from .errors import ConfigError, GeometryError
from .propagating import PropagationOutput

FUSION_POINTS = ("pre_ppm", "post_ppm")


@dataclass
class MattingOutput:
    alpha: torch.Tensor  # (B, 1, s, s)
    fg: torch.Tensor  # (B, 3, s, s)
    bg: torch.Tensor  # (B, 3, s, s)


@dataclass
class MattingConfig:
    stem_widths: tuple[int, ...] = (8, 8, 16)
    stage_widths: tuple[int, ...] = (16, 32, 64, 64)
    blocks_per_stage: tuple[int, ...] = (1, 1, 1, 1)
    convs_per_block: int = 2
    stage_strides: tuple[int, ...] = (1, 2, 1, 1)
    stage_dilations: tuple[int, ...] = (1, 1, 2, 4)
    ppm_grids: tuple[int, ...] = (1, 2, 3, 6)
    ppm_branch_channels: int | None = None
    decoder_widths: tuple[int, ...] = (64, 32, 16, 16)
    head_width: int = 16
    use_context: bool = True
    context_channels: int = 32
    fusion_point: str = "pre_ppm"
    norm: str = "gn"
    activation: str = "relu"
    weight_standardization: bool = True

    def __post_init__(self):
        if len(self.stem_widths) != 3:
            raise ConfigError("matting.stem_widths must list exactly 3 conv widths")
        n = len(self.stage_widths)
        for name in ("blocks_per_stage", "stage_strides", "stage_dilations"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"matting.{name} must have {n} entries")
        if len(self.decoder_widths) != 4:
            raise ConfigError("matting decoder must have exactly 4 upsample blocks")
        if self.fusion_point not in FUSION_POINTS:
            raise ConfigError(f"matting.fusion_point must be one of {FUSION_POINTS}")

    @property
    def encoder_stride(self) -> int:
        s = 4  # deep stem /2, max-pool /2
        for st in self.stage_strides:
            s *= st
        return s


class MattingModule(nn.Module):
    """``context_in_channels`` is the width of the tapped context features
    (the propagating decoder's tap-stage width); required when the config
    enables context fusion."""

    def __init__(self, cfg: MattingConfig, context_in_channels: int | None = None):
        super().__init__()
        self.cfg = cfg
        kw = dict(norm=cfg.norm, act=cfg.activation, ws=cfg.weight_standardization)
        w0, w1, w2 = cfg.stem_widths
        self.stem = nn.Sequential(
            ConvBlock(6, w0, k=3, stride=2, **kw),
            ConvBlock(w0, w1, k=3, **kw),
            ConvBlock(w1, w2, k=3, **kw),
        )
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        stages = []
        cin = w2
        for width, blocks, stride, dil in zip(cfg.stage_widths, cfg.blocks_per_stage,
                                              cfg.stage_strides, cfg.stage_dilations):
            stages.append(ResidualStage(cin, width, blocks=blocks, stride=stride,
                                        dilation=dil, convs=cfg.convs_per_block, **kw))
            cin = width
        self.stages = nn.ModuleList(stages)
        self.encoder_out_channels = cin

        if cfg.use_context:
            if context_in_channels is None:
                raise ConfigError("matting.use_context requires context_in_channels")
            self.context_proj = ConvBlock(context_in_channels, cfg.context_channels,
                                          k=1, **kw)
        else:
            self.context_proj = None

        pre_ctx = cfg.context_channels if cfg.use_context and cfg.fusion_point == "pre_ppm" else 0
        post_ctx = cfg.context_channels if cfg.use_context and cfg.fusion_point == "post_ppm" else 0
        self.ppm = MultiGridPooling(cin + pre_ctx, grids=cfg.ppm_grids,
                                    branch_channels=cfg.ppm_branch_channels, **kw)
        dec_base = cfg.decoder_widths[0]
        self.ppm_fuse = ConvBlock(self.ppm.out_channels, dec_base, k=1, **kw)

        skip_channels = [cfg.stage_widths[0], cfg.stem_widths[2], 6, 0]
        blocks = []
        c = dec_base + post_ctx
        for i, width in enumerate(cfg.decoder_widths):
            blocks.append(ResidualBlock(c + skip_channels[i], width,
                                        convs=cfg.convs_per_block, **kw))
            c = width
        self.decoder = nn.ModuleList(blocks)
        self.head = nn.Sequential(
            ConvBlock(cfg.decoder_widths[-1], cfg.head_width, k=3, **kw),
            ConvBlock(cfg.head_width, cfg.head_width, k=3, **kw),
            nn.Conv2d(cfg.head_width, 7, 1),
        )

    def encode(self, inner: torch.Tensor):
        """inner: (B, 6, s, s); returns stride-8 features + skips at 4/2/1."""
        side = inner.shape[-1]
        if inner.shape[-2] != side or side % self.cfg.encoder_stride:
            raise GeometryError(f"inner patch {inner.shape[-2:]} must be square with side "
                                f"divisible by {self.cfg.encoder_stride}")
        stem = self.stem(inner)
        x = self.pool(stem)
        stage_outs = []
        for stage in self.stages:
            x = stage(x)
            stage_outs.append(x)
        skips = [stage_outs[0], stem, inner]
        return x, skips

    def fuse_context(self, bottleneck: torch.Tensor, ctx: PropagationOutput) -> torch.Tensor:
        """Crop the context features to the inner window, resample to the
        bottleneck grid, project and concatenate."""
        feats = ctx.context_features
        tcells = feats.shape[-1]
        inner_side = bottleneck.shape[-1] * self.cfg.encoder_stride
        if ctx.tap_geometry.stride * tcells != 2 * inner_side:
            raise GeometryError(
                f"context features cover {ctx.tap_geometry.stride * tcells} px, "
                f"expected a 2x window around the {inner_side}-px inner patch")
        if tcells % 4:
            raise GeometryError(f"tap map side {tcells} has no integral central half-window")
        q0, q1 = tcells // 4, 3 * tcells // 4
        crop = feats[..., q0:q1, q0:q1]
        crop = resize_to(crop, bottleneck.shape[-2:], mode="bilinear", antialias=True)
        return torch.cat([bottleneck, self.context_proj(crop)], dim=1)

    def _run_decoder(self, x: torch.Tensor, skips) -> MattingOutput:
        scales = (2, 2, 2, 1)
        for i, block in enumerate(self.decoder):
            if scales[i] == 2:
                x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            if i < len(skips):
                x = torch.cat([x, skips[i]], dim=1)
            x = block(x)
        out = torch.sigmoid(self.head(x))
        return MattingOutput(alpha=out[:, :1], fg=out[:, 1:4], bg=out[:, 4:7])

    def decode(self, fused: torch.Tensor, skips) -> MattingOutput:
        """Pyramid pooling + four residual upsample blocks + 7-channel head."""
        return self._run_decoder(self.ppm_fuse(self.ppm(fused)), skips)

    def forward(self, inner: torch.Tensor, ctx: PropagationOutput | None = None) -> MattingOutput:
        bott, skips = self.encode(inner)
        if not self.cfg.use_context:
            return self.decode(bott, skips)
        if ctx is None:
            raise GeometryError("matting config expects context features but none were given")
        if self.cfg.fusion_point == "pre_ppm":
            return self.decode(self.fuse_context(bott, ctx), skips)
        x = self.ppm_fuse(self.ppm(bott))
        return self._run_decoder(self.fuse_context(x, ctx), skips)
