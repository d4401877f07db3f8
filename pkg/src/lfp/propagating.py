"""Context-propagating network: downsampled context encoder with dilated
deep stages, the pyramid-pooling bottleneck, and a context decoder that
emits a context alpha matte plus the feature map handed to the matting
network.

The context window is 2s x 2s around an s x s inner patch. The input is
bicubic-downsampled, pushed through a strided stem + residual stages
(output stride 8 relative to the downsampled input), mixed in the
bottleneck, and decoded back to full context resolution through four
conv + 2x-upsample stages with encoder skips.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import ConvBlock, ResidualStage
from .cspp import CsppConfig, build_bottleneck
from .errors import ConfigError, GeometryError


@dataclass(frozen=True)
class FeatureGeometry:
    """Maps feature cells back to context pixels: cell u covers
    [stride*u, stride*(u+1)) along each axis."""

    stride: int

    def cell_to_pixel(self, u: int) -> tuple[int, int]:
        return (self.stride * u, self.stride * (u + 1))


@dataclass
class PropagationOutput:
    """Context alpha plus the decoder features tapped for the matting net."""

    context_alpha: torch.Tensor  # (B, 1, 2s, 2s)
    context_features: torch.Tensor  # (B, C, 2s/stride, 2s/stride)
    tap_geometry: FeatureGeometry


@dataclass
class PropagatingConfig:
    input_downsample_factor: int = 2
    stem_width: int = 8
    stage_widths: tuple[int, ...] = (16, 32, 64, 64)
    blocks_per_stage: tuple[int, ...] = (1, 1, 1, 1)
    convs_per_block: int = 2
    stage_strides: tuple[int, ...] = (1, 2, 1, 1)
    stage_dilations: tuple[int, ...] = (1, 1, 2, 4)
    bottleneck: CsppConfig = field(default_factory=CsppConfig)
    decoder_widths: tuple[int, ...] = (64, 32, 16, 16)
    feature_tap_level: int = 2
    norm: str = "gn"
    activation: str = "relu"
    weight_standardization: bool = True

    def __post_init__(self):
        if isinstance(self.bottleneck, dict):
            self.bottleneck = CsppConfig(**self.bottleneck)
        n = len(self.stage_widths)
        for name in ("blocks_per_stage", "stage_strides", "stage_dilations"):
            if len(getattr(self, name)) != n:
                raise ConfigError(f"propagating.{name} must have {n} entries")
        if len(self.decoder_widths) != 4:
            raise ConfigError("propagating decoder must have exactly 4 upsample stages")
        if self.input_downsample_factor < 1:
            raise ConfigError("propagating.input_downsample_factor must be >= 1")
        if self.feature_tap_level not in range(4):
            raise ConfigError("propagating.feature_tap_level must be in 0..3")

    @property
    def encoder_stride(self) -> int:
        """Output stride of the encoder relative to the raw context patch."""
        s = self.input_downsample_factor * 4  # stem /2, max-pool /2
        for st in self.stage_strides:
            s *= st
        return s

    @property
    def tap_stride(self) -> int:
        return self.encoder_stride >> (self.feature_tap_level + 1)


def bicubic_downsample(x: torch.Tensor, factor: int) -> torch.Tensor:
    """Bicubic downsampling by an integer factor (no antialias filter)."""
    if factor == 1:
        return x
    h, w = x.shape[-2:]
    if h % factor or w % factor:
        raise GeometryError(f"spatial size {h}x{w} not divisible by factor {factor}")
    return F.interpolate(x, size=(h // factor, w // factor), mode="bicubic",
                         align_corners=False)


class PropagatingModule(nn.Module):

    def __init__(self, cfg: PropagatingConfig):
        super().__init__()
        self.cfg = cfg
        kw = dict(norm=cfg.norm, act=cfg.activation, ws=cfg.weight_standardization)
        self.stem = ConvBlock(6, cfg.stem_width, k=3, stride=2, **kw)
        self.pool = nn.MaxPool2d(3, stride=2, padding=1)
        stages = []
        cin = cfg.stem_width
        for width, blocks, stride, dil in zip(cfg.stage_widths, cfg.blocks_per_stage,
                                              cfg.stage_strides, cfg.stage_dilations):
            stages.append(ResidualStage(cin, width, blocks=blocks, stride=stride,
                                        dilation=dil, convs=cfg.convs_per_block, **kw))
            cin = width
        self.stages = nn.ModuleList(stages)
        self.bottleneck = build_bottleneck(cin, cfg.bottleneck)

        # decoder stage i consumes (x, skip_i) at the same resolution:
        # skips are [encoder top, stage-1 output, stem output, bicubic input]
        skip_channels = [cin, cfg.stage_widths[0], cfg.stem_width, 6]
        dec = []
        dec_in = self.bottleneck.out_channels
        for width, skip_c in zip(cfg.decoder_widths, skip_channels):
            dec.append(ConvBlock(dec_in + skip_c, width, k=3, **kw))
            dec_in = width
        self.decoder = nn.ModuleList(dec)
        self.alpha_head = nn.Conv2d(cfg.decoder_widths[-1], 1, 3, padding=1)

    def forward(self, context: torch.Tensor) -> PropagationOutput:
        """context: (B, 6, 2s, 2s) tensor of RGB + one-hot trimap planes."""
        side = context.shape[-1]
        if context.shape[-2] != side:
            raise GeometryError(f"context patch must be square, got {context.shape[-2:]}")
        if side % self.cfg.encoder_stride:
            raise GeometryError(f"context side {side} not divisible by the "
                                f"encoder stride {self.cfg.encoder_stride}")
        down = bicubic_downsample(context, self.cfg.input_downsample_factor)
        stem = self.stem(down)
        x = self.pool(stem)
        stage_outs = []
        for stage in self.stages:
            x = stage(x)
            stage_outs.append(x)
        x = self.bottleneck(x)

        skips = [stage_outs[-1], stage_outs[0], stem, down]
        tap = None
        for level, (block, skip) in enumerate(zip(self.decoder, skips)):
            x = block(torch.cat([x, skip], dim=1))
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            if level == self.cfg.feature_tap_level:
                tap = x
        alpha = torch.sigmoid(self.alpha_head(x))
        return PropagationOutput(context_alpha=alpha, context_features=tap,
                                 tap_geometry=FeatureGeometry(self.cfg.tap_stride))
