"""Combined network (propagating + matting) and numpy-boundary adapters."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .core import encode_trimap
from .matting import MattingConfig, MattingModule
from .propagating import PropagatingConfig, PropagatingModule


class ContextMattingNet(nn.Module):
    """Two-branch matting network: the propagating branch summarizes the
    2x context window; the matting branch predicts alpha/fg/bg for the
    inner patch from the image, trimap, and tapped context features."""

    def __init__(self, propagating_cfg: PropagatingConfig, matting_cfg: MattingConfig):
        super().__init__()
        self.propagating = PropagatingModule(propagating_cfg)
        tap_channels = propagating_cfg.decoder_widths[propagating_cfg.feature_tap_level]
        self.matting = MattingModule(matting_cfg, context_in_channels=tap_channels)

    def forward(self, inner: torch.Tensor, context: torch.Tensor):
        ctx = self.propagating(context) if self.matting.cfg.use_context else None
        out = self.matting(inner, ctx)
        return out, ctx


def to_network_input(image: np.ndarray, trimap: np.ndarray,
                     dtype=torch.float32) -> torch.Tensor:
    """Stack RGB + one-hot trimap planes into a (1, 6, H, W) tensor."""
    rgb = np.moveaxis(np.asarray(image, dtype=np.float64), -1, 0)
    planes = np.concatenate([rgb, encode_trimap(trimap, dtype=np.float64)], axis=0)
    return torch.from_numpy(planes[None]).to(dtype)


class NetworkTileModel:
    """Tile-protocol adapter evaluating the network without gradients."""

    def __init__(self, net: ContextMattingNet, dtype=torch.float32):
        self.net = net
        self.dtype = dtype

    def predict_tile(self, inner_image, inner_trimap, context_image, context_trimap):
        self.net.eval()
        with torch.no_grad():
            inner = to_network_input(inner_image, inner_trimap, self.dtype)
            context = to_network_input(context_image, context_trimap, self.dtype)
            out, _ = self.net(inner, context)
        alpha = out.alpha[0, 0].double().numpy()
        fg = np.moveaxis(out.fg[0].double().numpy(), 0, -1)
        bg = np.moveaxis(out.bg[0].double().numpy(), 0, -1)
        return alpha, fg, bg
