"""Shared convolutional building blocks.

Backbone convolutions follow the group-normalization + weight-standardization
recipe; both are switchable so that linearity/locality properties can be
tested with plain convolutions.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def group_count(channels: int) -> int:
    # capped at channels // 2 so pooled 1x1-spatial branches keep >= 2
    # values per group (GroupNorm rejects single-value groups in training)
    cap = min(8, max(1, channels // 2))
    for g in range(cap, 0, -1):
        if channels % g == 0:
            return g
    return 1


class WSConv2d(nn.Conv2d):
    """Convolution with weight standardization."""

    def forward(self, x):
        w = self.weight
        mu = w.mean(dim=(1, 2, 3), keepdim=True)
        var = w.var(dim=(1, 2, 3), unbiased=False, keepdim=True)
        w = (w - mu) / torch.sqrt(var + 1e-5)
        return self._conv_forward(x, w, self.bias)


class ConvBlock(nn.Module):
    """conv (+ group norm) (+ relu), assembled per flags."""

    def __init__(self, cin, cout, k=3, stride=1, dilation=1,
                 norm="gn", act="relu", ws=True):
        super().__init__()
        padding = dilation * (k - 1) // 2
        conv_cls = WSConv2d if (ws and norm == "gn") else nn.Conv2d
        self.conv = conv_cls(cin, cout, k, stride=stride, padding=padding,
                             dilation=dilation, bias=True)
        self.norm = nn.GroupNorm(group_count(cout), cout) if norm == "gn" else None
        self.act = nn.ReLU(inplace=False) if act == "relu" else None

    def forward(self, x):
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        if self.act is not None:
            x = self.act(x)
        return x


class ResidualBlock(nn.Module):
    """Basic residual block; projection shortcut when shape changes."""

    def __init__(self, cin, cout, stride=1, dilation=1, convs=2,
                 norm="gn", act="relu", ws=True):
        super().__init__()
        layers = []
        c = cin
        for i in range(convs):
            last = i == convs - 1
            layers.append(ConvBlock(c, cout, k=3, stride=stride if i == 0 else 1,
                                    dilation=dilation, norm=norm,
                                    act="none" if last else act, ws=ws))
            c = cout
        self.branch = nn.Sequential(*layers)
        if cin != cout or stride != 1:
            self.shortcut = ConvBlock(cin, cout, k=1, stride=stride,
                                      norm=norm, act="none", ws=ws)
        else:
            self.shortcut = None
        self.act = nn.ReLU(inplace=False) if act == "relu" else None

    def forward(self, x):
        skip = x if self.shortcut is None else self.shortcut(x)
        out = self.branch(x) + skip
        return self.act(out) if self.act is not None else out


class ResidualStage(nn.Module):
    def __init__(self, cin, cout, blocks=1, stride=1, dilation=1, convs=2,
                 norm="gn", act="relu", ws=True):
        super().__init__()
        mods = []
        for i in range(blocks):
            mods.append(ResidualBlock(cin if i == 0 else cout, cout,
                                      stride=stride if i == 0 else 1,
                                      dilation=dilation, convs=convs,
                                      norm=norm, act=act, ws=ws))
        self.blocks = nn.Sequential(*mods)

    def forward(self, x):
        return self.blocks(x)


def upsample2x(x, mode="bilinear"):
    if mode == "nearest":
        return F.interpolate(x, scale_factor=2, mode="nearest")
    return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


def resize_to(x, size, mode="bilinear", antialias=False):
    if x.shape[-2:] == tuple(size):
        return x
    if mode == "nearest":
        return F.interpolate(x, size=size, mode="nearest")
    return F.interpolate(x, size=size, mode=mode, align_corners=False,
                         antialias=antialias)
