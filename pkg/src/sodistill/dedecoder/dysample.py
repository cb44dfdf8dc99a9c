"""Dynamic (content-aware) upsampling by point resampling."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def resample(x: torch.Tensor, offsets: torch.Tensor, scale: int) -> torch.Tensor:
    """Bilinearly sample `x` at the regular x`scale` grid shifted by `offsets`.

    x: (B, C, h, w). offsets: (B, 2*scale*scale, h, w) in input-pixel units,
    channel ``k*scale*scale + a*scale + b`` holding the x (k=0) or y (k=1)
    shift of sub-pixel (a, b) of each cell. Sampling clamps to the border.
    """
    B, _, h, w = x.shape
    s = scale
    if offsets.shape != (B, 2 * s * s, h, w):
        raise ValueError(f"offsets must have shape {(B, 2 * s * s, h, w)}, got {tuple(offsets.shape)}")
    off = offsets.view(B, 2, s, s, h, w).permute(0, 1, 4, 2, 5, 3).reshape(B, 2, h * s, w * s)
    ys = (torch.arange(h * s, dtype=x.dtype, device=x.device) + 0.5) / s - 0.5
    xs = (torch.arange(w * s, dtype=x.dtype, device=x.device) + 0.5) / s - 0.5
    px = xs.view(1, 1, -1) + off[:, 0]
    py = ys.view(1, -1, 1) + off[:, 1]
    grid = torch.stack(((2 * px + 1) / w - 1, (2 * py + 1) / h - 1), dim=-1)
    return F.grid_sample(x, grid, mode="bilinear", padding_mode="border", align_corners=False)


class DynamicUpsample(nn.Module):
    """x`scale` upsampler whose sampling offsets are a 1x1 projection of the
    input, scaled by `scope_factor`.

    The projection starts at zero, so a fresh module is plain bilinear
    upsampling.
    """

    def __init__(self, channels: int, scale: int = 2, scope_factor: float = 0.25):
        super().__init__()
        if scale < 2:
            raise ValueError("scale must be >= 2")
        if scope_factor <= 0:
            raise ValueError("scope_factor must be positive")
        self.scale = scale
        self.scope_factor = scope_factor
        self.offset = nn.Conv2d(channels, 2 * scale * scale, 1)
        nn.init.zeros_(self.offset.weight)
        nn.init.zeros_(self.offset.bias)

    def forward(self, x):
        return resample(x, self.offset(x) * self.scope_factor, self.scale)


def bilinear_upsample(x: torch.Tensor, scale: int) -> torch.Tensor:
    return F.interpolate(x, scale_factor=scale, mode="bilinear", align_corners=False)
