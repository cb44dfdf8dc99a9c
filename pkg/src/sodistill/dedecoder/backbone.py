"""Patch-8 ViT encoder producing a token map of shape (C, H/8, W/8)."""
from __future__ import annotations

import math

import torch
import torch.nn as nn

PATCH = 8


def sincos_2d(dim: int, h: int, w: int, dtype=torch.float32, device=None) -> torch.Tensor:
    """Fixed 2-D sine/cosine position table of shape (h*w, dim)."""
    if dim % 4:
        raise ValueError("embedding dim must be divisible by 4")
    q = dim // 4
    omega = 1.0 / (10000 ** (torch.arange(q, dtype=torch.float64) / q))
    ys, xs = torch.meshgrid(torch.arange(h, dtype=torch.float64), torch.arange(w, dtype=torch.float64), indexing="ij")
    oy = ys.reshape(-1, 1) * omega
    ox = xs.reshape(-1, 1) * omega
    table = torch.cat([oy.sin(), oy.cos(), ox.sin(), ox.cos()], dim=1)
    return table.to(dtype=dtype, device=device)


class ViTBackbone(nn.Module):
    """A plain ViT (pre-norm blocks) with patch size 8.

    Any encoder with this ``forward(images) -> (B, C, H/8, W/8)`` contract
    can stand in, e.g. one loaded with self-supervised ViT-S/8 weights.
    """

    def __init__(self, embed_dim: int = 384, depth: int = 12, num_heads: int = 6, dropout: float = 0.1):
        super().__init__()
        self.embed_dim = embed_dim
        self.patch_embed = nn.Conv2d(3, embed_dim, PATCH, stride=PATCH)
        layer = nn.TransformerEncoderLayer(
            embed_dim,
            num_heads,
            dim_feedforward=4 * embed_dim,
            dropout=dropout,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, depth, enable_nested_tensor=False)
        self.norm = nn.LayerNorm(embed_dim)
        nn.init.trunc_normal_(self.patch_embed.weight, std=math.sqrt(2.0 / (3 * PATCH * PATCH)))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        B, _, H, W = images.shape
        if H % PATCH or W % PATCH:
            raise ValueError(f"input size {H}x{W} is not divisible by patch size {PATCH}")
        x = self.patch_embed(images)
        h, w = x.shape[-2:]
        tokens = x.flatten(2).transpose(1, 2) + sincos_2d(self.embed_dim, h, w, x.dtype, x.device)
        tokens = self.norm(self.blocks(tokens))
        return tokens.transpose(1, 2).reshape(B, self.embed_dim, h, w)
