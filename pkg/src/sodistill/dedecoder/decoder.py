"""Feature pyramid, edge-preserving branch, saliency head and the full net."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbone import ViTBackbone
from .dysample import DynamicUpsample
from .rcab import RCAB

CHECKPOINT_SCHEMA = 1


class CheckpointError(ValueError):
    pass


class FeaturePyramid(NamedTuple):
    f1: torch.Tensor | None  # stride 32
    f2: torch.Tensor | None  # stride 16
    f3: torch.Tensor         # stride 8


class EdgeBranchOutput(NamedTuple):
    f_e: torch.Tensor          # RCAB-refined fused feature, stride 8
    edge_logits: torch.Tensor  # (B, 1, H, W)


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 384
    depth: int = 12
    num_heads: int = 6
    dropout: float = 0.1
    pyramid_channels: tuple[int, int, int] = (64, 64, 64)
    head_channels: int = 64
    scope_factor: float = 0.25
    reduction: int = 16
    edge_decoder: bool = True

    def __post_init__(self):
        object.__setattr__(self, "pyramid_channels", tuple(int(c) for c in self.pyramid_channels))


class PyramidProjector(nn.Module):
    """Re-project one stride-8 token map to strides 32, 16 and 8."""

    def __init__(self, in_channels: int, channels=(64, 64, 64), coarse: bool = True):
        super().__init__()
        c1, c2, c3 = channels
        self.p3 = nn.Conv2d(in_channels, c3, 1)
        if coarse:
            self.p2 = nn.Conv2d(in_channels, c2, 2, stride=2)
            self.p1 = nn.Conv2d(in_channels, c1, 4, stride=4)
        self.coarse = coarse

    def forward(self, tm: torch.Tensor) -> FeaturePyramid:
        h, w = tm.shape[-2:]
        if self.coarse and (h < 4 or w < 4 or h % 4 or w % 4):
            raise ValueError(f"token map {h}x{w} too small or not divisible by 4 for stride-32 features")
        f3 = self.p3(tm)
        if not self.coarse:
            return FeaturePyramid(None, None, f3)
        return FeaturePyramid(self.p1(tm), self.p2(tm), f3)


class EdgeBranch(nn.Module):
    """f1 -> dyup -> ReLU -> BN, + f2 -> dyup, concat f3 -> RCAB -> 1x1 edge logits."""

    def __init__(self, channels=(64, 64, 64), scope_factor: float = 0.25, reduction: int = 16):
        super().__init__()
        c1, c2, c3 = channels
        if c1 != c2:
            raise ValueError(f"f1 and f2 channel counts must match to add them ({c1} != {c2})")
        self.up1 = DynamicUpsample(c1, 2, scope_factor)
        self.bn = nn.BatchNorm2d(c1)
        self.up2 = DynamicUpsample(c2, 2, scope_factor)
        self.rcab = RCAB(c2 + c3, reduction)
        self.edge_head = nn.Conv2d(c2 + c3, 1, 1)
        self.out_channels = c2 + c3

    def forward(self, fp: FeaturePyramid, out_size) -> EdgeBranchOutput:
        x = self.bn(torch.relu(self.up1(fp.f1)))
        if x.shape != fp.f2.shape:
            raise ValueError(f"upsampled f1 {tuple(x.shape)} does not match f2 {tuple(fp.f2.shape)}")
        x = self.up2(x + fp.f2)
        if x.shape[-2:] != fp.f3.shape[-2:]:
            raise ValueError(f"upsampled f2 {tuple(x.shape)} does not match f3 {tuple(fp.f3.shape)}")
        f_e = self.rcab(torch.cat([x, fp.f3], dim=1))
        logits = F.interpolate(self.edge_head(f_e), size=tuple(out_size), mode="bilinear", align_corners=False)
        return EdgeBranchOutput(f_e, logits)


class SaliencyHead(nn.Module):
    """[f3, f_e] -> 3x3 conv block -> dyup x4 -> dyup x2 -> 1x1 conv."""

    def __init__(self, in_channels: int, mid: int = 64, scope_factor: float = 0.25):
        super().__init__()
        self.fuse = nn.Sequential(
            nn.Conv2d(in_channels, mid, 3, padding=1),
            nn.BatchNorm2d(mid),
            nn.ReLU(inplace=True),
        )
        self.up1 = DynamicUpsample(mid, 4, scope_factor)
        self.up2 = DynamicUpsample(mid, 2, scope_factor)
        self.out = nn.Conv2d(mid, 1, 1)

    def forward(self, fp: FeaturePyramid, edge: EdgeBranchOutput | None = None) -> torch.Tensor:
        x = fp.f3 if edge is None else torch.cat([fp.f3, edge.f_e], dim=1)
        return self.out(self.up2(self.up1(self.fuse(x))))


class DEDecoderNet(nn.Module):
    """Backbone + pyramid + (optional) edge branch + saliency head.

    ``forward`` returns ``(saliency_logits, edge_logits)``, both (B, 1, H, W);
    edge logits are None when the edge decoder is disabled.
    """

    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        cfg = config
        self.backbone = ViTBackbone(cfg.embed_dim, cfg.depth, cfg.num_heads, cfg.dropout)
        self.pyramid = PyramidProjector(cfg.embed_dim, cfg.pyramid_channels, coarse=cfg.edge_decoder)
        edge_ch = 0
        if cfg.edge_decoder:
            self.edge_branch = EdgeBranch(cfg.pyramid_channels, cfg.scope_factor, cfg.reduction)
            edge_ch = self.edge_branch.out_channels
        self.head = SaliencyHead(cfg.pyramid_channels[2] + edge_ch, cfg.head_channels, cfg.scope_factor)

    def forward(self, images: torch.Tensor):
        H, W = images.shape[-2:]
        if H % 32 or W % 32:
            raise ValueError(f"input size {H}x{W} must be divisible by 32")
        fp = self.pyramid(self.backbone(images))
        edge = self.edge_branch(fp, (H, W)) if self.config.edge_decoder else None
        sal = self.head(fp, edge)
        return sal, (edge.edge_logits if edge is not None else None)


def save_checkpoint(model: DEDecoderNet, path, **meta) -> None:
    cfg = asdict(model.config)
    cfg["pyramid_channels"] = list(cfg["pyramid_channels"])
    state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
    torch.save({"schema_version": CHECKPOINT_SCHEMA, "model_config": cfg, "state_dict": state, "meta": meta}, path)


def load_checkpoint(path, map_location="cpu") -> DEDecoderNet:
    blob = torch.load(path, map_location=map_location, weights_only=True)
    if not isinstance(blob, dict) or blob.get("schema_version") != CHECKPOINT_SCHEMA:
        raise CheckpointError(f"{path}: unsupported checkpoint schema {blob.get('schema_version') if isinstance(blob, dict) else None}")
    try:
        model = DEDecoderNet(ModelConfig(**blob["model_config"]))
        model.load_state_dict(blob["state_dict"], strict=True)
    except (TypeError, RuntimeError, KeyError) as exc:
        raise CheckpointError(f"{path}: incompatible checkpoint: {exc}") from exc
    return model
