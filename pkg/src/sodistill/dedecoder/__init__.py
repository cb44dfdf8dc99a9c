"""Dynamic-upsampling edge-preserving decoder on a patch-8 ViT."""
from .backbone import PATCH, ViTBackbone
from .decoder import (
    CheckpointError,
    DEDecoderNet,
    EdgeBranch,
    EdgeBranchOutput,
    FeaturePyramid,
    ModelConfig,
    PyramidProjector,
    SaliencyHead,
    load_checkpoint,
    save_checkpoint,
)
from .dysample import DynamicUpsample, bilinear_upsample, resample
from .rcab import RCAB, ChannelAttention


def embed(backbone: ViTBackbone, image):
    """Token map for one (3, H, W) image or a (B, 3, H, W) batch."""
    if image.dim() == 3:
        return backbone(image.unsqueeze(0))[0]
    return backbone(image)


def build_pyramid(projector: PyramidProjector, token_map) -> FeaturePyramid:
    return projector(token_map if token_map.dim() == 4 else token_map.unsqueeze(0))


def dynamic_upsample(x, upsampler: DynamicUpsample):
    return upsampler(x)


__all__ = [
    "PATCH", "ViTBackbone", "CheckpointError", "DEDecoderNet", "EdgeBranch", "EdgeBranchOutput",
    "FeaturePyramid", "ModelConfig", "PyramidProjector", "SaliencyHead", "load_checkpoint",
    "save_checkpoint", "DynamicUpsample", "bilinear_upsample", "resample", "RCAB",
    "ChannelAttention", "embed", "build_pyramid", "dynamic_upsample",
]
