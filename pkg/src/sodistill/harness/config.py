"""Training configuration, flat key=value config files and the LR schedule."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from ..dedecoder import ModelConfig
from ..losskit import LossWeights


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 1e-5
    warmup_iters: int = 12000
    poly_power: float = 0.9
    grad_clip: float = 0.5
    batch: int = 8
    epochs: int = 60
    input_size: int = 352
    dropout: float = 0.1
    flip_prob: float = 0.5
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0
    lambda_edge: float = 1.0
    seed: int = 0
    weight_decay: float = 0.01
    max_iters: int = 0  # 0: epochs * ceil(N / batch)
    certainty_band: int = 5
    embed_dim: int = 384
    depth: int = 12
    num_heads: int = 6
    pyramid_channels: tuple[int, int, int] = (64, 64, 64)
    head_channels: int = 64
    scope_factor: float = 0.25
    reduction: int = 16

    def __post_init__(self):
        object.__setattr__(self, "pyramid_channels", tuple(int(c) for c in self.pyramid_channels))
        positive = ("base_lr", "poly_power", "grad_clip", "batch", "epochs", "input_size",
                    "embed_dim", "depth", "num_heads", "head_channels", "scope_factor", "reduction")
        for k in positive:
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        for k in ("warmup_iters", "max_iters", "seed", "certainty_band", "weight_decay"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be nonnegative")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("dropout and flip_prob must be probabilities")
        if self.input_size % 32:
            raise ValueError(f"input_size must be divisible by 32, got {self.input_size}")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha1, self.alpha2, self.alpha3, self.lambda_edge)

    def model_config(self, edge_decoder: bool = True) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim,
            depth=self.depth,
            num_heads=self.num_heads,
            dropout=self.dropout,
            pyramid_channels=self.pyramid_channels,
            head_channels=self.head_channels,
            scope_factor=self.scope_factor,
            reduction=self.reduction,
            edge_decoder=edge_decoder,
        )

    def max_iter(self, n_images: int) -> int:
        if self.max_iters:
            return self.max_iters
        return self.epochs * math.ceil(n_images / self.batch)

    def replace(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


# Desk-scale settings for the synthetic shapes set (64 px inputs, tiny ViT).
TOY_CONFIG = TrainConfig(
    base_lr=3e-3,
    warmup_iters=20,
    batch=8,
    epochs=1,
    max_iters=200,
    input_size=64,
    certainty_band=2,
    embed_dim=64,
    depth=2,
    num_heads=4,
    pyramid_channels=(16, 16, 16),
    head_channels=16,
)


def _parse_value(field_type, raw: str):
    raw = raw.strip()
    if field_type in ("int", int):
        return int(raw)
    if field_type in ("float", float):
        return float(raw)
    if "tuple" in str(field_type):
        return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    return raw


def read_config(path, base: TrainConfig = TrainConfig()) -> TrainConfig:
    """Flat ``key = value`` file; keys are TrainConfig field names."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(types[key], raw)
    return replace(base, **values)


def write_config(cfg: TrainConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in asdict(cfg).items():
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            fh.write(f"{k} = {v}\n")


def lr_at(it: int, cfg: TrainConfig, max_iter: int) -> float:
    """Linear warm-up from 0 to base_lr, then poly decay to 0 at max_iter."""
    if max_iter <= cfg.warmup_iters:
        raise ValueError(f"max_iter ({max_iter}) must exceed warmup_iters ({cfg.warmup_iters})")
    if not 0 <= it <= max_iter:
        raise ValueError(f"iteration {it} outside [0, {max_iter}]")
    if it < cfg.warmup_iters:
        return cfg.base_lr * it / cfg.warmup_iters
    progress = (it - cfg.warmup_iters) / (max_iter - cfg.warmup_iters)
    return cfg.base_lr * (1.0 - progress) ** cfg.poly_power
