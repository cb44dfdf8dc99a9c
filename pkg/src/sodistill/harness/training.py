"""Training loop, cached supervision targets and prediction."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from ..core import ImageRecord, read_image, read_mask, resolve, write_mask, write_saliency
from ..dedecoder import DEDecoderNet, load_checkpoint, save_checkpoint
from ..losskit import certainty_mask, edge_target, total_loss
from .config import TrainConfig, lr_at

log = logging.getLogger(__name__)

MEAN = np.array([0.485, 0.456, 0.406])
STD = np.array([0.229, 0.224, 0.225])


class TrainingError(RuntimeError):
    pass


def _stable_hash(s: str) -> int:
    return int.from_bytes(hashlib.sha256(s.encode()).digest()[:8], "little")


def sample_rng(seed: int, epoch: int, image_id: str) -> np.random.Generator:
    """Per-sample RNG, independent of loader order and worker count."""
    return np.random.default_rng([seed, epoch, _stable_hash(image_id)])


def to_input(rgb: np.ndarray, size: int) -> np.ndarray:
    """Resize to size x size and normalize to a (3, size, size) float32 array."""
    im = Image.fromarray(rgb)
    if im.size != (size, size):
        im = im.resize((size, size), Image.BILINEAR)
    a = np.asarray(im, dtype=np.float64) / 255.0
    return ((a - MEAN) / STD).transpose(2, 0, 1).astype(np.float32)


def _resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    if mask.shape == (size, size):
        return mask
    im = Image.fromarray((mask * 255).astype(np.uint8)).resize((size, size), Image.NEAREST)
    return (np.asarray(im) > 127).astype(np.uint8)


def cached_targets(label_dir, image_id: str, size: int, band: int):
    """(label, certainty, edge) at training resolution.

    Certainty masks and edge targets are deterministic functions of the
    pseudo-label and are cached under ``<label_dir>/.targets/``.
    """
    label_dir = Path(label_dir)
    label = _resize_mask(read_mask(label_dir / f"{image_id}.png"), size)
    cache = label_dir / ".targets" / f"s{size}_b{band}"
    cert_p, edge_p = cache / f"{image_id}.cert.png", cache / f"{image_id}.edge.png"
    if cert_p.exists() and edge_p.exists():
        return label, read_mask(cert_p), read_mask(edge_p)
    cert = certainty_mask(label, band).mask
    edge = edge_target(label).mask
    write_mask(cert, cert_p)
    write_mask(edge, edge_p)
    return label, cert, edge


@dataclass
class Sample:
    image_id: str
    image: np.ndarray  # (3, S, S) float32
    label: np.ndarray
    certainty: np.ndarray
    edge: np.ndarray

    def flipped(self) -> "Sample":
        return Sample(
            self.image_id,
            np.ascontiguousarray(self.image[:, :, ::-1]),
            np.ascontiguousarray(self.label[:, ::-1]),
            np.ascontiguousarray(self.certainty[:, ::-1]),
            np.ascontiguousarray(self.edge[:, ::-1]),
        )


def load_samples(manifest: Sequence[ImageRecord], label_dir, cfg: TrainConfig, base=None) -> list[Sample]:
    label_dir = Path(label_dir)
    missing = [r.image_id for r in manifest if not (label_dir / f"{r.image_id}.png").exists()]
    if missing:
        raise TrainingError(f"missing pseudo-labels for {len(missing)} images, e.g. {missing[:3]}")
    out = []
    for r in manifest:
        img = to_input(read_image(resolve(r, base)), cfg.input_size)
        label, cert, edge = cached_targets(label_dir, r.image_id, cfg.input_size, cfg.certainty_band)
        out.append(Sample(r.image_id, img, label, cert, edge))
    return out


def augment(s: Sample, cfg: TrainConfig, epoch: int) -> Sample:
    """Horizontal flip applied jointly to image, label, certainty and edge."""
    if sample_rng(cfg.seed, epoch, s.image_id).random() < cfg.flip_prob:
        return s.flipped()
    return s


def _batch(samples: Sequence[Sample]):
    x = torch.from_numpy(np.stack([s.image for s in samples]))
    g = torch.from_numpy(np.stack([s.label for s in samples])[:, None].astype(np.float32))
    j = torch.from_numpy(np.stack([s.certainty for s in samples])[:, None].astype(np.float32))
    e = torch.from_numpy(np.stack([s.edge for s in samples])[:, None].astype(np.float32))
    return x, g, j, e


def _grad_norm(params) -> float:
    norms = [p.grad.detach().norm(2) for p in params if p.grad is not None]
    return float(torch.norm(torch.stack(norms), 2)) if norms else 0.0


@dataclass
class TrainResult:
    checkpoint: Path
    log_path: Path
    log: list[dict]
    max_iter: int

    def losses(self, key: str = "total") -> np.ndarray:
        return np.array([row[key] for row in self.log])


def build_model(cfg: TrainConfig, edge_decoder: bool = True) -> DEDecoderNet:
    torch.manual_seed(cfg.seed)
    return DEDecoderNet(cfg.model_config(edge_decoder))


def train(
    cfg: TrainConfig,
    manifest: Sequence[ImageRecord],
    pseudo_label_dir,
    out_dir,
    edge_decoder: bool = True,
    base=None,
    checkpoint_every_epoch: bool = True,
) -> TrainResult:
    """Train from pseudo-labels; writes ``loss_log.jsonl``, per-epoch
    checkpoints and ``model.pt`` under `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not manifest:
        raise TrainingError("empty training manifest")
    samples = load_samples(manifest, pseudo_label_dir, cfg, base)
    n = len(samples)
    max_iter = cfg.max_iter(n)
    model = build_model(cfg, edge_decoder)
    model.train()
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.AdamW(params, lr=0.0, weight_decay=cfg.weight_decay)
    weights = cfg.weights
    per_epoch = math.ceil(n / cfg.batch)

    log_rows: list[dict] = []
    log_path = out / "loss_log.jsonl"
    it = 0
    epoch = 0
    with open(log_path, "w", encoding="utf-8") as log_fh:
        while it < max_iter:
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
            for b in range(per_epoch):
                if it >= max_iter:
                    break
                idx = order[b * cfg.batch:(b + 1) * cfg.batch]
                x, g, j, e = _batch([augment(samples[i], cfg, epoch) for i in idx])
                sal, edge_logits = model(x)
                total, parts = total_loss(torch.sigmoid(sal), g, j, edge_logits, e, weights, parts=True)
                if not torch.isfinite(total):
                    raise TrainingError(
                        f"non-finite loss at iteration {it}: "
                        + ", ".join(f"{k}={float(v):.4g}" for k, v in parts.items())
                    )
                lr = lr_at(it, cfg, max_iter)
                for group in opt.param_groups:
                    group["lr"] = lr
                opt.zero_grad(set_to_none=True)
                total.backward()
                pre = float(torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip))
                post = _grad_norm(params)
                if post > cfg.grad_clip + 1e-6:
                    raise TrainingError(f"gradient norm {post} exceeds clip {cfg.grad_clip} after clipping")
                opt.step()
                row = {"iter": it, "epoch": epoch, "lr": lr, "total": float(total.detach())}
                row.update({k: float(v.detach()) for k, v in parts.items()})
                row.update({"grad_norm": pre, "grad_norm_clipped": post})
                log_fh.write(json.dumps(row) + "\n")
                log_rows.append(row)
                it += 1
            if checkpoint_every_epoch:
                save_checkpoint(model, out / f"epoch_{epoch:03d}.pt", epoch=epoch, iteration=it, input_size=cfg.input_size)
            epoch += 1
    ckpt = out / "model.pt"
    save_checkpoint(model, ckpt, epoch=epoch, iteration=it, input_size=cfg.input_size, train_config=_cfg_json(cfg))
    log.info("trained %d iterations over %d epochs", it, epoch)
    return TrainResult(ckpt, log_path, log_rows, max_iter)


def _cfg_json(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["pyramid_channels"] = list(d["pyramid_channels"])
    return d


def checkpoint_input_size(path, default: int = 352) -> int:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    return int(blob.get("meta", {}).get("input_size", default))


@torch.no_grad()
def predict_array(model: DEDecoderNet, rgb: np.ndarray, input_size: int) -> np.ndarray:
    """Saliency probabilities at the image's own resolution."""
    model.eval()
    x = torch.from_numpy(to_input(rgb, input_size))[None]
    prob = torch.sigmoid(model(x)[0].double())
    h, w = rgb.shape[:2]
    if (h, w) != (input_size, input_size):
        prob = F.interpolate(prob, size=(h, w), mode="bilinear", align_corners=False)
    return prob[0, 0].clamp(0.0, 1.0).numpy()


def predict(checkpoint, images, out_dir, input_size: int | None = None, base=None) -> list[Path]:
    """Write one saliency PNG per image; `images` is a directory or records."""
    model = load_checkpoint(checkpoint)
    size = input_size or checkpoint_input_size(checkpoint)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(images, (str, Path)):
        items = [(p.stem, p) for p in sorted(Path(images).iterdir())
                 if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp")]
    else:
        items = [(r.image_id, resolve(r, base)) for r in images]
    written = []
    for stem, path in items:
        prob = predict_array(model, read_image(path), size)
        dest = out / f"{stem}.png"
        write_saliency(prob, dest)
        written.append(dest)
    return written
