"""Synthetic shapes images with exact ground truth and caption fixtures.

Every foreground object is painted in one flat palette color on a flat
background, so the mock grounder/segmenter can recover it exactly.
Salient objects use the bright palette; distractors use ``slate``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ImageRecord, write_image, write_manifest, write_mask
from .phrasekit import content_hash

PALETTE = {
    "red": (220, 40, 40),
    "green": (40, 180, 60),
    "blue": (40, 70, 220),
    "yellow": (230, 210, 40),
    "slate": (90, 100, 130),
}
SALIENT_COLORS = ("red", "green", "blue", "yellow")
DISTRACTOR_COLOR = "slate"
BACKGROUNDS = ((235, 230, 215), (200, 215, 225), (215, 225, 200))
SHAPES = ("disc", "square")


@dataclass(frozen=True)
class ShapeSpec:
    shape: str
    color: str
    cy: float
    cx: float
    size: float  # disc radius or square half-side
    salient: bool = True

    @property
    def phrase(self) -> str:
        return f"{self.color} {self.shape}"


def shape_mask(spec: ShapeSpec, h: int, w: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    py, px = yy + 0.5, xx + 0.5
    if spec.shape == "disc":
        m = (py - spec.cy) ** 2 + (px - spec.cx) ** 2 <= spec.size ** 2
    elif spec.shape == "square":
        m = (np.abs(py - spec.cy) <= spec.size) & (np.abs(px - spec.cx) <= spec.size)
    else:
        raise ValueError(f"unknown shape {spec.shape!r}")
    return m


def render(specs, h: int, w: int, background=BACKGROUNDS[0]):
    """Paint shapes in order; returns (rgb, salient ground-truth mask)."""
    rgb = np.empty((h, w, 3), dtype=np.uint8)
    rgb[:] = background
    gt = np.zeros((h, w), dtype=np.uint8)
    for s in specs:
        m = shape_mask(s, h, w)
        rgb[m] = PALETTE[s.color]
        gt[m] = 1 if s.salient else 0
    return rgb, gt


def _place(rng, h, w, size, placed, margin=3):
    for _ in range(200):
        cy = rng.uniform(size + 1, h - size - 1)
        cx = rng.uniform(size + 1, w - size - 1)
        if all(np.hypot(cy - y, cx - x) > size + r * 1.42 + margin for y, x, r in placed):
            return cy, cx
    return None


def random_scene(rng: np.random.Generator, size: int = 64, distractor_prob: float = 0.5):
    scale = size / 64.0
    n_salient = int(rng.integers(1, 3))
    specs: list[ShapeSpec] = []
    placed: list[tuple[float, float, float]] = []
    colors = list(rng.permutation(SALIENT_COLORS))
    for i in range(n_salient):
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        r = float(rng.uniform(7, 13)) * scale
        pos = _place(rng, size, size, r * 1.42, placed)
        if pos is None:
            continue
        placed.append((pos[0], pos[1], r))
        specs.append(ShapeSpec(shape, str(colors[i]), pos[0], pos[1], r))
    if rng.random() < distractor_prob:
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        r = float(rng.uniform(5, 9)) * scale
        pos = _place(rng, size, size, r * 1.42, placed)
        if pos is not None:
            specs.append(ShapeSpec(shape, DISTRACTOR_COLOR, pos[0], pos[1], r, salient=False))
    bg = BACKGROUNDS[int(rng.integers(len(BACKGROUNDS)))]
    return specs, bg


def generate_shapes_dataset(
    out_dir,
    n: int = 64,
    size: int = 64,
    seed: int = 0,
    distractor_prob: float = 0.5,
    test_fraction: float = 0.25,
) -> list[ImageRecord]:
    """Write images/, gt/, manifest.jsonl and captions.json under `out_dir`.

    The last ``round(test_fraction * n)`` images are marked ``split=test``.
    ``captions.json`` maps image content hash to salient phrases, the
    fixture table consumed by `MockCaptioner`.
    """
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    n_test = int(round(test_fraction * n))
    records, captions = [], {}
    for i in range(n):
        specs, bg = random_scene(rng, size, distractor_prob)
        rgb, gt = render(specs, size, size, bg)
        image_id = f"shape{i:04d}"
        write_image(rgb, out / "images" / f"{image_id}.png")
        write_mask(gt, out / "gt" / f"{image_id}.png")
        captions[content_hash(rgb)] = [s.phrase for s in specs if s.salient]
        cats = tuple(sorted({(s.shape, s.phrase) for s in specs if s.salient}))
        records.append(ImageRecord(
            image_id=image_id,
            path=f"images/{image_id}.png",
            width=size,
            height=size,
            source_pool="synthetic",
            split="test" if i >= n - n_test else "train",
            categories=cats,
        ))
    write_manifest(records, out / "manifest.jsonl")
    with open(out / "captions.json", "w", encoding="utf-8") as fh:
        json.dump(captions, fh, indent=0, sort_keys=True)
    return records


def disambiguation_scene(size: int = 64):
    """A salient red disc next to a same-noun blue distractor disc.

    Only the adjective separates the two; the caption names the red one.
    """
    specs = [
        ShapeSpec("disc", "red", size * 0.35, size * 0.3, size * 0.14),
        ShapeSpec("disc", "blue", size * 0.65, size * 0.72, size * 0.14, salient=False),
    ]
    rgb, gt = render(specs, size, size)
    return rgb, gt, ["red disc"]


def write_disambiguation_fixture(out_dir, size: int = 64) -> list[ImageRecord]:
    out = Path(out_dir)
    rgb, gt, phrases = disambiguation_scene(size)
    write_image(rgb, out / "images" / "disamb.png")
    write_mask(gt, out / "gt" / "disamb.png")
    rec = ImageRecord("disamb", "images/disamb.png", size, size, "synthetic", "test")
    write_manifest([rec], out / "manifest.jsonl")
    with open(out / "captions.json", "w", encoding="utf-8") as fh:
        json.dump({content_hash(rgb): phrases}, fh)
    return [rec]
