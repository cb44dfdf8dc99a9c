"""Shared domain types plus manifest and mask serialization."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

SOURCE_POOLS = ("DUTS-TR", "COCO", "OpenImages", "VOC2012", "synthetic")
SPLITS = ("train", "test")


class ManifestError(ValueError):
    pass


class MaskFormatError(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def as_binary(mask, name: str = "mask") -> np.ndarray:
    """Return `mask` as a uint8 {0,1} array, rejecting anything non-binary."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a 2-D grid, got shape {m.shape}")
    if m.dtype == bool:
        return m.astype(np.uint8)
    if not np.isin(m, (0, 1)).all():
        raise ValueError(f"{name} is not binary")
    return m.astype(np.uint8)


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    path: str
    width: int
    height: int
    source_pool: str = "synthetic"
    split: str = "train"
    categories: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"{self.image_id}: width/height must be >= 1")
        if self.source_pool not in SOURCE_POOLS:
            raise ValueError(f"{self.image_id}: unknown source_pool {self.source_pool!r}")
        if self.split not in SPLITS:
            raise ValueError(f"{self.image_id}: split must be one of {SPLITS}")
        cats = tuple((str(p), str(s)) for p, s in self.categories)
        object.__setattr__(self, "categories", cats)

    def to_json(self) -> dict:
        d = asdict(self)
        d["categories"] = [list(c) for c in self.categories]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ImageRecord":
        expected = {"image_id", "path", "width", "height", "source_pool", "split", "categories"}
        keys = set(d)
        if keys != expected:
            raise ValueError(f"fields {sorted(keys ^ expected)} missing or unexpected")
        return cls(
            image_id=d["image_id"],
            path=d["path"],
            width=int(d["width"]),
            height=int(d["height"]),
            source_pool=d["source_pool"],
            split=d["split"],
            categories=tuple(tuple(c) for c in d["categories"]),
        )


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"saliency map must be 2-D, got {v.shape}")
        if not np.isfinite(v).all() or v.min(initial=0.0) < 0.0 or v.max(initial=0.0) > 1.0:
            raise ValueError("saliency values must lie in [0, 1]")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class Provenance:
    phrase: str
    box: tuple[int, int, int, int]
    logit: float


@dataclass(frozen=True, eq=False)
class PseudoLabel:
    mask: np.ndarray
    provenance: tuple[Provenance, ...] = ()
    empty: bool = field(default=False)

    def __post_init__(self):
        object.__setattr__(self, "mask", _frozen(as_binary(self.mask)))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        object.__setattr__(self, "empty", not self.mask.any())


@dataclass(frozen=True, eq=False)
class EdgeMap:
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", _frozen(as_binary(self.mask, "edge map")))


@dataclass(frozen=True, eq=False)
class CertaintyMask:
    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", _frozen(as_binary(self.mask, "certainty mask")))

    @property
    def n_certain(self) -> int:
        return int(self.mask.sum())

    @property
    def n_total(self) -> int:
        return int(self.mask.size)


# --- manifests -------------------------------------------------------------

def read_manifest(path) -> list[ImageRecord]:
    records: list[ImageRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = ImageRecord.from_json(json.loads(line))
            except (json.JSONDecodeError, ValueError, TypeError, KeyError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if rec.image_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)
            records.append(rec)
    return records


def write_manifest(records: Iterable[ImageRecord], path) -> None:
    seen: set[str] = set()
    lines = []
    for rec in records:
        if rec.image_id in seen:
            raise ManifestError(f"duplicate image_id {rec.image_id!r}")
        seen.add(rec.image_id)
        lines.append(json.dumps(rec.to_json(), ensure_ascii=False))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(line + "\n" for line in lines)


# --- image / mask I/O ------------------------------------------------------

def write_mask(mask, path) -> None:
    """Write a binary mask as an 8-bit grayscale PNG (0 -> 0, 1 -> 255)."""
    if isinstance(mask, (PseudoLabel, EdgeMap, CertaintyMask)):
        mask = mask.mask
    m = as_binary(mask)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((m * 255).astype(np.uint8), mode="L").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            raise MaskFormatError(f"{path}: expected 8-bit grayscale PNG, got mode {im.mode}")
        a = np.asarray(im)
    bad = ~np.isin(a, (0, 255))
    if bad.any():
        raise MaskFormatError(f"{path}: mask contains values other than 0/255")
    return (a == 255).astype(np.uint8)


def read_gray(path) -> np.ndarray:
    """Read any grayscale PNG as floats in [0, 1]."""
    with Image.open(path) as im:
        a = np.asarray(im.convert("L"), dtype=np.float64)
    return a / 255.0


def write_saliency(values, path) -> None:
    v = SaliencyMap(values).values
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.rint(v * 255.0).astype(np.uint8), mode="L").save(path, format="PNG")


def read_image(path) -> np.ndarray:
    """RGB uint8 array of shape (H, W, 3)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def write_image(rgb: np.ndarray, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(rgb, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def resolve(record: ImageRecord, base: Path | str | None = None) -> Path:
    p = Path(record.path)
    if not p.is_absolute() and base is not None:
        p = Path(base) / p
    return p


def records_by_id(records: Sequence[ImageRecord]) -> dict[str, ImageRecord]:
    return {r.image_id: r for r in records}
