"""Text -> box -> mask pseudo-label generation.

The grounder turns a prompt into scored boxes, low-confidence boxes are
filtered, the segmenter masks each surviving box and the per-box masks are
OR-fused into one pseudo-label per image.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
from scipy import ndimage

from .core import ImageRecord, Provenance, PseudoLabel, as_binary, read_image, resolve, write_mask
from .phrasekit import (
    BackendUnavailable,
    CaptionerBackend,
    Phrase,
    PhraseSet,
    build_prompt,
    caption,
    split_prompt,
)
from .synthetic import PALETTE

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.35
FAILURE_RATE_LIMIT = 0.10


class BoxError(ValueError):
    pass


class SegmentationFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class ScoredBox:
    x1: int
    y1: int
    x2: int
    y2: int
    logit: float
    source_phrase: Phrase

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise BoxError(f"degenerate box {self.coords}")
        if not (0.0 <= self.logit <= 1.0):
            raise BoxError(f"logit {self.logit} outside [0, 1]")

    @property
    def coords(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)

    def check_bounds(self, height: int, width: int) -> None:
        if self.x1 < 0 or self.y1 < 0 or self.x2 > width or self.y2 > height:
            raise BoxError(f"box {self.coords} outside {width}x{height} image")


@dataclass(frozen=True)
class ScoredBoxSet:
    image_id: str
    boxes: tuple[ScoredBox, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def __len__(self):
        return len(self.boxes)

    def __iter__(self):
        return iter(self.boxes)


class GrounderBackend(Protocol):
    reentrant: bool

    def detect(self, image: np.ndarray, prompt: str) -> Sequence[tuple[tuple[int, int, int, int], float, Phrase]]:
        ...


class SegmenterBackend(Protocol):
    reentrant: bool

    def segment(self, image: np.ndarray, box: ScoredBox) -> np.ndarray:
        ...


# --- mock backends ---------------------------------------------------------

def classify_shape(component: np.ndarray) -> str:
    """Squares fill their bounding box; discs fill about pi/4 of it."""
    ys, xs = np.nonzero(component)
    fill = component.sum() / ((np.ptp(ys) + 1) * (np.ptp(xs) + 1))
    return "square" if fill > 0.9 else "disc"


class MockGrounder:
    """Connected components of known foreground colors, matched to phrases.

    A component matches a phrase when its shape equals the noun and, if the
    phrase carries an adjective, its color name appears among the
    adjective tokens. logit = component area / image area, so mock logits
    are small and mock runs use ``tau=0``.
    """

    reentrant = True

    def __init__(self, palette: Mapping[str, tuple[int, int, int]] = PALETTE):
        self.palette = dict(palette)

    def components(self, image: np.ndarray):
        h, w = image.shape[:2]
        found = []
        eight = np.ones((3, 3), dtype=bool)
        for name, color in self.palette.items():
            hit = np.all(image == np.asarray(color, dtype=image.dtype), axis=-1)
            if not hit.any():
                continue
            labels, n = ndimage.label(hit, structure=eight)
            for sl_idx, sl in enumerate(ndimage.find_objects(labels), 1):
                comp = labels[sl] == sl_idx
                area = int(comp.sum())
                box = (sl[1].start, sl[0].start, sl[1].stop, sl[0].stop)
                found.append((box, area / (h * w), name, classify_shape(comp)))
        found.sort(key=lambda c: (c[0][1], c[0][0], c[2]))
        return found

    def detect(self, image, prompt):
        out, used = [], set()
        comps = self.components(image)
        for phrase in split_prompt(prompt):
            noun = " ".join(phrase.noun)
            for box, area_frac, color, shape in comps:
                if shape != noun or box in used:
                    continue
                if phrase.adjective and color not in phrase.adjective:
                    continue
                used.add(box)
                out.append((box, area_frac, phrase))
        return out


class MockSegmenter:
    """Flood fill from the box centre over pixels of the centre's color.

    The fill is confined to the box. A centre pixel painted in the image's
    background color (the most common border color) yields an empty mask.
    """

    reentrant = True

    def __init__(self, tolerance: float = 30.0):
        self.tolerance = tolerance

    @staticmethod
    def background(image: np.ndarray) -> np.ndarray:
        border = np.concatenate([image[0], image[-1], image[:, 0], image[:, -1]])
        colors, counts = np.unique(border.reshape(-1, 3), axis=0, return_counts=True)
        return colors[int(np.argmax(counts))]

    def segment(self, image, box: ScoredBox):
        h, w = image.shape[:2]
        mask = np.zeros((h, w), dtype=np.uint8)
        cy, cx = (box.y1 + box.y2 - 1) // 2, (box.x1 + box.x2 - 1) // 2
        seed = image[cy, cx].astype(np.int64)
        if np.linalg.norm(seed - self.background(image).astype(np.int64)) <= self.tolerance:
            return mask
        crop = image[box.y1:box.y2, box.x1:box.x2].astype(np.int64)
        similar = np.linalg.norm(crop - seed, axis=-1) <= self.tolerance
        labels, _ = ndimage.label(similar)
        mask[box.y1:box.y2, box.x1:box.x2] = labels == labels[cy - box.y1, cx - box.x1]
        return mask


# --- operations ------------------------------------------------------------

def ground(backend: GrounderBackend, image: ImageRecord, prompt: str, pixels=None, base=None) -> ScoredBoxSet:
    if backend is None:
        raise BackendUnavailable("no grounder backend")
    rgb = read_image(resolve(image, base)) if pixels is None else pixels
    h, w = rgb.shape[:2]
    boxes = []
    for (x1, y1, x2, y2), logit, phrase in backend.detect(rgb, prompt):
        b = ScoredBox(int(x1), int(y1), int(x2), int(y2), float(logit), phrase)
        b.check_bounds(h, w)
        boxes.append(b)
    return ScoredBoxSet(image.image_id, tuple(boxes))


def filter_boxes(bs: ScoredBoxSet, tau: float) -> ScoredBoxSet:
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return ScoredBoxSet(bs.image_id, tuple(b for b in bs.boxes if b.logit >= tau))


def segment(backend: SegmenterBackend, image, box: ScoredBox, pixels=None, base=None) -> np.ndarray:
    """Mask one box. Raises `SegmentationFailure` on an all-zero mask."""
    if backend is None:
        raise BackendUnavailable("no segmenter backend")
    if pixels is None:
        pixels = read_image(resolve(image, base)) if isinstance(image, ImageRecord) else np.asarray(image)
    m = as_binary(backend.segment(pixels, box), "segmenter mask")
    if not m.any():
        raise SegmentationFailure(f"empty mask for box {box.coords}")
    return m


def fuse_masks(masks: Sequence[np.ndarray], provenance=(), shape=None) -> PseudoLabel:
    """Pixelwise OR. An empty list gives an all-zero label flagged empty."""
    masks = [as_binary(m) for m in masks]
    if not masks:
        if shape is None:
            raise ValueError("shape is required to fuse an empty mask list")
        return PseudoLabel(np.zeros(shape, dtype=np.uint8), tuple(provenance))
    first = masks[0].shape
    for m in masks[1:]:
        if m.shape != first:
            raise ValueError(f"mask shape mismatch: {m.shape} vs {first}")
    fused = np.logical_or.reduce(masks).astype(np.uint8)
    return PseudoLabel(fused, tuple(provenance))


# --- pipeline --------------------------------------------------------------

@dataclass
class ImageResult:
    image_id: str
    status: str  # ok | partial | empty | error
    n_boxes: int = 0
    n_phrases: int = 0
    provenance: list = field(default_factory=list)
    seg_failures: int = 0
    error: str | None = None

    def to_json(self) -> dict:
        d = {
            "image_id": self.image_id,
            "status": self.status,
            "n_boxes": self.n_boxes,
            "n_phrases": self.n_phrases,
            "provenance": self.provenance,
        }
        if self.seg_failures:
            d["seg_failures"] = self.seg_failures
        if self.error:
            d["error"] = self.error
        return d


@dataclass
class PipelineReport:
    results: list[ImageResult]

    @property
    def empties(self) -> list[str]:
        return [r.image_id for r in self.results if r.status == "empty"]

    @property
    def errors(self) -> list[str]:
        return [r.image_id for r in self.results if r.status == "error"]

    @property
    def segmentation_failures(self) -> list[str]:
        return [r.image_id for r in self.results if r.seg_failures]

    @property
    def n_failed(self) -> int:
        return len(self.empties) + len(self.errors)

    @property
    def exit_code(self) -> int:
        if not self.results:
            return 0
        return 1 if self.n_failed / len(self.results) > FAILURE_RATE_LIMIT else 0

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.results:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def label_image(
    rec: ImageRecord,
    captioner: CaptionerBackend | None,
    grounder: GrounderBackend,
    segmenter: SegmenterBackend,
    tau: float = DEFAULT_TAU,
    adjectives: bool = True,
    phrases: PhraseSet | None = None,
    base=None,
) -> tuple[PseudoLabel, ImageResult]:
    rgb = read_image(resolve(rec, base))
    ps = phrases if phrases is not None else caption(captioner, rec, pixels=rgb)
    prompt = build_prompt(ps, adjectives=adjectives)
    boxes = filter_boxes(ground(grounder, rec, prompt, pixels=rgb), tau)
    masks, prov, failures = [], [], 0
    for b in boxes:
        try:
            masks.append(segment(segmenter, rec, b, pixels=rgb))
        except SegmentationFailure:
            failures += 1
            continue
        prov.append(Provenance(b.source_phrase.format(adjectives), b.coords, b.logit))
    label = fuse_masks(masks, prov, shape=rgb.shape[:2])
    if label.empty:
        status = "empty"
    elif failures:
        status = "partial"
    else:
        status = "ok"
    result = ImageResult(
        rec.image_id,
        status,
        n_boxes=len(boxes),
        n_phrases=len(ps.phrases),
        provenance=[{"phrase": p.phrase, "box": list(p.box), "logit": p.logit} for p in prov],
        seg_failures=failures,
    )
    return label, result


def run_pipeline(
    manifest: Sequence[ImageRecord],
    captioner: CaptionerBackend | None,
    grounder: GrounderBackend,
    segmenter: SegmenterBackend,
    out_dir,
    tau: float = DEFAULT_TAU,
    adjectives: bool = True,
    phrases: Mapping[str, PhraseSet] | None = None,
    base=None,
    workers: int = 1,
) -> PipelineReport:
    """Label every manifest image, writing ``<image_id>.png`` masks and
    ``report.jsonl`` into `out_dir` in manifest order.

    Backend errors are recorded per image and do not stop the run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    backends = [b for b in (captioner, grounder, segmenter) if b is not None]
    if not all(getattr(b, "reentrant", False) for b in backends):
        workers = 1

    def work(rec):
        ps = phrases.get(rec.image_id) if phrases is not None else None
        try:
            if phrases is not None and ps is None:
                raise KeyError(f"no phrases for {rec.image_id}")
            return label_image(rec, captioner, grounder, segmenter, tau, adjectives, ps, base)
        except Exception as exc:  # per-image fault isolation
            log.warning("pseudo-labelling %s failed: %s", rec.image_id, exc)
            return None, ImageResult(rec.image_id, "error", error=f"{type(exc).__name__}: {exc}")

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(work, manifest))
    else:
        outcomes = [work(r) for r in manifest]

    results = []
    for rec, (label, result) in zip(manifest, outcomes):
        if label is not None:
            write_mask(label, out / f"{rec.image_id}.png")
        results.append(result)
    report = PipelineReport(results)
    report.write(out / "report.jsonl")
    return report
