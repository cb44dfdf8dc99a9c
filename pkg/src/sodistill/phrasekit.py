"""The "(adjective) + noun" phrase grammar, the captioner contract and
fine-tuning data export."""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .core import ImageRecord, read_image, resolve

ORIGINS = ("manual", "generated")
_SEP = re.compile(r"[\s,;.]+")
_TOKEN = re.compile(r"^[^\s,;.]+$")


class PhraseError(ValueError):
    pass


class BackendUnavailable(RuntimeError):
    pass


class CaptionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Phrase:
    noun: tuple[str, ...]
    adjective: tuple[str, ...] | None = None

    def __post_init__(self):
        noun = tuple(self.noun) if not isinstance(self.noun, str) else tuple(self.noun.split())
        adj = self.adjective
        if isinstance(adj, str):
            adj = tuple(adj.split())
        adj = tuple(adj) if adj else None
        if not noun:
            raise PhraseError("noun must be non-empty")
        for tok in noun + (adj or ()):
            if not _TOKEN.match(tok) or tok != tok.lower():
                raise PhraseError(f"bad token {tok!r}")
        object.__setattr__(self, "noun", noun)
        object.__setattr__(self, "adjective", adj)

    def format(self, adjectives: bool = True) -> str:
        if adjectives and self.adjective:
            return " ".join(self.adjective + self.noun)
        return " ".join(self.noun)

    def without_adjective(self) -> "Phrase":
        return Phrase(self.noun)

    def __str__(self):
        return self.format()


def parse_phrase(text: str, noun_tokens: int = 1) -> Phrase:
    """Split `text` into adjective tokens and a trailing noun run.

    The last `noun_tokens` tokens form the noun; everything before is the
    adjective (absent when nothing precedes the noun).
    """
    if text is None:
        raise PhraseError("empty phrase")
    tokens = [t for t in _SEP.split(text.strip().lower()) if t]
    if not tokens:
        raise PhraseError(f"no tokens in {text!r}")
    k = max(1, min(noun_tokens, len(tokens)))
    return Phrase(tuple(tokens[-k:]), tuple(tokens[:-k]) or None)


def format_phrase(p: Phrase) -> str:
    return p.format()


@dataclass(frozen=True)
class PhraseSet:
    image_id: str
    phrases: tuple[Phrase, ...]
    origin: str = "generated"

    def __post_init__(self):
        phrases = tuple(self.phrases)
        if not phrases:
            raise PhraseError(f"{self.image_id}: a phrase set needs at least one phrase")
        if len(set(phrases)) != len(phrases):
            raise PhraseError(f"{self.image_id}: duplicate phrases")
        if self.origin not in ORIGINS:
            raise PhraseError(f"{self.image_id}: origin must be one of {ORIGINS}")
        object.__setattr__(self, "phrases", phrases)

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "origin": self.origin,
            "phrases": [
                {"adjective": " ".join(p.adjective) if p.adjective else None, "noun": " ".join(p.noun)}
                for p in self.phrases
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "PhraseSet":
        phrases = tuple(Phrase(tuple(p["noun"].split()), p.get("adjective")) for p in d["phrases"])
        return cls(d["image_id"], phrases, d.get("origin", "generated"))


def build_prompt(ps: PhraseSet, adjectives: bool = True) -> str:
    return " . ".join(p.format(adjectives) for p in ps.phrases) + " ."


def split_prompt(prompt: str) -> list[Phrase]:
    """Inverse of `build_prompt` (single-token nouns)."""
    parts = [s.strip() for s in prompt.split(" .")]
    return [parse_phrase(s) for s in parts if s.strip(" .")]


def read_phrase_file(path) -> dict[str, PhraseSet]:
    out: dict[str, PhraseSet] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                ps = PhraseSet.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, PhraseError) as exc:
                raise PhraseError(f"{path}:{lineno}: {exc}") from exc
            out[ps.image_id] = ps
    return out


def write_phrase_file(sets: Iterable[PhraseSet], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for ps in sets:
            fh.write(json.dumps(ps.to_json()) + "\n")


# --- captioner backends ----------------------------------------------------

class CaptionerBackend(Protocol):
    reentrant: bool

    def describe(self, image: np.ndarray) -> Sequence[str]:
        """Raw phrase strings for one RGB image."""


def content_hash(image: np.ndarray) -> str:
    a = np.ascontiguousarray(image, dtype=np.uint8)
    h = hashlib.sha256()
    h.update(repr(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()


class MockCaptioner:
    """Looks captions up by image content hash in a fixture table."""

    reentrant = True

    def __init__(self, table: Mapping[str, Sequence[str]]):
        self.table = {k: tuple(v) for k, v in table.items()}

    @classmethod
    def from_file(cls, path) -> "MockCaptioner":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def describe(self, image):
        key = content_hash(image)
        if key not in self.table:
            raise CaptionError(f"no fixture caption for image hash {key[:12]}")
        return self.table[key]


def caption(backend: CaptionerBackend, image: ImageRecord, base=None, pixels=None) -> PhraseSet:
    if backend is None:
        raise BackendUnavailable("no captioner backend")
    rgb = read_image(resolve(image, base)) if pixels is None else pixels
    texts = backend.describe(rgb)
    phrases = []
    for t in texts:
        try:
            p = parse_phrase(t)
        except PhraseError as exc:
            raise CaptionError(f"{image.image_id}: captioner emitted unparseable text {t!r}") from exc
        if p not in phrases:
            phrases.append(p)
    if not phrases:
        raise CaptionError(f"{image.image_id}: captioner emitted no phrases")
    return PhraseSet(image.image_id, tuple(phrases), "generated")


# --- fine-tune export ------------------------------------------------------

def sample_count(fraction: float, n: int) -> int:
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    # round first so 0.3 * 10 is 3, not 4
    return min(n, math.ceil(round(fraction * n, 9)))


def export_finetune_set(
    manifest: Sequence[ImageRecord],
    phrase_file,
    fraction: float,
    out_path,
    seed: int = 0,
) -> list[tuple[str, str]]:
    """Write (image path, prompt) pairs for a seeded sample of the manifest.

    Sampled images must carry a manual phrase set.
    """
    k = sample_count(fraction, len(manifest))
    sets = read_phrase_file(phrase_file) if not isinstance(phrase_file, Mapping) else phrase_file
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(manifest), size=k, replace=False)) if k else []
    pairs = []
    for i in idx:
        rec = manifest[int(i)]
        ps = sets.get(rec.image_id)
        if ps is None or ps.origin != "manual":
            raise PhraseError(f"missing manual annotation for {rec.image_id!r}")
        pairs.append((rec.path, build_prompt(ps)))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={seed}\n")
        for path, prompt in pairs:
            fh.write(f"{path}\t{prompt}\n")
    return pairs
