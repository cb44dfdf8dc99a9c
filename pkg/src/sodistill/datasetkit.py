"""Manifest construction from source pools, category statistics, splits and
distribution reports."""
from __future__ import annotations

import csv
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .core import ImageRecord
from .phrasekit import PhraseSet

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


class SourceError(KeyError):
    pass


@dataclass
class SourcePool:
    """Candidate images from one source dataset, keyed by relative path."""

    name: str
    records: dict[str, ImageRecord] = field(default_factory=dict)

    @classmethod
    def from_directory(cls, name: str, root, categories: Mapping[str, Sequence[tuple[str, str]]] | None = None):
        """Ingest every image under `root`. `categories` maps relative path to
        (parent, sub) pairs where the source provides annotations."""
        root = Path(root)
        recs = {}
        for p in sorted(root.rglob("*")):
            if p.suffix.lower() not in IMAGE_EXTS:
                continue
            rel = p.relative_to(root).as_posix()
            with Image.open(p) as im:
                w, h = im.size
            cats = tuple(tuple(c) for c in (categories or {}).get(rel, ()))
            image_id = f"{name}/{rel.rsplit('.', 1)[0]}"
            recs[rel] = ImageRecord(image_id, str(p), w, h, name, "train", cats)
        return cls(name, recs)


@dataclass
class BuiltManifest:
    records: list[ImageRecord]
    seed: int
    order: list[str]  # "pool/relpath" in sampled order


def read_accept_list(path) -> list[str]:
    """One ``pool/relative/path`` per line; blank lines and ``#`` comments skipped."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line)
    return out


def _split_ref(ref: str) -> tuple[str, str]:
    for sep in ("\t", "/"):
        if sep in ref:
            pool, rel = ref.split(sep, 1)
            return pool, rel
    raise SourceError(f"malformed accept-list entry {ref!r}")


def build_manifest(source_pools: Iterable[SourcePool], sampler_seed: int, accept_list: Sequence[str]) -> BuiltManifest:
    """Accepted images in a seeded random order.

    The accept list is the replayable record of manual filtering; every
    entry must name an existing image of a known pool.
    """
    pools = {p.name: p for p in source_pools}
    chosen = []
    seen = set()
    for ref in accept_list:
        pool, rel = _split_ref(ref)
        if pool not in pools:
            raise SourceError(f"unknown source pool {pool!r} in {ref!r}")
        if rel not in pools[pool].records:
            raise SourceError(f"unknown source image {ref!r}")
        key = f"{pool}/{rel}"
        if key not in seen:
            seen.add(key)
            chosen.append((key, pools[pool].records[rel]))
    chosen.sort(key=lambda kv: kv[0])
    perm = np.random.default_rng(sampler_seed).permutation(len(chosen))
    ordered = [chosen[i] for i in perm]
    return BuiltManifest([r for _, r in ordered], sampler_seed, [k for k, _ in ordered])


def categories_from_phrases(ps: PhraseSet) -> tuple[tuple[str, str], ...]:
    """Fallback labels: noun as parent, adjective + noun as subcategory."""
    pairs = []
    for p in ps.phrases:
        parent = " ".join(p.noun)
        pair = (parent, p.format())
        if pair not in pairs:
            pairs.append(pair)
    return tuple(pairs)


@dataclass(frozen=True)
class CategoryStats:
    pair_counts: tuple[tuple[tuple[str, str], int], ...]
    parent_counts: tuple[tuple[str, int], ...]
    n_images: int
    n_parents: int
    n_subs: int

    @property
    def total_assignments(self) -> int:
        return sum(c for _, c in self.pair_counts)

    def as_dict(self) -> dict[tuple[str, str], int]:
        return dict(self.pair_counts)


def _by_freq(counter: Counter):
    return tuple(sorted(counter.items(), key=lambda kv: (-kv[1], kv[0])))


def category_stats(manifest: Sequence[ImageRecord]) -> CategoryStats:
    """Images per (parent, sub) pair and per parent, most frequent first.

    A pair (or parent) listed several times on one record counts once.
    """
    pairs: Counter = Counter()
    parents: Counter = Counter()
    for rec in manifest:
        rec_pairs = set(rec.categories)
        pairs.update(rec_pairs)
        parents.update({p for p, _ in rec_pairs})
    return CategoryStats(
        pair_counts=_by_freq(pairs),
        parent_counts=_by_freq(parents),
        n_images=len(manifest),
        n_parents=len(parents),
        n_subs=len(pairs),
    )


def split_manifest(manifest: Sequence[ImageRecord], ratio: float, seed: int):
    """Seeded partition into ``round(ratio * N)`` train and the rest test.

    Records keep their manifest order within each part and get their
    ``split`` field set.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(manifest)
    n_train = int(np.floor(ratio * n + 0.5))
    chosen = set(np.random.default_rng(seed).permutation(n)[:n_train].tolist())
    train = [replace(r, split="train") for i, r in enumerate(manifest) if i in chosen]
    test = [replace(r, split="test") for i, r in enumerate(manifest) if i not in chosen]
    return train, test


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "unnamed"


def distribution_rows(stats: CategoryStats) -> list[tuple[str, str, int, float]]:
    per_parent: dict[str, list] = defaultdict(list)
    for (parent, sub), count in stats.pair_counts:
        per_parent[parent].append((sub, count))
    rows = []
    for parent, _ in stats.parent_counts:
        subs = per_parent[parent]
        total = sum(c for _, c in subs)
        rows.extend((parent, sub, count, count / total) for sub, count in subs)
    return rows


def emit_distribution_report(stats: CategoryStats, out_dir, plots: bool = True) -> Path:
    """Write ``categories.csv`` (parent, sub, count, share) and one histogram
    per parent; share is the sub's fraction of its parent's assignments."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = distribution_rows(stats)
    csv_path = out / "categories.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["parent", "sub", "count", "share"])
        for parent, sub, count, share in rows:
            wr.writerow([parent, sub, count, repr(share)])
    if plots and rows:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        by_parent: dict[str, list] = defaultdict(list)
        for parent, sub, count, _ in rows:
            by_parent[parent].append((sub, count))
        for parent, subs in by_parent.items():
            fig, ax = plt.subplots(figsize=(max(3.0, 0.4 * len(subs) + 1.5), 3))
            ax.bar(range(len(subs)), [c for _, c in subs])
            ax.set_xticks(range(len(subs)))
            ax.set_xticklabels([s for s, _ in subs], rotation=60, ha="right", fontsize=7)
            ax.set_title(parent)
            ax.set_ylabel("images")
            fig.tight_layout()
            fig.savefig(out / f"hist_{_safe(parent)}.png", dpi=80)
            plt.close(fig)
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(range(1, stats.n_parents + 1), [c for _, c in stats.parent_counts], marker=".")
        ax.set_xlabel("category rank")
        ax.set_ylabel("images")
        fig.tight_layout()
        fig.savefig(out / "parents_by_frequency.png", dpi=80)
        plt.close(fig)
    return csv_path
