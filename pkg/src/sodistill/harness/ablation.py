"""Two-arm ablations: phrase adjectives, training set, edge decoder.

Both arms share the config and seed; each arm is trained, run on the test
records and scored, and the pair is written as a two-row table
(baseline arm first) plus the per-metric delta.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..core import ImageRecord
from ..evalkit import MetricReport, evaluate_arrays, load_pair
from .config import TrainConfig
from .training import predict, train

PRESETS = ("adjectives", "dataset", "decoder")
ABLATION_METRICS = ("S", "maxF", "E", "MAE")


class AblationError(ValueError):
    pass


@dataclass(frozen=True)
class Arm:
    name: str
    manifest: Sequence[ImageRecord]
    label_dir: Path
    edge_decoder: bool = True


@dataclass
class AblationResult:
    preset: str
    arms: list[str]
    reports: list[MetricReport]
    checkpoints: list[Path]

    def rows(self) -> list[tuple[str, list[float]]]:
        return [(a, [getattr(r, m) for m in ABLATION_METRICS]) for a, r in zip(self.arms, self.reports)]

    def delta(self) -> dict[str, float]:
        """Second arm minus first."""
        a, b = self.reports
        return {m: getattr(b, m) - getattr(a, m) for m in ABLATION_METRICS}

    def format(self) -> str:
        head = f"{'':<14}" + "".join(f"{m:>8}" for m in ABLATION_METRICS)
        lines = [head]
        for name, vals in self.rows():
            lines.append(f"{name:<14}" + "".join(f"{v:>8.3f}" for v in vals))
        lines.append(f"{'delta':<14}" + "".join(f"{v:>+8.3f}" for v in self.delta().values()))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["arm", *ABLATION_METRICS])
            for name, vals in self.rows():
                wr.writerow([name, *(repr(float(v)) for v in vals)])
            wr.writerow(["delta", *(repr(float(v)) for v in self.delta().values())])
        (out / "ablation.txt").write_text(self.format())


def preset_arms(
    preset: str,
    manifest: Sequence[ImageRecord],
    label_dir,
    alt_label_dir=None,
    alt_manifest: Sequence[ImageRecord] | None = None,
) -> list[Arm]:
    """The two arms of `preset`, baseline first.

    adjectives: `alt_label_dir` holds labels made without adjectives.
    dataset: `alt_manifest` (labelled in `alt_label_dir`, default
    `label_dir`) is the second training set.
    decoder: edge decoder off, then on.
    """
    label_dir = Path(label_dir)
    if preset == "adjectives":
        if alt_label_dir is None:
            raise AblationError("adjectives preset needs the label directory made without adjectives")
        return [Arm("w/o", manifest, Path(alt_label_dir)), Arm("w/", manifest, label_dir)]
    if preset == "dataset":
        if alt_manifest is None:
            raise AblationError("dataset preset needs a second training manifest")
        alt_dir = Path(alt_label_dir) if alt_label_dir is not None else label_dir
        return [Arm("set A", manifest, label_dir), Arm("set B", alt_manifest, alt_dir)]
    if preset == "decoder":
        return [Arm("w/o", manifest, label_dir, edge_decoder=False), Arm("w/", manifest, label_dir)]
    raise AblationError(f"unknown preset {preset!r}; expected one of {', '.join(PRESETS)}")


def score(pred_dir, test: Sequence[ImageRecord], gt_dir, dataset: str = "test") -> MetricReport:
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds, gts = [], []
    for r in test:
        Y, G, _ = load_pair(pred_dir / f"{r.image_id}.png", gt_dir / f"{r.image_id}.png")
        preds.append(Y)
        gts.append(G)
    return evaluate_arrays(preds, gts, [r.image_id for r in test], dataset)[0]


def ablation(
    preset: str,
    cfg: TrainConfig,
    out_dir,
    manifest: Sequence[ImageRecord],
    label_dir,
    test: Sequence[ImageRecord],
    gt_dir,
    alt_label_dir=None,
    alt_manifest: Sequence[ImageRecord] | None = None,
    base=None,
) -> AblationResult:
    arms = preset_arms(preset, manifest, label_dir, alt_label_dir, alt_manifest)
    if not test:
        raise AblationError("no test records")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports, ckpts = [], []
    for k, arm in enumerate(arms):
        arm_dir = out / f"arm{k}"
        res = train(cfg, arm.manifest, arm.label_dir, arm_dir, edge_decoder=arm.edge_decoder,
                    base=base, checkpoint_every_epoch=False)
        predict(res.checkpoint, test, arm_dir / "pred", base=base)
        reports.append(score(arm_dir / "pred", test, gt_dir))
        ckpts.append(res.checkpoint)
    result = AblationResult(preset, [a.name for a in arms], reports, ckpts)
    result.write(out)
    return result
