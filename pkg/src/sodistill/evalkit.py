"""Saliency benchmark metrics: MAE, F-measure (mean/max over a threshold
sweep), E-measure, S-measure and precision-recall curves.

Predictions are float maps in [0, 1]; ground truth is binary. The sweep
uses thresholds ``k/255`` for ``k = 0..255``; at threshold ``t`` a pixel is
foreground when ``Y >= t`` and ``Y > 0`` (so an exact zero never counts
as foreground, even at ``t = 0``).
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

BETA2 = 0.3
S_ALPHA = 0.5
N_THRESHOLDS = 256
THRESHOLDS = np.arange(N_THRESHOLDS) / 255.0
_EPS = np.finfo(np.float64).eps
IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


def _pair(Y, G):
    Y = np.asarray(Y, dtype=np.float64)
    G = np.asarray(G)
    if Y.shape != G.shape:
        raise ValueError(f"shape mismatch: {Y.shape} vs {G.shape}")
    return Y, G.astype(bool)


def binarize(Y: np.ndarray, t: float) -> np.ndarray:
    return (Y >= t) & (Y > 0)


def _count_at_least(sorted_vals: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    n = sorted_vals.size
    left = np.searchsorted(sorted_vals, thresholds, side="left")
    zero = np.searchsorted(sorted_vals, 0.0, side="right")
    return n - np.maximum(left, zero)


def mae(Y, G) -> float:
    Y, G = _pair(Y, G)
    return float(np.abs(Y - G).mean())


def _f_from_pr(p, r, beta2=BETA2):
    num = (1 + beta2) * p * r
    den = beta2 * p + r
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def f_measure_at(Y, G, t: float, beta2: float = BETA2) -> tuple[float, float, float]:
    """Precision, recall and F at one threshold.

    Raises ValueError for an all-zero ground truth (such images are
    excluded from F aggregation).
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {t}")
    Y, G = _pair(Y, G)
    if not G.any():
        raise ValueError("ground truth is empty; F-measure is undefined")
    fg = binarize(Y, t)
    tp = int((fg & G).sum())
    npred = int(fg.sum())
    p = tp / npred if npred else 0.0
    r = tp / int(G.sum())
    return p, r, float(_f_from_pr(np.float64(p), np.float64(r), beta2))


def pr_sweep(Y, G, thresholds=THRESHOLDS):
    """Precision and recall at every threshold (G must be non-empty)."""
    Y, G = _pair(Y, G)
    n_gt = int(G.sum())
    if n_gt == 0:
        raise ValueError("ground truth is empty")
    tp = _count_at_least(np.sort(Y[G]), thresholds)
    fp = _count_at_least(np.sort(Y[~G]), thresholds)
    npred = tp + fp
    p = np.where(npred > 0, tp / np.maximum(npred, 1), 0.0)
    r = tp / n_gt
    return p, r


def e_measure_curve(Y, G, thresholds=THRESHOLDS) -> np.ndarray:
    """Enhanced-alignment score of the binarized prediction per threshold."""
    Y, G = _pair(Y, G)
    N = G.size
    n_gt = int(G.sum())
    fg_counts = _count_at_least(np.sort(Y[G]), thresholds)
    bg_counts = _count_at_least(np.sort(Y[~G]), thresholds)
    npred = fg_counts + bg_counts
    if n_gt == 0:
        return 1.0 - npred / N
    if n_gt == N:
        return npred / N
    mg = n_gt / N
    my = npred / N
    score = np.zeros(len(thresholds))
    # four pixel classes: (g, y) with counts
    classes = (
        (1.0, 1.0, fg_counts),
        (1.0, 0.0, n_gt - fg_counts),
        (0.0, 1.0, bg_counts),
        (0.0, 0.0, (N - n_gt) - bg_counts),
    )
    for g, y, count in classes:
        a = g - mg
        b = y - my
        xi = 2 * a * b / (a * a + b * b)
        score += count * (1 + xi) ** 2 / 4
    return score / N


def _object_score(x: np.ndarray) -> float:
    mu = x.mean()
    sigma = x.std(ddof=1) if x.size > 1 else 0.0
    return 2.0 * mu / (mu * mu + 1.0 + sigma + _EPS)


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    x = pred.mean()
    y = gt.mean()
    d = max(n - 1, 1)
    sx = ((pred - x) ** 2).sum() / d
    sy = ((gt - y) ** 2).sum() / d
    sxy = ((pred - x) * (gt - y)).sum() / d
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + _EPS)
    return 1.0 if beta == 0 else 0.0


def s_measure(Y, G, alpha: float = S_ALPHA) -> float:
    """Structure measure: alpha * object term + (1 - alpha) * region term."""
    Y, Gb = _pair(Y, G)
    G = Gb.astype(np.float64)
    u = G.mean()
    if u == 0:
        return float(1.0 - Y.mean())
    if u == 1:
        return float(Y.mean())
    s_obj = u * _object_score(Y[Gb]) + (1 - u) * _object_score(1.0 - Y[~Gb])
    h, w = G.shape
    ys, xs = np.nonzero(Gb)
    cx = int(np.round(xs.mean())) + 1
    cy = int(np.round(ys.mean())) + 1
    area = h * w
    w1 = cx * cy / area
    w2 = (w - cx) * cy / area
    w3 = cx * (h - cy) / area
    w4 = 1.0 - w1 - w2 - w3
    s_reg = (
        w1 * _ssim(Y[:cy, :cx], G[:cy, :cx])
        + w2 * _ssim(Y[:cy, cx:], G[:cy, cx:])
        + w3 * _ssim(Y[cy:, :cx], G[cy:, :cx])
        + w4 * _ssim(Y[cy:, cx:], G[cy:, cx:])
    )
    return float(max(0.0, alpha * s_obj + (1 - alpha) * s_reg))


# --- dataset aggregation ---------------------------------------------------

@dataclass(frozen=True)
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    fmeasure: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["threshold", "precision", "recall", "fmeasure"])
            for row in zip(self.thresholds, self.precision, self.recall, self.fmeasure):
                wr.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path) -> "PRCurve":
        a = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3])


@dataclass
class MetricReport:
    dataset: str
    S: float
    meanF: float
    maxF: float
    E: float
    MAE: float
    n_images: int = 0
    excluded_from_f: list[str] = field(default_factory=list)
    resized: list[str] = field(default_factory=list)

    METRICS = ("S", "meanF", "maxF", "E", "MAE")

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.METRICS}

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "MetricReport":
        return cls(**d)


def _fsum_rows(rows: Sequence[np.ndarray]) -> np.ndarray:
    stacked = np.stack(rows)
    return np.array([math.fsum(stacked[:, j]) for j in range(stacked.shape[1])])


def _mean(vals) -> float:
    vals = list(vals)
    return math.fsum(vals) / len(vals)


def evaluate_arrays(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], names=None, dataset: str = "dataset"):
    """Dataset-level metrics for aligned prediction/ground-truth lists.

    Returns ``(MetricReport, PRCurve)``.
    """
    if len(preds) != len(gts):
        raise ValueError("prediction and ground-truth lists differ in length")
    if not preds:
        raise ValueError("empty dataset")
    names = list(names) if names is not None else [str(i) for i in range(len(preds))]
    maes, ss, es = [], [], []
    ps, rs, fs, excluded = [], [], [], []
    for name, Y, G in zip(names, preds, gts):
        Y, Gb = _pair(Y, G)
        maes.append(mae(Y, Gb))
        ss.append(s_measure(Y, Gb))
        es.append(float(e_measure_curve(Y, Gb).mean()))
        if not Gb.any():
            excluded.append(name)
            continue
        p, r = pr_sweep(Y, Gb)
        ps.append(p)
        rs.append(r)
        fs.append(_f_from_pr(p, r))
    if not fs:
        raise ValueError("no image with non-empty ground truth; F-measure undefined")
    k = len(fs)
    f_curve = _fsum_rows(fs) / k
    curve = PRCurve(THRESHOLDS.copy(), _fsum_rows(ps) / k, _fsum_rows(rs) / k, f_curve)
    report = MetricReport(
        dataset=dataset,
        S=_mean(ss),
        meanF=math.fsum(f_curve) / len(f_curve),
        maxF=float(f_curve.max()),
        E=_mean(es),
        MAE=_mean(maes),
        n_images=len(preds),
        excluded_from_f=excluded,
    )
    return report, curve


def mean_max_f(preds, gts) -> tuple[float, float]:
    report, _ = evaluate_arrays(preds, gts)
    return report.meanF, report.maxF


def e_measure(preds, gts) -> float:
    if not len(preds):
        raise ValueError("empty dataset")
    return _mean(float(e_measure_curve(Y, G).mean()) for Y, G in zip(preds, gts))


def pr_curve(preds, gts) -> PRCurve:
    return evaluate_arrays(preds, gts)[1]


def _find(directory: Path, stem: str) -> Path | None:
    for ext in IMAGE_EXTS:
        p = directory / f"{stem}{ext}"
        if p.exists():
            return p
    return None


def load_pair(pred_path, gt_path):
    """Prediction in [0, 1] resized to the GT size if needed, GT binarized at 128."""
    with Image.open(gt_path) as g:
        gt = np.asarray(g.convert("L")) >= 128
    with Image.open(pred_path) as p:
        p = p.convert("L")
        resized = p.size != (gt.shape[1], gt.shape[0])
        if resized:
            p = p.resize((gt.shape[1], gt.shape[0]), Image.BILINEAR)
        pred = np.asarray(p, dtype=np.float64) / 255.0
    return pred, gt, resized


def evaluate_dataset(pred_dir, gt_dir, dataset: str | None = None):
    """Match predictions to ground truth by file stem and evaluate."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gt_files = sorted(p for p in gt_dir.iterdir() if p.suffix.lower() in IMAGE_EXTS)
    if not gt_files:
        raise ValueError(f"no ground-truth images in {gt_dir}")
    preds, gts, names, resized = [], [], [], []
    for g in gt_files:
        p = _find(pred_dir, g.stem)
        if p is None:
            raise FileNotFoundError(f"missing prediction for {g.name} in {pred_dir}")
        pred, gt, was_resized = load_pair(p, g)
        if was_resized:
            log.warning("resized prediction %s to ground-truth size", p.name)
            resized.append(g.stem)
        preds.append(pred)
        gts.append(gt)
        names.append(g.stem)
    report, curve = evaluate_arrays(preds, gts, names, dataset or gt_dir.name)
    report.resized = resized
    return report, curve


def write_eval_outputs(reports, curves, out_json, run: str | None = None) -> None:
    """report JSON plus ``<stem>.<dataset>.pr.csv`` and a PR plot beside it."""
    out_json = Path(out_json)
    out_json.parent.mkdir(parents=True, exist_ok=True)
    blob = {"run": run or out_json.stem, "datasets": [r.to_json() for r in reports]}
    out_json.write_text(json.dumps(blob, indent=2))
    for r, c in zip(reports, curves):
        c.write_csv(out_json.with_name(f"{out_json.stem}.{r.dataset}.pr.csv"))
    plot_pr_curves({blob["run"]: dict(zip([r.dataset for r in reports], curves))},
                   out_json.with_name(f"{out_json.stem}.pr.png"))


def plot_pr_curves(curves_by_run: dict, path, dataset: str | None = None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4))
    for run, by_ds in curves_by_run.items():
        for ds, c in by_ds.items():
            if dataset is not None and ds != dataset:
                continue
            label = run if dataset is not None else f"{run}/{ds}"
            ax.plot(c.recall, c.precision, label=label)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
