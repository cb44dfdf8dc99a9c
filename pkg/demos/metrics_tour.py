"""
How the saliency metrics react to typical errors
================================================

One ground-truth disc, five kinds of prediction. MAE only sees pixel error;
F and E binarize over 256 thresholds; S looks at object and region
structure, so a blurred but well-placed map keeps a high S while a shifted
sharp one does not.

    python demos/metrics_tour.py
"""
import numpy as np
from scipy import ndimage

from sodistill.evalkit import evaluate_arrays

yy, xx = np.mgrid[:96, :96]
gt = ((yy - 48) ** 2 + (xx - 44) ** 2 <= 22 ** 2).astype(np.uint8)
rng = np.random.default_rng(0)

cases = {
    "perfect": gt.astype(float),
    "blurred": ndimage.gaussian_filter(gt.astype(float), 4),
    "shifted 8px": np.roll(gt, 8, axis=1).astype(float),
    "noisy": np.clip(gt + rng.normal(0, 0.25, gt.shape), 0, 1),
    "half missing": np.where(xx < 44, gt, 0).astype(float),
    "all 0.5": np.full(gt.shape, 0.5),
}

print(f"{'prediction':<14}{'S':>7}{'maxF':>7}{'meanF':>7}{'E':>7}{'MAE':>7}")
for name, pred in cases.items():
    rep, _ = evaluate_arrays([pred], [gt])
    print(f"{name:<14}{rep.S:7.3f}{rep.maxF:7.3f}{rep.meanF:7.3f}{rep.E:7.3f}{rep.MAE:7.3f}")

# the constant map scores maxF > 0: every threshold up to 0.5 calls the whole
# image foreground, so precision equals the object's area share.
