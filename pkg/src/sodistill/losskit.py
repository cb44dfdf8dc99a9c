"""Training losses and the supervision targets derived from pseudo-labels.

Losses take torch tensors of matching shape, either ``(H, W)`` or
``(B, 1, H, W)``; predictions ``Y`` are probabilities, not logits.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

from .core import CertaintyMask, EdgeMap, PseudoLabel, as_binary

EPS = 1e-7

CANNY_SIGMA = 1.4
CANNY_LOW = 0.1
CANNY_HIGH = 0.3
CERTAINTY_BAND = 5


@dataclass(frozen=True)
class LossWeights:
    alpha1: float = 1.0
    alpha2: float = 1.0
    alpha3: float = 1.0
    lambda_edge: float = 1.0

    def __post_init__(self):
        for k in ("alpha1", "alpha2", "alpha3", "lambda_edge"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be nonnegative")


def _check(Y, G):
    if Y.shape != G.shape:
        raise ValueError(f"shape mismatch: {tuple(Y.shape)} vs {tuple(G.shape)}")


def _bce_terms(Y, G):
    Y = Y.clamp(EPS, 1.0 - EPS)
    return -(G * torch.log(Y) + (1.0 - G) * torch.log(1.0 - Y))


def bce(Y: torch.Tensor, G: torch.Tensor) -> torch.Tensor:
    """Per-pixel mean binary cross-entropy."""
    _check(Y, G)
    return _bce_terms(Y, G.to(Y.dtype)).mean()


def pbce(Y: torch.Tensor, G: torch.Tensor, J: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy averaged over the certain pixels ``J == 1`` only."""
    _check(Y, G)
    _check(Y, J)
    J = J.to(Y.dtype)
    n = J.sum()
    if n.item() == 0:
        raise ValueError("certainty mask is empty; partial BCE is undefined")
    return (_bce_terms(Y, G.to(Y.dtype)) * J).sum() / n


def iou_loss(Y: torch.Tensor, G: torch.Tensor) -> torch.Tensor:
    """1 - soft IoU, averaged over the batch for 4-D input."""
    _check(Y, G)
    G = G.to(Y.dtype)
    dims = (-2, -1)
    inter = (Y * G).sum(dims)
    union = (Y + G - Y * G).sum(dims)
    safe = torch.where(union > 0, union, torch.ones_like(union))
    loss = torch.where(union > 0, 1.0 - inter / safe, torch.zeros_like(union))
    return loss.mean()


def edge_loss(edge_logits: torch.Tensor, E: torch.Tensor) -> torch.Tensor:
    return bce(torch.sigmoid(edge_logits), E)


def total_loss(Y, G, J, edge_logits, E, w: LossWeights = LossWeights(), parts: bool = False):
    """alpha1*bce + alpha2*pbce + alpha3*iou (+ lambda_edge*edge bce).

    With ``parts=True`` returns ``(total, dict of components)``.
    """
    comps = {"bce": bce(Y, G), "pbce": pbce(Y, G, J), "iou": iou_loss(Y, G)}
    total = w.alpha1 * comps["bce"] + w.alpha2 * comps["pbce"] + w.alpha3 * comps["iou"]
    if edge_logits is not None and w.lambda_edge:
        comps["edge"] = edge_loss(edge_logits, E)
        total = total + w.lambda_edge * comps["edge"]
    return (total, comps) if parts else total


# --- supervision targets ---------------------------------------------------

def _non_max_suppression(mag, gy, gx):
    h, w = mag.shape
    padded = np.pad(mag, 1)
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    # neighbor offsets (dy, dx) along the gradient for the four direction bins
    bins = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    ]
    keep = np.zeros((h, w), dtype=bool)
    for sel, (dy, dx) in bins:
        fwd = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        bwd = padded[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        keep |= sel & (mag >= fwd) & (mag >= bwd)
    return np.where(keep & (mag > 0), mag, 0.0)


def canny(image: np.ndarray, sigma: float = CANNY_SIGMA, low: float = CANNY_LOW, high: float = CANNY_HIGH) -> np.ndarray:
    """Canny edges of a 2-D float image; thresholds are fractions of the
    maximum smoothed-gradient magnitude."""
    img = np.asarray(image, dtype=np.float64)
    smooth = ndimage.gaussian_filter(img, sigma, mode="nearest")
    gy = ndimage.sobel(smooth, axis=0, mode="nearest")
    gx = ndimage.sobel(smooth, axis=1, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return np.zeros(img.shape, dtype=np.uint8)
    thin = _non_max_suppression(mag, gy, gx)
    weak = thin >= low * peak
    strong = thin >= high * peak
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(img.shape, dtype=np.uint8)
    connected = np.zeros(n + 1, dtype=bool)
    connected[np.unique(labels[strong])] = True
    connected[0] = False
    return connected[labels].astype(np.uint8)


def edge_target(pl) -> EdgeMap:
    mask = pl.mask if isinstance(pl, (PseudoLabel, EdgeMap)) else as_binary(pl)
    return EdgeMap(canny(mask.astype(np.float64)))


def _disk(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return (yy ** 2 + xx ** 2) <= radius ** 2


def certainty_mask(pl, band: int = CERTAINTY_BAND) -> CertaintyMask:
    """Certain = everything outside a `band`-pixel ring around the label
    boundary (dilation XOR erosion)."""
    mask = (pl.mask if isinstance(pl, PseudoLabel) else as_binary(pl)).astype(bool)
    if band <= 0 or not mask.any() or mask.all():
        return CertaintyMask(np.ones(mask.shape, dtype=np.uint8))
    fp = _disk(band)
    dil = ndimage.binary_dilation(mask, structure=fp)
    ero = ndimage.binary_erosion(mask, structure=fp, border_value=1)
    return CertaintyMask((~(dil ^ ero)).astype(np.uint8))
