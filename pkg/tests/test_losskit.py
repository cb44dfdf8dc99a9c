import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

import oracles
from sodistill.core import PseudoLabel
from sodistill.losskit import (
    LossWeights,
    bce,
    canny,
    certainty_mask,
    edge_loss,
    edge_target,
    iou_loss,
    pbce,
    total_loss,
)

T = torch.tensor


def rand_pair(seed, shape=(4, 4)):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.02, 0.98, shape), rng.integers(0, 2, shape).astype(np.float64)


def test_bce_perfect():
    G = np.array([[0, 1], [1, 0]], float)
    assert bce(T(G), T(G)).item() == pytest.approx(-math.log(1 - 1e-7), rel=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_bce_half_is_log2(seed):
    _, G = rand_pair(seed)
    assert bce(T(np.full((4, 4), 0.5)), T(G)).item() == pytest.approx(math.log(2), abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_bce_oracle(seed):
    Y, G = rand_pair(seed)
    assert abs(bce(T(Y), T(G)).item() - oracles.bce(Y, G)) <= 1e-12


def test_pbce_full_certainty_equals_bce():
    Y, G = rand_pair(7)
    assert pbce(T(Y), T(G), T(np.ones((4, 4)))).item() == bce(T(Y), T(G)).item()


def test_pbce_single_pixel():
    Y, G = rand_pair(1)
    Y[2, 3] = 0.5
    J = np.zeros((4, 4))
    J[2, 3] = 1
    assert pbce(T(Y), T(G), T(J)).item() == pytest.approx(math.log(2), abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_pbce_oracle(seed):
    Y, G = rand_pair(seed)
    J = np.random.default_rng(100 + seed).integers(0, 2, (4, 4)).astype(float)
    J[0, 0] = 1
    assert abs(pbce(T(Y), T(G), T(J)).item() - oracles.pbce(Y, G, J)) <= 1e-12


def test_pbce_empty_certainty():
    Y, G = rand_pair(0)
    with pytest.raises(ValueError):
        pbce(T(Y), T(G), T(np.zeros((4, 4))))


def test_iou_examples():
    G = np.zeros((4, 4))
    G[:2] = 1
    assert iou_loss(T(G), T(G)).item() == 0.0
    assert iou_loss(T(1 - G), T(G)).item() == 1.0
    # 1 - (0.5 * 8) / (0.5 * 16 + 8 - 4) = 2/3
    v = iou_loss(T(np.full((4, 4), 0.5)), T(G)).item()
    assert v == pytest.approx(2 / 3, abs=1e-15)
    assert v == pytest.approx(oracles.iou_loss(np.full((4, 4), 0.5), G), abs=1e-15)
    assert iou_loss(T(np.zeros((4, 4))), T(np.zeros((4, 4)))).item() == 0.0


bin44 = arrays(np.float64, (4, 4), elements=st.sampled_from([0.0, 1.0]))


@given(bin44, bin44)
def test_iou_symmetric_and_bounded(a, b):
    ab, ba = iou_loss(T(a), T(b)).item(), iou_loss(T(b), T(a)).item()
    assert ab == ba and 0.0 <= ab <= 1.0


@given(arrays(np.float64, (3, 5), elements=st.floats(0, 1)), arrays(np.float64, (3, 5), elements=st.sampled_from([0.0, 1.0])))
def test_iou_bounded_soft(y, g):
    v = iou_loss(T(y), T(g)).item()
    assert 0.0 <= v <= 1.0 + 1e-15


def test_edge_loss_examples():
    E = np.zeros((4, 4))
    E[1, 1:3] = 1
    sat = np.where(E == 1, 50.0, -50.0)
    assert edge_loss(T(sat), T(E)).item() == pytest.approx(0.0, abs=2e-7)
    assert edge_loss(T(np.zeros((4, 4))), T(E)).item() == pytest.approx(math.log(2), abs=1e-15)
    z = np.random.default_rng(3).normal(0, 2, (4, 4))
    ref = oracles.bce([[oracles.sigmoid(v) for v in r] for r in z], E)
    assert abs(edge_loss(T(z), T(E)).item() - ref) <= 1e-12


def _parts(seed):
    Y, G = rand_pair(seed)
    rng = np.random.default_rng(seed + 50)
    J = rng.integers(0, 2, (4, 4)).astype(float)
    J[0, 0] = 1
    Z = rng.normal(0, 1, (4, 4))
    E = rng.integers(0, 2, (4, 4)).astype(float)
    return [T(a) for a in (Y, G, J, Z, E)]


def test_total_all_ones_no_edge():
    Y, G, J, Z, E = _parts(0)
    tot = total_loss(Y, G, J, Z, E, LossWeights(1, 1, 1, 0)).item()
    assert tot == (bce(Y, G) + pbce(Y, G, J) + iou_loss(Y, G)).item()


def test_total_bce_only():
    Y, G, J, Z, E = _parts(1)
    assert total_loss(Y, G, J, Z, E, LossWeights(1, 0, 0, 0)).item() == bce(Y, G).item()


@pytest.mark.parametrize("seed", range(4))
def test_total_matches_hand_sum(seed):
    Y, G, J, Z, E = _parts(seed)
    y, g, j, z, e = (a.numpy() for a in (Y, G, J, Z, E))
    w = LossWeights(0.7, 1.3, 0.4, 2.0)
    hand = (0.7 * oracles.bce(y, g) + 1.3 * oracles.pbce(y, g, j) + 0.4 * oracles.iou_loss(y, g)
            + 2.0 * oracles.bce([[oracles.sigmoid(v) for v in r] for r in z], e))
    assert abs(total_loss(Y, G, J, Z, E, w).item() - hand) <= 1e-12


def test_total_linear_in_weights():
    Y, G, J, Z, E = _parts(2)
    base = total_loss(Y, G, J, Z, E, LossWeights(1, 1, 1, 1)).item()
    doubled = total_loss(Y, G, J, Z, E, LossWeights(1, 1, 2, 1)).item()
    assert doubled - base == pytest.approx(iou_loss(Y, G).item(), abs=1e-15)


def test_total_parts_and_missing_edge():
    Y, G, J, Z, E = _parts(3)
    tot, parts = total_loss(Y, G, J, Z, E, parts=True)
    assert set(parts) == {"bce", "pbce", "iou", "edge"}
    tot2, parts2 = total_loss(Y, G, J, None, None, parts=True)
    assert "edge" not in parts2
    assert tot.item() == pytest.approx(tot2.item() + parts["edge"].item(), abs=1e-15)


def test_loss_weights_nonnegative():
    with pytest.raises(ValueError):
        LossWeights(alpha1=-1)


@pytest.mark.parametrize("name", ["bce", "pbce", "iou", "edge"])
def test_loss_gradients(name):
    Y, G = rand_pair(11)
    J = np.random.default_rng(12).integers(0, 2, (4, 4)).astype(float)
    J[0, 0] = 1
    fn = {
        "bce": lambda y: bce(y, T(G)),
        "pbce": lambda y: pbce(y, T(G), T(J)),
        "iou": lambda y: iou_loss(y, T(G)),
        "edge": lambda z: edge_loss(z, T(G)),
    }[name]
    x = np.random.default_rng(13).normal(0, 1.5, (4, 4)) if name == "edge" else Y.copy()
    xt = T(x, requires_grad=True)
    fn(xt).backward()
    err = oracles.grad_check(lambda a: fn(T(a)).item(), x, xt.grad.numpy())
    assert err < 1e-3


def _rect(top=20, left=15, h=20, w=20, size=64):
    m = np.zeros((size, size), np.uint8)
    m[top:top + h, left:left + w] = 1
    return m


def test_edge_target_zero():
    assert not edge_target(np.zeros((16, 16), np.uint8)).mask.any()


def test_edge_target_rectangle_geometry():
    top, left, h, w = 20, 15, 20, 20
    e = edge_target(PseudoLabel(_rect(top, left, h, w))).mask.astype(bool)
    assert e.any()
    _, n = ndimage.label(e, structure=np.ones((3, 3)))
    assert n == 1
    # closed: the edge loop separates the rectangle's centre from the image border
    free, _ = ndimage.label(~e)
    assert free[top + h // 2, left + w // 2] != free[0, 0]
    # every edge pixel within 2 px of the true border (the lines between pixel rows/columns)
    ys, xs = np.nonzero(e)
    y0, y1, x0, x1 = top - 0.5, top + h - 0.5, left - 0.5, left + w - 0.5
    for y, x in zip(ys, xs):
        if y0 <= y <= y1 and x0 <= x <= x1:
            d = min(y - y0, y1 - y, x - x0, x1 - x)
        else:
            d = math.hypot(max(y0 - y, 0, y - y1), max(x0 - x, 0, x - x1))
        assert d <= 2.0


def test_edge_target_translation():
    a = edge_target(_rect(20, 15)).mask
    b = edge_target(_rect(23, 20)).mask
    assert np.array_equal(np.roll(a, (3, 5), axis=(0, 1)), b)


@pytest.mark.xfail(strict=True, reason="Sobel on a 1-px line peaks beside it; the nested edges reach 2 px away")
def test_edges_of_edges_within_one_pixel():
    e = edge_target(_rect()).mask
    e2 = edge_target(e).mask
    assert not (e2 & ~ndimage.binary_dilation(e, np.ones((3, 3), bool))).any()


@pytest.mark.parametrize("box", [(20, 15, 20, 20), (10, 5, 13, 30), (30, 30, 6, 6)])
def test_edges_of_edges_within_two_pixels(box):
    e = edge_target(_rect(*box)).mask
    e2 = edge_target(e).mask
    assert e2.any()
    assert not (e2 & ~ndimage.binary_dilation(e, np.ones((5, 5), bool))).any()


def test_canny_uniform_image():
    assert not canny(np.full((10, 10), 3.0)).any()


def test_certainty_mask_band():
    m = _rect(20, 15, 20, 20)
    c = certainty_mask(m, band=2).mask
    ring = ~c.astype(bool)
    yy, xx = np.mgrid[0:64, 0:64]
    # brute force: a pixel is uncertain iff a disk of radius 2 around it sees both labels
    brute = np.zeros_like(ring)
    for y in range(64):
        for x in range(64):
            near = (yy - y) ** 2 + (xx - x) ** 2 <= 4
            vals = m[near]
            brute[y, x] = vals.min() != vals.max()
    assert np.array_equal(ring, brute)


def test_certainty_mask_trivial_cases():
    assert certainty_mask(np.zeros((5, 5), np.uint8)).mask.all()
    assert certainty_mask(np.ones((5, 5), np.uint8)).mask.all()
    assert certainty_mask(_rect(), band=0).mask.all()
