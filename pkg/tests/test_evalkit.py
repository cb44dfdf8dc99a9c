import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

import oracles
from sodistill.core import write_mask
from sodistill.evalkit import (
    THRESHOLDS,
    MetricReport,
    PRCurve,
    e_measure,
    e_measure_curve,
    evaluate_arrays,
    evaluate_dataset,
    f_measure_at,
    mae,
    mean_max_f,
    pr_curve,
    s_measure,
    write_eval_outputs,
)


def rand_pair(seed, shape=(4, 4)):
    rng = np.random.default_rng(seed)
    Y = np.round(rng.uniform(0, 1, shape) * 255) / 255
    G = rng.integers(0, 2, shape)
    G.flat[0] = 1
    G.flat[-1] = 0
    return Y, G


def half():
    G = np.zeros((8, 8), np.uint8)
    G[:, :4] = 1
    return G


def test_mae_examples():
    G = half()
    assert mae(G, G) == 0.0
    assert mae(np.ones((4, 4)), np.zeros((4, 4))) == 1.0
    for seed in range(5):
        Y, G = rand_pair(seed)
        assert abs(mae(Y, G) - oracles.mae(Y, G)) <= 1e-12


def test_mae_shape_mismatch():
    with pytest.raises(ValueError):
        mae(np.zeros((3, 3)), np.zeros((3, 4)))


@pytest.mark.parametrize("t", [0.01, 0.5, 0.99])
def test_f_perfect(t):
    G = half()
    assert f_measure_at(G.astype(float), G, t) == (1.0, 1.0, 1.0)


def test_f_complement_zero():
    G = half()
    assert f_measure_at(1.0 - G, G, 0.5)[2] == 0.0


def test_f_tp2_fp1_fn1():
    G = np.zeros((4, 4))
    Y = np.zeros((4, 4))
    G[0, :3] = 1  # three positives
    Y[0, :2] = 1  # two hits
    Y[3, 3] = 1  # one false alarm
    p, r, f = f_measure_at(Y, G, 0.5)
    assert (p, r) == pytest.approx((2 / 3, 2 / 3), abs=1e-15)
    assert f == pytest.approx((1.3 * (2 / 3) * (2 / 3)) / (0.3 * (2 / 3) + 2 / 3), abs=1e-15)
    assert f == pytest.approx(2 / 3, abs=1e-15)
    assert (p, r, f) == pytest.approx(oracles.prf(Y, G, 0.5), abs=1e-15)


def test_f_empty_gt_and_bad_threshold():
    with pytest.raises(ValueError):
        f_measure_at(np.zeros((2, 2)), np.zeros((2, 2)), 0.5)
    with pytest.raises(ValueError):
        f_measure_at(np.zeros((2, 2)), np.ones((2, 2)), 1.5)


def test_f_no_prediction_gives_zero_precision():
    assert f_measure_at(np.zeros((3, 3)), np.eye(3), 0.5)[:2] == (0.0, 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_f_sweep_oracle_single_pair(seed):
    Y, G = rand_pair(seed, (5, 6))
    mean_f, max_f = mean_max_f([Y], [G])
    fs = [oracles.prf(Y, G, k / 255)[2] for k in range(256)]
    assert abs(mean_f - sum(fs) / 256) <= 1e-12
    assert abs(max_f - max(fs)) <= 1e-12


def test_mean_max_f_perfect():
    G = half()
    assert mean_max_f([G.astype(float)] * 3, [G] * 3) == (1.0, 1.0)


def test_e_examples():
    G = half()
    assert e_measure([G.astype(float)], [G]) == 1.0
    assert np.all(e_measure_curve(G.astype(float), G) == 1.0)
    assert e_measure([1.0 - G], [G]) == 0.0


def test_e_degenerate_gt():
    Z = np.zeros((4, 4))
    assert e_measure([Z], [Z]) == 1.0
    assert e_measure([np.ones((4, 4))], [np.ones((4, 4))]) == 1.0


@pytest.mark.parametrize("seed", range(3))
def test_e_oracle_8x8(seed):
    Y, G = rand_pair(seed, (8, 8))
    assert abs(e_measure([Y], [G]) - oracles.e_sweep_mean(Y, G)) <= 1e-10


def test_s_examples():
    G = half()
    assert s_measure(G, G) == pytest.approx(1.0, abs=1e-12)
    Z = np.zeros((5, 5))
    assert s_measure(Z, Z) == 1.0
    Y = np.full((5, 5), 0.2)
    assert s_measure(Y, Z) == pytest.approx(0.8, abs=1e-15)
    assert s_measure(Y, np.ones((5, 5))) == pytest.approx(0.2, abs=1e-15)


def test_s_fixture_8x8():
    Y, G = rand_pair(42, (8, 8))
    assert abs(s_measure(Y, G) - oracles.s_measure(Y, G)) <= 1e-10


def test_pr_curve_examples():
    G = half()
    c = pr_curve([G.astype(float)], [G])
    assert np.all(c.precision[1:] == 1.0) and np.all(c.recall[1:] == 1.0)
    Y, G = rand_pair(5)
    c = pr_curve([Y], [G])
    assert c.recall[0] >= c.recall[-1]
    for k in (0, 1, 64, 200, 255):
        p, r, _ = oracles.prf(Y, G, k / 255)
        assert abs(c.precision[k] - p) <= 1e-12 and abs(c.recall[k] - r) <= 1e-12
    assert np.array_equal(c.thresholds, THRESHOLDS)


def test_pr_curve_csv_round_trip(tmp_path):
    Y, G = rand_pair(2)
    c = pr_curve([Y], [G])
    c.write_csv(tmp_path / "c.csv")
    back = PRCurve.read_csv(tmp_path / "c.csv")
    assert np.array_equal(back.precision, c.precision) and np.array_equal(back.fmeasure, c.fmeasure)


def test_empty_dataset():
    with pytest.raises(ValueError):
        mean_max_f([], [])
    with pytest.raises(ValueError):
        pr_curve([], [])


def _write_fixture(tmp_path, n=10, seed=0):
    rng = np.random.default_rng(seed)
    preds, gts = [], []
    (tmp_path / "pred").mkdir()
    (tmp_path / "gt").mkdir()
    for k in range(n):
        g = np.zeros((12, 10), np.uint8)
        if k != 3:  # image 3 has empty ground truth
            y0, x0 = rng.integers(0, 6, 2)
            g[y0:y0 + 5, x0:x0 + 4] = 1
        p = np.clip(g * 0.7 + rng.uniform(0, 0.4, g.shape), 0, 1)
        p8 = np.round(p * 255).astype(np.uint8)
        Image.fromarray(p8).save(tmp_path / "pred" / f"im{k}.png")
        write_mask(g, tmp_path / "gt" / f"im{k}.png")
        preds.append(p8 / 255.0)
        gts.append(g)
    return preds, gts


def test_evaluate_dataset_matches_hand_aggregation(tmp_path):
    preds, gts = _write_fixture(tmp_path)
    rep, curve = evaluate_dataset(tmp_path / "pred", tmp_path / "gt", "toy")
    n = len(preds)
    assert rep.n_images == n and rep.excluded_from_f == ["im3"]
    assert abs(rep.MAE - sum(oracles.mae(p, g) for p, g in zip(preds, gts)) / n) <= 1e-12
    assert abs(rep.S - sum(oracles.s_measure(p, g) for p, g in zip(preds, gts)) / n) <= 1e-10
    assert abs(rep.E - sum(oracles.e_sweep_mean(p, g) for p, g in zip(preds, gts)) / n) <= 1e-10
    kept = [(p, g) for p, g in zip(preds, gts) if g.any()]
    fcurve = [sum(oracles.prf(p, g, k / 255)[2] for p, g in kept) / len(kept) for k in range(256)]
    assert abs(rep.maxF - max(fcurve)) <= 1e-12
    assert abs(rep.meanF - sum(fcurve) / 256) <= 1e-12
    assert np.abs(curve.fmeasure - np.array(fcurve)).max() <= 1e-12


def test_evaluate_dataset_self(tmp_path):
    _write_fixture(tmp_path)
    rep, _ = evaluate_dataset(tmp_path / "gt", tmp_path / "gt")
    vals = rep.values()
    for k in ("S", "meanF", "maxF", "E"):
        assert abs(vals[k] - 1.0) <= 1e-10
    assert vals["MAE"] <= 1e-10


def test_evaluate_dataset_missing_file(tmp_path):
    _write_fixture(tmp_path, n=3)
    (tmp_path / "pred" / "im1.png").unlink()
    with pytest.raises(FileNotFoundError, match="im1.png"):
        evaluate_dataset(tmp_path / "pred", tmp_path / "gt")


def test_evaluate_dataset_resizes_and_flags(tmp_path):
    _write_fixture(tmp_path, n=2)
    Image.fromarray(np.full((24, 20), 200, np.uint8)).save(tmp_path / "pred" / "im0.png")
    rep, _ = evaluate_dataset(tmp_path / "pred", tmp_path / "gt")
    assert rep.resized == ["im0"]


def test_write_outputs_round_trip(tmp_path):
    preds, gts = _write_fixture(tmp_path, n=4)
    rep, curve = evaluate_arrays(preds, gts, dataset="toy")
    write_eval_outputs([rep], [curve], tmp_path / "out" / "run1.json")
    blob = json.loads((tmp_path / "out" / "run1.json").read_text())
    assert blob["run"] == "run1"
    assert MetricReport.from_json(blob["datasets"][0]) == rep
    assert (tmp_path / "out" / "run1.toy.pr.csv").exists()
    assert (tmp_path / "out" / "run1.pr.png").exists()


def _dataset(seed, n=5, shape=(6, 7)):
    rng = np.random.default_rng(seed)
    preds = [np.round(rng.uniform(0, 1, shape) * 255) / 255 for _ in range(n)]
    gts = [rng.integers(0, 2, shape) for _ in range(n)]
    for g in gts:
        g.flat[0] = 1
    return preds, gts


@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_permutation_invariance(seed, rnd):
    preds, gts = _dataset(seed)
    order = list(range(len(preds)))
    rnd.shuffle(order)
    a = evaluate_arrays(preds, gts)[0].values()
    b = evaluate_arrays([preds[i] for i in order], [gts[i] for i in order])[0].values()
    for k in a:
        assert abs(a[k] - b[k]) <= 1e-12


@given(st.integers(0, 10_000))
def test_flip_invariance(seed):
    preds, gts = _dataset(seed, n=3)
    fp = [np.fliplr(p) for p in preds]
    fg = [np.fliplr(g) for g in gts]
    a = evaluate_arrays(preds, gts)[0].values()
    b = evaluate_arrays(fp, fg)[0].values()
    for k in ("MAE", "meanF", "maxF", "E"):
        assert abs(a[k] - b[k]) <= 1e-12


@given(arrays(np.float64, (5, 5), elements=st.floats(0, 1)), arrays(np.uint8, (5, 5), elements=st.integers(0, 1)))
def test_bounds_and_max_dominates_mean(Y, G):
    G = G.copy()
    G[2, 2] = 1
    rep = evaluate_arrays([Y], [G])[0]
    assert rep.maxF >= rep.meanF
    for v in rep.values().values():
        assert -1e-12 <= v <= 1 + 1e-12
