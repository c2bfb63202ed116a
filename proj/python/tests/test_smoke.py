import csv
import os
import subprocess

import numpy as np
import pytest

import tbscreen


def test_squash_shrinks_below_one():
    v = tbscreen.squash(np.array([3.0, 4.0]))
    np.testing.assert_allclose(v, np.array([3.0, 4.0]) * 25.0 / 26.0 / 5.0, rtol=1e-9)
    rows = tbscreen.squash(np.random.default_rng(0).normal(size=(50, 8)) * 10)
    assert np.all(np.linalg.norm(rows, axis=1) < 1.0)


def test_conv2d_matches_numpy():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 11, 13))
    k = rng.normal(size=(3, 2, 4, 4))
    y = tbscreen.conv2d(x, k, 2)
    windows = np.lib.stride_tricks.sliding_window_view(x, (4, 4), axis=(1, 2))[:, ::2, ::2]
    expected = np.einsum("chwab,ocab->ohw", windows, k)
    np.testing.assert_allclose(y, expected, atol=1e-12)


def test_margin_loss_examples():
    assert tbscreen.margin_loss(np.array([0.05, 0.95]), 1) == pytest.approx(0.0)
    assert tbscreen.margin_loss(np.array([0.0, 0.0]), 1) == pytest.approx(0.81)


def test_routing_rows_sum_to_one():
    u = np.random.default_rng(2).normal(size=(30, 2, 6))
    out = tbscreen.dynamic_routing(u, 3)
    assert len(out["history"]) == 3
    np.testing.assert_allclose(out["c"].sum(axis=1), 1.0, atol=1e-10)
    assert np.all(np.linalg.norm(out["v"], axis=1) < 1.0)


def test_capsnet_zero_patch_and_bounds():
    np.testing.assert_array_equal(tbscreen.capsnet_lengths(np.zeros((1, 64, 64)), seed=3), [0.0, 0.0])
    lengths = tbscreen.capsnet_lengths(np.random.default_rng(3).uniform(size=(1, 64, 64)), seed=3)
    assert lengths.shape == (2,)
    assert np.all((lengths >= 0) & (lengths < 1))


def test_default_grid_and_coverage():
    anchors = tbscreen.plan_grid(3840, 2700)
    assert len(anchors) == 204
    assert anchors[-1] == (3584, 2444)
    cov = tbscreen.coverage_map(600, 500, 256, 20)
    assert cov.min() == 1


def test_histogram_and_errors():
    bins, total, normalized = tbscreen.build_histogram([0.1, 0.9, 0.8], 2)
    assert bins == [1, 2] and total == 3
    assert sum(normalized) == pytest.approx(1.0)
    with pytest.raises(tbscreen.Error):
        tbscreen.build_histogram([], 2)


def test_prepare_patch_is_centred():
    patch = np.random.default_rng(4).uniform(size=(1, 256, 256))
    out = tbscreen.prepare_patch(patch, 4)
    assert out.shape == (1, 64, 64)
    assert abs(out.mean()) < 1e-12


def test_synthetic_image_is_deterministic():
    a, boxes_a, label_a = tbscreen.synthetic_image(300, 260, 2, seed=5)
    b, boxes_b, _ = tbscreen.synthetic_image(300, 260, 2, seed=5)
    np.testing.assert_array_equal(a, b)
    assert boxes_a == boxes_b and len(boxes_a) == 2 and label_a == "positive"
    assert a.min() >= 0 and a.max() <= 1


def test_gradient_suite_passes():
    cases = tbscreen.grad_check_suite(points=2)
    assert cases and all(passed for _, _, _, passed in cases)


def test_cli_round_trip(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    code = tbscreen.run_cli([
        "synth", "--out", str(data), "--image-width", "512", "--image-height", "400", "--images", "4",
        "--positives", "2", "--cord-count-min", "6", "--cord-count-max", "10", "--patch-side", "64",
        "--overlap", "8", "--patch-cap", "6",
    ])
    assert code == 0
    code = tbscreen.run_cli([
        "train-patch", "--family", "lenet", "--data", str(data), "--out", str(run), "--patch-side", "64",
        "--downsample", "1", "--epochs", "1",
    ])
    assert code == 0
    with open(run / "metrics.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1 and set(rows[0]) == {"epoch", "loss", "train_acc", "test_acc"}
    ck = tbscreen.load_checkpoint(str(run / "model.ckpt"))
    assert ck["family"] == "lenet" and ck["epochs"] == 1
    assert tbscreen.run_cli(["train-patch", "--data", str(tmp_path / "missing"), "--out", str(run)]) == 3


@pytest.mark.skipif("TBSCREEN_BINARY" not in os.environ, reason="binary path not provided")
def test_binary_exit_code_for_bad_config(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("epochs=banana\n")
    proc = subprocess.run([os.environ["TBSCREEN_BINARY"], "--config", str(cfg), "train-patch", "--data", "x",
                           "--out", str(tmp_path / "r")], capture_output=True)
    assert proc.returncode == 2
