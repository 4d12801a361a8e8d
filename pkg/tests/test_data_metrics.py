import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fouriermamba import data, metrics


def textured_card(n=32):
    yy, xx = np.mgrid[0:n, 0:n]
    checks = ((yy // 4 + xx // 4) % 2).astype(float)
    wave = 0.5 + 0.5 * np.sin(xx / 3.0) * np.cos(yy / 5.0)
    return np.stack([0.7 * checks + 0.3 * wave, wave, 1 - checks * 0.8], axis=-1).clip(0, 1)


def test_no_streaks_leaves_image_untouched():
    clean = data.synth_clean(16, 0)
    pair = data.synth_rain(clean, 5, data.RainParams(count=0))
    assert np.array_equal(pair.rainy, clean)


def test_rain_is_seed_deterministic():
    clean = data.synth_clean(16, 1)
    a, b = data.synth_rain(clean, 9), data.synth_rain(clean, 9)
    assert a.rainy.tobytes() == b.rainy.tobytes()
    assert not np.array_equal(a.rainy, data.synth_rain(clean, 10).rainy)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), hi=st.floats(0.05, 0.9))
def test_streak_intensity_bounded(seed, hi):
    params = data.RainParams(count=40, intensity_range=(0.0, hi))
    layer = data.streak_layer(24, 24, data.make_rng(seed), params)
    assert layer.min() >= 0.0 and layer.max() <= hi
    clean = np.zeros((24, 24, 3))
    pair = data.synth_rain(clean, seed, params)
    assert (pair.rainy - clean).max() <= hi


def test_rain_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        data.synth_rain(np.zeros((1, 8, 3)), 0)
    with pytest.raises(ValueError):
        data.RainParams(angle_range=(100.0, 80.0))


def test_dataset_shapes_and_range():
    rainy, clean = data.synth_dataset(3, 16, 2)
    assert rainy.shape == clean.shape == (3, 16, 16, 3)
    assert rainy.min() >= 0 and rainy.max() <= 1
    assert (rainy >= clean).all()


def test_psnr_gray_closed_form():
    a = np.full((8, 8, 3), 0.5)
    b = a + 1 / 255
    # Y difference is (65.481 + 128.553 + 24.966) / 255 * (1/255) = 219 / 255**2
    assert metrics.psnr_y(a, b) == pytest.approx(-20 * math.log10(219 / 65025), abs=1e-9)


def test_psnr_identical_is_infinite_and_symmetric():
    x = textured_card(16)
    assert metrics.psnr_y(x, x) == math.inf
    y = x * 0.9
    assert metrics.psnr_y(x, y) == metrics.psnr_y(y, x)


def test_metrics_reject_shape_mismatch():
    with pytest.raises(ValueError):
        metrics.psnr_y(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))
    with pytest.raises(ValueError):
        metrics.ssim_y(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


def test_ssim_identical_is_one():
    x = textured_card()
    assert metrics.ssim_y(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_of_negative_is_low():
    x = textured_card()
    assert metrics.ssim_y(x, 1.0 - x) < 0.1


def test_ssim_matches_skimage():
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(0)
    a = textured_card()
    b = np.clip(a + rng.normal(scale=0.05, size=a.shape), 0, 1)
    ref = skm.structural_similarity(metrics.rgb_to_y(a), metrics.rgb_to_y(b), gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, data_range=1.0)
    assert metrics.ssim_y(a, b) == pytest.approx(ref, abs=1e-10)


def test_y_range_limits():
    assert metrics.rgb_to_y(np.zeros(3)) == pytest.approx(16 / 255)
    assert metrics.rgb_to_y(np.ones(3)) == pytest.approx(235 / 255)


@pytest.mark.parametrize("hw", [(17, 23), (1, 5), (8, 8), (3, 2)])
def test_pad_then_crop_restores(hw):
    img = np.random.default_rng(1).uniform(size=hw + (3,))
    padded, orig = data.pad_reflect(img, min_size=4)
    H, W = padded.shape[:2]
    assert H & (H - 1) == 0 and W & (W - 1) == 0 and min(H, W) >= 4
    assert np.array_equal(data.crop(padded, orig), img)


def test_pad_keeps_zeros_and_extent():
    padded, _ = data.pad_reflect(np.zeros((17, 23, 3)))
    assert padded.shape == (32, 32, 3) and not padded.any()


def test_png_roundtrip(tmp_path):
    img = np.random.default_rng(2).integers(0, 256, size=(5, 7, 3)) / 255.0
    data.write_png(tmp_path / "x.png", img)
    assert np.array_equal(data.read_png(tmp_path / "x.png"), img)


def test_load_pair_folder(tmp_path):
    for sub in ("rainy", "clean"):
        (tmp_path / sub).mkdir()
        for i in range(2):
            data.write_png(tmp_path / sub / f"{i}.png", np.full((6, 6, 3), i / 2))
    rainy, clean = data.load_pair_folder(tmp_path, size=4)
    assert rainy.shape == (2, 4, 4, 3)
    with pytest.raises(FileNotFoundError):
        data.load_pair_folder(tmp_path / "nowhere")


def test_ssim_negative_fixture():
    # frozen from a direct evaluation at build time
    x = textured_card()
    assert metrics.ssim_y(x, 1.0 - x) == pytest.approx(-0.7902303597572383, abs=1e-10)
