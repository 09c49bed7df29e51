"""
经典阈值二值化测试
"""
import numpy as np
import pytest

from docbin.core.interfaces import GrayImage, NiblackParams, SauvolaParams
from docbin.core.patterns import BinarizerFactory
from docbin.exceptions import ConfigurationError
from docbin.services.thresholders import (
    binarize_niblack,
    binarize_otsu,
    binarize_sauvola,
    default_window,
    niblack_decision,
    sauvola_decision,
)


def _window_stats(data, x, y, size):
    height, width = data.shape
    x0, x1 = max(0, x - size // 2), min(width, x - size // 2 + size)
    y0, y1 = max(0, y - size // 2), min(height, y - size // 2 + size)
    block = data[y0:y1, x0:x1].astype(np.float64)
    return block.mean(), block.std()


def test_otsu_dark_mode_is_foreground():
    data = np.full((20, 20), 210, dtype=np.uint8)
    data[5:15, 8:11] = 40
    label = binarize_otsu(GrayImage(data))
    assert np.array_equal(label.mask(), data == 40)


def test_niblack_constant_image_is_background():
    im = GrayImage(np.full((16, 16), 128, dtype=np.uint8))
    assert binarize_niblack(im, NiblackParams(k=-0.2, window=5)).data.sum() == 0


def test_sauvola_constant_image_decision():
    # σ = 0 时 f = I − μ(1 − k) = kI > 0，全为背景
    im = GrayImage(np.full((8, 8), 100, dtype=np.uint8))
    assert binarize_sauvola(im, SauvolaParams(k=0.5, window=3)).data.sum() == 0


def test_niblack_decision_formula(rng, random_image):
    im = random_image(21, 17)
    p = NiblackParams(k=-0.3, window=7)
    decision = niblack_decision(im, p)
    for _ in range(25):
        x, y = int(rng.integers(0, im.width)), int(rng.integers(0, im.height))
        mean, std = _window_stats(im.data, x, y, 7)
        assert decision[y, x] == pytest.approx(float(im.data[y, x]) - mean + p.k * std, abs=1e-6)


def test_sauvola_decision_formula(rng, random_image):
    im = random_image(19, 25)
    p = SauvolaParams(k=0.4, dynamic_range=128.0, window=9)
    decision = sauvola_decision(im, p)
    for _ in range(25):
        x, y = int(rng.integers(0, im.width)), int(rng.integers(0, im.height))
        mean, std = _window_stats(im.data, x, y, 9)
        expected = float(im.data[y, x]) - mean * (1 + p.k * (std / p.dynamic_range - 1))
        assert decision[y, x] == pytest.approx(expected, abs=1e-6)


def test_dark_text_found_by_local_methods():
    data = np.full((30, 30), 200, dtype=np.uint8)
    data[10:20, 14:17] = 30
    im = GrayImage(data)
    for label in (binarize_niblack(im, NiblackParams(window=15)), binarize_sauvola(im, SauvolaParams(window=15))):
        assert label.mask()[10:20, 14:17].all()


@pytest.mark.parametrize("stroke,expected", [(1, 15), (3, 15), (7, 15), (8, 17), (10, 21)])
def test_default_window(stroke, expected):
    assert default_window(stroke) == expected


class TestParams:
    def test_niblack_k_must_be_negative(self):
        with pytest.raises(ConfigurationError):
            NiblackParams(k=0.2)

    def test_even_window_rejected(self):
        with pytest.raises(ConfigurationError):
            SauvolaParams(window=14)

    def test_sauvola_range_positive(self):
        with pytest.raises(ConfigurationError):
            SauvolaParams(dynamic_range=0)


class TestFactory:
    def test_available_methods(self):
        assert BinarizerFactory.available() == ["otsu", "niblack", "sauvola"]

    def test_create_with_params(self):
        binarizer = BinarizerFactory.create_binarizer("niblack", {"k": -0.1, "window": 9})
        assert binarizer.name == "niblack"
        assert binarizer.params.window == 9

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            BinarizerFactory.create_binarizer("wolf")

    def test_bad_parameter_name(self):
        with pytest.raises(ConfigurationError):
            BinarizerFactory.create_binarizer("sauvola", {"radius": 3})
