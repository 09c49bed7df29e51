"""
经典阈值二值化 - Otsu / Niblack / Sauvola

既作为采样器的子类标注器，也作为对比基线。前景判定统一为 f < 0（f = 0 归为背景）。
"""
from typing import Optional

import numpy as np

from ..core.interfaces import GrayImage, IBinarizer, LabelImage, NiblackParams, SauvolaParams
from .image_core import histogram, integral, local_stats_maps, otsu_threshold, round_to_odd


def default_window(stroke_width: int, min_window: int = 15) -> int:
    """子类标注用窗口：round-to-odd(2s)，下限 min_window"""
    return max(min_window, round_to_odd(2 * stroke_width))


def niblack_decision(im: GrayImage, p: NiblackParams) -> np.ndarray:
    """Niblack 决策函数 f = I − μ + kσ"""
    mean, std = local_stats_maps(integral(im), p.window, p.window)
    return im.data.astype(np.float64) - mean + p.k * std


def sauvola_decision(im: GrayImage, p: SauvolaParams) -> np.ndarray:
    """Sauvola 决策函数 f = I − μ(1 + k(σ/S − 1))"""
    mean, std = local_stats_maps(integral(im), p.window, p.window)
    return im.data.astype(np.float64) - mean * (1.0 + p.k * (std / p.dynamic_range - 1.0))


def binarize_otsu(im: GrayImage) -> LabelImage:
    """Otsu 全局阈值：I − G_th < 0 为前景"""
    threshold = otsu_threshold(histogram(im))
    return LabelImage(im.data < threshold)


def binarize_niblack(im: GrayImage, p: Optional[NiblackParams] = None) -> LabelImage:
    """Niblack 局部阈值"""
    return LabelImage(niblack_decision(im, p or NiblackParams()) < 0)


def binarize_sauvola(im: GrayImage, p: Optional[SauvolaParams] = None) -> LabelImage:
    """Sauvola 局部阈值"""
    return LabelImage(sauvola_decision(im, p or SauvolaParams()) < 0)


class OtsuBinarizer(IBinarizer):
    """Otsu 基线"""

    @property
    def name(self) -> str:
        return "otsu"

    def binarize(self, im: GrayImage) -> LabelImage:
        return binarize_otsu(im)


class NiblackBinarizer(IBinarizer):
    """Niblack 基线"""

    def __init__(self, params: NiblackParams):
        self.params = params

    @property
    def name(self) -> str:
        return "niblack"

    def binarize(self, im: GrayImage) -> LabelImage:
        return binarize_niblack(im, self.params)


class SauvolaBinarizer(IBinarizer):
    """Sauvola 基线"""

    def __init__(self, params: SauvolaParams):
        self.params = params

    @property
    def name(self) -> str:
        return "sauvola"

    def binarize(self, im: GrayImage) -> LabelImage:
        return binarize_sauvola(im, self.params)
