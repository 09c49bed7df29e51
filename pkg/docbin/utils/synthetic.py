"""
合成退化文档页 - 已知真值的测试与演示语料
"""
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from ..core.interfaces import GrayImage, LabelImage


def _draw_glyph(draw: ImageDraw.ImageDraw, rng: np.random.Generator, x: int, y: int,
                width: int, height: int, stroke: int) -> None:
    """在 (x, y) 为左上角的格子里画一个类字形笔画组合"""
    kind = int(rng.integers(0, 5))
    right, bottom = x + width, y + height
    if kind == 0:
        draw.ellipse([x, y + height // 3, right, bottom], outline=255, width=stroke)
    elif kind == 1:
        draw.line([(x + width // 2, y), (x + width // 2, bottom)], fill=255, width=stroke)
        draw.line([(x, y + height // 2), (right, y + height // 2)], fill=255, width=stroke)
    elif kind == 2:
        draw.line([(x, bottom), (x + width // 2, y), (right, bottom)], fill=255, width=stroke)
    elif kind == 3:
        draw.arc([x, y, right, bottom], start=30, end=300, fill=255, width=stroke)
    else:
        draw.line([(x, y), (x, bottom), (right, bottom)], fill=255, width=stroke)


def render_strokes(shape: Tuple[int, int], rng: np.random.Generator, stroke: int) -> np.ndarray:
    """按行排布的字形笔画掩码"""
    height, width = shape
    mask = Image.new('L', (width, height), 0)
    draw = ImageDraw.Draw(mask)
    glyph_height = int(rng.integers(10, 15))
    line_height = glyph_height + int(rng.integers(8, 13))
    margin = max(4, line_height // 2)

    for top in range(margin, height - margin - glyph_height, line_height):
        x = margin
        while x < width - margin - 12:
            glyph_width = int(rng.integers(6, 12))
            _draw_glyph(draw, rng, x, top, glyph_width, glyph_height, stroke)
            x += glyph_width + int(rng.integers(3, 6))
            if rng.random() < 0.2:
                x += int(rng.integers(6, 14))
    return np.asarray(mask) > 0


def render_page(seed: int, shape: Tuple[int, int] = (128, 192),
                stroke: Optional[int] = None, noise: float = 6.0,
                salt: float = 0.004) -> Tuple[GrayImage, LabelImage]:
    """
    生成一页合成退化文档

    暗色笔画叠加在带线性渐变与污渍的背景上，再加高斯噪声与椒盐噪声；真值为笔画掩码本身。

    Returns:
        (灰度图, 真值标签)
    """
    rng = np.random.default_rng(seed)
    height, width = shape
    stroke = int(rng.integers(2, 4)) if stroke is None else int(stroke)
    text = render_strokes(shape, rng, stroke)

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    gradient = rng.uniform(-25, 25) * xs / width + rng.uniform(-25, 25) * ys / height
    cy, cx = rng.uniform(0, height), rng.uniform(0, width)
    radius = rng.uniform(0.15, 0.35) * max(height, width)
    stain = rng.uniform(15, 35) * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * radius ** 2))

    background = rng.uniform(175, 215) + gradient - stain
    ink = rng.uniform(30, 70) + 0.3 * gradient
    page = np.where(text, ink, background)
    page = ndimage.gaussian_filter(page, sigma=0.6)
    page += rng.normal(0.0, noise, size=shape)

    flips = rng.random(shape) < salt
    page[flips] = np.where(rng.random(int(flips.sum())) < 0.5, 255.0, 0.0)

    data = np.clip(np.rint(page), 0, 255).astype(np.uint8)
    return GrayImage(data), LabelImage(text)


def write_corpus(out_dir, count: int, seed: int = 0,
                 shape: Tuple[int, int] = (128, 192)) -> List[Tuple[Path, Path]]:
    """
    写出合成语料：out_dir/images/page_NNN.png 与 out_dir/gt/page_NNN.png（黑字白底）

    第 i 页使用种子 seed + i。
    """
    from ..services.image_core import save_gray_image, save_label_image
    from .io_utils import ensure_dir

    image_dir = ensure_dir(Path(out_dir) / "images")
    gt_dir = ensure_dir(Path(out_dir) / "gt")
    written = []
    for index in range(count):
        im, gt = render_page(seed + index, shape)
        name = f"page_{index:03d}.png"
        save_gray_image(im.data, image_dir / name)
        save_label_image(gt, gt_dir / name, text_black=True)
        written.append((image_dir / name, gt_dir / name))
    return written
