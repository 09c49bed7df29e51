"""
图像基础服务 - 图像容器读写、直方图、积分图与窗口统计量
"""
import io
import os
from typing import Tuple, Union

import numpy as np
from loguru import logger
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from ..core.interfaces import GrayImage, Histogram256, IntegralPair, LabelImage
from ..exceptions import ImageFormatError, ImageIOError, InputError
from ..statics.messages import LogMessages
from ..utils.io_utils import atomic_write_bytes


PathLike = Union[str, os.PathLike]

# BT.601 亮度权重
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def round_to_odd(value: float) -> int:
    """把窗口尺寸取整为最近的奇数，且不小于3"""
    return max(3, 2 * (int(round(value)) // 2) + 1)


def window_bounds(center, size: int, limit: int):
    """以 center 为中心、边长 size 的窗口裁剪到 [0, limit) 后的半开区间"""
    start = np.asarray(center) - size // 2
    stop = start + size
    return np.clip(start, 0, limit), np.clip(stop, 0, limit)


def load_image(path: PathLike) -> GrayImage:
    """读取栅格图像并转换为灰度（彩色按 0.299R+0.587G+0.114B 取整）"""
    try:
        with Image.open(path) as img:
            img.load()
            data = _to_gray_array(img)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        raise ImageIOError(f"无法读取图像 {path}: {e}") from e
    except UnidentifiedImageError as e:
        raise ImageFormatError(f"无法识别的图像格式 {path}") from e
    except OSError as e:
        raise ImageFormatError(f"图像解码失败 {path}: {e}") from e

    logger.debug(LogMessages.IMAGE_LOADED.format(path=path, width=data.shape[1], height=data.shape[0]))
    return GrayImage(data)


def _to_gray_array(img: Image.Image) -> np.ndarray:
    """把任意模式的 PIL 图像转换为 uint8 灰度数组"""
    mode = img.mode
    if mode == 'L':
        return np.asarray(img, dtype=np.uint8)
    if mode in ('1', 'LA'):
        return np.asarray(img.convert('L'), dtype=np.uint8)
    if mode.startswith('I;16'):
        # 16 位灰度取高 8 位
        return (np.asarray(img, dtype=np.uint16) >> 8).astype(np.uint8)
    if mode in ('I', 'F'):
        arr = np.asarray(img, dtype=np.float64)
        if arr.size and arr.max() > 255:
            arr = arr * (255.0 / 65535.0)
        return np.clip(np.rint(arr), 0, 255).astype(np.uint8)

    rgb = np.asarray(img.convert('RGB'), dtype=np.float64)
    return np.clip(np.rint(rgb @ LUMA_WEIGHTS), 0, 255).astype(np.uint8)


def load_label_image(path: PathLike, foreground_dark: bool = True) -> LabelImage:
    """读取真值/预测图像为标签；foreground_dark 时暗像素（<128）为前景"""
    gray = load_image(path).data
    mask = gray < 128 if foreground_dark else gray >= 128
    return LabelImage(mask)


def encode_png(data: np.ndarray) -> bytes:
    """把 uint8 二维数组编码为 8 位灰度 PNG"""
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(data, dtype=np.uint8)).save(buffer, format='PNG')
    return buffer.getvalue()


def save_gray_image(data: np.ndarray, path: PathLike) -> None:
    """原子写入 8 位灰度 PNG"""
    atomic_write_bytes(path, encode_png(data))


def label_to_gray(label: LabelImage, text_black: bool = False) -> np.ndarray:
    """标签转灰度：默认 0→0、1→255；text_black 为 DIBCO 黑字白底约定"""
    fg, bg = (0, 255) if text_black else (255, 0)
    return np.where(label.data == 1, fg, bg).astype(np.uint8)


def save_label_image(label: LabelImage, path: PathLike, text_black: bool = False) -> None:
    """保存标签图像为 PNG"""
    save_gray_image(label_to_gray(label, text_black=text_black), path)


def integral(im: GrayImage) -> IntegralPair:
    """计算灰度与灰度平方的积分图（int64，精确）"""
    values = im.data.astype(np.int64)
    h, w = values.shape
    total = np.zeros((h + 1, w + 1), dtype=np.int64)
    squares = np.zeros((h + 1, w + 1), dtype=np.int64)
    total[1:, 1:] = values.cumsum(axis=0).cumsum(axis=1)
    squares[1:, 1:] = (values * values).cumsum(axis=0).cumsum(axis=1)
    return IntegralPair(sum=total, sqsum=squares)


def _window_rect(ip: IntegralPair, x: int, y: int, w: int, h: int) -> Tuple[int, int, int, int]:
    if w < 1 or h < 1:
        raise InputError(f"窗口尺寸必须不小于1: {w}x{h}")
    if not (0 <= x < ip.width and 0 <= y < ip.height):
        raise InputError(f"像素坐标越界: ({x}, {y})")
    x0, x1 = window_bounds(x, w, ip.width)
    y0, y1 = window_bounds(y, h, ip.height)
    return int(x0), int(x1), int(y0), int(y1)


def local_mean(ip: IntegralPair, x: int, y: int, w: int, h: int) -> float:
    """裁剪窗口内的灰度均值"""
    x0, x1, y0, y1 = _window_rect(ip, x, y, w, h)
    count = (x1 - x0) * (y1 - y0)
    return ip.rect_sum(x0, x1, y0, y1) / count


def local_std(ip: IntegralPair, x: int, y: int, w: int, h: int) -> float:
    """裁剪窗口内的灰度标准差 sqrt(max(0, E[I²]−μ²))"""
    x0, x1, y0, y1 = _window_rect(ip, x, y, w, h)
    count = (x1 - x0) * (y1 - y0)
    total = ip.rect_sum(x0, x1, y0, y1)
    squares = ip.rect_sqsum(x0, x1, y0, y1)
    # 整数运算求 count²·var，避免相消误差
    return float(np.sqrt(max(0, count * squares - total * total))) / count


def local_stats_maps(ip: IntegralPair, w: int, h: int) -> Tuple[np.ndarray, np.ndarray]:
    """整幅图像的窗口均值图与标准差图"""
    width, height = ip.width, ip.height
    x0, x1 = window_bounds(np.arange(width), w, width)
    y0, y1 = window_bounds(np.arange(height), h, height)

    def box(table: np.ndarray) -> np.ndarray:
        return (table[np.ix_(y1, x1)] - table[np.ix_(y0, x1)]
                - table[np.ix_(y1, x0)] + table[np.ix_(y0, x0)])

    count = ((y1 - y0)[:, None] * (x1 - x0)[None, :]).astype(np.int64)
    total = box(ip.sum)
    squares = box(ip.sqsum)

    mean = total / count
    max_count = int(count.max())
    if max_count * max_count * 65025 < 2 ** 62:
        spread = np.maximum(count * squares - total * total, 0).astype(np.float64)
    else:
        spread = np.maximum(count.astype(np.float64) * squares - total.astype(np.float64) ** 2, 0.0)
    std = np.sqrt(spread) / count
    return mean, std


def histogram(im: GrayImage) -> Histogram256:
    """256 级灰度直方图"""
    bins = np.bincount(im.data.ravel(), minlength=256).astype(np.int64)
    return Histogram256(bins=bins, total=im.size)


def otsu_threshold(h: Histogram256) -> int:
    """
    Otsu 全局阈值

    阈值 t 把灰度分为 {v < t} 与 {v ≥ t} 两类，取类间方差 ω0ω1(μ0−μ1)² 最大的 t（并列取最小）。
    单一灰度的直方图返回该灰度值。
    """
    if h.total < 1:
        raise InputError("直方图为空，无法计算 Otsu 阈值")

    bins = h.bins.astype(np.float64)
    levels = np.arange(256, dtype=np.float64)
    n0 = np.concatenate([[0.0], np.cumsum(bins)[:-1]])
    s0 = np.concatenate([[0.0], np.cumsum(bins * levels)[:-1]])
    n_total = float(h.total)
    s_total = float((bins * levels).sum())
    n1 = n_total - n0

    valid = (n0 > 0) & (n1 > 0)
    if not valid.any():
        return int(np.flatnonzero(h.bins)[0])

    # ω0ω1(μ0−μ1)² ∝ (N·S0 − n0·S)² / (n0·n1)
    score = np.zeros(256, dtype=np.float64)
    score[valid] = (n_total * s0[valid] - n0[valid] * s_total) ** 2 / (n0[valid] * n1[valid])
    return int(np.argmax(score))


def window_min_max(im: GrayImage, w: int, h: int) -> Tuple[np.ndarray, np.ndarray]:
    """裁剪窗口内的逐像素最小值/最大值（可分离的单调队列滤波）"""
    if w < 1 or h < 1:
        raise InputError(f"窗口尺寸必须不小于1: {w}x{h}")
    data = im.data
    # 边界复制与窗口裁剪对最值等价
    minimum = ndimage.minimum_filter(data, size=(h, w), mode='nearest')
    maximum = ndimage.maximum_filter(data, size=(h, w), mode='nearest')
    return minimum, maximum
