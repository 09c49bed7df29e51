"""
特征提取服务 - 142 维逐像素特征

每幅图像先构建一次 ImageArtifacts（积分图、均值/标准差图、最值对比度图、拉普拉斯图、
条带百分位表、全局统计），随后任意像素子集的特征都只是对这些只读产物的查表与逐元素运算。
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import ndimage
from scipy.special import expit

from ..core.interfaces import (
    FeatureChannel, FeatureFamily, FeatureMatrix, FeatureSchema, GlobalFeatures, GrayImage,
)
from ..exceptions import InputError
from ..statics.messages import LogMessages
from .image_core import (
    histogram, integral, local_stats_maps, otsu_threshold, round_to_odd, window_min_max,
)
from .thresholders import binarize_otsu


SCALE_MULTIPLIERS = (1, 2, 4, 8)
LIP_DIRECTIONS = ("row", "col", "diag", "anti")
RDI_NEIGHBORS = 8
RDI_FIELDS = ("zero", "neg", "pos", "pos_ratio", "neg_ratio", "zero_ratio")
HIST_BINS = 32


@dataclass(frozen=True)
class FeatureSettings:
    """特征提取参数"""
    ltp_tolerance: float = 8.0
    su_epsilon: float = 1e-6
    sauvola_dynamic_range: float = 128.0
    lip_threshold: float = 0.01

    @classmethod
    def from_config(cls, config) -> 'FeatureSettings':
        return cls(
            ltp_tolerance=config.ltp_tolerance,
            su_epsilon=config.su_epsilon,
            sauvola_dynamic_range=config.sauvola_dynamic_range,
            lip_threshold=config.lip_threshold,
        )


def build_feature_schema() -> FeatureSchema:
    """按特征族顺序、尺度升序构建特征模式"""
    entries: List[FeatureChannel] = []

    def add(name: str, family: FeatureFamily, scale: str, norm: str):
        entries.append(FeatureChannel(name=name, family=family, scale=scale, normalization=norm))

    local_scales = [f"{k}s" for k in SCALE_MULTIPLIERS]
    add("local_int", FeatureFamily.LOCAL_INT, "1", "div255")
    add("otsu_diff", FeatureFamily.OTSU_DIFF, "global", "div255")
    for scale in local_scales:
        add(f"local_avg_{scale}", FeatureFamily.LOCAL_AVG, scale, "div255")
    for scale in local_scales:
        add(f"local_std_{scale}", FeatureFamily.LOCAL_STD, scale, "div255")
    for scale in ["1"] + local_scales[:3]:
        add(f"su_{scale}", FeatureFamily.SU, scale, "minmax")
    for scale in ["1"] + local_scales[:3]:
        add(f"howe_{scale}", FeatureFamily.HOWE, scale, "minmax")
    for scale in local_scales:
        add(f"etni_{scale}", FeatureFamily.ETNI, scale, "exp")
    for scale in local_scales:
        add(f"ltsi_{scale}", FeatureFamily.LTSI, scale, "logistic")

    add("lip_global", FeatureFamily.LIP, "global", "log_percentile")
    for direction in LIP_DIRECTIONS:
        for scale in local_scales:
            add(f"lip_{direction}_{scale}", FeatureFamily.LIP, scale, "log_percentile")
    add("lip_max", FeatureFamily.LIP, "max", "log_percentile")

    for radius in ["1"] + local_scales:
        for name in RDI_FIELDS:
            add(f"rdi_{radius}_{name}", FeatureFamily.RDI, radius, "ratio" if name.endswith("ratio") else "frequency")

    add("global_int_mean", FeatureFamily.GLOBAL_STAT, "global", "div255")
    add("global_int_std", FeatureFamily.GLOBAL_STAT, "global", "div255")
    add("global_perc_mean", FeatureFamily.GLOBAL_STAT, "global", "raw")
    add("global_perc_std", FeatureFamily.GLOBAL_STAT, "global", "raw")
    for b in range(HIST_BINS):
        add(f"global_int_loghist_{b:02d}", FeatureFamily.GLOBAL_HIST, "global", "loghist")
    for b in range(HIST_BINS):
        add(f"global_perc_loghist_{b:02d}", FeatureFamily.GLOBAL_HIST, "global", "loghist")

    return FeatureSchema(entries=tuple(entries))


FEATURE_SCHEMA = build_feature_schema()


def local_windows(s: int) -> List[int]:
    """局部统计/ETNI/LTSI/LIP 条带的窗口边长 (1s,2s,4s,8s)"""
    return [round_to_odd(k * s) for k in SCALE_MULTIPLIERS]


def su_windows(s: int) -> List[int]:
    """Su 对比度窗口：尺度 1 取 3×3"""
    return [3] + [round_to_odd(k * s) for k in SCALE_MULTIPLIERS[:3]]


def howe_windows(s: int) -> List[int]:
    """Howe 拉普拉斯的均值窗口：尺度 1 即原图"""
    return [1] + [round_to_odd(k * s) for k in SCALE_MULTIPLIERS[:3]]


def rdi_radii(s: int) -> List[float]:
    """RDI 采样半径 {1, s, 2s, 4s, 8s}"""
    return [1.0] + [float(k * s) for k in SCALE_MULTIPLIERS]


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """按图像做 MinMax 归一化；常数通道全部置 0"""
    low, high = float(values.min()), float(values.max())
    if high > low:
        return (values - low) / (high - low)
    return np.zeros_like(values, dtype=np.float64)


def su_contrast(im: GrayImage, window: int, epsilon: float = 1e-6) -> np.ndarray:
    """Su 对比度 (max − min)/(max + min + ε)，未归一化"""
    minimum, maximum = window_min_max(im, window, window)
    low = minimum.astype(np.float64)
    high = maximum.astype(np.float64)
    return (high - low) / (high + low + epsilon)


def howe_laplacian(im: GrayImage, window: int) -> np.ndarray:
    """局部均值图的 4 邻域拉普拉斯（边界复制），未归一化"""
    if window == 1:
        base = im.data.astype(np.float64)
    else:
        base, _ = local_stats_maps(integral(im), window, window)
    return ndimage.laplace(base, mode='nearest')


def lip_transform(p: np.ndarray, threshold: float = 0.01) -> np.ndarray:
    """LIP(p) = 1 (p ≤ Th)，否则 log p / log Th"""
    p = np.asarray(p, dtype=np.float64)
    safe = np.maximum(p, threshold)
    return np.where(p <= threshold, 1.0, np.log(safe) / np.log(threshold))


def etni_values(intensity: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """ETNI：I ≤ μ 且 σ > 0 时为 exp((I−μ)/σ)，否则为 1"""
    positive = std > 0
    k = np.divide(intensity - mean, std, out=np.zeros_like(mean, dtype=np.float64), where=positive)
    return np.where(positive & (intensity <= mean), np.exp(np.minimum(k, 0.0)), 1.0)


def ltsi_values(intensity: np.ndarray, mean: np.ndarray, std: np.ndarray, dynamic_range: float) -> np.ndarray:
    """LTSI：σ > S 时为 0，否则为 logistic((I/μ − 1)/(σ − S))；μ = 0 时分子取 0"""
    ratio = np.divide(intensity, mean, out=np.ones_like(mean, dtype=np.float64), where=mean > 0) - 1.0
    denominator = std - dynamic_range
    nonzero = denominator != 0
    k = np.divide(ratio, denominator, out=np.zeros_like(ratio), where=nonzero)
    # σ = S：按符号取 ±∞，0/0 记为 0
    with np.errstate(invalid='ignore'):
        k = np.where(nonzero, k, np.sign(ratio) * np.inf)
    k = np.where(np.isnan(k), 0.0, k)
    return np.where(std > dynamic_range, 0.0, expit(k))


def loghist(hist: np.ndarray) -> np.ndarray:
    """对归一化直方图做 log(1+h)/log 2 后重新归一化"""
    logged = np.log1p(hist) / np.log(2.0)
    total = logged.sum()
    return logged / total if total > 0 else logged


def _bounded_runs(foreground: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """每行中两端紧邻高对比度像素的前景游程长度"""
    height, width = foreground.shape
    padded = np.zeros((height, width + 2), dtype=np.int8)
    padded[:, 1:-1] = foreground
    step = np.diff(padded, axis=1)
    rows, starts = np.nonzero(step == 1)
    _, stops = np.nonzero(step == -1)

    before = starts - 1
    after = stops
    inside = (before >= 0) & (after < width)
    rows, before, after = rows[inside], before[inside], after[inside]
    bounded = edges[rows, before] & edges[rows, after]
    return (after - before - 1)[bounded]


def estimate_stroke_width(im: GrayImage) -> int:
    """
    估计笔画宽度 s

    3×3 Su 对比度图经 Otsu 得到高对比度（边缘）像素，原图经 Otsu 得到临时前景；
    取两端都是边缘像素的水平与竖直前景游程长度的众数，裁剪到 [1, min(W,H)/4]。
    """
    contrast = su_contrast(im, 3)
    scaled = (contrast * 255.0).astype(np.uint8)
    edge_threshold = otsu_threshold(histogram(GrayImage(scaled)))
    edges = (scaled >= edge_threshold) & (scaled > 0)
    foreground = binarize_otsu(im).mask()

    lengths = np.concatenate([
        _bounded_runs(foreground, edges),
        _bounded_runs(foreground.T, edges.T),
    ])
    upper = max(1, min(im.width, im.height) // 4)
    if lengths.size == 0:
        return 1
    mode = int(np.argmax(np.bincount(lengths)))
    return int(min(max(mode, 1), upper))


def _line_index(direction: str, ys: np.ndarray, xs: np.ndarray, width: int) -> np.ndarray:
    if direction == "row":
        return ys
    if direction == "col":
        return xs
    if direction == "diag":
        return ys - xs + (width - 1)
    if direction == "anti":
        return ys + xs
    raise ValueError(direction)


def _line_count(direction: str, width: int, height: int) -> int:
    return {"row": height, "col": width}.get(direction, width + height - 1)


def percentile(im: GrayImage, pixel: Tuple[int, int], region: np.ndarray) -> float:
    """
    像素在区域内的百分位：区域中灰度不高于该像素的像素比例（含自身）

    Args:
        im: 灰度图像
        pixel: (x, y) 坐标
        region: 与图像同形状的布尔掩码
    """
    x, y = pixel
    region = np.asarray(region, dtype=bool)
    if region.shape != im.shape:
        raise InputError(f"区域掩码尺寸 {region.shape} 与图像 {im.shape} 不一致")
    if not region[y, x]:
        raise InputError("区域必须包含该像素")
    counts = np.bincount(im.data[region], minlength=256)
    cumulative = np.cumsum(counts)
    return float(cumulative[im.data[y, x]] / cumulative[-1])


def _neighbor_offsets(radius: float, index: int) -> Tuple[float, float]:
    angle = 2.0 * np.pi * index / RDI_NEIGHBORS
    # 消除 cos/sin 的舍入尾数，使轴向邻居落在整数坐标上
    dy = round(radius * np.sin(angle), 9)
    dx = round(radius * np.cos(angle), 9)
    return dy, dx


def sample_neighbors(intensity: np.ndarray, ys: np.ndarray, xs: np.ndarray, radius: float, index: int) -> np.ndarray:
    """第 index 个圆周邻居的双线性插值灰度（坐标裁剪到图像内）"""
    height, width = intensity.shape
    dy, dx = _neighbor_offsets(radius, index)
    yy = np.clip(ys + dy, 0, height - 1)
    xx = np.clip(xs + dx, 0, width - 1)
    values = ndimage.map_coordinates(intensity, [yy, xx], order=1, mode='nearest')
    return np.round(values, 6)


def ltp_code(im: GrayImage, pixel: Tuple[int, int], index: int, radius: float, tol: float = 8.0) -> int:
    """单个邻居的局部三值模式编码 {−1, 0, +1}"""
    x, y = pixel
    intensity = im.data.astype(np.float64)
    neighbor = sample_neighbors(intensity, np.array([float(y)]), np.array([float(x)]), radius, index)[0]
    center = intensity[y, x]
    if neighbor >= center + tol:
        return 1
    if neighbor <= center - tol:
        return -1
    return 0


def rdi_values(intensity: np.ndarray, ys: np.ndarray, xs: np.ndarray, radius: float, tol: float) -> np.ndarray:
    """某一半径上的 6 个 RDI 特征：三种编码的频率与三个比值（0/0 记 0）"""
    center = intensity[ys, xs]
    yf, xf = ys.astype(np.float64), xs.astype(np.float64)
    positive = np.zeros(len(ys), dtype=np.int64)
    negative = np.zeros(len(ys), dtype=np.int64)
    for index in range(RDI_NEIGHBORS):
        neighbor = sample_neighbors(intensity, yf, xf, radius, index)
        positive += neighbor >= center + tol
        negative += neighbor <= center - tol
    zero = RDI_NEIGHBORS - positive - negative

    def ratio(numerator, other):
        denominator = numerator + other
        return np.divide(numerator, denominator, out=np.zeros(len(ys)), where=denominator > 0)

    return np.stack([
        zero / RDI_NEIGHBORS,
        negative / RDI_NEIGHBORS,
        positive / RDI_NEIGHBORS,
        ratio(positive, zero),
        ratio(negative, positive),
        ratio(zero, negative),
    ], axis=1)


class ImageArtifacts:
    """
    单幅图像的特征预计算产物

    各组件按需计算并缓存；并发访问前必须先调用 materialize()，之后只读。
    """

    def __init__(self, im: GrayImage, stroke_width: Optional[int] = None,
                 settings: Optional[FeatureSettings] = None):
        self.image = im
        self.settings = settings or FeatureSettings()
        self.stroke_width = estimate_stroke_width(im) if stroke_width is None else int(stroke_width)
        if self.stroke_width < 1:
            raise InputError(f"笔画宽度必须不小于1: {self.stroke_width}")
        self.intensity = im.data.astype(np.float64)
        self._mean_std: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    @property
    def shape(self) -> Tuple[int, int]:
        return self.image.shape

    @cached_property
    def integral(self):
        return integral(self.image)

    @cached_property
    def otsu(self) -> int:
        return otsu_threshold(histogram(self.image))

    def mean_std(self, window: int) -> Tuple[np.ndarray, np.ndarray]:
        if window not in self._mean_std:
            self._mean_std[window] = local_stats_maps(self.integral, window, window)
        return self._mean_std[window]

    @cached_property
    def su_maps(self) -> List[np.ndarray]:
        return [
            minmax_normalize(su_contrast(self.image, w, self.settings.su_epsilon))
            for w in su_windows(self.stroke_width)
        ]

    @cached_property
    def howe_maps(self) -> List[np.ndarray]:
        maps = []
        for w in howe_windows(self.stroke_width):
            base = self.intensity if w == 1 else self.mean_std(w)[0]
            maps.append(minmax_normalize(ndimage.laplace(base, mode='nearest')))
        return maps

    @cached_property
    def global_cumulative(self) -> np.ndarray:
        return np.cumsum(histogram(self.image).bins)

    @cached_property
    def band_tables(self) -> Dict[Tuple[str, int], np.ndarray]:
        """(方向, 条带厚度) -> 每条线所在条带的累计灰度直方图 (nL×256)"""
        height, width = self.shape
        ys, xs = np.indices(self.shape)
        flat_values = self.image.data.ravel().astype(np.int64)
        tables: Dict[Tuple[str, int], np.ndarray] = {}
        for direction in LIP_DIRECTIONS:
            n_lines = _line_count(direction, width, height)
            lines = _line_index(direction, ys, xs, width).ravel().astype(np.int64)
            per_line = np.bincount(lines * 256 + flat_values, minlength=n_lines * 256).reshape(n_lines, 256)
            prefix = np.zeros((n_lines + 1, 256), dtype=np.int64)
            np.cumsum(per_line, axis=0, out=prefix[1:])
            centers = np.arange(n_lines)
            for thickness in local_windows(self.stroke_width):
                half = thickness // 2
                upper = np.minimum(centers + half + 1, n_lines)
                lower = np.maximum(centers - half, 0)
                band = prefix[upper] - prefix[lower]
                tables[(direction, thickness)] = np.cumsum(band, axis=1)
        return tables

    @cached_property
    def global_features(self) -> GlobalFeatures:
        return global_features(self.image, self.global_cumulative)

    def materialize(self) -> 'ImageArtifacts':
        """立即计算全部产物"""
        _ = self.integral, self.otsu, self.global_cumulative
        for w in local_windows(self.stroke_width):
            self.mean_std(w)
        _ = self.su_maps, self.howe_maps, self.band_tables, self.global_features
        return self

    # ---- 各特征族在像素子集上的取值 (n × dims) ----

    def intensity_at(self, ys, xs) -> np.ndarray:
        return (self.intensity[ys, xs] / 255.0)[:, None]

    def otsu_diff_at(self, ys, xs) -> np.ndarray:
        return ((self.intensity[ys, xs] - self.otsu) / 255.0)[:, None]

    def local_avg_at(self, ys, xs) -> np.ndarray:
        return np.stack([self.mean_std(w)[0][ys, xs] / 255.0 for w in local_windows(self.stroke_width)], axis=1)

    def local_std_at(self, ys, xs) -> np.ndarray:
        return np.stack([self.mean_std(w)[1][ys, xs] / 255.0 for w in local_windows(self.stroke_width)], axis=1)

    def su_at(self, ys, xs) -> np.ndarray:
        return np.stack([m[ys, xs] for m in self.su_maps], axis=1)

    def howe_at(self, ys, xs) -> np.ndarray:
        return np.stack([m[ys, xs] for m in self.howe_maps], axis=1)

    def etni_at(self, ys, xs) -> np.ndarray:
        values = self.intensity[ys, xs]
        columns = []
        for w in local_windows(self.stroke_width):
            mean, std = self.mean_std(w)
            columns.append(etni_values(values, mean[ys, xs], std[ys, xs]))
        return np.stack(columns, axis=1)

    def ltsi_at(self, ys, xs) -> np.ndarray:
        values = self.intensity[ys, xs]
        columns = []
        for w in local_windows(self.stroke_width):
            mean, std = self.mean_std(w)
            columns.append(ltsi_values(values, mean[ys, xs], std[ys, xs], self.settings.sauvola_dynamic_range))
        return np.stack(columns, axis=1)

    def percentiles_at(self, ys, xs) -> np.ndarray:
        """全局百分位 + 16 个方向条带百分位 (n × 17)"""
        width = self.shape[1]
        levels = self.image.data[ys, xs].astype(np.int64)
        columns = [self.global_cumulative[levels] / self.global_cumulative[-1]]
        for direction in LIP_DIRECTIONS:
            lines = _line_index(direction, ys, xs, width)
            for thickness in local_windows(self.stroke_width):
                table = self.band_tables[(direction, thickness)]
                columns.append(table[lines, levels] / table[lines, 255])
        return np.stack(columns, axis=1)

    def lip_at(self, ys, xs) -> np.ndarray:
        p = self.percentiles_at(ys, xs)
        peak = p[:, 1:].max(axis=1, keepdims=True)
        return lip_transform(np.hstack([p, peak]), self.settings.lip_threshold)

    def rdi_at(self, ys, xs) -> np.ndarray:
        return np.hstack([
            rdi_values(self.intensity, ys, xs, radius, self.settings.ltp_tolerance)
            for radius in rdi_radii(self.stroke_width)
        ])

    def global_stat_at(self, ys, xs) -> np.ndarray:
        g = self.global_features
        return np.broadcast_to(np.array([g.int_mean, g.int_std, g.perc_mean, g.perc_std]), (len(ys), 4))

    def global_hist_at(self, ys, xs) -> np.ndarray:
        g = self.global_features
        return np.broadcast_to(np.concatenate([g.int_loghist, g.perc_loghist]), (len(ys), 2 * HIST_BINS))

    def family_at(self, family: FeatureFamily, ys, xs) -> np.ndarray:
        return _FAMILY_GATHERERS[family](self, ys, xs)


_FAMILY_GATHERERS: Dict[FeatureFamily, Callable[[ImageArtifacts, np.ndarray, np.ndarray], np.ndarray]] = {
    FeatureFamily.LOCAL_INT: ImageArtifacts.intensity_at,
    FeatureFamily.OTSU_DIFF: ImageArtifacts.otsu_diff_at,
    FeatureFamily.LOCAL_AVG: ImageArtifacts.local_avg_at,
    FeatureFamily.LOCAL_STD: ImageArtifacts.local_std_at,
    FeatureFamily.SU: ImageArtifacts.su_at,
    FeatureFamily.HOWE: ImageArtifacts.howe_at,
    FeatureFamily.ETNI: ImageArtifacts.etni_at,
    FeatureFamily.LTSI: ImageArtifacts.ltsi_at,
    FeatureFamily.LIP: ImageArtifacts.lip_at,
    FeatureFamily.RDI: ImageArtifacts.rdi_at,
    FeatureFamily.GLOBAL_STAT: ImageArtifacts.global_stat_at,
    FeatureFamily.GLOBAL_HIST: ImageArtifacts.global_hist_at,
}


def global_features(im: GrayImage, cumulative: Optional[np.ndarray] = None) -> GlobalFeatures:
    """整幅图像的均值/标准差、百分位图统计与 32 桶对数直方图"""
    values = im.data.astype(np.float64)
    n_pixels = float(im.size)
    if cumulative is None:
        cumulative = np.cumsum(histogram(im).bins)
    perc = cumulative[im.data] / cumulative[-1]

    int_hist = np.bincount((im.data // 8).ravel(), minlength=HIST_BINS) / n_pixels
    perc_hist = np.histogram(perc, bins=HIST_BINS, range=(0.0, 1.0))[0] / n_pixels
    return GlobalFeatures(
        int_mean=float(values.mean() / 255.0),
        int_std=float(values.std() / 255.0),
        perc_mean=float(perc.mean()),
        perc_std=float(perc.std()),
        int_hist=int_hist,
        perc_hist=perc_hist,
        int_loghist=loghist(int_hist),
        perc_loghist=loghist(perc_hist),
    )


def chunk_pixels(total: int, chunk_size: int) -> List[np.ndarray]:
    """把 [0, total) 的扁平像素下标切成连续的块"""
    step = max(1, int(chunk_size))
    return [np.arange(start, min(start + step, total)) for start in range(0, total, step)]


def _all_pixels(shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    ys, xs = np.indices(shape)
    return ys.ravel(), xs.ravel()


def _family_map(im: GrayImage, s: int, family: FeatureFamily,
                settings: Optional[FeatureSettings] = None) -> np.ndarray:
    art = ImageArtifacts(im, stroke_width=s, settings=settings)
    ys, xs = _all_pixels(im.shape)
    return np.ascontiguousarray(art.family_at(family, ys, xs)).reshape(im.height, im.width, -1)


def feat_intensity(im: GrayImage) -> np.ndarray:
    """I/255 (H×W)"""
    return im.data.astype(np.float64) / 255.0


def feat_otsu_diff(im: GrayImage) -> np.ndarray:
    """(I − G_th)/255 (H×W)"""
    return (im.data.astype(np.float64) - otsu_threshold(histogram(im))) / 255.0


def feat_local_stats(im: GrayImage, s: int) -> np.ndarray:
    """4 个均值通道 + 4 个标准差通道 (H×W×8)"""
    art = ImageArtifacts(im, stroke_width=s)
    ys, xs = _all_pixels(im.shape)
    stacked = np.hstack([art.local_avg_at(ys, xs), art.local_std_at(ys, xs)])
    return stacked.reshape(im.height, im.width, 8)


def feat_su(im: GrayImage, s: int, epsilon: float = 1e-6) -> np.ndarray:
    return _family_map(im, s, FeatureFamily.SU, FeatureSettings(su_epsilon=epsilon))


def feat_howe(im: GrayImage, s: int) -> np.ndarray:
    return _family_map(im, s, FeatureFamily.HOWE)


def feat_etni(im: GrayImage, s: int) -> np.ndarray:
    return _family_map(im, s, FeatureFamily.ETNI)


def feat_ltsi(im: GrayImage, s: int, dynamic_range: float = 128.0) -> np.ndarray:
    return _family_map(im, s, FeatureFamily.LTSI, FeatureSettings(sauvola_dynamic_range=dynamic_range))


def feat_lip(im: GrayImage, s: int, threshold: float = 0.01) -> np.ndarray:
    return _family_map(im, s, FeatureFamily.LIP, FeatureSettings(lip_threshold=threshold))


def feat_rdi(im: GrayImage, s: int, tol: float = 8.0) -> np.ndarray:
    return _family_map(im, s, FeatureFamily.RDI, FeatureSettings(ltp_tolerance=tol))


class FeatureExtractor:
    """逐像素特征提取服务"""

    def __init__(self, settings: Optional[FeatureSettings] = None):
        self.settings = settings or FeatureSettings()
        self.schema = FEATURE_SCHEMA
        self._logger = logger

    @property
    def fingerprint(self) -> str:
        return self.schema.fingerprint

    def prepare(self, im: GrayImage, stroke_width: Optional[int] = None) -> ImageArtifacts:
        """构建并物化单幅图像的特征产物"""
        art = ImageArtifacts(im, stroke_width=stroke_width, settings=self.settings).materialize()
        self._logger.debug(LogMessages.ARTIFACTS_READY.format(
            width=im.width, height=im.height, stroke_width=art.stroke_width))
        return art

    def extract_at(self, source, pixels: Sequence[int]) -> FeatureMatrix:
        """
        提取指定像素的特征行

        Args:
            source: GrayImage 或已构建的 ImageArtifacts
            pixels: 行优先的扁平像素下标
        """
        art = source if isinstance(source, ImageArtifacts) else self.prepare(source)
        height, width = art.shape
        flat = np.asarray(pixels, dtype=np.int64).ravel()
        if flat.size and (flat.min() < 0 or flat.max() >= height * width):
            raise InputError(f"像素下标越界，图像大小 {width}x{height}")
        ys, xs = np.divmod(flat, width)
        if flat.size == 0:
            return FeatureMatrix(np.zeros((0, self.schema.total_dim), dtype=np.float32), self.fingerprint)
        blocks = [art.family_at(family, ys, xs) for family in FeatureFamily]
        return FeatureMatrix(np.hstack(blocks).astype(np.float32), self.fingerprint)

    def extract(self, im: GrayImage, stroke_width: Optional[int] = None) -> FeatureMatrix:
        """提取全部像素的特征（小图使用；大图请用 iter_chunks）"""
        art = self.prepare(im, stroke_width)
        return self.extract_at(art, np.arange(im.size))

    def iter_chunks(self, art: ImageArtifacts, chunk_size: int) -> Iterator[Tuple[np.ndarray, FeatureMatrix]]:
        """按行优先顺序分块产出 (像素下标, 特征矩阵)"""
        for pixels in chunk_pixels(art.image.size, chunk_size):
            yield pixels, self.extract_at(art, pixels)

    def channel_maps(self, art: ImageArtifacts, names: Sequence[str]) -> Dict[str, np.ndarray]:
        """按通道名返回整幅通道图 (H×W)，同族通道只计算一次"""
        height, width = art.shape
        ys, xs = _all_pixels(art.shape)
        slices = self.schema.family_slices()
        cache: Dict[FeatureFamily, np.ndarray] = {}
        maps: Dict[str, np.ndarray] = {}
        for name in names:
            index = self.schema.index_of(name)
            family = self.schema.entries[index].family
            if family not in cache:
                cache[family] = np.asarray(art.family_at(family, ys, xs))
            column = index - slices[family].start
            maps[name] = cache[family][:, column].reshape(height, width)
        return maps


_DEFAULT_EXTRACTOR = FeatureExtractor()


def extract_features(im: GrayImage) -> FeatureMatrix:
    """默认参数下整幅图像的特征矩阵"""
    return _DEFAULT_EXTRACTOR.extract(im)


def extract_features_at(im: GrayImage, pixels: Sequence[int]) -> FeatureMatrix:
    """默认参数下指定像素的特征矩阵"""
    return _DEFAULT_EXTRACTOR.extract_at(im, pixels)
