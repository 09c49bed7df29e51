"""
采样服务 - 16 子类像素划分、子类均衡采样、错误样本挖掘与样本文件存取
"""
import asyncio
import json
import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy import ndimage

from ..config import BinarizationConfig
from ..core.interfaces import GrayImage, LabelImage, NiblackParams, SampleSet, SubclassMap
from ..exceptions import InputError, ModelFormatError
from ..statics.messages import LogMessages
from ..utils.io_utils import atomic_write_bytes
from .features import FeatureExtractor, ImageArtifacts, estimate_stroke_width
from .thresholders import binarize_niblack, binarize_otsu, default_window


N_SUBCLASSES = 16

SAMPLE_MAGIC = b"DBSMPL\x00\x01"
SAMPLE_VERSION = 1
# magic, version, fingerprint, 行数, 特征维数, 种子, 图像名 JSON 长度
_SAMPLE_HEADER = struct.Struct("<8sH16sQHQI")


def gt_edges(gt: LabelImage) -> np.ndarray:
    """真值边缘：4 邻域内存在相反标签的像素（前景侧与背景侧都计入）"""
    g = gt.mask()
    edges = np.zeros_like(g)
    vertical = g[1:, :] != g[:-1, :]
    horizontal = g[:, 1:] != g[:, :-1]
    edges[1:, :] |= vertical
    edges[:-1, :] |= vertical
    edges[:, 1:] |= horizontal
    edges[:, :-1] |= horizontal
    return edges


def near_gt_edges(gt: LabelImage, s: int) -> np.ndarray:
    """与任一真值边缘像素的切比雪夫距离不超过 s 的像素"""
    edges = gt_edges(gt)
    if not edges.any():
        return edges
    size = 2 * int(s) + 1
    return ndimage.maximum_filter(edges.astype(np.uint8), size=size, mode='constant', cval=0) > 0


def subclass_map(im: GrayImage, gt: LabelImage, s: int,
                 params: Optional[NiblackParams] = None, min_window: int = 15) -> SubclassMap:
    """
    4 位子类编码：bit0 Otsu 前景，bit1 Niblack 前景，bit2 距真值边缘 ≤ s，bit3 真值前景
    """
    if im.shape != gt.shape:
        raise InputError(f"图像尺寸 {im.shape} 与真值尺寸 {gt.shape} 不一致")
    params = params or NiblackParams(window=default_window(s, min_window))

    codes = binarize_otsu(im).data.copy()
    codes |= binarize_niblack(im, params).data << 1
    codes |= near_gt_edges(gt, s).astype(np.uint8) << 2
    codes |= gt.data << 3
    return SubclassMap(codes)


def allocate_quotas(populations: np.ndarray, n_total: int) -> np.ndarray:
    """
    把总预算均分到非空子类

    容量不足的子类取全部像素，差额继续均分给其余子类，直到预算或像素耗尽；
    无法整除的余数依次分给编号较小的子类。
    """
    populations = np.asarray(populations, dtype=np.int64)
    allocation = np.zeros_like(populations)
    remaining = int(min(n_total, populations.sum()))
    active = [c for c in range(len(populations)) if populations[c] > 0]

    while remaining > 0 and active:
        share = remaining // len(active)
        if share == 0:
            for c in active[:remaining]:
                allocation[c] += 1
            break
        still_open = []
        for c in active:
            take = min(share, int(populations[c] - allocation[c]))
            allocation[c] += take
            remaining -= take
            if allocation[c] < populations[c]:
                still_open.append(c)
        active = still_open
    return allocation


def balanced_sample(sm: SubclassMap, n_total: int, seed: int,
                    pool: Optional[np.ndarray] = None, stream: int = 0) -> np.ndarray:
    """
    子类均衡的无放回采样

    Returns:
        升序的行优先扁平像素下标
    """
    if n_total < N_SUBCLASSES:
        raise InputError(f"采样总数不能少于 {N_SUBCLASSES}: {n_total}")
    codes = sm.labels.ravel()
    eligible = np.ones(codes.shape, dtype=bool) if pool is None else np.asarray(pool, dtype=bool).ravel()
    if eligible.shape != codes.shape:
        raise InputError("候选池掩码尺寸与子类图不一致")

    members = [np.flatnonzero((codes == c) & eligible) for c in range(N_SUBCLASSES)]
    populations = np.array([len(m) for m in members], dtype=np.int64)
    allocation = allocate_quotas(populations, n_total)

    rng = np.random.default_rng([int(seed), int(stream)])
    chosen = []
    for c in range(N_SUBCLASSES):
        count = int(allocation[c])
        if count == 0:
            continue
        if count == populations[c]:
            chosen.append(members[c])
        else:
            chosen.append(rng.choice(members[c], size=count, replace=False))
    if not chosen:
        return np.zeros(0, dtype=np.int64)
    return np.sort(np.concatenate(chosen)).astype(np.int64)


def mine_errors(pred: LabelImage, gt: LabelImage, sm: SubclassMap, n_total: int, seed: int,
                stream: int = 0) -> np.ndarray:
    """在预测错误的像素中做子类均衡采样；错误像素不足预算时全部返回"""
    if not (pred.shape == gt.shape == sm.shape):
        raise InputError(f"预测 {pred.shape}、真值 {gt.shape}、子类图 {sm.shape} 尺寸不一致")
    pool = pred.data != gt.data
    pool_size = int(pool.sum())
    if pool_size == 0 or n_total <= 0:
        return np.zeros(0, dtype=np.int64)
    if pool_size <= n_total:
        return np.flatnonzero(pool).astype(np.int64)
    return balanced_sample(sm, n_total, seed, pool=pool, stream=stream)


def write_sample_set(samples: SampleSet, path) -> None:
    """按列式二进制格式写入样本集"""
    names = json.dumps(samples.image_names, ensure_ascii=False).encode('utf-8')
    fingerprint = samples.schema_fingerprint.encode('ascii')
    if len(fingerprint) > 16:
        raise InputError(f"特征模式指纹过长: {samples.schema_fingerprint}")
    header = _SAMPLE_HEADER.pack(
        SAMPLE_MAGIC, SAMPLE_VERSION, fingerprint, len(samples), samples.n_features,
        int(samples.seed), len(names),
    )
    payload = b"".join([
        header,
        names,
        samples.rows.astype('<f4').tobytes(),
        samples.labels.astype('u1').tobytes(),
        samples.subclasses.astype('u1').tobytes(),
        samples.image_ids.astype('<u4').tobytes(),
    ])
    atomic_write_bytes(path, payload)


def read_sample_set(path) -> SampleSet:
    """读取列式样本文件；截断或格式错误时抛出 ModelFormatError"""
    try:
        with open(path, 'rb') as handle:
            data = handle.read()
    except OSError as e:
        raise ModelFormatError(f"无法读取样本文件 {path}: {e}") from e

    if len(data) < _SAMPLE_HEADER.size:
        raise ModelFormatError(f"样本文件过短: {path}")
    magic, version, fingerprint, n_rows, n_features, seed, names_len = _SAMPLE_HEADER.unpack_from(data, 0)
    if magic != SAMPLE_MAGIC:
        raise ModelFormatError(f"不是样本文件: {path}")
    if version != SAMPLE_VERSION:
        raise ModelFormatError(f"不支持的样本文件版本 {version}: {path}")

    offset = _SAMPLE_HEADER.size
    expected = offset + names_len + n_rows * (n_features * 4 + 1 + 1 + 4)
    if len(data) != expected:
        raise ModelFormatError(f"样本文件长度不符（{len(data)} != {expected}）: {path}")

    try:
        names = json.loads(data[offset:offset + names_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"样本文件图像名损坏: {path}") from e
    offset += names_len

    def take(dtype: str, count: int) -> np.ndarray:
        nonlocal offset
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        offset += arr.nbytes
        return arr

    rows = take('<f4', n_rows * n_features).reshape(n_rows, n_features)
    labels = take('u1', n_rows)
    subclasses = take('u1', n_rows)
    image_ids = take('<u4', n_rows)
    return SampleSet(
        rows=rows.astype(np.float32),
        labels=labels,
        subclasses=subclasses,
        image_ids=image_ids,
        image_names=list(names),
        seed=int(seed),
        schema_fingerprint=fingerprint.rstrip(b"\x00").decode('ascii'),
    )


@dataclass
class ImageContext:
    """训练图像的采样上下文"""
    index: int
    name: str
    image: GrayImage
    gt: LabelImage
    stroke_width: int
    subclasses: SubclassMap


class SamplerService:
    """训练样本采样服务"""

    def __init__(self, config: BinarizationConfig, extractor: FeatureExtractor):
        self.config = config
        self.extractor = extractor
        self._logger = logger

    def first_pass_stream(self, index: int) -> int:
        return 2 * index

    def error_pass_stream(self, index: int) -> int:
        return 2 * index + 1

    def build_context(self, index: int, name: str, im: GrayImage, gt: LabelImage,
                      stroke_width: Optional[int] = None) -> ImageContext:
        """估计笔画宽度并计算子类图"""
        s = estimate_stroke_width(im) if stroke_width is None else int(stroke_width)
        niblack = NiblackParams(k=self.config.niblack_k, window=default_window(s, self.config.min_window))
        sm = subclass_map(im, gt, s, niblack)
        self._logger.debug(LogMessages.SUBCLASS_POPULATIONS.format(
            name=name, stroke_width=s, populations=sm.populations().tolist()))
        return ImageContext(index=index, name=name, image=im, gt=gt, stroke_width=s, subclasses=sm)

    def to_sample_set(self, ctx: ImageContext, pixels: np.ndarray,
                      art: Optional[ImageArtifacts] = None) -> SampleSet:
        """提取采样像素的特征并组装样本集"""
        pixels = np.asarray(pixels, dtype=np.int64)
        if art is None:
            art = self.extractor.prepare(ctx.image, ctx.stroke_width)
        rows = self.extractor.extract_at(art, pixels).rows
        codes = ctx.subclasses.labels.ravel()[pixels]
        return SampleSet(
            rows=rows,
            labels=(codes >> 3) & 1,
            subclasses=codes,
            image_ids=np.zeros(len(pixels), dtype=np.uint32),
            image_names=[ctx.name],
            seed=self.config.seed,
            schema_fingerprint=self.extractor.fingerprint,
        )

    def first_pass(self, ctx: ImageContext, budget: Optional[int] = None,
                   art: Optional[ImageArtifacts] = None) -> SampleSet:
        """第一轮：子类均衡采样"""
        budget = self.config.first_pass_samples if budget is None else budget
        pixels = balanced_sample(ctx.subclasses, budget, self.config.seed,
                                 stream=self.first_pass_stream(ctx.index))
        return self.to_sample_set(ctx, pixels, art)

    def error_pass(self, ctx: ImageContext, pred: LabelImage, budget: Optional[int] = None,
                   art: Optional[ImageArtifacts] = None) -> SampleSet:
        """第二轮：在自举分类器的错误像素中采样"""
        budget = self.config.second_pass_samples if budget is None else budget
        pixels = mine_errors(pred, ctx.gt, ctx.subclasses, budget, self.config.seed,
                             stream=self.error_pass_stream(ctx.index))
        return self.to_sample_set(ctx, pixels, art)

    async def sample_corpus(self, pairs: Sequence, threads: Optional[int] = None) -> List[SampleSet]:
        """
        并发执行第一轮采样

        Args:
            pairs: (名称, GrayImage, LabelImage) 序列，顺序即图像编号
        """
        semaphore = asyncio.Semaphore(threads or self.config.threads)

        async def run(index: int, name: str, im: GrayImage, gt: LabelImage) -> SampleSet:
            async with semaphore:
                ctx = await asyncio.to_thread(self.build_context, index, name, im, gt)
                samples = await asyncio.to_thread(self.first_pass, ctx)
                self._logger.info(LogMessages.FIRST_PASS_IMAGE_DONE.format(name=name, rows=len(samples)))
                return samples

        return list(await asyncio.gather(*[
            run(index, name, im, gt) for index, (name, im, gt) in enumerate(pairs)
        ]))
