"""
评价服务 - DIBCO 标准的 F1、PSNR、DRD 以及语料级评价
"""
import math
from typing import List, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy import ndimage

from ..core.interfaces import EvalReport, ImageScore, LabelImage
from ..exceptions import CorpusError, InputError, MetricUndefinedError
from ..statics.messages import LogMessages
from ..utils.io_utils import atomic_write_text
from .corpus import list_images
from .image_core import load_label_image


PSNR_CAP = 100.0
DRD_BLOCK = 8


def _drd_weights() -> np.ndarray:
    offsets = np.arange(-2, 3)
    dist = np.hypot(offsets[:, None], offsets[None, :])
    weights = np.zeros((5, 5), dtype=np.float64)
    weights[dist > 0] = 1.0 / dist[dist > 0]
    return weights / weights.sum()


# 5×5 倒数距离权重，中心为 0，归一化到和为 1
DRD_WEIGHTS = _drd_weights()


def _check_pair(pred: LabelImage, gt: LabelImage) -> None:
    if pred.shape != gt.shape:
        raise InputError(f"预测尺寸 {pred.shape} 与真值尺寸 {gt.shape} 不一致")


def confusion(pred: LabelImage, gt: LabelImage) -> Tuple[int, int, int]:
    """前景为正类的 (TP, FP, FN)"""
    _check_pair(pred, gt)
    p = pred.mask()
    g = gt.mask()
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return tp, fp, fn


def f1(pred: LabelImage, gt: LabelImage) -> float:
    """F1（百分数）；两幅图都无前景时为 100"""
    tp, fp, fn = confusion(pred, gt)
    if tp + fp == 0 or tp + fn == 0:
        return 100.0 if (tp + fp == 0 and tp + fn == 0) else 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def psnr(pred: LabelImage, gt: LabelImage) -> float:
    """PSNR (dB)，C = 1；完全一致时封顶 100"""
    _check_pair(pred, gt)
    wrong = int(np.count_nonzero(pred.data != gt.data))
    if wrong == 0:
        return PSNR_CAP
    mse = wrong / pred.data.size
    return 10.0 * math.log10(1.0 / mse)


def nubn(gt: LabelImage) -> int:
    """真值中同时含前景与背景的 8×8 块数（边缘不足 8 的块也计入）"""
    height, width = gt.shape
    ys, xs = np.indices(gt.shape)
    blocks_x = (width + DRD_BLOCK - 1) // DRD_BLOCK
    block = (ys // DRD_BLOCK) * blocks_x + xs // DRD_BLOCK
    n_blocks = ((height + DRD_BLOCK - 1) // DRD_BLOCK) * blocks_x
    foreground = np.bincount(block.ravel(), weights=gt.data.ravel(), minlength=n_blocks)
    total = np.bincount(block.ravel(), minlength=n_blocks)
    return int(np.count_nonzero((foreground > 0) & (foreground < total)))


def drd_per_pixel(pred: LabelImage, gt: LabelImage) -> np.ndarray:
    """每个像素的 DRD_k = Σ_{5×5} W·|G(邻域) − B(k)|，图像外的邻居不计"""
    _check_pair(pred, gt)
    g = gt.data.astype(np.float64)
    ones = np.ones_like(g)
    near_gt = ndimage.correlate(g, DRD_WEIGHTS, mode='constant', cval=0.0)
    near_all = ndimage.correlate(ones, DRD_WEIGHTS, mode='constant', cval=0.0)
    return np.where(pred.data == 1, near_all - near_gt, near_gt)


def drd(pred: LabelImage, gt: LabelImage) -> float:
    """DRD = Σ_k DRD_k / NUBN（k 为错分像素）"""
    _check_pair(pred, gt)
    blocks = nubn(gt)
    if blocks == 0:
        raise MetricUndefinedError("真值中没有非均匀的 8×8 块，DRD 无定义")
    wrong = pred.data != gt.data
    if not wrong.any():
        return 0.0
    return float(drd_per_pixel(pred, gt)[wrong].sum() / blocks)


def score_image(name: str, pred: LabelImage, gt: LabelImage) -> ImageScore:
    """单幅图像的全部指标；DRD 无定义时记为 NaN"""
    tp, fp, fn = confusion(pred, gt)
    try:
        drd_value = drd(pred, gt)
    except MetricUndefinedError:
        logger.warning(LogMessages.DRD_UNDEFINED.format(name=name))
        drd_value = float('nan')
    return ImageScore(name=name, f1=f1(pred, gt), psnr=psnr(pred, gt), drd=drd_value, tp=tp, fp=fp, fn=fn)


def evaluate_corpus(pred_dir, gt_dir, pred_foreground_dark: bool = True,
                    gt_foreground_dark: bool = True) -> EvalReport:
    """按文件名配对评价整个目录，返回逐图像结果与平均值"""
    predictions = list_images(pred_dir)
    truths = list_images(gt_dir)
    matched = sorted(set(predictions) & set(truths))
    unmatched = sorted(
        [predictions[k].name for k in set(predictions) - set(truths)]
        + [truths[k].name for k in set(truths) - set(predictions)]
    )

    if not matched:
        raise CorpusError(f"预测与真值目录没有可配对的文件，未配对: {', '.join(unmatched) or '（两个目录都为空）'}")
    for name in unmatched:
        logger.warning(LogMessages.EVAL_UNMATCHED.format(name=name))

    scores: List[ImageScore] = []
    for key in matched:
        pred = load_label_image(predictions[key], foreground_dark=pred_foreground_dark)
        gt = load_label_image(truths[key], foreground_dark=gt_foreground_dark)
        scores.append(score_image(predictions[key].stem, pred, gt))

    report = EvalReport(images=scores, unmatched=unmatched)
    logger.info(LogMessages.EVAL_DONE.format(
        count=len(scores), f1=report.mean_f1, psnr=report.mean_psnr, drd=report.mean_drd))
    return report


def report_frame(report: EvalReport) -> pd.DataFrame:
    """逐图像记录表（name, f1, psnr, drd, tp, fp, fn）"""
    return pd.DataFrame(
        [vars(score) for score in report.images],
        columns=['name', 'f1', 'psnr', 'drd', 'tp', 'fp', 'fn'],
    )


def write_report(report: EvalReport, path) -> None:
    """以 JSON Lines 写出逐图像记录"""
    frame = report_frame(report)
    atomic_write_text(path, frame.to_json(orient='records', lines=True, force_ascii=False))
