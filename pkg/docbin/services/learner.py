"""
学习服务 - 自举高斯朴素贝叶斯、极端随机树、交叉验证、特征重要性与模型文件

极端随机树由 scikit-learn 训练后导出为 TreeArrays，预测时用 float32 向量化遍历，
因此保存后的模型与训练时的预测结果逐位一致。
"""
import asyncio
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from sklearn.ensemble import ExtraTreesClassifier
from sklearn.metrics import f1_score
from sklearn.model_selection import StratifiedKFold
from sklearn.naive_bayes import GaussianNB

from ..config import BinarizationConfig
from ..core.interfaces import (
    CvReport, ErtModel, FamilyImportance, FeatureMatrix, FeatureSchema, ForestHyperParams,
    GnbModel, GrayImage, IBinarizer, LabelImage, SampleSet, TreeArrays,
)
from ..core.patterns import MetricsCollector
from ..exceptions import (
    CorpusError, InputError, MetricUndefinedError, ModelFormatError, SchemaMismatchError, TrainingError,
)
from ..statics.messages import LogMessages
from ..utils.io_utils import atomic_write_bytes
from .features import FEATURE_SCHEMA, FeatureExtractor, ImageArtifacts, chunk_pixels
from .sampler import ImageContext, SamplerService


MODEL_MAGIC = b"DBERT\x00\x00\x01"
MODEL_VERSION = 1
# magic, version, fingerprint, n_features, n_trees, K, min_samples_split, max_depth(-1 不限), seed
_MODEL_HEADER = struct.Struct("<8sH16sHIHIiQ")
_NODE_COUNT = struct.Struct("<I")
# 每个节点：feature u16, threshold f32, left u32, right u32, counts u32×2
_NODE_BYTES = 2 + 4 + 4 + 4 + 8

LEARNING_CURVE_BUDGETS = (1920, 5760, 9600, 13440, 15360, 17280, 19200)

Rows = Union[FeatureMatrix, SampleSet, np.ndarray]


def _as_rows(data: Rows) -> Tuple[np.ndarray, str]:
    if isinstance(data, (FeatureMatrix, SampleSet)):
        return data.rows, data.schema_fingerprint
    rows = np.asarray(data, dtype=np.float32)
    if rows.ndim != 2:
        raise InputError(f"特征矩阵必须是二维数组，实际形状: {rows.shape}")
    return rows, ""


def _training_data(data) -> Tuple[np.ndarray, np.ndarray, str]:
    if isinstance(data, SampleSet):
        return data.rows, data.labels.astype(np.int64), data.schema_fingerprint
    rows, labels = data
    rows, fingerprint = _as_rows(rows)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if len(labels) != len(rows):
        raise InputError(f"样本行数 {len(rows)} 与标签数 {len(labels)} 不一致")
    return rows, labels, fingerprint


def _check_fingerprint(expected: str, actual: str) -> None:
    if expected and actual and expected != actual:
        raise SchemaMismatchError(f"模型特征模式指纹 {expected} 与输入 {actual} 不一致")


# ---------------------------------------------------------------- 高斯朴素贝叶斯

def gnb_fit(samples, var_smoothing: float = 1e-9) -> GnbModel:
    """训练自举用的高斯朴素贝叶斯（两类都必须出现）"""
    rows, labels, fingerprint = _training_data(samples)
    present = np.unique(labels)
    if len(present) < 2:
        raise TrainingError(f"自举分类器需要前景与背景两类样本，实际只有: {present.tolist()}")

    estimator = GaussianNB(var_smoothing=var_smoothing).fit(rows.astype(np.float64), labels)
    variances = getattr(estimator, 'var_', None)
    if variances is None:
        variances = estimator.sigma_
    return GnbModel(
        classes=estimator.classes_.astype(np.int64),
        priors=np.asarray(estimator.class_prior_, dtype=np.float64),
        means=np.asarray(estimator.theta_, dtype=np.float64),
        variances=np.asarray(variances, dtype=np.float64),
        epsilon=float(estimator.epsilon_),
        schema_fingerprint=fingerprint,
    )


def gnb_log_posterior(m: GnbModel, rows: Rows) -> np.ndarray:
    """各类的联合对数似然（未归一化），形状 (n, 类别数)"""
    x, fingerprint = _as_rows(rows)
    _check_fingerprint(m.schema_fingerprint, fingerprint)
    if x.shape[1] != m.n_features:
        raise InputError(f"特征维数 {x.shape[1]} 与模型 {m.n_features} 不一致")
    x = x.astype(np.float64)
    joint = np.empty((len(x), len(m.classes)), dtype=np.float64)
    for c in range(len(m.classes)):
        variance = m.variances[c]
        log_norm = -0.5 * np.sum(np.log(2.0 * np.pi * variance))
        joint[:, c] = np.log(m.priors[c]) + log_norm - 0.5 * np.sum((x - m.means[c]) ** 2 / variance, axis=1)
    return joint


def gnb_predict(m: GnbModel, rows: Rows) -> np.ndarray:
    """最大后验类别；并列时取编号较小的类别（背景）"""
    return m.classes[np.argmax(gnb_log_posterior(m, rows), axis=1)].astype(np.uint8)


# ---------------------------------------------------------------- 极端随机树

def _float32_floor(thresholds: np.ndarray) -> np.ndarray:
    """不大于原阈值的最大 float32，保证 float32 输入上 x ≤ t 的判定不变"""
    single = thresholds.astype(np.float32)
    rounded_up = single.astype(np.float64) > thresholds
    single[rounded_up] = np.nextafter(single[rounded_up], np.float32(-np.inf))
    return single


def export_tree(tree, classes: np.ndarray) -> TreeArrays:
    """把 sklearn 的 tree_ 导出为 TreeArrays"""
    leaf = tree.children_left < 0
    feature = np.where(leaf, TreeArrays.LEAF, tree.feature).astype(np.uint16)
    threshold = _float32_floor(np.asarray(tree.threshold, dtype=np.float64))
    threshold[leaf] = 0.0
    left = np.where(leaf, 0, tree.children_left).astype(np.uint32)
    right = np.where(leaf, 0, tree.children_right).astype(np.uint32)

    # tree_.value 在不同版本中是计数或比例，统一按加权样本数还原为计数
    value = np.asarray(tree.value, dtype=np.float64)[:, 0, :]
    totals = value.sum(axis=1, keepdims=True)
    fractions = np.divide(value, totals, out=np.zeros_like(value), where=totals > 0)
    weighted = np.rint(fractions * np.asarray(tree.weighted_n_node_samples)[:, None]).astype(np.uint32)
    counts = np.zeros((len(feature), 2), dtype=np.uint32)
    for column, label in enumerate(classes):
        counts[:, int(label)] = weighted[:, column]
    return TreeArrays(feature=feature, threshold=threshold, left=left, right=right, counts=counts)


def ert_fit(samples, hp: Optional[ForestHyperParams] = None, seed: int = 42, threads: int = 1) -> ErtModel:
    """训练极端随机树：不自助采样，Gini 准则，每个节点随机抽取 K 个特征"""
    hp = hp or ForestHyperParams()
    rows, labels, fingerprint = _training_data(samples)
    if len(rows) < 2:
        raise TrainingError(f"训练样本过少: {len(rows)}")
    if hp.n_trees < 1 or hp.k_features < 1 or hp.min_samples_split < 2:
        raise TrainingError(f"无效的森林超参数: {hp}")

    estimator = ExtraTreesClassifier(
        n_estimators=hp.n_trees,
        criterion='gini',
        max_features=min(hp.k_features, rows.shape[1]),
        min_samples_split=hp.min_samples_split,
        max_depth=hp.max_depth,
        bootstrap=False,
        random_state=int(seed),
        n_jobs=max(1, int(threads)),
    )
    estimator.fit(rows, labels)
    trees = [export_tree(e.tree_, estimator.classes_) for e in estimator.estimators_]
    return ErtModel(
        trees=trees,
        hyperparams=hp,
        schema_fingerprint=fingerprint,
        seed=int(seed),
        n_features=int(rows.shape[1]),
    )


def apply_tree(tree: TreeArrays, x: np.ndarray) -> np.ndarray:
    """每行到达的叶子编号；x ≤ 阈值走左子树"""
    node = np.zeros(len(x), dtype=np.int64)
    active = np.arange(len(x))
    for _ in range(tree.n_nodes):
        current = node[active]
        internal = tree.feature[current] != TreeArrays.LEAF
        active = active[internal]
        if active.size == 0:
            return node
        current = current[internal]
        go_left = x[active, tree.feature[current]] <= tree.threshold[current]
        node[active] = np.where(go_left, tree.left[current], tree.right[current])
    raise ModelFormatError("决策树存在环或越界的子节点")


def _forest_rows(m: ErtModel, rows: Rows) -> np.ndarray:
    x, fingerprint = _as_rows(rows)
    _check_fingerprint(m.schema_fingerprint, fingerprint)
    if x.shape[1] != m.n_features:
        raise InputError(f"特征维数 {x.shape[1]} 与模型 {m.n_features} 不一致")
    return np.ascontiguousarray(x, dtype=np.float32)


def ert_predict_proba(m: ErtModel, rows: Rows) -> np.ndarray:
    """各树叶子前景比例的平均值"""
    x = _forest_rows(m, rows)
    proba = np.zeros(len(x), dtype=np.float64)
    for tree in m.trees:
        counts = tree.counts[apply_tree(tree, x)].astype(np.float64)
        totals = counts.sum(axis=1)
        proba += np.divide(counts[:, 1], totals, out=np.zeros_like(totals), where=totals > 0)
    return proba / max(1, m.n_trees)


def ert_predict(m: ErtModel, rows: Rows) -> np.ndarray:
    """前景概率严格大于 0.5 时判为前景"""
    return (ert_predict_proba(m, rows) > 0.5).astype(np.uint8)


def verify_decision_paths(m: ErtModel, rows: Rows) -> int:
    """
    逐行重放每棵树的决策路径并校验

    校验内容：路径上每一步的分支与 float64 下的 x ≤ t 一致；路径约束构成的区间非空且包含 x；
    终点与向量化遍历的叶子相同。任一不符抛出 TrainingError。

    Returns:
        校验的 (行, 树) 组合数
    """
    x = _forest_rows(m, rows)
    n = len(x)
    for index, tree in enumerate(m.trees):
        expected = apply_tree(tree, x)
        lower = np.full((n, m.n_features), -np.inf)
        upper = np.full((n, m.n_features), np.inf)
        node = np.zeros(n, dtype=np.int64)
        active = np.arange(n)
        for _ in range(tree.n_nodes + 1):
            current = node[active]
            internal = tree.feature[current] != TreeArrays.LEAF
            active, current = active[internal], current[internal]
            if active.size == 0:
                break
            feats = tree.feature[current].astype(np.int64)
            values = x[active, feats].astype(np.float64)
            thresholds = tree.threshold[current].astype(np.float64)
            go_left = values <= thresholds
            upper[active[go_left], feats[go_left]] = np.minimum(
                upper[active[go_left], feats[go_left]], thresholds[go_left])
            lower[active[~go_left], feats[~go_left]] = np.maximum(
                lower[active[~go_left], feats[~go_left]], thresholds[~go_left])
            node[active] = np.where(go_left, tree.left[current], tree.right[current])
        else:
            raise TrainingError(f"第 {index} 棵树的决策路径没有终止")

        if np.any(lower >= upper):
            raise TrainingError(f"第 {index} 棵树存在互相矛盾的路径约束")
        inside = (x.astype(np.float64) > lower) & (x.astype(np.float64) <= upper)
        if not inside.all():
            raise TrainingError(f"第 {index} 棵树的路径约束与输入不符")
        if not np.array_equal(node, expected):
            raise TrainingError(f"第 {index} 棵树重放的叶子与预测遍历不一致")
    logger.debug(LogMessages.PATHS_VERIFIED.format(rows=n, trees=m.n_trees))
    return n * m.n_trees


# ---------------------------------------------------------------- 特征重要性

def _gini(counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    weights = counts.sum(axis=1)
    fractions = np.divide(counts, weights[:, None], out=np.zeros_like(counts), where=weights[:, None] > 0)
    return weights, 1.0 - np.sum(fractions ** 2, axis=1)


def feature_importances(m: ErtModel) -> np.ndarray:
    """
    平均 Gini 减少量

    每棵树内按样本数加权累计各特征的 Gini 减少量并归一化，再对树取平均后整体归一化；
    没有任何分裂时全为 0。
    """
    total = np.zeros(m.n_features, dtype=np.float64)
    for tree in m.trees:
        weights, impurity = _gini(tree.counts.astype(np.float64))
        internal = np.flatnonzero(~tree.is_leaf)
        per_tree = np.zeros(m.n_features, dtype=np.float64)
        if internal.size:
            left = tree.left[internal].astype(np.int64)
            right = tree.right[internal].astype(np.int64)
            decrease = (weights[internal] * impurity[internal]
                        - weights[left] * impurity[left] - weights[right] * impurity[right])
            np.add.at(per_tree, tree.feature[internal].astype(np.int64), decrease)
        if per_tree.sum() > 0:
            per_tree /= per_tree.sum()
        total += per_tree
    total /= max(1, m.n_trees)
    if total.sum() > 0:
        total /= total.sum()
    return total


def family_importances(m: ErtModel, schema: FeatureSchema = FEATURE_SCHEMA) -> List[FamilyImportance]:
    """按特征族汇总：overall 为族内求和，dimensional 为 overall / 维数"""
    if m.n_features != schema.total_dim:
        raise InputError(f"模型特征维数 {m.n_features} 与特征模式 {schema.total_dim} 不一致")
    importances = feature_importances(m)
    result = []
    for family, block in schema.family_slices().items():
        overall = float(importances[block].sum())
        dims = block.stop - block.start
        result.append(FamilyImportance(family=family.label, dims=dims, overall=overall, dimensional=overall / dims))
    return result


def importance_frame(families: Sequence[FamilyImportance]) -> pd.DataFrame:
    """特征族重要性表，按 overall 降序"""
    frame = pd.DataFrame([vars(f) for f in families], columns=['family', 'dims', 'overall', 'dimensional'])
    return frame.sort_values('overall', ascending=False, kind='stable').reset_index(drop=True)


# ---------------------------------------------------------------- 交叉验证

def cv_folds(labels: np.ndarray, n_splits: int = 10, seed: int = 42) -> List[Tuple[np.ndarray, np.ndarray]]:
    """分层 k 折划分，返回 (训练下标, 测试下标) 列表"""
    labels = np.asarray(labels).ravel()
    counts = np.bincount(labels.astype(np.int64), minlength=2)
    if n_splits < 2:
        raise TrainingError(f"交叉验证折数至少为 2: {n_splits}")
    if counts.min() < n_splits:
        raise TrainingError(f"每类样本数必须不少于折数 {n_splits}，实际: 背景 {counts[0]}, 前景 {counts[1]}")
    splitter = StratifiedKFold(n_splits=n_splits, shuffle=True, random_state=int(seed))
    return list(splitter.split(np.zeros(len(labels)), labels))


def cross_validate(samples, grid: Sequence[ForestHyperParams], seed: int = 42,
                   n_splits: int = 10, threads: int = 1) -> CvReport:
    """在超参数网格上做分层 k 折交叉验证，按平均 F1 选出最优组合（并列取先出现者）"""
    if not grid:
        raise TrainingError("交叉验证网格为空")
    rows, labels, _ = _training_data(samples)
    folds = cv_folds(labels, n_splits, seed)

    best: Optional[Tuple[ForestHyperParams, List[float]]] = None
    grid_results = []
    for hp in grid:
        scores = []
        for train_index, test_index in folds:
            model = ert_fit((rows[train_index], labels[train_index]), hp, seed, threads)
            predicted = ert_predict(model, rows[test_index])
            scores.append(float(f1_score(labels[test_index], predicted, zero_division=0)))
        mean, std = float(np.mean(scores)), float(np.std(scores))
        grid_results.append({
            'n_trees': hp.n_trees, 'min_samples_split': hp.min_samples_split,
            'mean_f1': mean, 'std_f1': std,
        })
        logger.info(LogMessages.CV_CANDIDATE.format(
            n_trees=hp.n_trees, mss=hp.min_samples_split, mean=mean, std=std))
        if best is None or mean > np.mean(best[1]):
            best = (hp, scores)

    hp, scores = best
    logger.info(LogMessages.CV_SELECTED.format(
        n_trees=hp.n_trees, mss=hp.min_samples_split, mean=float(np.mean(scores))))
    return CvReport(
        per_fold_f1=scores,
        mean_f1=float(np.mean(scores)),
        std_f1=float(np.std(scores)),
        hyperparams=hp,
        n_folds=n_splits,
        grid_results=grid_results,
    )


# ---------------------------------------------------------------- 模型文件

def model_to_bytes(m: ErtModel) -> bytes:
    """小端二进制编码：文件头 + 每棵树的节点数组"""
    fingerprint = m.schema_fingerprint.encode('ascii')
    if len(fingerprint) > 16:
        raise InputError(f"特征模式指纹过长: {m.schema_fingerprint}")
    hp = m.hyperparams
    parts = [_MODEL_HEADER.pack(
        MODEL_MAGIC, MODEL_VERSION, fingerprint, m.n_features, m.n_trees,
        hp.k_features, hp.min_samples_split, -1 if hp.max_depth is None else hp.max_depth, m.seed,
    )]
    for tree in m.trees:
        parts.append(_NODE_COUNT.pack(tree.n_nodes))
        parts.append(tree.feature.astype('<u2').tobytes())
        parts.append(tree.threshold.astype('<f4').tobytes())
        parts.append(tree.left.astype('<u4').tobytes())
        parts.append(tree.right.astype('<u4').tobytes())
        parts.append(tree.counts.astype('<u4').tobytes())
    return b"".join(parts)


def _check_tree(tree: TreeArrays, n_features: int, index: int) -> None:
    internal = ~tree.is_leaf
    if np.any(tree.feature[internal] >= n_features):
        raise ModelFormatError(f"第 {index} 棵树的特征下标越界")
    children = np.concatenate([tree.left[internal], tree.right[internal]])
    if np.any(children >= tree.n_nodes) or np.any(children == 0):
        raise ModelFormatError(f"第 {index} 棵树的子节点下标越界")
    if np.any(tree.counts[tree.is_leaf].sum(axis=1) == 0):
        raise ModelFormatError(f"第 {index} 棵树存在空叶子")


def model_from_bytes(data: bytes) -> ErtModel:
    """解析模型二进制；魔数、版本、长度或结构不符时抛出 ModelFormatError"""
    if len(data) < _MODEL_HEADER.size:
        raise ModelFormatError("模型文件过短")
    magic, version, fingerprint, n_features, n_trees, k, mss, max_depth, seed = _MODEL_HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise ModelFormatError("不是模型文件（魔数不符）")
    if version != MODEL_VERSION:
        raise ModelFormatError(f"不支持的模型版本: {version}")

    offset = _MODEL_HEADER.size
    trees = []
    for index in range(n_trees):
        if offset + _NODE_COUNT.size > len(data):
            raise ModelFormatError(f"模型文件在第 {index} 棵树处截断")
        (n_nodes,) = _NODE_COUNT.unpack_from(data, offset)
        offset += _NODE_COUNT.size
        if n_nodes == 0 or offset + n_nodes * _NODE_BYTES > len(data):
            raise ModelFormatError(f"模型文件在第 {index} 棵树处截断")

        def take(dtype: str, count: int) -> np.ndarray:
            nonlocal offset
            arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
            offset += arr.nbytes
            return arr

        tree = TreeArrays(
            feature=take('<u2', n_nodes),
            threshold=take('<f4', n_nodes),
            left=take('<u4', n_nodes),
            right=take('<u4', n_nodes),
            counts=take('<u4', 2 * n_nodes),
        )
        _check_tree(tree, n_features, index)
        trees.append(tree)
    if offset != len(data):
        raise ModelFormatError(f"模型文件末尾有多余数据 ({len(data) - offset} 字节)")

    return ErtModel(
        trees=trees,
        hyperparams=ForestHyperParams(
            n_trees=n_trees, k_features=k, min_samples_split=mss,
            max_depth=None if max_depth < 0 else max_depth,
        ),
        schema_fingerprint=fingerprint.rstrip(b"\x00").decode('ascii', errors='replace'),
        seed=int(seed),
        n_features=int(n_features),
    )


def save_model(m: ErtModel, path) -> None:
    """原子写入模型文件"""
    atomic_write_bytes(path, model_to_bytes(m))
    logger.info(LogMessages.MODEL_SAVED.format(path=path, trees=m.n_trees))


def load_model(path) -> ErtModel:
    """读取模型文件"""
    try:
        with open(path, 'rb') as handle:
            data = handle.read()
    except OSError as e:
        raise ModelFormatError(f"无法读取模型文件 {path}: {e}") from e
    model = model_from_bytes(data)
    logger.info(LogMessages.MODEL_LOADED.format(path=path, trees=model.n_trees, fingerprint=model.schema_fingerprint))
    return model


# ---------------------------------------------------------------- 整图解码

def decode_artifacts(art: ImageArtifacts, extractor: FeatureExtractor,
                     predict_fn: Callable[[FeatureMatrix], np.ndarray],
                     chunk_size: int = 65536, dtype=np.float64, threads: int = 1) -> np.ndarray:
    """
    分块提取特征并预测，返回 H×W 结果图

    threads > 1 时各块在线程池中并行，每块只写自己的输出切片；art 须已物化。
    """
    out = np.empty(art.image.size, dtype=dtype)
    chunks = chunk_pixels(art.image.size, chunk_size)

    def work(pixels: np.ndarray) -> None:
        out[pixels[0]:pixels[-1] + 1] = predict_fn(extractor.extract_at(art, pixels))

    if threads <= 1 or len(chunks) <= 1:
        for pixels in chunks:
            work(pixels)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # 消费迭代器以便把块内异常抛出
            list(pool.map(work, chunks))
    return out.reshape(art.shape)


def predict_proba_image(m: ErtModel, im: GrayImage, extractor: Optional[FeatureExtractor] = None,
                        chunk_size: int = 65536, stroke_width: Optional[int] = None,
                        threads: int = 1) -> np.ndarray:
    """整幅图像的前景概率图"""
    extractor = extractor or FeatureExtractor()
    _check_fingerprint(m.schema_fingerprint, extractor.fingerprint)
    art = extractor.prepare(im, stroke_width)
    return decode_artifacts(art, extractor, lambda chunk: ert_predict_proba(m, chunk), chunk_size, threads=threads)


def predict_image(m: ErtModel, im: GrayImage, extractor: Optional[FeatureExtractor] = None,
                  chunk_size: int = 65536, stroke_width: Optional[int] = None,
                  threads: int = 1) -> LabelImage:
    """整幅图像二值化"""
    return LabelImage(predict_proba_image(m, im, extractor, chunk_size, stroke_width, threads) > 0.5)


class LearnedBinarizer(IBinarizer):
    """基于已训练森林的二值化器"""

    def __init__(self, model: ErtModel, extractor: Optional[FeatureExtractor] = None,
                 chunk_size: int = 65536, metrics: Optional[MetricsCollector] = None, threads: int = 1):
        self.model = model
        self.extractor = extractor or FeatureExtractor()
        self.chunk_size = chunk_size
        self.threads = max(1, int(threads))
        self.metrics = metrics or MetricsCollector()
        self._logger = logger
        _check_fingerprint(model.schema_fingerprint, self.extractor.fingerprint)

    @property
    def name(self) -> str:
        return "ert"

    def predict_proba(self, im: GrayImage) -> np.ndarray:
        return predict_proba_image(self.model, im, self.extractor, self.chunk_size, threads=self.threads)

    def decode(self, im: GrayImage, name: str = "image") -> Tuple[LabelImage, np.ndarray]:
        """返回 (标签图, 前景概率图)，并记录单幅解码耗时"""
        start = time.perf_counter()
        proba = self.predict_proba(im)
        label = LabelImage(proba > 0.5)
        elapsed = time.perf_counter() - start
        self.metrics.record_metric('decode_seconds', elapsed, {'image': name})
        self._logger.info(LogMessages.DECODE_DONE.format(
            name=name, width=im.width, height=im.height,
            foreground=int(label.data.sum()), elapsed=elapsed))
        return label, proba

    def binarize(self, im: GrayImage, name: str = "image") -> LabelImage:
        return self.decode(im, name)[0]


# ---------------------------------------------------------------- 两轮训练流程

@dataclass
class TrainingResult:
    """一次完整训练的产物"""
    model: ErtModel
    samples: SampleSet
    first_pass_rows: int
    second_pass_rows: int
    bootstrap: GnbModel
    cv_report: Optional[CvReport] = None
    families: List[FamilyImportance] = field(default_factory=list)


class TrainingPipeline:
    """
    两轮训练流程

    第一轮子类均衡采样 → 训练自举朴素贝叶斯 → 解码训练图像 → 第二轮在错误像素中采样
    → （可选）交叉验证选参 → 在两轮样本的并集上训练极端随机树。
    """

    def __init__(self, config: BinarizationConfig, extractor: Optional[FeatureExtractor] = None,
                 sampler: Optional[SamplerService] = None, metrics: Optional[MetricsCollector] = None):
        self.config = config
        self.extractor = extractor or FeatureExtractor()
        self.sampler = sampler or SamplerService(config, self.extractor)
        self.metrics = metrics or MetricsCollector()
        self._logger = logger

    async def _map(self, fn, items: Sequence) -> list:
        semaphore = asyncio.Semaphore(max(1, self.config.threads))

        async def run(item):
            async with semaphore:
                return await asyncio.to_thread(fn, item)

        return list(await asyncio.gather(*[run(item) for item in items]))

    def _first_pass(self, ctx: ImageContext, budget: int) -> SampleSet:
        art = self.extractor.prepare(ctx.image, ctx.stroke_width)
        samples = self.sampler.first_pass(ctx, budget, art)
        self._logger.info(LogMessages.FIRST_PASS_IMAGE_DONE.format(name=ctx.name, rows=len(samples)))
        return samples

    def _error_pass(self, ctx: ImageContext, bootstrap: GnbModel, budget: int) -> SampleSet:
        art = self.extractor.prepare(ctx.image, ctx.stroke_width)
        decoded = decode_artifacts(
            art, self.extractor, lambda chunk: gnb_predict(bootstrap, chunk),
            self.config.predict_chunk_size, dtype=np.uint8,
        )
        pred = LabelImage(decoded)
        samples = self.sampler.error_pass(ctx, pred, budget, art)
        errors = int(np.count_nonzero(pred.data != ctx.gt.data))
        self._logger.info(LogMessages.ERROR_PASS_IMAGE_DONE.format(name=ctx.name, errors=errors, rows=len(samples)))
        return samples

    async def train(self, pairs: Sequence[Tuple[str, GrayImage, LabelImage]],
                    first_budget: Optional[int] = None, second_budget: Optional[int] = None,
                    first_pass_samples: Optional[SampleSet] = None) -> TrainingResult:
        """
        训练模型

        Args:
            pairs: (名称, 灰度图, 真值) 序列，顺序决定图像编号与随机流
            first_budget / second_budget: 每图采样预算，默认取配置
            first_pass_samples: 预先计算好的第一轮样本（跳过第一轮采样）
        """
        if not pairs:
            raise CorpusError("训练语料为空")
        first_budget = self.config.first_pass_samples if first_budget is None else first_budget
        second_budget = self.config.second_pass_samples if second_budget is None else second_budget
        self._logger.info(LogMessages.TRAIN_START.format(images=len(pairs), first=first_budget, second=second_budget))

        contexts = await self._map(
            lambda item: self.sampler.build_context(item[0], *item[1]),
            list(enumerate(pairs)),
        )

        with self.metrics.timed('first_pass_seconds'):
            if first_pass_samples is not None:
                _check_fingerprint(self.extractor.fingerprint, first_pass_samples.schema_fingerprint)
                first = first_pass_samples
            else:
                first = SampleSet.concat(await self._map(lambda ctx: self._first_pass(ctx, first_budget), contexts))

        bootstrap = await asyncio.to_thread(gnb_fit, first)
        self._logger.info(LogMessages.GNB_FITTED.format(rows=len(first), positive=float(first.labels.mean())))

        parts = [first]
        second_rows = 0
        if second_budget > 0:
            with self.metrics.timed('error_pass_seconds'):
                second = await self._map(lambda ctx: self._error_pass(ctx, bootstrap, second_budget), contexts)
            second_rows = sum(len(s) for s in second)
            parts.extend(second)
        union = SampleSet.concat(parts)

        cv_report = None
        hp = self.config.forest_hyperparams()
        if self.config.enable_cv:
            cv_report = await asyncio.to_thread(
                cross_validate, union, self.config.cv_grid(), self.config.seed,
                self.config.cv_folds, self.config.threads,
            )
            hp = cv_report.hyperparams

        self._logger.info(LogMessages.ERT_FIT_START.format(
            rows=len(union), n_trees=hp.n_trees, k=hp.k_features, mss=hp.min_samples_split))
        start = time.perf_counter()
        model = await asyncio.to_thread(ert_fit, union, hp, self.config.seed, self.config.threads)
        elapsed = time.perf_counter() - start
        self.metrics.record_metric('ert_fit_seconds', elapsed)
        self._logger.info(LogMessages.ERT_FITTED.format(
            trees=model.n_trees, nodes=float(np.mean([t.n_nodes for t in model.trees])), elapsed=elapsed))

        return TrainingResult(
            model=model,
            samples=union,
            first_pass_rows=len(first),
            second_pass_rows=second_rows,
            bootstrap=bootstrap,
            cv_report=cv_report,
            families=family_importances(model, self.extractor.schema),
        )

    async def learning_curve(self, train_pairs: Sequence[Tuple[str, GrayImage, LabelImage]],
                             test_pairs: Sequence[Tuple[str, GrayImage, LabelImage]],
                             budgets: Sequence[int] = LEARNING_CURVE_BUDGETS) -> pd.DataFrame:
        """
        不同采样预算下的测试集表现

        每个预算在两轮之间平分（奇数时第二轮多 1）。
        """
        from .metrics import drd, f1, psnr

        if not test_pairs:
            raise CorpusError("学习曲线需要测试图像")
        records = []
        for budget in budgets:
            first_budget = budget // 2
            result = await self.train(train_pairs, first_budget, budget - first_budget)
            binarizer = LearnedBinarizer(result.model, self.extractor, self.config.predict_chunk_size, self.metrics)
            predictions = await self._map(lambda item: binarizer.binarize(item[1], item[0]), test_pairs)

            f1_values, psnr_values, drd_values = [], [], []
            for (name, _, gt), pred in zip(test_pairs, predictions):
                f1_values.append(f1(pred, gt))
                psnr_values.append(psnr(pred, gt))
                try:
                    drd_values.append(drd(pred, gt))
                except MetricUndefinedError:
                    self._logger.warning(LogMessages.DRD_UNDEFINED.format(name=name))

            record = {
                'budget': int(budget),
                'first_pass': first_budget,
                'second_pass': budget - first_budget,
                'rows': len(result.samples),
                'f1': float(np.mean(f1_values)),
                'psnr': float(np.mean(psnr_values)),
                'drd': float(np.mean(drd_values)) if drd_values else float('nan'),
            }
            self._logger.info(LogMessages.CURVE_POINT.format(
                budget=budget, f1=record['f1'], psnr=record['psnr'], drd=record['drd']))
            records.append(record)
        return pd.DataFrame.from_records(records)
