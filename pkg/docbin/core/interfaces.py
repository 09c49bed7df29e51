"""
引擎核心接口定义 - 领域数据结构、枚举与抽象接口
"""
import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ConfigurationError, InputError


def _frozen_array(values, dtype) -> np.ndarray:
    """复制为只读的连续数组"""
    arr = np.array(values, dtype=dtype, copy=True, order='C')
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GrayImage:
    """灰度图像，data 为 H×W 的 uint8 数组（行优先）"""
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"灰度图像必须是非空二维数组，实际形状: {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.dtype == np.bool_ or not np.issubdtype(arr.dtype, np.number):
                raise InputError(f"不支持的灰度图像数据类型: {arr.dtype}")
            if np.any(arr < 0) or np.any(arr > 255) or np.any(arr != np.round(arr)):
                raise InputError("灰度值必须是 [0,255] 内的整数")
        object.__setattr__(self, 'data', _frozen_array(arr, np.uint8))

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)


@dataclass(frozen=True, eq=False)
class LabelImage:
    """标签图像，1 为前景（文字），0 为背景"""
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"标签图像必须是非空二维数组，实际形状: {arr.shape}")
        if arr.dtype != np.bool_ and not np.all((arr == 0) | (arr == 1)):
            raise InputError("标签值只能是 0 或 1")
        object.__setattr__(self, 'data', _frozen_array(arr, np.uint8))

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    def mask(self) -> np.ndarray:
        """前景布尔掩码"""
        return self.data.astype(bool)

    def same_as(self, other: 'LabelImage') -> bool:
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True, eq=False)
class IntegralPair:
    """积分图对：sum/sqsum 形状均为 (H+1)×(W+1)，首行首列为 0"""
    sum: np.ndarray
    sqsum: np.ndarray

    @property
    def width(self) -> int:
        return int(self.sum.shape[1] - 1)

    @property
    def height(self) -> int:
        return int(self.sum.shape[0] - 1)

    def rect_sum(self, x0: int, x1: int, y0: int, y1: int) -> int:
        """矩形 [x0,x1)×[y0,y1) 的灰度和"""
        s = self.sum
        return int(s[y1, x1] - s[y0, x1] - s[y1, x0] + s[y0, x0])

    def rect_sqsum(self, x0: int, x1: int, y0: int, y1: int) -> int:
        """矩形 [x0,x1)×[y0,y1) 的灰度平方和"""
        s = self.sqsum
        return int(s[y1, x1] - s[y0, x1] - s[y1, x0] + s[y0, x0])


@dataclass(frozen=True, eq=False)
class Histogram256:
    """256 级灰度直方图"""
    bins: np.ndarray
    total: int

    def __post_init__(self):
        bins = np.asarray(self.bins)
        if bins.shape != (256,):
            raise InputError(f"直方图必须有256个桶，实际: {bins.shape}")
        if int(bins.sum()) != int(self.total):
            raise InputError("直方图计数之和与总数不一致")
        object.__setattr__(self, 'bins', _frozen_array(bins, np.int64))


class ThresholdMethod(Enum):
    """经典阈值方法"""
    OTSU = "otsu"
    NIBLACK = "niblack"
    SAUVOLA = "sauvola"


@dataclass(frozen=True)
class NiblackParams:
    """Niblack 参数：k < 0，窗口为不小于3的奇数"""
    k: float = -0.2
    window: int = 15

    def __post_init__(self):
        if not self.k < 0:
            raise ConfigurationError(f"Niblack 系数 k 必须小于0: {self.k}")
        _check_window(self.window)


@dataclass(frozen=True)
class SauvolaParams:
    """Sauvola 参数：k > 0，S > 0，窗口为不小于3的奇数"""
    k: float = 0.5
    dynamic_range: float = 128.0
    window: int = 15

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigurationError(f"Sauvola 系数 k 必须大于0: {self.k}")
        if not self.dynamic_range > 0:
            raise ConfigurationError(f"Sauvola 动态范围 S 必须大于0: {self.dynamic_range}")
        _check_window(self.window)


def _check_window(window: int) -> None:
    if window < 3 or window % 2 == 0:
        raise ConfigurationError(f"窗口大小必须是不小于3的奇数: {window}")


class FeatureFamily(Enum):
    """特征族，值为 (名称, 维数)"""
    LOCAL_INT = ("LocalInt", 1)
    OTSU_DIFF = ("OtsuDiff", 1)
    LOCAL_AVG = ("LocalAvg", 4)
    LOCAL_STD = ("LocalStd", 4)
    SU = ("Su", 4)
    HOWE = ("Howe", 4)
    ETNI = ("ETNI", 4)
    LTSI = ("LTSI", 4)
    LIP = ("LIP", 18)
    RDI = ("RDI", 30)
    GLOBAL_STAT = ("GlobalStat", 4)
    GLOBAL_HIST = ("GlobalHist", 64)

    @property
    def label(self) -> str:
        return self.value[0]

    @property
    def dims(self) -> int:
        return self.value[1]


@dataclass(frozen=True)
class FeatureChannel:
    """特征模式中的一个通道"""
    name: str
    family: FeatureFamily
    scale: str
    normalization: str

    def descriptor(self) -> str:
        return f"{self.family.label}:{self.scale}:{self.normalization}:{self.name}"


@dataclass(frozen=True)
class FeatureSchema:
    """有序特征通道目录"""
    entries: Tuple[FeatureChannel, ...]
    version: int = 1

    @property
    def total_dim(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> List[str]:
        return [entry.name for entry in self.entries]

    @property
    def fingerprint(self) -> str:
        """有序通道描述的哈希，跨运行稳定"""
        digest = hashlib.sha256()
        digest.update(f"docbin-schema-v{self.version}".encode('utf-8'))
        for entry in self.entries:
            digest.update(b"\n")
            digest.update(entry.descriptor().encode('utf-8'))
        return digest.hexdigest()[:16]

    def index_of(self, name: str) -> int:
        for index, entry in enumerate(self.entries):
            if entry.name == name:
                return index
        raise KeyError(name)

    def family_slices(self) -> Dict[FeatureFamily, slice]:
        """每个特征族在行向量中的连续区间"""
        slices: Dict[FeatureFamily, slice] = {}
        start = 0
        for family in FeatureFamily:
            count = sum(1 for entry in self.entries if entry.family is family)
            slices[family] = slice(start, start + count)
            start += count
        return slices


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """按特征模式排列的逐像素特征行 (n×d, float32)"""
    rows: np.ndarray
    schema_fingerprint: str

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float32)
        if rows.ndim != 2:
            raise InputError(f"特征矩阵必须是二维数组，实际形状: {rows.shape}")
        object.__setattr__(self, 'rows', rows)

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.rows.shape[1])


@dataclass(frozen=True, eq=False)
class GlobalFeatures:
    """整幅图像的全局特征（4 个统计量 + 64 个直方图桶）"""
    int_mean: float
    int_std: float
    perc_mean: float
    perc_std: float
    int_hist: np.ndarray
    perc_hist: np.ndarray
    int_loghist: np.ndarray
    perc_loghist: np.ndarray

    def vector(self) -> np.ndarray:
        """按特征模式顺序展开为 68 维向量"""
        return np.concatenate([
            [self.int_mean, self.int_std, self.perc_mean, self.perc_std],
            self.int_loghist,
            self.perc_loghist,
        ]).astype(np.float64)


@dataclass(frozen=True, eq=False)
class SubclassMap:
    """逐像素 4 位子类编码"""
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise InputError(f"子类图必须是二维数组，实际形状: {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() > 15):
            raise InputError("子类编码必须在 0-15 之间")
        object.__setattr__(self, 'labels', _frozen_array(labels, np.uint8))

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.labels.shape

    def populations(self, pool: Optional[np.ndarray] = None) -> np.ndarray:
        """每个子类的像素数，可限定在 pool 掩码内"""
        codes = self.labels.ravel()
        if pool is not None:
            codes = codes[np.asarray(pool, dtype=bool).ravel()]
        return np.bincount(codes, minlength=16).astype(np.int64)


@dataclass(eq=False)
class SampleSet:
    """带标签的采样特征行"""
    rows: np.ndarray
    labels: np.ndarray
    subclasses: np.ndarray
    image_ids: np.ndarray
    image_names: List[str]
    seed: int
    schema_fingerprint: str

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float32)
        if self.rows.ndim != 2:
            raise InputError(f"样本特征必须是二维数组，实际形状: {self.rows.shape}")
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.subclasses = np.asarray(self.subclasses, dtype=np.uint8)
        self.image_ids = np.asarray(self.image_ids, dtype=np.uint32)
        n = len(self.labels)
        if not (len(self.rows) == len(self.subclasses) == len(self.image_ids) == n):
            raise InputError("样本集各列长度不一致")

    def __len__(self) -> int:
        return int(len(self.labels))

    @property
    def n_features(self) -> int:
        return int(self.rows.shape[1])

    def subclass_counts(self) -> np.ndarray:
        return np.bincount(self.subclasses, minlength=16).astype(np.int64)

    @classmethod
    def concat(cls, parts: Sequence['SampleSet']) -> 'SampleSet':
        """合并多个样本集，图像编号按名称重新映射"""
        parts = [p for p in parts if p is not None]
        if not parts:
            raise InputError("没有可合并的样本集")
        fingerprints = {p.schema_fingerprint for p in parts}
        if len(fingerprints) > 1:
            raise InputError(f"样本集特征模式不一致: {sorted(fingerprints)}")

        names: List[str] = []
        name_index: Dict[str, int] = {}
        image_ids = []
        for part in parts:
            remap = np.zeros(max(len(part.image_names), 1), dtype=np.uint32)
            for old_id, name in enumerate(part.image_names):
                if name not in name_index:
                    name_index[name] = len(names)
                    names.append(name)
                remap[old_id] = name_index[name]
            image_ids.append(remap[part.image_ids] if len(part) else part.image_ids)

        return cls(
            rows=np.concatenate([p.rows for p in parts]),
            labels=np.concatenate([p.labels for p in parts]),
            subclasses=np.concatenate([p.subclasses for p in parts]),
            image_ids=np.concatenate(image_ids),
            image_names=names,
            seed=parts[0].seed,
            schema_fingerprint=parts[0].schema_fingerprint,
        )


@dataclass(frozen=True)
class ForestHyperParams:
    """ExtraTrees 超参数"""
    n_trees: int = 100
    k_features: int = 12
    min_samples_split: int = 2
    max_depth: Optional[int] = None


@dataclass(eq=False)
class TreeArrays:
    """
    单棵决策树的节点数组

    叶子节点 feature 为 LEAF，left/right 为 0；每个节点都保存类别计数 counts[n, 2]。
    """
    LEAF = 0xFFFF

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=np.uint16)
        self.threshold = np.asarray(self.threshold, dtype=np.float32)
        self.left = np.asarray(self.left, dtype=np.uint32)
        self.right = np.asarray(self.right, dtype=np.uint32)
        self.counts = np.asarray(self.counts, dtype=np.uint32).reshape(-1, 2)
        n = len(self.feature)
        if n == 0 or not (len(self.threshold) == len(self.left) == len(self.right) == len(self.counts) == n):
            raise InputError("决策树节点数组长度不一致或为空")

    @property
    def n_nodes(self) -> int:
        return int(len(self.feature))

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature == self.LEAF


@dataclass(eq=False)
class ErtModel:
    """训练好的极端随机树集成"""
    trees: List[TreeArrays]
    hyperparams: ForestHyperParams
    schema_fingerprint: str
    seed: int
    n_features: int

    @property
    def n_trees(self) -> int:
        return len(self.trees)


@dataclass(eq=False)
class GnbModel:
    """高斯朴素贝叶斯参数（类别已排序：0 背景，1 前景）"""
    classes: np.ndarray
    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    epsilon: float
    schema_fingerprint: str = ""

    @property
    def n_features(self) -> int:
        return int(self.means.shape[1])


@dataclass
class CvReport:
    """交叉验证报告"""
    per_fold_f1: List[float]
    mean_f1: float
    std_f1: float
    hyperparams: ForestHyperParams
    n_folds: int
    grid_results: List[Dict[str, float]] = field(default_factory=list)


@dataclass
class FamilyImportance:
    """按特征族汇总的重要性"""
    family: str
    dims: int
    overall: float
    dimensional: float


@dataclass
class ImageScore:
    """单幅图像的评价结果"""
    name: str
    f1: float
    psnr: float
    drd: float
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    """逐图像评价与语料平均"""
    images: List[ImageScore]
    unmatched: List[str] = field(default_factory=list)

    @property
    def mean_f1(self) -> float:
        return float(np.mean([s.f1 for s in self.images])) if self.images else float('nan')

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([s.psnr for s in self.images])) if self.images else float('nan')

    @property
    def mean_drd(self) -> float:
        # NUBN 为 0 的图像记为 NaN，不参与平均
        values = [s.drd for s in self.images if not np.isnan(s.drd)]
        return float(np.mean(values)) if values else float('nan')


@dataclass(frozen=True)
class CorpusEntry:
    """语料中的一条 (图像, 真值, 划分标签) 记录"""
    image: Path
    gt: Optional[Path]
    split: str = "train"

    @property
    def name(self) -> str:
        return self.image.stem


class IBinarizer(ABC):
    """二值化器接口"""

    @property
    @abstractmethod
    def name(self) -> str:
        """方法名称"""
        pass

    @abstractmethod
    def binarize(self, im: GrayImage) -> LabelImage:
        """将灰度图像转换为前景/背景标签"""
        pass
