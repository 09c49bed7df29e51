"""
二值化引擎配置管理
"""
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, Optional

import yaml
from loguru import logger

from .exceptions import ConfigurationError


# 配置文件分组 -> 字段
CONFIG_SECTIONS: Dict[str, List[str]] = {
    'Threshold_Settings': ['niblack_k', 'sauvola_k', 'sauvola_dynamic_range', 'min_window'],
    'Feature_Settings': ['ltp_tolerance', 'su_epsilon', 'lip_threshold'],
    'Sampling_Settings': ['first_pass_samples', 'second_pass_samples'],
    'Forest_Settings': [
        'n_trees', 'k_features', 'min_samples_split', 'max_depth',
        'enable_cv', 'cv_folds', 'cv_n_trees_grid', 'cv_min_samples_split_grid',
    ],
    'Runtime_Settings': [
        'seed', 'threads', 'predict_chunk_size', 'output_dir',
        'invert_output', 'gt_foreground_dark', 'log_level',
    ],
}

LOG_LEVELS = ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL")


@dataclass
class BinarizationConfig:
    """引擎配置类"""

    # 经典阈值方法参数
    niblack_k: float = -0.2
    sauvola_k: float = 0.5
    sauvola_dynamic_range: float = 128.0    # Sauvola/LTSI 的 S
    min_window: int = 15                    # 子类标注用窗口下限

    # 特征参数
    ltp_tolerance: float = 8.0
    su_epsilon: float = 1e-6
    lip_threshold: float = 0.01

    # 采样预算（每张图像）
    first_pass_samples: int = 9600
    second_pass_samples: int = 9600

    # ExtraTrees 超参数
    n_trees: int = 100
    k_features: int = 12
    min_samples_split: int = 2
    max_depth: Optional[int] = None
    enable_cv: bool = False
    cv_folds: int = 10
    cv_n_trees_grid: List[int] = field(default_factory=lambda: [50, 100, 200])
    cv_min_samples_split_grid: List[int] = field(default_factory=lambda: [2, 8, 32])

    # 运行参数
    seed: int = 42
    threads: int = 4
    predict_chunk_size: int = 65536         # 预测时每批像素数
    output_dir: str = "output"
    invert_output: bool = False             # False: 前景输出为黑色(0)
    gt_foreground_dark: bool = True         # 真值图中前景为黑色
    log_level: str = "INFO"

    @classmethod
    def create_from_config(cls, config: dict) -> 'BinarizationConfig':
        """从分组配置字典创建引擎配置"""
        default = cls()
        threshold_settings = config.get('Threshold_Settings', {}) or {}
        feature_settings = config.get('Feature_Settings', {}) or {}
        sampling_settings = config.get('Sampling_Settings', {}) or {}
        forest_settings = config.get('Forest_Settings', {}) or {}
        runtime_settings = config.get('Runtime_Settings', {}) or {}

        known = set(CONFIG_SECTIONS)
        for section, values in config.items():
            if section not in known:
                logger.warning(f"忽略未知配置分组: {section}")
                continue
            for key in (values or {}):
                if key not in CONFIG_SECTIONS[section]:
                    logger.warning(f"忽略未知配置项: {section}.{key}")

        return cls(
            niblack_k=float(threshold_settings.get('niblack_k', default.niblack_k)),
            sauvola_k=float(threshold_settings.get('sauvola_k', default.sauvola_k)),
            sauvola_dynamic_range=float(threshold_settings.get('sauvola_dynamic_range', default.sauvola_dynamic_range)),
            min_window=int(threshold_settings.get('min_window', default.min_window)),

            ltp_tolerance=float(feature_settings.get('ltp_tolerance', default.ltp_tolerance)),
            su_epsilon=float(feature_settings.get('su_epsilon', default.su_epsilon)),
            lip_threshold=float(feature_settings.get('lip_threshold', default.lip_threshold)),

            first_pass_samples=int(sampling_settings.get('first_pass_samples', default.first_pass_samples)),
            second_pass_samples=int(sampling_settings.get('second_pass_samples', default.second_pass_samples)),

            n_trees=int(forest_settings.get('n_trees', default.n_trees)),
            k_features=int(forest_settings.get('k_features', default.k_features)),
            min_samples_split=int(forest_settings.get('min_samples_split', default.min_samples_split)),
            max_depth=forest_settings.get('max_depth', default.max_depth),
            enable_cv=bool(forest_settings.get('enable_cv', default.enable_cv)),
            cv_folds=int(forest_settings.get('cv_folds', default.cv_folds)),
            cv_n_trees_grid=list(forest_settings.get('cv_n_trees_grid', default.cv_n_trees_grid)),
            cv_min_samples_split_grid=list(
                forest_settings.get('cv_min_samples_split_grid', default.cv_min_samples_split_grid)
            ),

            seed=int(runtime_settings.get('seed', default.seed)),
            threads=int(runtime_settings.get('threads', default.threads)),
            predict_chunk_size=int(runtime_settings.get('predict_chunk_size', default.predict_chunk_size)),
            output_dir=str(runtime_settings.get('output_dir', default.output_dir)),
            invert_output=bool(runtime_settings.get('invert_output', default.invert_output)),
            gt_foreground_dark=bool(runtime_settings.get('gt_foreground_dark', default.gt_foreground_dark)),
            log_level=str(runtime_settings.get('log_level', default.log_level)),
        )

    @classmethod
    def create_default(cls) -> 'BinarizationConfig':
        """创建默认配置"""
        return cls()

    @classmethod
    def load(cls, path: str) -> 'BinarizationConfig':
        """从 YAML 文件加载并校验配置"""
        try:
            with open(path, 'r', encoding='utf-8') as handle:
                raw = yaml.safe_load(handle) or {}
        except OSError as e:
            raise ConfigurationError(f"无法读取配置文件 {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigurationError(f"配置文件 {path} 不是合法的 YAML: {e}") from e

        if not isinstance(raw, dict):
            raise ConfigurationError(f"配置文件 {path} 顶层必须是分组映射")

        config = cls.create_from_config(raw)
        config.raise_if_invalid()
        return config

    def save(self, path: str) -> str:
        """以分组 YAML 格式保存有效配置"""
        from .utils.io_utils import atomic_write_text

        text = yaml.safe_dump(self.to_grouped_dict(), sort_keys=False, allow_unicode=True)
        atomic_write_text(path, text)
        return path

    def to_dict(self) -> dict:
        """转换为字典格式"""
        return asdict(self)

    def to_grouped_dict(self) -> dict:
        """按配置文件分组转换为字典"""
        flat = self.to_dict()
        return {
            section: {name: flat[name] for name in names}
            for section, names in CONFIG_SECTIONS.items()
        }

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'BinarizationConfig':
        """
        应用 ``字段=值`` 形式的覆盖项

        值为字符串时按 YAML 标量解析，例如 ``max_depth=null``、``cv_n_trees_grid=[10,20]``。
        """
        field_types = {f.name: f for f in fields(self)}
        changes: Dict[str, Any] = {}
        for name, value in overrides.items():
            if name not in field_types:
                raise ConfigurationError(f"未知配置项: {name}")
            if isinstance(value, str):
                try:
                    value = yaml.safe_load(value)
                except yaml.YAMLError as e:
                    raise ConfigurationError(f"配置项 {name} 的值无法解析: {value}") from e
            changes[name] = _coerce(name, value, getattr(self, name))
        return replace(self, **changes)

    def forest_hyperparams(self):
        """当前配置对应的森林超参数"""
        from .core.interfaces import ForestHyperParams

        return ForestHyperParams(
            n_trees=self.n_trees,
            k_features=self.k_features,
            min_samples_split=self.min_samples_split,
            max_depth=self.max_depth,
        )

    def cv_grid(self):
        """交叉验证超参数网格（n_trees 优先展开）"""
        from .core.interfaces import ForestHyperParams

        return [
            ForestHyperParams(
                n_trees=n_trees,
                k_features=self.k_features,
                min_samples_split=mss,
                max_depth=self.max_depth,
            )
            for n_trees in self.cv_n_trees_grid
            for mss in self.cv_min_samples_split_grid
        ]

    def validate(self) -> List[str]:
        """验证配置有效性，返回错误信息列表"""
        errors = []

        if self.niblack_k >= 0:
            errors.append("Niblack 系数 k 必须小于0")

        if self.sauvola_k <= 0:
            errors.append("Sauvola 系数 k 必须大于0")

        if self.sauvola_dynamic_range <= 0:
            errors.append("Sauvola 动态范围 S 必须大于0")

        if self.min_window < 3 or self.min_window % 2 == 0:
            errors.append("窗口下限必须是不小于3的奇数")

        if self.ltp_tolerance < 0:
            errors.append("LTP 容差不能为负数")

        if self.su_epsilon <= 0:
            errors.append("Su 对比度 ε 必须大于0")

        if not 0 < self.lip_threshold < 1:
            errors.append("LIP 百分位阈值必须在0-1之间")

        if self.first_pass_samples < 16:
            errors.append("第一轮采样数量不能少于16")

        if self.second_pass_samples < 0:
            errors.append("第二轮采样数量不能为负数")

        if self.n_trees < 1:
            errors.append("树的数量必须大于0")

        if self.k_features < 1:
            errors.append("候选特征数 K 必须大于0")

        if self.min_samples_split < 2:
            errors.append("节点最小分裂样本数不能小于2")

        if self.max_depth is not None and self.max_depth < 1:
            errors.append("最大深度必须大于0或为空")

        if self.cv_folds < 2:
            errors.append("交叉验证折数不能小于2")

        if not self.cv_n_trees_grid or any(n < 1 for n in self.cv_n_trees_grid):
            errors.append("交叉验证的树数量网格不能为空且必须为正数")

        if not self.cv_min_samples_split_grid or any(m < 2 for m in self.cv_min_samples_split_grid):
            errors.append("交叉验证的最小分裂样本数网格不能为空且必须不小于2")

        if self.threads < 1:
            errors.append("线程数必须大于0")

        if self.predict_chunk_size < 1:
            errors.append("预测批大小必须大于0")

        if not self.output_dir:
            errors.append("输出目录不能为空")

        if str(self.log_level).upper() not in LOG_LEVELS:
            errors.append(f"日志级别必须是 {', '.join(LOG_LEVELS)} 之一")

        return errors

    def raise_if_invalid(self) -> None:
        """校验失败时抛出包含全部错误的 ConfigurationError"""
        errors = self.validate()
        if errors:
            raise ConfigurationError("配置无效: " + "; ".join(errors))


def _coerce(name: str, value: Any, current: Any) -> Any:
    """按字段当前值的类型转换覆盖值"""
    if name == 'max_depth':
        return None if value is None else int(value)
    try:
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ValueError(value)
            return value
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            if not isinstance(value, (list, tuple)):
                value = [value]
            return [int(v) for v in value]
        if isinstance(current, str):
            return os.fspath(value) if isinstance(value, os.PathLike) else str(value)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"配置项 {name} 的值类型不正确: {value!r}") from e
    return value
