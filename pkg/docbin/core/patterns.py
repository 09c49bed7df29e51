"""
通用模式 - 二值化器策略工厂与运行指标收集
"""
import threading
import time
from contextlib import contextmanager
from datetime import datetime
from typing import Any, Callable, Dict, Iterator, List, Optional

from loguru import logger

from .interfaces import IBinarizer, NiblackParams, SauvolaParams, ThresholdMethod
from ..exceptions import ConfigurationError


def _create_otsu(params: Dict[str, Any]) -> IBinarizer:
    from ..services.thresholders import OtsuBinarizer
    return OtsuBinarizer()


def _create_niblack(params: Dict[str, Any]) -> IBinarizer:
    from ..services.thresholders import NiblackBinarizer
    return NiblackBinarizer(NiblackParams(**params))


def _create_sauvola(params: Dict[str, Any]) -> IBinarizer:
    from ..services.thresholders import SauvolaBinarizer
    return SauvolaBinarizer(SauvolaParams(**params))


class BinarizerFactory:
    """二值化策略工厂"""

    _builders: Dict[ThresholdMethod, Callable[[Dict[str, Any]], IBinarizer]] = {
        ThresholdMethod.OTSU: _create_otsu,
        ThresholdMethod.NIBLACK: _create_niblack,
        ThresholdMethod.SAUVOLA: _create_sauvola,
    }

    @classmethod
    def available(cls) -> List[str]:
        return [method.value for method in cls._builders]

    @classmethod
    def create_binarizer(cls, method, params: Optional[Dict[str, Any]] = None) -> IBinarizer:
        """按方法名创建二值化器"""
        try:
            method_enum = ThresholdMethod(method) if isinstance(method, str) else method
        except ValueError:
            raise ConfigurationError(
                f"不支持的二值化方法: {method}，可选: {', '.join(cls.available())}"
            )
        if method_enum not in cls._builders:
            raise ConfigurationError(f"不支持的二值化方法: {method}")
        try:
            return cls._builders[method_enum](dict(params or {}))
        except TypeError as e:
            raise ConfigurationError(f"{method_enum.value} 参数无效: {e}") from e


class MetricsCollector:
    """运行指标收集器（线程安全）"""

    def __init__(self, max_records: int = 1000):
        self._metrics: Dict[str, List[Dict[str, Any]]] = {}
        self._max_records = max_records
        self._lock = threading.Lock()
        self._logger = logger

    def record_metric(self, name: str, value: Any, tags: Optional[Dict[str, str]] = None):
        """记录指标"""
        entry = {
            'value': value,
            'timestamp': datetime.now().timestamp(),
            'tags': tags or {},
        }
        with self._lock:
            records = self._metrics.setdefault(name, [])
            records.append(entry)
            if len(records) > self._max_records:
                self._metrics[name] = records[-self._max_records:]

    @contextmanager
    def timed(self, name: str, tags: Optional[Dict[str, str]] = None) -> Iterator[None]:
        """记录代码块耗时（秒）"""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.record_metric(name, time.perf_counter() - start, tags)

    def get_metrics(self) -> Dict[str, Any]:
        """获取所有指标"""
        with self._lock:
            return {name: list(records) for name, records in self._metrics.items()}

    def get_metric_summary(self, name: str) -> Dict[str, Any]:
        """获取指标摘要"""
        with self._lock:
            values = [m['value'] for m in self._metrics.get(name, []) if isinstance(m['value'], (int, float))]

        if not values:
            return {}

        return {
            'count': len(values),
            'min': min(values),
            'max': max(values),
            'avg': sum(values) / len(values),
            'latest': values[-1],
        }
