"""
服务工厂 - 按配置创建并缓存各服务实例，避免循环导入
"""
from typing import Any, Dict, Optional

from loguru import logger

from .interfaces import ErtModel, IBinarizer, ThresholdMethod
from .patterns import BinarizerFactory, MetricsCollector
from ..config import BinarizationConfig
from ..exceptions import DocBinError
from ..statics.messages import StatusMessages


class ServiceFactory:
    """主要服务工厂 - 创建和管理所有服务实例"""

    def __init__(self, config: BinarizationConfig):
        self.config = config
        self._logger = logger

        # 服务实例缓存
        self._service_cache: Dict[str, Any] = {}

    def create_metrics_collector(self) -> MetricsCollector:
        """创建或获取运行指标收集器"""
        if "metrics" not in self._service_cache:
            self._service_cache["metrics"] = MetricsCollector()
        return self._service_cache["metrics"]

    def create_feature_extractor(self):
        """创建特征提取器"""
        cache_key = "feature_extractor"
        if cache_key in self._service_cache:
            return self._service_cache[cache_key]

        try:
            from ..services.features import FeatureExtractor, FeatureSettings

            service = FeatureExtractor(FeatureSettings.from_config(self.config))
            self._service_cache[cache_key] = service
            self._logger.debug("创建特征提取器成功")
            return service

        except ImportError as e:
            self._logger.exception(f"导入特征提取器失败: {e}")
            raise DocBinError(StatusMessages.SERVICE_CREATE_FAILED.format(service="feature_extractor", error=e)) from e

    def create_sampler(self):
        """创建采样服务"""
        cache_key = "sampler"
        if cache_key in self._service_cache:
            return self._service_cache[cache_key]

        try:
            from ..services.sampler import SamplerService

            service = SamplerService(self.config, self.create_feature_extractor())
            self._service_cache[cache_key] = service
            self._logger.debug("创建采样服务成功")
            return service

        except ImportError as e:
            self._logger.exception(f"导入采样服务失败: {e}")
            raise DocBinError(StatusMessages.SERVICE_CREATE_FAILED.format(service="sampler", error=e)) from e

    def create_training_pipeline(self):
        """创建两轮训练流程"""
        cache_key = "training_pipeline"
        if cache_key in self._service_cache:
            return self._service_cache[cache_key]

        try:
            from ..services.learner import TrainingPipeline

            service = TrainingPipeline(
                self.config,
                self.create_feature_extractor(),
                self.create_sampler(),
                self.create_metrics_collector(),
            )
            self._service_cache[cache_key] = service
            self._logger.debug("创建训练流程成功")
            return service

        except ImportError as e:
            self._logger.exception(f"导入训练流程失败: {e}")
            raise DocBinError(StatusMessages.SERVICE_CREATE_FAILED.format(service="training_pipeline", error=e)) from e

    def create_learned_binarizer(self, model: ErtModel, threads: Optional[int] = None) -> IBinarizer:
        """
        用已训练模型创建二值化器（不缓存，每个模型一个实例）

        threads 为单幅图像内按像素块并行的线程数，默认取配置。
        """
        from ..services.learner import LearnedBinarizer

        return LearnedBinarizer(
            model,
            self.create_feature_extractor(),
            self.config.predict_chunk_size,
            self.create_metrics_collector(),
            threads=self.config.threads if threads is None else threads,
        )

    def create_baseline(self, method: str, window: Optional[int] = None) -> IBinarizer:
        """按配置参数创建经典阈值二值化器"""
        params: Dict[str, Any] = {}
        if method == ThresholdMethod.NIBLACK.value:
            params = {'k': self.config.niblack_k}
        elif method == ThresholdMethod.SAUVOLA.value:
            params = {'k': self.config.sauvola_k, 'dynamic_range': self.config.sauvola_dynamic_range}
        if window is not None and params:
            params['window'] = window
        elif params:
            params['window'] = self.config.min_window
        return BinarizerFactory.create_binarizer(method, params)

    def clear_cache(self):
        """清理服务缓存"""
        self._service_cache.clear()
