"""
服务模块 - 图像基础、阈值、特征、采样、学习、评价与语料
"""

from .corpus import CorpusManifest
from .features import FeatureExtractor, FeatureSettings, ImageArtifacts, FEATURE_SCHEMA
from .learner import LearnedBinarizer, TrainingPipeline, TrainingResult
from .sampler import SamplerService
from .thresholders import OtsuBinarizer, NiblackBinarizer, SauvolaBinarizer

__all__ = [
    'CorpusManifest',
    'FeatureExtractor',
    'FeatureSettings',
    'ImageArtifacts',
    'FEATURE_SCHEMA',
    'LearnedBinarizer',
    'TrainingPipeline',
    'TrainingResult',
    'SamplerService',
    'OtsuBinarizer',
    'NiblackBinarizer',
    'SauvolaBinarizer',
]
