"""
引擎核心模块
"""

from .factory import ServiceFactory
from .patterns import BinarizerFactory, MetricsCollector
from .interfaces import (
    GrayImage, LabelImage, IntegralPair, Histogram256, ThresholdMethod, NiblackParams, SauvolaParams,
    FeatureFamily, FeatureChannel, FeatureSchema, FeatureMatrix, GlobalFeatures, SubclassMap, SampleSet,
    ForestHyperParams, TreeArrays, ErtModel, GnbModel, CvReport, FamilyImportance, ImageScore, EvalReport,
    CorpusEntry, IBinarizer,
)

__all__ = [
    'ServiceFactory',
    'BinarizerFactory',
    'MetricsCollector',
    'GrayImage',
    'LabelImage',
    'IntegralPair',
    'Histogram256',
    'ThresholdMethod',
    'NiblackParams',
    'SauvolaParams',
    'FeatureFamily',
    'FeatureChannel',
    'FeatureSchema',
    'FeatureMatrix',
    'GlobalFeatures',
    'SubclassMap',
    'SampleSet',
    'ForestHyperParams',
    'TreeArrays',
    'ErtModel',
    'GnbModel',
    'CvReport',
    'FamilyImportance',
    'ImageScore',
    'EvalReport',
    'CorpusEntry',
    'IBinarizer',
]
