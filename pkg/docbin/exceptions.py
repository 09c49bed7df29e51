"""
文档二值化引擎异常定义
"""


class DocBinError(Exception):
    """二值化引擎基础异常类"""
    pass


class ConfigurationError(DocBinError):
    """配置错误异常"""
    pass


class ImageIOError(DocBinError):
    """图像读写异常"""
    pass


class ImageFormatError(DocBinError):
    """图像格式异常"""
    pass


class InputError(DocBinError):
    """输入数据异常（尺寸不一致、像素列表越界等）"""
    pass


class CorpusError(DocBinError):
    """语料清单异常"""
    pass


class TrainingError(DocBinError):
    """训练相关异常"""
    pass


class ModelFormatError(DocBinError):
    """模型或样本文件格式异常"""
    pass


class SchemaMismatchError(DocBinError):
    """特征模式指纹不一致"""
    pass


class MetricUndefinedError(DocBinError):
    """评价指标无定义（如 NUBN 为 0）"""
    pass
