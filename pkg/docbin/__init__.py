"""
文档图像二值化引擎 - 基于逐像素特征与极端随机树的可训练二值化
"""
__version__ = "1.0.0"
