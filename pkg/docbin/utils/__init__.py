"""
工具模块 - 文件写入、合成语料与图表
"""
from .io_utils import atomic_write_bytes, atomic_write_text, ensure_dir, write_json

__all__ = ['atomic_write_bytes', 'atomic_write_text', 'ensure_dir', 'write_json']
