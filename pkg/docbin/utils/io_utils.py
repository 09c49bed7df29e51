"""
文件读写工具 - 原子写入与 JSON 报告
"""
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Union


PathLike = Union[str, os.PathLike]


def ensure_dir(path: PathLike) -> Path:
    """确保目录存在并返回 Path"""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """
    原子写入二进制文件：先写同目录临时文件，再 rename 覆盖目标

    Args:
        path: 目标路径
        data: 文件内容

    Returns:
        目标路径
    """
    target = Path(path)
    ensure_dir(target.parent)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        # 失败时清理临时文件
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def atomic_write_text(path: PathLike, text: str, encoding: str = "utf-8") -> Path:
    """原子写入文本文件"""
    return atomic_write_bytes(path, text.encode(encoding))


def write_json(path: PathLike, payload: Any) -> Path:
    """以 UTF-8 JSON 格式原子写入报告"""
    text = json.dumps(payload, ensure_ascii=False, indent=2, default=_json_default)
    return atomic_write_text(path, text + "\n")


def _json_default(value: Any) -> Any:
    """numpy 标量与路径的 JSON 序列化"""
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, os.PathLike):
        return os.fspath(value)
    raise TypeError(f"无法序列化的类型: {type(value).__name__}")
