"""
语料服务 - 图像与真值的配对、清单文件与划分标签
"""
import asyncio
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

from loguru import logger

from ..core.interfaces import CorpusEntry, GrayImage, LabelImage
from ..exceptions import CorpusError, InputError
from ..statics.messages import LogMessages
from .image_core import load_image, load_label_image


IMAGE_SUFFIXES = {'.png', '.bmp', '.tif', '.tiff', '.jpg', '.jpeg', '.pgm', '.ppm'}
_GT_SUFFIXES = ('_estgt', '_gt', '-gt', '.gt')

PathLike = Union[str, os.PathLike]


def match_key(path: Path) -> str:
    """图像与真值配对用的文件名主干（去掉常见的真值后缀）"""
    stem = Path(path).stem.lower()
    for suffix in _GT_SUFFIXES:
        if stem.endswith(suffix) and len(stem) > len(suffix):
            return stem[:-len(suffix)]
    return stem


def list_images(directory: PathLike) -> Dict[str, Path]:
    """目录中的图像文件，按配对主干索引"""
    root = Path(directory)
    if not root.is_dir():
        raise CorpusError(f"目录不存在: {root}")
    found: Dict[str, Path] = {}
    for path in sorted(root.iterdir()):
        if path.is_file() and path.suffix.lower() in IMAGE_SUFFIXES:
            key = match_key(path)
            if key in found:
                raise CorpusError(f"目录 {root} 中存在同名主干的文件: {found[key].name}, {path.name}")
            found[key] = path
    return found


@dataclass
class CorpusManifest:
    """语料清单：(图像, 真值, 划分标签) 记录，顺序即图像编号"""
    entries: List[CorpusEntry] = field(default_factory=list)
    root: Optional[Path] = None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[CorpusEntry]:
        return iter(self.entries)

    @classmethod
    def from_directories(cls, image_dir: PathLike, gt_dir: Optional[PathLike] = None,
                         split: str = "train") -> 'CorpusManifest':
        """图像目录 + 同名主干的真值目录；给出真值目录时每幅图像都必须有真值"""
        images = list_images(image_dir)
        truths = list_images(gt_dir) if gt_dir is not None else {}
        entries = []
        for key, path in images.items():
            gt = truths.get(key)
            if gt_dir is not None and gt is None:
                raise CorpusError(f"图像 {path} 在 {gt_dir} 中没有对应的真值文件")
            entries.append(CorpusEntry(image=path, gt=gt, split=split))
        return cls(entries=entries, root=Path(image_dir))

    @classmethod
    def from_file(cls, path: PathLike) -> 'CorpusManifest':
        """
        读取清单文件

        每行 `图像<TAB>真值[<TAB>划分]`，真值写 `-` 表示没有；相对路径以清单所在目录为基准；
        空行与 `#` 开头的行忽略。
        """
        manifest_path = Path(path)
        try:
            text = manifest_path.read_text(encoding='utf-8')
        except OSError as e:
            raise CorpusError(f"无法读取语料清单 {manifest_path}: {e}") from e

        base = manifest_path.parent
        entries = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            fields = [f.strip() for f in raw.rstrip('\n').split('\t')]
            if len(fields) < 2 or len(fields) > 3:
                raise CorpusError(f"{manifest_path}:{lineno}: 需要 2 或 3 个制表符分隔的字段")
            image = base / fields[0]
            gt = None if fields[1] in ('', '-') else base / fields[1]
            split = fields[2] if len(fields) == 3 and fields[2] else "train"
            if not image.is_file():
                raise CorpusError(f"{manifest_path}:{lineno}: 图像文件不存在 {image}")
            if gt is not None and not gt.is_file():
                raise CorpusError(f"{manifest_path}:{lineno}: 真值文件不存在 {gt}")
            entries.append(CorpusEntry(image=image, gt=gt, split=split))
        return cls(entries=entries, root=base)

    @classmethod
    def load(cls, source: PathLike, gt_dir: Optional[PathLike] = None) -> 'CorpusManifest':
        """目录按目录配对加载，文件按清单加载"""
        source = Path(source)
        if source.is_dir():
            manifest = cls.from_directories(source, gt_dir)
        elif source.is_file():
            if gt_dir is not None:
                raise InputError("使用清单文件时不能再指定真值目录")
            manifest = cls.from_file(source)
        else:
            raise CorpusError(f"语料路径不存在: {source}")
        logger.info(LogMessages.CORPUS_LOADED.format(count=len(manifest), splits=manifest.splits()))
        return manifest

    def splits(self) -> List[str]:
        """出现过的划分标签（按首次出现顺序）"""
        return list(dict.fromkeys(entry.split for entry in self.entries))

    def filter(self, split: str) -> 'CorpusManifest':
        """只保留指定划分"""
        if split not in self.splits():
            raise CorpusError(f"语料中没有划分 {split}，可选: {', '.join(self.splits())}")
        return CorpusManifest([e for e in self.entries if e.split == split], self.root)

    def exclude(self, split: str) -> 'CorpusManifest':
        """去掉指定划分（留一法训练集）"""
        if split not in self.splits():
            raise CorpusError(f"语料中没有划分 {split}，可选: {', '.join(self.splits())}")
        kept = CorpusManifest([e for e in self.entries if e.split != split], self.root)
        logger.info(LogMessages.CORPUS_SPLIT_EXCLUDED.format(split=split, train=len(kept), test=len(self) - len(kept)))
        return kept

    def require_gt(self) -> 'CorpusManifest':
        """训练与评价要求每条记录都有真值"""
        if not self.entries:
            raise CorpusError("语料为空")
        for entry in self.entries:
            if entry.gt is None:
                raise CorpusError(f"图像 {entry.image} 没有真值文件")
        return self

    async def load_pairs(self, threads: int = 4,
                         gt_foreground_dark: bool = True) -> List[Tuple[str, GrayImage, LabelImage]]:
        """并发读取 (名称, 灰度图, 真值)；尺寸不一致时抛出 CorpusError"""
        self.require_gt()
        semaphore = asyncio.Semaphore(max(1, threads))

        def read(entry: CorpusEntry) -> Tuple[str, GrayImage, LabelImage]:
            im = load_image(entry.image)
            gt = load_label_image(entry.gt, foreground_dark=gt_foreground_dark)
            if im.shape != gt.shape:
                raise CorpusError(f"图像 {entry.image} 与真值 {entry.gt} 尺寸不一致: {im.shape} != {gt.shape}")
            return entry.name, im, gt

        async def run(entry: CorpusEntry):
            async with semaphore:
                return await asyncio.to_thread(read, entry)

        return list(await asyncio.gather(*[run(e) for e in self.entries]))
