"""
测试公共夹具
"""
import numpy as np
import pytest

from docbin.config import BinarizationConfig
from docbin.core.interfaces import GrayImage
from docbin.utils.synthetic import render_page, write_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_image(rng):
    """生成随机灰度图；未指定尺寸时随机取 1..32"""
    def make(height=None, width=None, levels=None):
        height = height or int(rng.integers(1, 33))
        width = width or int(rng.integers(1, 33))
        if levels is None:
            data = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
        else:
            data = rng.choice(np.asarray(levels, dtype=np.uint8), size=(height, width))
        return GrayImage(data)
    return make


@pytest.fixture(scope="session")
def synthetic_pages():
    """三页 128×192 合成退化文档 (GrayImage, LabelImage)"""
    return [render_page(seed, (128, 192)) for seed in range(3)]


@pytest.fixture
def small_page():
    return render_page(5, (64, 96))


@pytest.fixture
def fast_config(tmp_path):
    """小预算、小森林的配置，用于快速端到端测试"""
    return BinarizationConfig(
        first_pass_samples=480,
        second_pass_samples=480,
        n_trees=10,
        threads=2,
        output_dir=str(tmp_path / "out"),
    )


@pytest.fixture
def tiny_corpus(tmp_path):
    """磁盘上的两页合成语料：images/ 与 gt/"""
    root = tmp_path / "corpus"
    write_corpus(root, 2, seed=7, shape=(64, 96))
    return root
