"""
两轮训练流程与端到端测试
"""
import sys
import threading

import numpy as np
import pytest
from loguru import logger

from docbin.config import BinarizationConfig
from docbin.core.factory import ServiceFactory
from docbin.core.interfaces import ErtModel, ForestHyperParams, GrayImage, LabelImage, SampleSet
from docbin.core.patterns import MetricsCollector
from docbin.exceptions import CorpusError, DocBinError, SchemaMismatchError
from docbin.services import learner
from docbin.services.features import FeatureExtractor
from docbin.services.learner import (
    LearnedBinarizer, TrainingPipeline, decode_artifacts, ert_fit, model_to_bytes, predict_image,
)
from docbin.services.metrics import drd, f1
from docbin.services.thresholders import NiblackBinarizer, SauvolaBinarizer
from docbin.utils.synthetic import render_page, render_strokes


def _pairs(pages):
    return [(f"page_{i}", im, gt) for i, (im, gt) in enumerate(pages)]


def _pipeline(**overrides):
    settings = dict(first_pass_samples=480, second_pass_samples=480, n_trees=10, threads=2)
    settings.update(overrides)
    return TrainingPipeline(BinarizationConfig(**settings))


@pytest.mark.asyncio
async def test_two_pass_training(synthetic_pages):
    pipeline = _pipeline()
    result = await pipeline.train(_pairs(synthetic_pages[:2]))
    assert 0 < result.first_pass_rows <= 960
    assert len(result.samples) == result.first_pass_rows + result.second_pass_rows
    assert result.samples.image_names == ["page_0", "page_1"]
    assert result.model.n_features == 142
    assert result.model.n_trees == 10
    assert result.cv_report is None
    assert len(result.families) == 12
    assert sum(f.overall for f in result.families) == pytest.approx(1.0)
    assert pipeline.metrics.get_metric_summary('ert_fit_seconds')['count'] == 1


@pytest.mark.asyncio
async def test_training_is_deterministic(synthetic_pages):
    pairs = _pairs(synthetic_pages[:2])
    first = await _pipeline(threads=1).train(pairs)
    second = await _pipeline(threads=3).train(pairs)
    assert model_to_bytes(first.model) == model_to_bytes(second.model)


@pytest.mark.asyncio
async def test_perfect_bootstrap_adds_no_error_samples(monkeypatch):
    mask = render_strokes((64, 96), np.random.default_rng(3), 2)
    im = GrayImage(np.where(mask, 20, 230).astype(np.uint8))
    gt = LabelImage(mask)
    # 第 0 列是 I/255，两色图上按 0.5 切分即为完美分类
    monkeypatch.setattr(learner, "gnb_predict", lambda model, chunk: (chunk.rows[:, 0] < 0.5).astype(np.uint8))
    result = await _pipeline().train([("clean", im, gt)])
    assert result.second_pass_rows == 0
    assert len(result.samples) == result.first_pass_rows


@pytest.mark.asyncio
async def test_second_pass_can_be_disabled(synthetic_pages):
    result = await _pipeline(second_pass_samples=0).train(_pairs(synthetic_pages[:1]))
    assert result.second_pass_rows == 0


@pytest.mark.asyncio
async def test_empty_corpus():
    with pytest.raises(CorpusError):
        await _pipeline().train([])


@pytest.mark.asyncio
async def test_foreign_first_pass_samples(synthetic_pages):
    foreign = SampleSet(rows=np.zeros((4, 142)), labels=[0, 1, 0, 1], subclasses=np.zeros(4),
                        image_ids=np.zeros(4), image_names=["x"], seed=0, schema_fingerprint="0000000000000000")
    with pytest.raises(SchemaMismatchError):
        await _pipeline().train(_pairs(synthetic_pages[:1]), first_pass_samples=foreign)


@pytest.mark.asyncio
async def test_cross_validation_selects_from_grid(synthetic_pages):
    pipeline = _pipeline(enable_cv=True, cv_folds=3, cv_n_trees_grid=[4, 6], cv_min_samples_split_grid=[2])
    result = await pipeline.train(_pairs(synthetic_pages[:1]))
    report = result.cv_report
    assert report is not None
    assert report.n_folds == 3
    assert len(report.grid_results) == 2
    assert result.model.n_trees == report.hyperparams.n_trees


@pytest.mark.asyncio
async def test_end_to_end_quality(synthetic_pages):
    pipeline = TrainingPipeline(BinarizationConfig(threads=4))
    result = await pipeline.train(_pairs(synthetic_pages[:2]))
    im, gt = synthetic_pages[2]
    binarizer = LearnedBinarizer(result.model, pipeline.extractor)
    pred = binarizer.binarize(im, "page_2")
    assert f1(pred, gt) >= 90.0
    assert drd(pred, gt) <= 5.0
    assert binarizer.metrics.get_metric_summary('decode_seconds')['count'] == 1
    assert np.array_equal(predict_image(result.model, im).data, pred.data)


@pytest.mark.asyncio
async def test_learning_curve_trend(synthetic_pages):
    pipeline = TrainingPipeline(BinarizationConfig(threads=4))
    frame = await pipeline.learning_curve(_pairs(synthetic_pages[:2]), _pairs(synthetic_pages[2:]), (1920, 19200))
    assert list(frame.columns) == ['budget', 'first_pass', 'second_pass', 'rows', 'f1', 'psnr', 'drd']
    assert frame['budget'].tolist() == [1920, 19200]
    assert frame['first_pass'].tolist() == [960, 9600]
    assert frame.loc[1, 'f1'] >= frame.loc[0, 'f1'] - 0.5


@pytest.fixture(scope="module")
def page_model():
    """在一页合成图像的全部像素上训练的小森林"""
    im, gt = render_page(11, (48, 64))
    matrix = FeatureExtractor().extract(im)
    model = ert_fit((matrix, gt.data.ravel().astype(np.int64)), ForestHyperParams(n_trees=6), seed=2)
    return model, im


class TestParallelDecode:
    def test_threaded_decode_matches_sequential(self, page_model):
        model, im = page_model
        sequential = LearnedBinarizer(model, chunk_size=500, threads=1).predict_proba(im)
        threaded = LearnedBinarizer(model, chunk_size=500, threads=4).predict_proba(im)
        assert threaded.tobytes() == sequential.tobytes()
        assert np.array_equal(predict_image(model, im, chunk_size=700, threads=3).data, sequential > 0.5)

    def test_chunks_run_concurrently(self, page_model):
        _, im = page_model
        extractor = FeatureExtractor()
        art = extractor.prepare(im)
        # 两块都到达屏障才能继续，顺序执行会超时
        barrier = threading.Barrier(2, timeout=10)

        def predict(chunk):
            barrier.wait()
            return chunk.rows[:, 0]

        out = decode_artifacts(art, extractor, predict, chunk_size=(im.size + 1) // 2, threads=2)
        assert np.allclose(out, im.data / 255.0)

    def test_factory_uses_configured_threads(self, page_model):
        model, _ = page_model
        factory = ServiceFactory(BinarizationConfig(threads=3))
        assert factory.create_learned_binarizer(model).threads == 3
        assert factory.create_learned_binarizer(model, threads=1).threads == 1


def test_binarizer_rejects_foreign_model():
    model = ErtModel(trees=[], hyperparams=ForestHyperParams(), schema_fingerprint="ffffffffffffffff",
                     seed=0, n_features=142)
    with pytest.raises(SchemaMismatchError):
        LearnedBinarizer(model)


class TestServiceFactory:
    def test_services_are_cached(self):
        factory = ServiceFactory(BinarizationConfig())
        assert factory.create_feature_extractor() is factory.create_feature_extractor()
        pipeline = factory.create_training_pipeline()
        assert pipeline.sampler is factory.create_sampler()
        assert pipeline.extractor is factory.create_feature_extractor()
        factory.clear_cache()
        assert factory.create_training_pipeline() is not pipeline

    def test_import_failure_logs_traceback(self, monkeypatch):
        monkeypatch.setitem(sys.modules, "docbin.services.features", None)
        records = []
        sink = logger.add(lambda message: records.append(message.record), level="ERROR")
        try:
            with pytest.raises(DocBinError):
                ServiceFactory(BinarizationConfig()).create_feature_extractor()
        finally:
            logger.remove(sink)
        assert records and records[0]["exception"] is not None

    def test_baselines_follow_config(self):
        factory = ServiceFactory(BinarizationConfig(niblack_k=-0.4, sauvola_k=0.3, min_window=21))
        niblack = factory.create_baseline("niblack")
        assert isinstance(niblack, NiblackBinarizer)
        assert (niblack.params.k, niblack.params.window) == (-0.4, 21)
        sauvola = factory.create_baseline("sauvola", 9)
        assert isinstance(sauvola, SauvolaBinarizer)
        assert (sauvola.params.k, sauvola.params.window) == (0.3, 9)
        assert factory.create_baseline("otsu").name == "otsu"


def test_metrics_collector_summary():
    metrics = MetricsCollector(max_records=3)
    for value in (1.0, 2.0, 3.0, 4.0):
        metrics.record_metric('decode_seconds', value)
    summary = metrics.get_metric_summary('decode_seconds')
    assert summary == {'count': 3, 'min': 2.0, 'max': 4.0, 'avg': 3.0, 'latest': 4.0}
    with metrics.timed('block'):
        pass
    assert metrics.get_metric_summary('block')['count'] == 1
    assert metrics.get_metric_summary('missing') == {}
    assert [r["value"] for r in metrics.get_metrics()["decode_seconds"]] == [2.0, 3.0, 4.0]
