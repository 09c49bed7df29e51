"""
文档二值化引擎命令行 - 训练、预测、评价、特征可视化、基线与采样
"""
import asyncio
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import typer
from loguru import logger
from rich.console import Console
from rich.table import Table
from tqdm import tqdm

from .config import BinarizationConfig
from .core.factory import ServiceFactory
from .core.interfaces import EvalReport, SampleSet, ThresholdMethod
from .exceptions import ConfigurationError, DocBinError, InputError
from .services.corpus import CorpusManifest, list_images
from .services.features import estimate_stroke_width
from .services.image_core import load_image, save_gray_image, save_label_image
from .services.learner import (
    LEARNING_CURVE_BUDGETS, importance_frame, load_model, save_model,
)
from .services.metrics import evaluate_corpus, report_frame, write_report
from .services.sampler import N_SUBCLASSES, read_sample_set, write_sample_set
from .services.thresholders import default_window
from .statics.messages import CommandMessages, LogMessages, StatusMessages
from .utils.io_utils import atomic_write_text, ensure_dir, write_json


SAMPLE_SUFFIX = ".samples"
LOG_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {message}"

app = typer.Typer(
    name="docbin",
    help="可训练的文档图像二值化引擎",
    no_args_is_help=True,
    add_completion=False,
)
console = Console()


@dataclass
class AppState:
    """子命令共享的运行状态"""
    config: BinarizationConfig
    factory: ServiceFactory


def setup_logging(level: str, log_file: Optional[Path] = None) -> None:
    """配置 loguru：stderr 输出，可选文件输出"""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT)
    if log_file is not None:
        logger.add(str(log_file), level=level.upper(), encoding='utf-8')


def parse_overrides(items: Sequence[str]) -> Dict[str, str]:
    """解析 ``字段=值`` 覆盖项"""
    overrides = {}
    for item in items:
        name, sep, value = item.partition('=')
        if not sep or not name.strip():
            raise ConfigurationError(f"覆盖项格式应为 字段=值: {item}")
        overrides[name.strip()] = value.strip()
    return overrides


def _state(ctx: typer.Context) -> AppState:
    return ctx.obj


def _collect_images(inputs: Sequence[Path]) -> List[Path]:
    images: List[Path] = []
    for path in inputs:
        if path.is_dir():
            images.extend(list_images(path).values())
        else:
            images.append(path)
    if not images:
        raise InputError(CommandMessages.NO_INPUT_IMAGES.format(path=", ".join(map(str, inputs))))
    return images


async def _gather_limited(fn, items: Sequence, threads: int, desc: str) -> list:
    """按线程数限流地在线程池中处理每一项，结果保持输入顺序"""
    semaphore = asyncio.Semaphore(max(1, threads))
    progress = tqdm(total=len(items), desc=desc, disable=len(items) < 2, file=sys.stderr)

    async def run(item):
        async with semaphore:
            result = await asyncio.to_thread(fn, item)
            progress.update(1)
            return result

    try:
        return list(await asyncio.gather(*[run(item) for item in items]))
    finally:
        progress.close()


def _load_manifest(corpus: Path, gt: Optional[Path]) -> CorpusManifest:
    return CorpusManifest.load(corpus, gt)


def _fmt(value: float, digits: int) -> str:
    return "nan" if value != value else f"{value:.{digits}f}"


def render_eval_table(report: EvalReport) -> Table:
    """逐图像评价表（name, F1%, PSNR, DRD）"""
    table = Table(title=CommandMessages.EVAL_TABLE_TITLE.format(
        f1=report.mean_f1, psnr=report.mean_psnr, drd=report.mean_drd))
    table.add_column("name")
    table.add_column("F1%", justify="right")
    table.add_column("PSNR", justify="right")
    table.add_column("DRD", justify="right")
    for score in report.images:
        table.add_row(score.name, _fmt(score.f1, 2), _fmt(score.psnr, 2), _fmt(score.drd, 3))
    return table


def render_frame_table(frame, title: str) -> Table:
    """把 DataFrame 渲染为 rich 表格"""
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column), justify="left" if frame[column].dtype == object else "right")
    for row in frame.itertuples(index=False):
        table.add_row(*[_fmt(v, 4) if isinstance(v, float) else str(v) for v in row])
    return table


@app.callback()
def main_callback(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="YAML 配置文件"),
    overrides: List[str] = typer.Option([], "--set", "-o", help="覆盖配置项，格式 字段=值，可重复"),
    seed: Optional[int] = typer.Option(None, "--seed", help="随机种子"),
    threads: Optional[int] = typer.Option(None, "--threads", help="并发线程数"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="日志级别"),
    log_file: Optional[Path] = typer.Option(None, "--log-file", help="额外写入的日志文件"),
):
    """加载配置并初始化日志"""
    cfg = BinarizationConfig.load(str(config)) if config else BinarizationConfig.create_default()
    changes: Dict[str, object] = dict(parse_overrides(overrides))
    if seed is not None:
        changes['seed'] = seed
    if threads is not None:
        changes['threads'] = threads
    if log_level is not None:
        changes['log_level'] = log_level
    cfg = cfg.with_overrides(changes)
    cfg.raise_if_invalid()

    setup_logging(cfg.log_level, log_file)
    if config:
        logger.info(StatusMessages.CONFIG_LOADED.format(path=config))
    logger.debug(StatusMessages.ENGINE_READY.format(seed=cfg.seed, threads=cfg.threads))
    ctx.obj = AppState(config=cfg, factory=ServiceFactory(cfg))


@app.command()
def train(
    ctx: typer.Context,
    corpus: Path = typer.Argument(..., help="训练图像目录或语料清单文件"),
    model_path: Path = typer.Option(..., "--model", "-m", help="输出模型文件"),
    gt: Optional[Path] = typer.Option(None, "--gt", help="真值目录（语料为目录时必需）"),
    split: Optional[str] = typer.Option(None, "--split", help="留出的划分标签（不参与训练）"),
    cv: bool = typer.Option(False, "--cv", help="网格交叉验证选择超参数"),
    samples: Optional[Path] = typer.Option(None, "--samples", help="sample 命令写出的第一轮样本目录"),
    plot: bool = typer.Option(False, "--plot", help="输出特征族重要性图"),
):
    """两轮训练并写出模型、配置、交叉验证与特征重要性报告"""
    state = _state(ctx)
    cfg = state.config
    if cv:
        cfg = cfg.with_overrides({'enable_cv': True})
    factory = ServiceFactory(cfg)

    if gt is None and corpus.is_dir():
        raise ConfigurationError("语料为目录时必须用 --gt 指定真值目录")
    manifest = _load_manifest(corpus, gt)
    if split is not None:
        manifest = manifest.exclude(split)
    manifest.require_gt()

    first_pass = None
    if samples is not None:
        files = sorted(samples.glob(f"*{SAMPLE_SUFFIX}"))
        if not files:
            raise InputError(f"样本目录中没有 {SAMPLE_SUFFIX} 文件: {samples}")
        loaded = []
        for path in files:
            part = read_sample_set(path)
            logger.info(LogMessages.SAMPLES_LOADED.format(path=path, rows=len(part)))
            loaded.append(part)
        first_pass = SampleSet.concat(loaded)

    async def run():
        pairs = await manifest.load_pairs(cfg.threads, cfg.gt_foreground_dark)
        return await factory.create_training_pipeline().train(pairs, first_pass_samples=first_pass)

    result = asyncio.run(run())
    model = result.model

    ensure_dir(model_path.parent)
    save_model(model, model_path)
    cfg.save(str(model_path.with_name(f"{model_path.stem}.config.yaml")))
    console.print(CommandMessages.TRAIN_COMPLETE.format(
        trees=model.n_trees, rows=len(result.samples),
        first=result.first_pass_rows, second=result.second_pass_rows))
    console.print(CommandMessages.MODEL_WRITTEN.format(path=model_path))

    if result.cv_report is not None:
        report = result.cv_report
        write_json(model_path.with_name(f"{model_path.stem}.cv.json"), asdict(report))
        console.print(CommandMessages.CV_SUMMARY.format(
            mean=report.mean_f1, std=report.std_f1, folds=report.n_folds,
            n_trees=report.hyperparams.n_trees, mss=report.hyperparams.min_samples_split))

    frame = importance_frame(result.families)
    importance_path = model_path.with_name(f"{model_path.stem}.importance.csv")
    atomic_write_text(importance_path, frame.to_csv(index=False))
    console.print(render_frame_table(frame, CommandMessages.IMPORTANCE_TABLE_TITLE))
    console.print(CommandMessages.IMPORTANCE_WRITTEN.format(path=importance_path))
    if plot:
        from .utils.plotting import plot_family_importance

        plot_family_importance(frame, model_path.with_name(f"{model_path.stem}.importance.png"))


@app.command()
def predict(
    ctx: typer.Context,
    model_path: Path = typer.Argument(..., help="模型文件"),
    inputs: List[Path] = typer.Argument(..., help="输入图像或目录"),
    out: Optional[Path] = typer.Option(None, "--out", help="输出目录（默认取配置 output_dir）"),
    proba: bool = typer.Option(False, "--proba", help="同时输出前景概率图"),
    invert: bool = typer.Option(False, "--invert", help="输出白字黑底"),
):
    """用已训练模型二值化图像，输出黑字白底 PNG"""
    state = _state(ctx)
    cfg = state.config
    out_dir = ensure_dir(out or Path(cfg.output_dir))
    text_black = not (invert or cfg.invert_output)
    images = _collect_images(inputs)
    # 线程先分给图像，余下的用于图内按像素块并行
    row_threads = max(1, cfg.threads // max(1, min(len(images), cfg.threads)))
    binarizer = state.factory.create_learned_binarizer(load_model(model_path), threads=row_threads)

    def work(path: Path) -> None:
        label, probabilities = binarizer.decode(load_image(path), path.stem)
        save_label_image(label, out_dir / f"{path.stem}.png", text_black=text_black)
        if proba:
            save_gray_image(np.rint(probabilities * 255.0).astype(np.uint8), out_dir / f"{path.stem}.proba.png")

    asyncio.run(_gather_limited(work, images, cfg.threads, "predict"))
    console.print(CommandMessages.PREDICT_COMPLETE.format(count=len(images), path=out_dir))


@app.command("eval")
def evaluate(
    ctx: typer.Context,
    pred_dir: Path = typer.Argument(..., help="预测结果目录"),
    gt_dir: Path = typer.Argument(..., help="真值目录"),
    report_path: Optional[Path] = typer.Option(None, "--report", help="JSON Lines 结果文件"),
    csv_path: Optional[Path] = typer.Option(None, "--csv", help="额外写出 CSV"),
    pred_light: bool = typer.Option(False, "--pred-light", help="预测图中前景为白色"),
):
    """按文件名配对评价预测目录（F1、PSNR、DRD）"""
    cfg = _state(ctx).config
    report = evaluate_corpus(pred_dir, gt_dir, pred_foreground_dark=not pred_light,
                             gt_foreground_dark=cfg.gt_foreground_dark)
    console.print(render_eval_table(report))

    report_path = report_path or Path(cfg.output_dir) / "eval.jsonl"
    ensure_dir(report_path.parent)
    write_report(report, report_path)
    console.print(CommandMessages.EVAL_WRITTEN.format(path=report_path))
    if csv_path is not None:
        atomic_write_text(csv_path, report_frame(report).to_csv(index=False))
        console.print(CommandMessages.EVAL_WRITTEN.format(path=csv_path))


def stretch_channel(values: np.ndarray) -> np.ndarray:
    """通道图拉伸到 8 位；常数通道按 [0, 1] 取值直接映射"""
    values = np.asarray(values, dtype=np.float64)
    low, high = float(values.min()), float(values.max())
    if high > low:
        scaled = (values - low) / (high - low)
    else:
        scaled = np.full(values.shape, min(max(low, 0.0), 1.0))
    return np.rint(scaled * 255.0).astype(np.uint8)


@app.command()
def features(
    ctx: typer.Context,
    image: Path = typer.Argument(..., help="输入图像"),
    channels: str = typer.Option("all", "--channels", help="逗号分隔的通道名，或 all"),
    out: Optional[Path] = typer.Option(None, "--out", help="输出目录"),
):
    """把选定的特征通道输出为 8 位灰度 PNG"""
    state = _state(ctx)
    extractor = state.factory.create_feature_extractor()
    valid = extractor.schema.names
    names = valid if channels.strip() == "all" else [c.strip() for c in channels.split(',') if c.strip()]
    unknown = [name for name in names if name not in valid]
    if unknown or not names:
        raise ConfigurationError(f"未知的特征通道: {', '.join(unknown) or channels}；可选: {', '.join(valid)}")

    out_dir = ensure_dir(out or Path(state.config.output_dir) / "features")
    im = load_image(image)
    maps = extractor.channel_maps(extractor.prepare(im), names)
    for name in names:
        save_gray_image(stretch_channel(maps[name]), out_dir / f"{image.stem}_{name}.png")
    console.print(CommandMessages.FEATURES_WRITTEN.format(path=out_dir))


@app.command()
def baseline(
    ctx: typer.Context,
    method: str = typer.Argument(..., help="otsu / niblack / sauvola"),
    inputs: List[Path] = typer.Argument(..., help="输入图像或目录"),
    out: Optional[Path] = typer.Option(None, "--out", help="输出目录"),
    window: Optional[int] = typer.Option(None, "--window", help="局部窗口（默认按笔画宽度估计）"),
    invert: bool = typer.Option(False, "--invert", help="输出白字黑底"),
):
    """经典阈值基线二值化"""
    state = _state(ctx)
    cfg = state.config
    state.factory.create_baseline(method, window)
    out_dir = ensure_dir(out or Path(cfg.output_dir) / method)
    text_black = not (invert or cfg.invert_output)
    images = _collect_images(inputs)

    def work(path: Path) -> None:
        im = load_image(path)
        size = window
        if size is None and method != ThresholdMethod.OTSU.value:
            size = default_window(estimate_stroke_width(im), cfg.min_window)
        label = state.factory.create_baseline(method, size).binarize(im)
        save_label_image(label, out_dir / f"{path.stem}.png", text_black=text_black)

    asyncio.run(_gather_limited(work, images, cfg.threads, method))
    console.print(CommandMessages.BASELINE_COMPLETE.format(method=method, count=len(images), path=out_dir))


@app.command()
def sample(
    ctx: typer.Context,
    corpus: Path = typer.Argument(..., help="训练图像目录或语料清单文件"),
    out: Path = typer.Option(..., "--out", help="样本输出目录"),
    gt: Optional[Path] = typer.Option(None, "--gt", help="真值目录"),
    split: Optional[str] = typer.Option(None, "--split", help="留出的划分标签"),
):
    """第一轮子类均衡采样，每幅图像写出一个样本文件"""
    state = _state(ctx)
    cfg = state.config
    if gt is None and corpus.is_dir():
        raise ConfigurationError("语料为目录时必须用 --gt 指定真值目录")
    manifest = _load_manifest(corpus, gt)
    if split is not None:
        manifest = manifest.exclude(split)
    manifest.require_gt()
    sampler = state.factory.create_sampler()

    async def run():
        pairs = await manifest.load_pairs(cfg.threads, cfg.gt_foreground_dark)
        return pairs, await sampler.sample_corpus(pairs, cfg.threads)

    pairs, sets = asyncio.run(run())
    out_dir = ensure_dir(out)
    counts = np.zeros(N_SUBCLASSES, dtype=np.int64)
    rows = 0
    for (name, _, _), samples in zip(pairs, sets):
        path = out_dir / f"{name}{SAMPLE_SUFFIX}"
        write_sample_set(samples, path)
        counts += samples.subclass_counts()
        rows += len(samples)
        logger.info(CommandMessages.SAMPLES_WRITTEN.format(path=path, rows=len(samples)))

    table = Table(title="subclass counts")
    table.add_column("subclass", justify="right")
    table.add_column("gt")
    table.add_column("near edge")
    table.add_column("niblack")
    table.add_column("otsu")
    table.add_column("rows", justify="right")
    for code in range(N_SUBCLASSES):
        table.add_row(str(code), *[str((code >> bit) & 1) for bit in (3, 2, 1, 0)], str(int(counts[code])))
    console.print(table)
    console.print(CommandMessages.SAMPLE_COMPLETE.format(rows=rows, counts=counts.tolist()))


def _parse_budgets(text: str) -> Tuple[int, ...]:
    try:
        budgets = tuple(int(v) for v in text.split(',') if v.strip())
    except ValueError as e:
        raise ConfigurationError(f"采样预算列表格式错误: {text}") from e
    if not budgets or min(budgets) < 2 * N_SUBCLASSES:
        raise ConfigurationError(f"每个采样预算都必须不少于 {2 * N_SUBCLASSES}: {text}")
    return budgets


@app.command("learning-curve")
def learning_curve(
    ctx: typer.Context,
    corpus: Path = typer.Argument(..., help="语料目录或清单文件"),
    gt: Optional[Path] = typer.Option(None, "--gt", help="真值目录"),
    split: Optional[str] = typer.Option(None, "--split", help="作为测试集的划分标签"),
    test: Optional[Path] = typer.Option(None, "--test", help="测试图像目录或清单（不用 --split 时）"),
    test_gt: Optional[Path] = typer.Option(None, "--test-gt", help="测试真值目录"),
    budgets: str = typer.Option(",".join(map(str, LEARNING_CURVE_BUDGETS)), "--budgets", help="逗号分隔的每图采样预算"),
    out: Optional[Path] = typer.Option(None, "--out", help="CSV 输出路径"),
    plot: bool = typer.Option(False, "--plot", help="同时输出曲线图"),
):
    """不同采样预算下训练并在测试集上评价"""
    state = _state(ctx)
    cfg = state.config
    points = _parse_budgets(budgets)
    manifest = _load_manifest(corpus, gt)
    if split is not None:
        train_manifest, test_manifest = manifest.exclude(split), manifest.filter(split)
    elif test is not None:
        train_manifest, test_manifest = manifest, _load_manifest(test, test_gt)
    else:
        raise ConfigurationError("需要 --split 或 --test 指定测试集")
    train_manifest.require_gt()
    test_manifest.require_gt()

    async def run():
        train_pairs = await train_manifest.load_pairs(cfg.threads, cfg.gt_foreground_dark)
        test_pairs = await test_manifest.load_pairs(cfg.threads, cfg.gt_foreground_dark)
        return await state.factory.create_training_pipeline().learning_curve(train_pairs, test_pairs, points)

    frame = asyncio.run(run())
    console.print(render_frame_table(frame, CommandMessages.CURVE_TABLE_TITLE))
    out_path = out or Path(cfg.output_dir) / "learning_curve.csv"
    ensure_dir(out_path.parent)
    atomic_write_text(out_path, frame.to_csv(index=False))
    console.print(CommandMessages.CURVE_WRITTEN.format(path=out_path))
    if plot:
        from .utils.plotting import plot_learning_curve

        plot_learning_curve(frame, out_path.with_suffix('.png'))


@app.command()
def synth(
    ctx: typer.Context,
    out: Path = typer.Argument(..., help="输出目录（生成 images/ 与 gt/）"),
    count: int = typer.Option(3, "--count", help="页数"),
    height: int = typer.Option(128, "--height"),
    width: int = typer.Option(192, "--width"),
):
    """生成带真值的合成退化文档页"""
    from .utils.synthetic import write_corpus

    if count < 1 or height < 32 or width < 32:
        raise ConfigurationError("页数至少为 1，尺寸至少为 32x32")
    write_corpus(out, count, seed=_state(ctx).config.seed, shape=(height, width))
    console.print(CommandMessages.SYNTH_COMPLETE.format(count=count, path=out))


def run(argv: Optional[List[str]] = None) -> int:
    """执行命令行并返回退出码：0 成功，1 用法错误，2 数据错误，3 内部错误"""
    command = typer.main.get_command(app)
    try:
        result = command.main(args=argv, prog_name="docbin", standalone_mode=False)
        return result if isinstance(result, int) else 0
    except click.exceptions.Abort:
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except ConfigurationError as e:
        logger.error(StatusMessages.USAGE_ERROR.format(error=e))
        return 1
    except DocBinError as e:
        logger.error(StatusMessages.RUNTIME_ERROR.format(error=e))
        return 2
    except Exception as e:
        logger.opt(exception=e).error(StatusMessages.INTERNAL_ERROR.format(error=e))
        return 3


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
