"""
报告图表 - 特征族重要性柱状图与学习曲线
"""
import io

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd

from .io_utils import atomic_write_bytes


def _save(fig, path) -> None:
    buffer = io.BytesIO()
    fig.tight_layout()
    fig.savefig(buffer, format='png', dpi=120)
    plt.close(fig)
    atomic_write_bytes(path, buffer.getvalue())


def plot_family_importance(frame: pd.DataFrame, path) -> None:
    """overall 与 dimensional 两组柱状图"""
    fig, (ax_overall, ax_dim) = plt.subplots(1, 2, figsize=(11, 4.5))
    ordered = frame.sort_values('overall', ascending=True)
    ax_overall.barh(ordered['family'], ordered['overall'], color='tab:blue')
    ax_overall.set_xlabel('overall importance')
    ordered = frame.sort_values('dimensional', ascending=True)
    ax_dim.barh(ordered['family'], ordered['dimensional'], color='tab:orange')
    ax_dim.set_xlabel('importance per dimension')
    for ax in (ax_overall, ax_dim):
        ax.grid(True, axis='x', alpha=0.3)
    _save(fig, path)


def plot_learning_curve(frame: pd.DataFrame, path) -> None:
    """F1 / PSNR / DRD 随每图采样预算的变化"""
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    for ax, column, label in zip(axes, ('f1', 'psnr', 'drd'), ('F1 (%)', 'PSNR (dB)', 'DRD')):
        ax.plot(frame['budget'], frame[column], '-o')
        ax.set_xlabel('samples per image')
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    _save(fig, path)
