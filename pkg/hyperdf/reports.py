# hyperdf/reports.py
"""Table and plot emitters for benchmark, ablation, pairing and years results.

Machine-readable artifacts keep full precision; display tables show AUROC x100
rounded to one decimal.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "hyperdf"
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .evaluator import dump_json  # noqa: E402
from .experiments import MEAN_COLUMN, matrix_from_dict, matrix_to_dict  # noqa: E402
from .schemas import BenchmarkSummary, DatasetManifest  # noqa: E402

logger = logging.getLogger(__name__)

DISPLAY_SCALE = 100.0
DISPLAY_DECIMALS = 1
CONDITION_COLOURS = {"paired": "tab:blue", "unpaired": "tab:red"}


def display_table(frame: pd.DataFrame) -> pd.DataFrame:
    return (frame * DISPLAY_SCALE).round(DISPLAY_DECIMALS)


def benchmark_matrix(summaries: Mapping[str, BenchmarkSummary]) -> pd.DataFrame:
    """Rows = models, columns = datasets + mean."""
    rows: Dict[str, Dict[str, float]] = {}
    columns: List[str] = []
    for model, summary in summaries.items():
        rows[model] = dict(zip(summary.datasets, summary.aurocs))
        columns.extend(d for d in summary.datasets if d not in columns)
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=columns, dtype=float)
    frame[MEAN_COLUMN] = frame[columns].mean(axis=1)
    return frame


def write_matrix(frame: pd.DataFrame, out_dir: Union[str, Path], stem: str) -> Dict[str, Path]:
    """``{stem}.csv`` and ``{stem}.json`` at full precision, ``{stem}.txt`` for display."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    frame.to_csv(csv_path, float_format="%.17g")
    json_path = dump_json(matrix_to_dict(frame), out_dir / f"{stem}.json")
    txt_path = out_dir / f"{stem}.txt"
    txt_path.write_text(display_table(frame).to_string() + "\n", encoding="utf-8")
    logger.info("Wrote %s table (%d x %d) to %s", stem, *frame.shape, out_dir)
    return {"csv": csv_path, "json": json_path, "txt": txt_path}


def render_matrix(path: Union[str, Path]) -> str:
    """Display table for a saved matrix (``.json`` from ``write_matrix`` or a result file, or ``.csv``)."""
    path = Path(path)
    if path.suffix == ".csv":
        frame = pd.read_csv(path, index_col=0)
    else:
        payload = json.loads(path.read_text(encoding="utf-8"))
        frame = matrix_from_dict(payload.get("matrix", payload))
    return display_table(frame).to_string()


def dataset_stats_table(manifests: Sequence[DatasetManifest]) -> pd.DataFrame:
    """Per dataset: year, real and fake videos, frames, and videos excluded at preprocessing."""
    rows = []
    for m in manifests:
        rows.append(
            {
                "dataset": m.name,
                "year": m.year,
                "real": len(m.reals),
                "fake": len(m.fakes),
                "frames": m.n_frames,
                "excluded": len(m.excluded),
            }
        )
    frame = pd.DataFrame(rows, columns=["dataset", "year", "real", "fake", "frames", "excluded"])
    return frame.sort_values(["year", "dataset"], kind="stable").reset_index(drop=True)


def _band(ax, epochs, mean, std, colour, label, style="-") -> None:
    lower = [m - s for m, s in zip(mean, std)]
    upper = [m + s for m, s in zip(mean, std)]
    ax.plot(epochs, mean, style, color=colour, label=label)
    ax.fill_between(epochs, lower, upper, color=colour, alpha=0.2, linewidth=0)


def plot_pairing_curves(curves: Mapping[str, Mapping[str, List[float]]], path: Union[str, Path]) -> Path:
    """Train and validation AUROC per epoch, mean with a one-std band, per condition."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for condition, curve in curves.items():
        colour = CONDITION_COLOURS.get(condition)
        epochs = list(range(1, len(curve["val_mean"]) + 1))
        _band(axes[0], epochs, curve["train_mean"], curve["train_std"], colour, condition)
        _band(axes[1], epochs, curve["val_mean"], curve["val_std"], colour, condition)
    for ax, title in zip(axes, ("train", "validation")):
        ax.set_title(f"{title} AUROC")
        ax.set_xlabel("epoch")
        ax.grid(alpha=0.3)
        ax.legend()
    axes[0].set_ylabel("video AUROC")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_years(
    matrix: pd.DataFrame,
    years: Mapping[str, int],
    in_dataset: Sequence[Tuple[str, str]],
    path: Union[str, Path],
) -> Path:
    """Test AUROC against test-set year, one line per training set, in-dataset points circled."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(matrix.columns)
    xs = [years[c] for c in columns]
    highlighted = set(map(tuple, in_dataset))
    fig, ax = plt.subplots(figsize=(7, 4))
    for row in matrix.index:
        ys = matrix.loc[row, columns].to_numpy(dtype=float)
        ax.plot(xs, ys, marker="o", label=str(row))
        for x, y, col in zip(xs, ys, columns):
            if (row, col) in highlighted:
                ax.scatter([x], [y], s=160, facecolors="none", edgecolors="black", linewidths=1.5, zorder=3)
    ax.set_xlabel("test dataset year")
    ax.set_ylabel("video AUROC")
    ax.grid(alpha=0.3)
    ax.legend(title="trained on")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_policy_curves(curves: Mapping[str, Mapping[str, List[float]]], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, curve in curves.items():
        epochs = list(range(1, len(curve["val_mean"]) + 1))
        ax.plot(epochs, curve["val_mean"], marker=".", label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation AUROC")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def write_result(result: Any, out_dir: Union[str, Path], stem: str) -> Path:
    """Persist an experiment result's ``to_dict()`` view as sorted-key JSON."""
    return dump_json(result.to_dict(), Path(out_dir) / f"{stem}.json")


__all__ = [
    "display_table",
    "benchmark_matrix",
    "write_matrix",
    "render_matrix",
    "dataset_stats_table",
    "plot_pairing_curves",
    "plot_years",
    "plot_policy_curves",
    "write_result",
]
