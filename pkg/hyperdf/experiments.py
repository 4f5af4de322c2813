"""Experiment runners: component ablation, policy comparison, pairing, years.

Each runner trains one or more detectors with ``trainer.train`` and evaluates
them with ``evaluator.run_benchmark``; results are plain pandas tables plus
JSON-friendly dictionaries so ``reports`` can render and persist them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .encoder import build_model
from .evaluator import run_benchmark
from .manifest import build_paired_split, build_unpaired_split
from .schemas import DatasetManifest, LossWeights, ParamPolicy, PolicyKind, TrainConfig
from .seeding import derive_seed
from .trainer import TrainResult, train

logger = logging.getLogger(__name__)

MEAN_COLUMN = "mean"


def with_updates(config: TrainConfig, **updates: Any) -> TrainConfig:
    """Validated copy of ``config`` with top-level fields replaced."""
    data = config.model_dump()
    data.update(updates)
    return TrainConfig.model_validate(data)


def fit(
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    config: TrainConfig,
    *,
    output_dir: Optional[Path] = None,
    weights: Optional[str] = None,
    device: Optional[str] = None,
) -> TrainResult:
    model = build_model(config.encoder, config.policy, config.seed, l2_normalize=config.l2_normalize, weights=weights)
    return train(model, train_manifest, val_manifest, config, output_dir=output_dir, weights=weights, device=device)


def _sphere_weights(config: TrainConfig) -> LossWeights:
    weights = config.loss_weights
    if weights.alpha == 0 and weights.beta == 0:
        return LossWeights()
    return weights


def ablation_configs(base: TrainConfig) -> Dict[str, TrainConfig]:
    """Five cumulative setups; the last one is ``base`` itself."""
    zero = LossWeights(alpha=0.0, beta=0.0)
    plain = dict(loss_weights=zero.model_dump(), slerp_extension=False)
    return {
        "1 baseline": with_updates(
            base, policy=ParamPolicy(kind=PolicyKind.HEAD_ONLY).model_dump(), l2_normalize=False, **plain
        ),
        "2 +ln": with_updates(base, l2_normalize=False, **plain),
        "3 +l2": with_updates(base, l2_normalize=True, **plain),
        "4 +align/uniform": with_updates(
            base, l2_normalize=True, slerp_extension=False, loss_weights=_sphere_weights(base).model_dump()
        ),
        "5 +slerp": base,
    }


DEFAULT_POLICIES = (
    ParamPolicy(kind=PolicyKind.LN_ONLY),
    ParamPolicy(kind=PolicyKind.BIAS_ONLY),
    ParamPolicy(kind=PolicyKind.LOW_RANK, rank=1),
    ParamPolicy(kind=PolicyKind.FULL),
)


@dataclass
class ComparisonResult:
    """Rows are training variants, columns test sets plus ``mean``; averaged over seeds."""

    matrix: pd.DataFrame
    curves: Dict[str, Dict[str, List[float]]] = field(default_factory=dict)
    errors: Dict[str, str] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "matrix": matrix_to_dict(self.matrix),
            "curves": self.curves,
            "errors": self.errors,
            "seeds": self.seeds,
        }


def matrix_to_dict(frame: pd.DataFrame) -> Dict[str, Any]:
    return {
        "index": [str(i) for i in frame.index],
        "columns": [str(c) for c in frame.columns],
        "data": [[None if pd.isna(v) else float(v) for v in row] for row in frame.to_numpy()],
    }


def matrix_from_dict(payload: Dict[str, Any]) -> pd.DataFrame:
    data = [[np.nan if v is None else v for v in row] for row in payload["data"]]
    return pd.DataFrame(data, index=payload["index"], columns=payload["columns"], dtype=float)


def _with_mean(rows: Dict[str, Dict[str, float]], columns: Sequence[str]) -> pd.DataFrame:
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=list(columns), dtype=float)
    frame[MEAN_COLUMN] = frame[list(columns)].mean(axis=1, skipna=False)
    return frame


def _mean_curve(histories: Sequence[List[Dict[str, Any]]], key: str) -> Tuple[List[float], List[float]]:
    length = max((len(h) for h in histories), default=0)
    grid = np.full((len(histories), length), np.nan)
    for i, history in enumerate(histories):
        for j, record in enumerate(history):
            value = record.get(key)
            grid[i, j] = np.nan if value is None else value
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(grid, axis=0) if length else np.zeros(0)
        std = np.nanstd(grid, axis=0) if length else np.zeros(0)
    return [float(v) for v in mean], [float(v) for v in std]


def compare_configs(
    configs: Dict[str, TrainConfig],
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    test_manifests: Sequence[DatasetManifest],
    *,
    seeds: Optional[Sequence[int]] = None,
    output_dir: Optional[Union[str, Path]] = None,
    weights: Optional[str] = None,
    device: Optional[str] = None,
) -> ComparisonResult:
    """Train every config (per seed) and test it on all ``test_manifests``.

    A config whose training fails is logged and reported as a row of NaNs; the
    remaining configs still run.
    """
    columns = [m.name for m in test_manifests]
    rows: Dict[str, Dict[str, float]] = {}
    curves: Dict[str, Dict[str, List[float]]] = {}
    errors: Dict[str, str] = {}
    seed_list = list(seeds) if seeds is not None else None
    for label, config in configs.items():
        run_seeds = seed_list if seed_list is not None else [config.seed]
        per_seed: List[List[float]] = []
        histories = []
        try:
            for seed in run_seeds:
                run_config = with_updates(config, seed=seed)
                run_dir = Path(output_dir) / _slug(label) / f"seed{seed}" if output_dir else None
                result = fit(train_manifest, val_manifest, run_config, output_dir=run_dir, weights=weights, device=device)
                reports, _ = run_benchmark(
                    result.model, test_manifests, config_fingerprint=run_config.fingerprint(),
                    batch_size=run_config.eval_batch_size, device=device,
                )
                per_seed.append([r.auroc for r in reports])
                histories.append(result.history)
        except Exception as exc:  # one failing row must not sink the table
            logger.error("Setup %s failed: %s", label, exc)
            errors[label] = f"{type(exc).__name__}: {exc}"
            rows[label] = {c: float("nan") for c in columns}
            continue
        rows[label] = dict(zip(columns, np.mean(np.asarray(per_seed), axis=0).tolist()))
        val_mean, val_std = _mean_curve(histories, "val_auroc")
        train_mean, train_std = _mean_curve(histories, "train_auroc")
        curves[label] = {"val_mean": val_mean, "val_std": val_std, "train_mean": train_mean, "train_std": train_std}
    return ComparisonResult(
        matrix=_with_mean(rows, columns),
        curves=curves,
        errors=errors,
        seeds=seed_list if seed_list is not None else sorted({c.seed for c in configs.values()}),
    )


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in label).strip("_")


def run_ablation(
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    test_manifests: Sequence[DatasetManifest],
    base_config: TrainConfig,
    **kwargs: Any,
) -> ComparisonResult:
    return compare_configs(ablation_configs(base_config), train_manifest, val_manifest, test_manifests, **kwargs)


def run_policy_comparison(
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    test_manifests: Sequence[DatasetManifest],
    base_config: TrainConfig,
    *,
    policies: Sequence[ParamPolicy] = DEFAULT_POLICIES,
    **kwargs: Any,
) -> ComparisonResult:
    """Same pipeline, different trainable-parameter policies."""
    configs = {p.label: with_updates(base_config, policy=p.model_dump()) for p in policies}
    return compare_configs(configs, train_manifest, val_manifest, test_manifests, **kwargs)


CONDITIONS = ("paired", "unpaired")


@dataclass
class PairingResult:
    curves: Dict[str, Dict[str, List[float]]]
    best_val: Dict[str, List[float]]
    divergence: Dict[str, float]
    gap: float
    n_trials: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "curves": self.curves,
            "best_val": self.best_val,
            "divergence": self.divergence,
            "gap": self.gap,
            "n_trials": self.n_trials,
        }


def _divergence_at_best(result: TrainResult) -> float:
    """Train AUROC minus val AUROC at the epoch of best validation."""
    for record in result.history:
        if record["epoch"] == result.best_epoch and record.get("train_auroc") is not None:
            return float(record["train_auroc"] - record["val_auroc"])
    return float("nan")


def run_pairing_experiment(
    manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    config: TrainConfig,
    n_trials: int = 10,
    *,
    output_dir: Optional[Union[str, Path]] = None,
    weights: Optional[str] = None,
    device: Optional[str] = None,
) -> PairingResult:
    """Train on ``n_trials`` paired and unpaired splits of ``manifest`` and compare learning curves.

    Both conditions of a trial share the same reals and the same seed; they
    differ only in whether each fake's source video is in the training set.
    """
    histories: Dict[str, List[List[Dict[str, Any]]]] = {c: [] for c in CONDITIONS}
    best_val: Dict[str, List[float]] = {c: [] for c in CONDITIONS}
    divergence: Dict[str, List[float]] = {c: [] for c in CONDITIONS}
    builders: Dict[str, Callable[[DatasetManifest, int], DatasetManifest]] = {
        "paired": build_paired_split,
        "unpaired": build_unpaired_split,
    }
    for trial in range(n_trials):
        trial_config = with_updates(config, seed=derive_seed(config.seed, "trial", trial) % (2**31))
        for condition in CONDITIONS:
            split = builders[condition](manifest, trial)
            run_dir = Path(output_dir) / condition / f"trial{trial}" if output_dir else None
            logger.info("Pairing trial %d/%d: %s (%d videos)", trial + 1, n_trials, condition, len(split.records))
            result = fit(split, val_manifest, trial_config, output_dir=run_dir, weights=weights, device=device)
            histories[condition].append(result.history)
            best_val[condition].append(float(result.best_val_auroc))
            divergence[condition].append(_divergence_at_best(result))

    curves: Dict[str, Dict[str, List[float]]] = {}
    for condition in CONDITIONS:
        train_mean, train_std = _mean_curve(histories[condition], "train_auroc")
        val_mean, val_std = _mean_curve(histories[condition], "val_auroc")
        curves[condition] = {
            "train_mean": train_mean,
            "train_std": train_std,
            "val_mean": val_mean,
            "val_std": val_std,
        }
    gap = float(np.mean(best_val["paired"]) - np.mean(best_val["unpaired"]))
    logger.info("Paired minus unpaired mean best val AUROC: %.4f", gap)
    return PairingResult(
        curves=curves,
        best_val=best_val,
        divergence={c: float(np.nanmean(divergence[c])) for c in CONDITIONS},
        gap=gap,
        n_trials=n_trials,
    )


@dataclass
class YearsResult:
    matrix: pd.DataFrame
    years: Dict[str, int]
    in_dataset: List[Tuple[str, str]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "matrix": matrix_to_dict(self.matrix),
            "years": self.years,
            "in_dataset": [list(cell) for cell in self.in_dataset],
        }


def run_years_experiment(
    train_sets: Sequence[Tuple[DatasetManifest, DatasetManifest]],
    test_manifests: Sequence[DatasetManifest],
    config: TrainConfig,
    *,
    output_dir: Optional[Union[str, Path]] = None,
    weights: Optional[str] = None,
    device: Optional[str] = None,
) -> YearsResult:
    """One model per (train, val) pair, each tested on every test set ordered by year."""
    if len(train_sets) < 2:
        raise ValueError("the years experiment needs at least two training sets")
    datasets = [train.dataset for train, _ in train_sets]
    duplicates = sorted({d for d in datasets if datasets.count(d) > 1})
    if duplicates:
        raise ValueError(f"each training set must come from a different dataset; repeated: {duplicates}")
    tests = sorted(test_manifests, key=lambda m: (m.year if m.year is not None else 0, m.name))
    columns = [m.name for m in tests]
    rows: Dict[str, Dict[str, float]] = {}
    in_dataset: List[Tuple[str, str]] = []
    for train_manifest, val_manifest in train_sets:
        row = train_manifest.dataset
        run_dir = Path(output_dir) / _slug(row) if output_dir else None
        result = fit(train_manifest, val_manifest, config, output_dir=run_dir, weights=weights, device=device)
        reports, _ = run_benchmark(
            result.model, tests, config_fingerprint=config.fingerprint(),
            batch_size=config.eval_batch_size, device=device,
        )
        rows[row] = {r.dataset: r.auroc for r in reports}
        in_dataset.extend((row, t.name) for t in tests if t.dataset == train_manifest.dataset)
    frame = pd.DataFrame.from_dict(rows, orient="index", columns=columns, dtype=float)
    return YearsResult(
        matrix=frame,
        years={m.name: int(m.year) if m.year is not None else 0 for m in tests},
        in_dataset=in_dataset,
    )


__all__ = [
    "with_updates",
    "fit",
    "ablation_configs",
    "DEFAULT_POLICIES",
    "ComparisonResult",
    "matrix_to_dict",
    "matrix_from_dict",
    "compare_configs",
    "run_ablation",
    "run_policy_comparison",
    "PairingResult",
    "run_pairing_experiment",
    "YearsResult",
    "run_years_experiment",
]
