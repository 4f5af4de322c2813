"""Training loop: batch extension on the sphere, masked optimisation, model selection."""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import torch

from .checkpoint import Checkpoint, checkpoint_load, checkpoint_save
from .config import settings
from .dataset import FrameDataset, epoch_order, frame_loader
from .encoder import DetectorModel
from .errors import ClassMissing, NonFiniteLoss, SingleClass
from .evaluator import score_manifest
from .hypersphere import FeatureBatch, slerp
from .losses import LossBreakdown, combined_loss, count_pairs, cross_entropy
from .metrics import aggregate_video, auroc, video_scores
from .policies import trainable_parameters, write_audit
from .schedule import CyclicCosineSchedule, lr_at
from .schemas import TOOL_VERSION, DatasetManifest, Precision, TrainConfig
from .seeding import torch_generator

logger = logging.getLogger(__name__)

LOG_SCHEMA_VERSION = 1
MIN_BATCH = 3
BINARY_CLASSES = (0, 1)


@dataclass(frozen=True)
class SlerpPlan:
    """Which rows each synthetic sample interpolates between, and where."""

    sources: torch.Tensor
    partners: torch.Tensor
    t: torch.Tensor


def _allocate(counts: Sequence[int], slots: int) -> List[int]:
    """Largest-remainder split of ``slots`` proportional to ``counts``; ties go to the lower class."""
    total = sum(counts)
    quotas = [slots * c / total for c in counts]
    alloc = [int(math.floor(q)) for q in quotas]
    leftover = slots - sum(alloc)
    order = sorted(range(len(counts)), key=lambda c: (-(quotas[c] - alloc[c]), c))
    for c in order[:leftover]:
        alloc[c] += 1
    return alloc


def plan_extension(
    labels: torch.Tensor,
    size: int,
    generator: torch.Generator,
    *,
    required_classes: Sequence[int] = BINARY_CLASSES,
) -> SlerpPlan:
    labels = labels.detach().cpu().long()
    n = int(labels.numel())
    if n == 0:
        raise ValueError("cannot extend an empty batch")
    if size < n:
        raise ValueError(f"extended size {size} is smaller than the batch ({n})")
    classes = sorted(int(c) for c in torch.unique(labels))
    for c in required_classes:
        if c not in classes:
            raise ClassMissing(f"batch has no samples of class {c}")
    rows = {c: torch.nonzero(labels == c).flatten() for c in classes}
    alloc = _allocate([len(rows[c]) for c in classes], size - n)

    sources, partners = [], []
    for c, k in zip(classes, alloc):
        members = rows[c]
        m = len(members)
        if k == 0:
            continue
        src_pos = torch.arange(k) % m
        if m > 1:
            draw = torch.randint(0, m - 1, (k,), generator=generator)
            partner_pos = draw + (draw >= src_pos).long()
        else:
            partner_pos = torch.zeros(k, dtype=torch.long)
        sources.append(members[src_pos])
        partners.append(members[partner_pos])
    empty = torch.zeros(0, dtype=torch.long)
    sources_t = torch.cat(sources) if sources else empty
    partners_t = torch.cat(partners) if partners else empty
    t = torch.rand(len(sources_t), generator=generator, dtype=torch.float64)
    return SlerpPlan(sources=sources_t, partners=partners_t, t=t)


def apply_extension(batch: FeatureBatch, plan: SlerpPlan) -> FeatureBatch:
    if len(plan.sources) == 0:
        return batch
    device = batch.features.device
    src = plan.sources.to(device)
    dst = plan.partners.to(device)
    t = plan.t.to(device=device, dtype=batch.features.dtype)
    synthetic = slerp(batch.features[src], batch.features[dst], t).to(batch.features.dtype)
    return FeatureBatch(
        features=torch.cat([batch.features, synthetic], dim=0),
        labels=torch.cat([batch.labels, batch.labels[src]], dim=0),
    )


def extend_batch_slerp(
    batch: FeatureBatch,
    size: int,
    generator: torch.Generator,
    *,
    required_classes: Sequence[int] = BINARY_CLASSES,
) -> FeatureBatch:
    """Grow ``batch`` to ``size`` rows with same-class slerp samples.

    The original rows come first. Synthetic slots are shared between classes in
    proportion to their counts; sources cycle through the rows of each class and
    partners are drawn uniformly among the other rows of that class. Raises
    ``ClassMissing`` when a class in ``required_classes`` has no row; pass an
    empty tuple to extend single-class batches.
    """
    plan = plan_extension(batch.labels, size, generator, required_classes=required_classes)
    return apply_extension(batch, plan)


class TrainingLog:
    """JSON Lines training log kept in memory and optionally mirrored to a file."""

    def __init__(self, path: Optional[Union[str, Path]] = None) -> None:
        self.path = Path(path) if path else None
        self.records: List[Dict[str, Any]] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, kind: str, **fields: Any) -> Dict[str, Any]:
        record = {"kind": kind, "schema_version": LOG_SCHEMA_VERSION, **fields}
        self.records.append(record)
        if self.path:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return record

    @property
    def steps(self) -> List[Dict[str, Any]]:
        return [r for r in self.records if r["kind"] == "step"]

    @property
    def epochs(self) -> List[Dict[str, Any]]:
        return [r for r in self.records if r["kind"] == "epoch"]

    @classmethod
    def read(cls, path: Union[str, Path]) -> "TrainingLog":
        log = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            log.records = [json.loads(line) for line in fh if line.strip()]
        return log


@dataclass
class TrainResult:
    model: DetectorModel
    log: TrainingLog
    best_epoch: int
    best_val_auroc: Optional[float]
    steps: int
    history: List[Dict[str, Any]] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None


def objective(logits: torch.Tensor, features: torch.Tensor, labels: torch.Tensor, config: TrainConfig) -> LossBreakdown:
    if config.l2_normalize:
        return combined_loss(logits, FeatureBatch(features=features, labels=labels), config.loss_weights)
    ce = cross_entropy(logits, labels)
    return LossBreakdown(
        total=ce, cross_entropy=float(ce.detach()), align=0.0, uniform=0.0, pair_counts=count_pairs(labels)
    )


def _train_auroc(frames: List[tuple[int, float]], targets: Dict[int, int]) -> Optional[float]:
    grouped = video_scores(frames)
    videos = sorted(grouped)
    try:
        return auroc([aggregate_video(grouped[v]) for v in videos], [targets[v] for v in videos])
    except SingleClass:
        return None


def _dump_nonfinite(output_dir: Optional[Path], step: int, **tensors: Any) -> Optional[Path]:
    if output_dir is None:
        return None
    path = output_dir / f"nonfinite_step{step}.pt"
    torch.save({k: (v.detach().cpu() if torch.is_tensor(v) else v) for k, v in tensors.items()}, path)
    return path


def train(
    model: DetectorModel,
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    config: TrainConfig,
    *,
    output_dir: Optional[Union[str, Path]] = None,
    resume: Optional[Union[Checkpoint, str, Path]] = None,
    device: Optional[str] = None,
    weights: Optional[str] = None,
) -> TrainResult:
    """Train ``model`` and return it holding the weights of its best validation epoch.

    With ``output_dir`` the run writes ``train_log.jsonl``, ``last.ckpt`` after
    every epoch (and when ``max_steps`` stops a run early), ``best.ckpt`` on each
    validation improvement and ``param_audit.tsv``.
    """
    device_t = torch.device(device or settings.DEVICE)
    out = Path(output_dir) if output_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        write_audit(model, out / "param_audit.tsv")

    if isinstance(resume, (str, Path)):
        resume = checkpoint_load(resume, expected_spec=model.spec, weights=weights)
    if resume is not None:
        model.load_state_dict(resume.model.state_dict())

    model.to(device_t)
    dataset = FrameDataset(
        train_manifest, model.spec.image_size, train=True, augment_config=config.augment, seed=config.seed
    )
    if len(dataset) == 0:
        raise ValueError(f"training manifest {train_manifest.name} has no frames")
    video_targets = {v: r.target for v, r in enumerate(train_manifest.records)}
    labels_all = dataset.labels
    steps_per_epoch = math.ceil(len(dataset) / config.batch_size)

    params = trainable_parameters(model)
    optimizer = torch.optim.Adam(
        params,
        lr=config.lr_min,
        betas=(config.adam_beta1, config.adam_beta2),
        weight_decay=config.weight_decay,
    )
    schedule = CyclicCosineSchedule(optimizer, config, steps_per_epoch)
    total_steps = schedule.total_steps if config.max_steps is None else min(schedule.total_steps, config.max_steps)
    reduced = config.precision is Precision.REDUCED

    log = TrainingLog(out / "train_log.jsonl" if out else None)
    step = 0
    best_val: Optional[float] = None
    best_epoch = -1
    best_state: Optional[Dict[str, torch.Tensor]] = None
    history: List[Dict[str, Any]] = []
    if resume is not None:
        optimizer.load_state_dict(resume.optimizer_state or optimizer.state_dict())
        step = resume.step
        best_val = resume.trainer_state.get("best_val_auroc")
        best_epoch = resume.trainer_state.get("best_epoch", -1)
        history = list(resume.trainer_state.get("history", []))
        logger.info("Resuming %s at step %d", train_manifest.name, step)
    else:
        log.write(
            "header",
            tool_version=TOOL_VERSION,
            config=config.model_dump(mode="json"),
            config_fingerprint=config.fingerprint(),
            train_manifest=train_manifest.name,
            val_manifest=val_manifest.name,
            steps_per_epoch=steps_per_epoch,
            total_steps=total_steps,
        )

    def _trainer_state() -> Dict[str, Any]:
        return {
            "best_val_auroc": best_val,
            "best_epoch": best_epoch,
            "history": history,
            "preprocessing_fingerprint": train_manifest.preprocessing_fingerprint,
        }

    def _save(name: str, epoch: int) -> Path:
        path = out / name
        checkpoint_save(
            model, path, config=config, step=step, epoch=epoch, optimizer=optimizer,
            schedule_state=schedule.state_dict(), trainer_state=_trainer_state(),
        )
        return path

    model.train()
    start_epoch = step // steps_per_epoch
    for epoch in range(start_epoch, config.total_epochs):
        if step >= total_steps:
            break
        started = time.perf_counter()
        dataset.set_epoch(epoch)
        order = epoch_order(labels_all, config.seed, epoch, balance_classes=config.balance_classes)
        skip = step - epoch * steps_per_epoch
        seen: List[tuple[int, float]] = []
        batches = frame_loader(dataset, order[skip * config.batch_size :], config.batch_size)
        for images, labels, videos, _ in batches:
            lr = schedule.set_step(step)
            if labels.numel() < MIN_BATCH:
                logger.debug("Skipping a final batch of %d frames at step %d", labels.numel(), step)
                step += 1
                continue
            images, labels = images.to(device_t), labels.to(device_t)
            features = model.embed(images, reduced_precision=reduced)
            n_extended = 0
            plan = None
            if config.extends_batch:
                target = config.extended_batch_size * labels.numel() // config.batch_size
                try:
                    plan = plan_extension(labels, target, torch_generator(config.seed, "slerp", step))
                except ClassMissing as exc:
                    logger.warning("Step %d: no slerp extension (%s)", step, exc)
            if plan is not None:
                extended = apply_extension(FeatureBatch(features=features, labels=labels), plan)
                features_all, labels_all_rows = extended.features, extended.labels
                n_extended = len(plan.sources)
            else:
                features_all, labels_all_rows = features, labels
            logits = model.classify(features_all)
            loss = objective(logits, features_all, labels_all_rows, config)
            if not torch.isfinite(loss.total):
                dump = _dump_nonfinite(out, step, features=features_all, logits=logits, labels=labels_all_rows, lr=lr)
                logger.error("Non-finite loss at step %d (diagnostics: %s)", step, dump)
                raise NonFiniteLoss(f"non-finite loss at step {step}: {loss.as_dict()}")
            optimizer.zero_grad(set_to_none=True)
            loss.total.backward()
            grad_norm = torch.nn.utils.clip_grad_norm_(params, max_norm=float("inf"))
            optimizer.step()

            probs = logits[: labels.numel()].detach().softmax(dim=-1)[:, 1].cpu().tolist()
            seen.extend(zip(videos.tolist(), probs))
            log.write("step", step=step, epoch=epoch, lr=lr, grad_norm=float(grad_norm),
                      batch=int(labels.numel()), synthetic=n_extended, **loss.as_dict())
            step += 1
            if step >= total_steps:
                break

        train_auroc = _train_auroc(seen, video_targets)
        val_report = score_manifest(model, val_manifest, batch_size=config.eval_batch_size, device=str(device_t))
        model.train()
        val_auroc = val_report.auroc
        record = {
            "epoch": epoch,
            "step": step,
            "train_auroc": train_auroc,
            "val_auroc": val_auroc,
            "lr_end": lr_at(schedule.state(max(step - 1, 0)), config),
        }
        history = [h for h in history if h["epoch"] != epoch]
        history.append(record)
        log.write("epoch", wall_time=round(time.perf_counter() - started, 3), **record)
        logger.info(
            "Epoch %d: train AUROC %s, val AUROC %.4f",
            epoch,
            "n/a" if train_auroc is None else f"{train_auroc:.4f}",
            val_auroc,
        )
        if best_val is None or val_auroc > best_val:
            best_val, best_epoch = val_auroc, epoch
            best_state = copy.deepcopy({k: v.detach().cpu() for k, v in model.state_dict().items()})
            if out:
                _save("best.ckpt", epoch)
        if out:
            _save("last.ckpt", epoch)

    if best_state is not None:
        model.load_state_dict(best_state)
    elif out and (out / "best.ckpt").exists():
        model.load_state_dict(checkpoint_load(out / "best.ckpt", weights=weights).model.state_dict())
    model.eval()
    logger.info("Best validation AUROC %s at epoch %d", best_val, best_epoch)
    return TrainResult(
        model=model,
        log=log,
        best_epoch=best_epoch,
        best_val_auroc=best_val,
        steps=step,
        history=history,
        checkpoint_path=(out / "best.ckpt") if out else None,
    )


__all__ = [
    "SlerpPlan",
    "plan_extension",
    "apply_extension",
    "extend_batch_slerp",
    "TrainingLog",
    "TrainResult",
    "objective",
    "train",
]
