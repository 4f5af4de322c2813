"""Training objective: cross-entropy + alpha * alignment + beta * uniformity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict

import torch
import torch.nn.functional as F

from .errors import NoPositivePairs
from .hypersphere import FeatureBatch, pairwise_sq_dists
from .schemas import LossWeights

UNIFORMITY_SCALE = 2.0


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean negative log-softmax of the true class; column 1 is the fake class."""
    return F.cross_entropy(logits.to(torch.float64), labels.long(), reduction="mean")


def _upper_pairs(n: int, device: torch.device) -> tuple[torch.Tensor, torch.Tensor]:
    rows, cols = torch.triu_indices(n, n, offset=1, device=device)
    return rows, cols


def alignment_loss(batch: FeatureBatch) -> torch.Tensor:
    """Mean squared distance over all unordered same-class pairs."""
    rows, cols = _upper_pairs(len(batch), batch.features.device)
    same = batch.labels[rows] == batch.labels[cols]
    if not bool(same.any()):
        raise NoPositivePairs("batch has no two samples of the same class")
    d = pairwise_sq_dists(batch)
    return d[rows[same], cols[same]].mean()


def uniformity_loss(batch: FeatureBatch) -> torch.Tensor:
    """log mean exp(-2 |z_x - z_y|^2) over all unordered pairs, regardless of class."""
    n = len(batch)
    if n < 2:
        raise ValueError("uniformity needs at least two features")
    rows, cols = _upper_pairs(n, batch.features.device)
    d = pairwise_sq_dists(batch)[rows, cols]
    return torch.logsumexp(-UNIFORMITY_SCALE * d, dim=0) - math.log(d.numel())


@dataclass
class LossBreakdown:
    total: torch.Tensor
    cross_entropy: float
    align: float
    uniform: float
    pair_counts: Dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, float]:
        return {
            "total": float(self.total.detach()),
            "cross_entropy": self.cross_entropy,
            "align": self.align,
            "uniform": self.uniform,
            "positive_pairs": self.pair_counts.get("positive_pairs", 0),
            "all_pairs": self.pair_counts.get("all_pairs", 0),
        }


def count_pairs(labels: torch.Tensor) -> Dict[str, int]:
    n = int(labels.numel())
    positives = sum(c * (c - 1) // 2 for c in torch.bincount(labels.long(), minlength=2).tolist())
    return {"positive_pairs": positives, "all_pairs": n * (n - 1) // 2}


def combined_loss(logits: torch.Tensor, batch: FeatureBatch, weights: LossWeights) -> LossBreakdown:
    """Weighted objective; terms with zero weight are skipped (and reported as 0)."""
    ce = cross_entropy(logits, batch.labels)
    total = ce
    align = uniform = None
    if weights.alpha > 0:
        align = alignment_loss(batch)
        total = total + weights.alpha * align
    if weights.beta > 0:
        uniform = uniformity_loss(batch)
        total = total + weights.beta * uniform
    return LossBreakdown(
        total=total,
        cross_entropy=float(ce.detach()),
        align=float(align.detach()) if align is not None else 0.0,
        uniform=float(uniform.detach()) if uniform is not None else 0.0,
        pair_counts=count_pairs(batch.labels),
    )


__all__ = [
    "cross_entropy",
    "alignment_loss",
    "uniformity_loss",
    "combined_loss",
    "count_pairs",
    "LossBreakdown",
]
