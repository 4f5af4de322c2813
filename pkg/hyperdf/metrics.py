"""Video-level score aggregation and rank-based AUROC."""

from __future__ import annotations

import math
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyVideo, SingleClass


def aggregate_video(frame_probs: Sequence[float]) -> float:
    """Arithmetic mean of per-frame fake probabilities."""
    if len(frame_probs) == 0:
        raise EmptyVideo("cannot score a video without frames")
    return math.fsum(float(p) for p in frame_probs) / len(frame_probs)


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUROC with midranks: P(fake > real) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(f"AUROC needs both classes (got {n_pos} fake, {n_neg} real)")
    ranks = rankdata(scores, method="average")
    rank_sum = math.fsum(ranks[labels == 1])
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def video_scores(frame_probs: Iterable[Tuple[int, float]]) -> Dict[int, List[float]]:
    """Group (video index, frame prob) pairs by video, keeping frame order."""
    grouped: Dict[int, List[float]] = {}
    for video, prob in frame_probs:
        grouped.setdefault(int(video), []).append(float(prob))
    return grouped


__all__ = ["aggregate_video", "auroc", "video_scores"]
