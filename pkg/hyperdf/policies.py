"""Trainable-parameter policies: head-only, LN-only, bias-only, low-rank, full."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Set, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import UnsupportedPolicy
from .schemas import ParamPolicy, PolicyKind

logger = logging.getLogger(__name__)

HEAD_PREFIX = "head."
# Linear layers inside attention/MLP blocks (tiny ViT names + transformers CLIP names).
ADAPTED_LINEAR_NAMES = {"qkv", "proj", "fc1", "fc2", "q_proj", "k_proj", "v_proj", "out_proj"}


class LowRankLinear(nn.Module):
    """Frozen ``nn.Linear`` plus an additive rank-r delta ``B @ A`` (B starts at zero)."""

    def __init__(self, base: nn.Linear, rank: int, alpha: float | None = None) -> None:
        super().__init__()
        self.base = base
        self.rank = rank
        self.scaling = (alpha if alpha is not None else rank) / rank
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))

    @property
    def in_features(self) -> int:
        return self.base.in_features

    @property
    def out_features(self) -> int:
        return self.base.out_features

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        delta = F.linear(F.linear(x, self.lora_a), self.lora_b)
        return self.base(x) + self.scaling * delta


def _adaptable_linears(model: nn.Module) -> List[tuple[nn.Module, str, nn.Linear]]:
    found = []
    encoder = getattr(model, "encoder", model)
    for parent in encoder.modules():
        if isinstance(parent, LowRankLinear):
            continue
        for child_name, child in parent.named_children():
            if child_name in ADAPTED_LINEAR_NAMES and isinstance(child, nn.Linear):
                found.append((parent, child_name, child))
    return found


def apply_low_rank(model: nn.Module, rank: int) -> nn.Module:
    """Wrap every attention/MLP weight matrix of the encoder with a rank-``rank`` adapter."""
    if rank < 1:
        raise UnsupportedPolicy("low-rank adapters need rank >= 1")
    targets = _adaptable_linears(model)
    if not targets:
        raise UnsupportedPolicy("encoder has no attention/MLP linear layers to adapt")
    limit = min(min(lin.in_features, lin.out_features) for _, _, lin in targets)
    if rank > limit:
        raise UnsupportedPolicy(f"rank {rank} exceeds the smallest adapted dimension {limit}")
    for parent, child_name, linear in targets:
        setattr(parent, child_name, LowRankLinear(linear, rank))
    logger.debug("Attached rank-%d adapters to %d linear layers", rank, len(targets))
    return model


def layer_norm_param_names(model: nn.Module) -> Set[str]:
    names = set()
    for module_name, module in model.named_modules():
        if isinstance(module, nn.LayerNorm) and not module_name.startswith("head"):
            for param_name, _ in module.named_parameters(recurse=False):
                names.add(f"{module_name}.{param_name}")
    return names


def _selected(model: nn.Module, policy: ParamPolicy) -> Set[str]:
    names = [name for name, _ in model.named_parameters()]
    head = {n for n in names if n.startswith(HEAD_PREFIX)}
    if policy.kind is PolicyKind.HEAD_ONLY:
        return head
    if policy.kind is PolicyKind.LN_ONLY:
        return head | layer_norm_param_names(model)
    if policy.kind is PolicyKind.BIAS_ONLY:
        # LN shifts are named "bias" and are therefore part of this set.
        return head | {n for n in names if n.rsplit(".", 1)[-1] == "bias"}
    if policy.kind is PolicyKind.LOW_RANK:
        return head | {n for n in names if n.rsplit(".", 1)[-1] in ("lora_a", "lora_b")}
    return set(names)


def apply_policy(model: nn.Module, policy: ParamPolicy) -> nn.Module:
    if policy.kind is PolicyKind.LOW_RANK:
        apply_low_rank(model, policy.rank or 1)
    selected = _selected(model, policy)
    for name, param in model.named_parameters():
        param.requires_grad_(name in selected)
    model.policy = policy
    trainable, total = count_parameters(model)
    logger.info(
        "Policy %s: %d / %d parameters trainable (%.4f%%)",
        policy.label,
        trainable,
        total,
        100.0 * trainable / max(total, 1),
    )
    return model


def trainable_mask(model: nn.Module) -> Dict[str, bool]:
    return {name: bool(param.requires_grad) for name, param in model.named_parameters()}


def count_parameters(model: nn.Module, *, encoder_only: bool = False) -> tuple[int, int]:
    """(trainable, total) parameter counts, optionally excluding the head."""
    trainable = total = 0
    for name, param in model.named_parameters():
        if encoder_only and name.startswith(HEAD_PREFIX):
            continue
        total += param.numel()
        if param.requires_grad:
            trainable += param.numel()
    return trainable, total


def trainable_parameters(model: nn.Module) -> Iterable[nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


def write_audit(model: nn.Module, path: Union[str, Path]) -> Path:
    """One line per parameter: name, shape, trainable flag; summary line last."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, param in model.named_parameters():
        shape = "x".join(str(s) for s in param.shape) or "scalar"
        lines.append(f"{name}\t{shape}\t{str(param.requires_grad).lower()}")
    trainable, total = count_parameters(model)
    policy = getattr(model, "policy", None)
    label = policy.label if policy is not None else "unknown"
    lines.append(f"# policy={label} trainable={trainable} total={total}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


__all__ = [
    "LowRankLinear",
    "apply_low_rank",
    "apply_policy",
    "layer_norm_param_names",
    "trainable_mask",
    "count_parameters",
    "trainable_parameters",
    "write_audit",
]
