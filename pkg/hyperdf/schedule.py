"""Cyclic cosine learning-rate schedule with linear warmup, indexed by optimizer step."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict

import torch

from .schemas import TrainConfig


@dataclass(frozen=True)
class ScheduleState:
    step: int
    steps_per_epoch: int
    cycle_length_epochs: int

    def __post_init__(self) -> None:
        if self.step < 0 or self.steps_per_epoch < 1 or self.cycle_length_epochs < 1:
            raise ValueError("invalid schedule state")


def lr_at(state: ScheduleState, config: TrainConfig) -> float:
    """Learning rate for ``state.step``.

    Within a cycle: linear from ``lr_min`` to ``lr_max`` over the warmup epochs,
    then cosine from ``lr_max`` down to ``lr_min`` over the decay epochs, the
    last decay step landing exactly on ``lr_min``.
    """
    spe = state.steps_per_epoch
    cycle_steps = state.cycle_length_epochs * spe
    warmup_steps = config.warmup_epochs * spe
    position = state.step % cycle_steps
    span = config.lr_max - config.lr_min
    if position < warmup_steps:
        return config.lr_min + span * position / warmup_steps
    decay_steps = cycle_steps - warmup_steps
    q = (position - warmup_steps) / (decay_steps - 1) if decay_steps > 1 else 1.0
    return config.lr_min + 0.5 * span * (1.0 + math.cos(math.pi * q))


class CyclicCosineSchedule:
    """Writes ``lr_at`` into every parameter group of an optimizer.

    The rate is assigned, not multiplied, so the value the optimizer uses is
    the closed-form value bit for bit.
    """

    def __init__(self, optimizer: torch.optim.Optimizer, config: TrainConfig, steps_per_epoch: int) -> None:
        self.optimizer = optimizer
        self.config = config
        self.steps_per_epoch = steps_per_epoch
        self.step_index = 0

    def state(self, step: int | None = None) -> ScheduleState:
        return ScheduleState(
            step=self.step_index if step is None else step,
            steps_per_epoch=self.steps_per_epoch,
            cycle_length_epochs=self.config.cycle_length_epochs,
        )

    def set_step(self, step: int) -> float:
        self.step_index = step
        lr = lr_at(self.state(), self.config)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        return lr

    @property
    def total_steps(self) -> int:
        return self.config.total_epochs * self.steps_per_epoch

    def state_dict(self) -> Dict[str, Any]:
        return asdict(self.state())

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        if state["steps_per_epoch"] != self.steps_per_epoch:
            raise ValueError("schedule was saved for a different number of steps per epoch")
        self.set_step(int(state["step"]))


__all__ = ["ScheduleState", "lr_at", "CyclicCosineSchedule"]
