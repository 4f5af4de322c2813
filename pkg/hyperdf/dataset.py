"""Frame-level torch dataset over a manifest."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import torch
import torchvision.transforms.functional as TF
from PIL import Image
from torch.utils.data import DataLoader, Dataset

from .augment import augment
from .config import settings
from .encoder import IMAGE_MEAN, IMAGE_STD
from .schemas import AugmentConfig, DatasetManifest
from .seeding import numpy_rng, torch_generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameItem:
    path: str
    label: int
    video: int


class FrameDataset(Dataset):
    """One item per crop: ``(image, label, video index, item index)``.

    With ``train=True`` every item is augmented with an RNG derived from
    ``(seed, epoch, index)``; call ``set_epoch`` before each epoch.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        image_size: int,
        *,
        train: bool = False,
        augment_config: Optional[AugmentConfig] = None,
        seed: int = 0,
        skip_missing: bool = False,
    ) -> None:
        self.image_size = image_size
        self.train = train
        self.augment_config = augment_config or AugmentConfig()
        self.seed = seed
        self.epoch = 0
        self.items: List[FrameItem] = []
        self.skipped = 0
        for v, record in enumerate(manifest.records):
            for path in record.frame_paths:
                if skip_missing and not Path(path).is_file():
                    self.skipped += 1
                    continue
                self.items.append(FrameItem(path=path, label=record.target, video=v))
        if self.skipped:
            logger.warning("Skipped %d missing frames of %s", self.skipped, manifest.name)

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.items)

    @property
    def labels(self) -> torch.Tensor:
        return torch.tensor([item.label for item in self.items], dtype=torch.long)

    def load(self, index: int) -> torch.Tensor:
        item = self.items[index]
        with Image.open(item.path) as img:
            image = img.convert("RGB")
        if self.train:
            image = augment(image, numpy_rng(self.seed, "aug", self.epoch, index), self.augment_config)
        if image.size != (self.image_size, self.image_size):
            image = TF.resize(image, [self.image_size, self.image_size], antialias=True)
        tensor = TF.to_tensor(image)
        return TF.normalize(tensor, IMAGE_MEAN, IMAGE_STD)

    def __getitem__(self, index: int):
        item = self.items[index]
        return self.load(index), item.label, item.video, index


def epoch_order(labels: torch.Tensor, seed: int, epoch: int, *, balance_classes: bool = False) -> List[int]:
    """Item order for one epoch, a pure function of ``(seed, epoch)``."""
    n = int(labels.numel())
    gen = torch_generator(seed, "order", epoch)
    if not balance_classes:
        return torch.randperm(n, generator=gen).tolist()
    counts = torch.bincount(labels, minlength=2).to(torch.float64)
    weights = 1.0 / counts.clamp(min=1.0)[labels]
    return torch.multinomial(weights, n, replacement=True, generator=gen).tolist()


def frame_loader(dataset: FrameDataset, order: Sequence[int], batch_size: int) -> DataLoader:
    return DataLoader(
        dataset,
        batch_size=batch_size,
        sampler=list(order),
        shuffle=False,
        num_workers=settings.NUM_WORKERS,
    )


__all__ = ["FrameItem", "FrameDataset", "epoch_order", "frame_loader"]
