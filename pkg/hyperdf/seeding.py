"""Root-seed derivation.

Every random stream in a run is seeded from one root seed plus a label path,
e.g. ``derive_seed(7, "order", 3)`` for the epoch-3 data order. The mapping is
``int(sha256("7:order:3")[:8], 16)`` so it is stable across processes and
platforms.
"""

from __future__ import annotations

import hashlib
from typing import Union

import numpy as np
import torch

Label = Union[str, int]


def derive_seed(root: int, *labels: Label) -> int:
    key = ":".join([str(root), *(str(label) for label in labels)])
    return int(hashlib.sha256(key.encode("utf-8")).hexdigest()[:8], 16)


def torch_generator(root: int, *labels: Label) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(derive_seed(root, *labels))
    return gen


def numpy_rng(root: int, *labels: Label) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *labels))


__all__ = ["derive_seed", "torch_generator", "numpy_rng"]
