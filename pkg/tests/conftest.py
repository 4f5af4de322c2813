import logging

import pytest
import torch

from hyperdf.schemas import AugmentConfig, EncoderSpec, LossWeights, SyntheticSpec, TrainConfig
from hyperdf.synthetic import generate_synthetic_dataset, standard_splits


@pytest.fixture(autouse=True)
def _quiet_logs(caplog):
    caplog.set_level(logging.WARNING)


@pytest.fixture
def small_spec() -> EncoderSpec:
    return EncoderSpec(image_size=32, patch_size=8, width=32, depth=2, heads=2)


@pytest.fixture
def tiny_config(small_spec) -> TrainConfig:
    return TrainConfig(
        batch_size=12,
        extended_batch_size=48,
        eval_batch_size=64,
        warmup_epochs=1,
        decay_epochs=1,
        max_cycles=1,
        precision="full",
        encoder=small_spec,
        augment=AugmentConfig.disabled(),
        loss_weights=LossWeights(),
        seed=0,
    )


@pytest.fixture(scope="session")
def synth_spec() -> SyntheticSpec:
    return SyntheticSpec(name="synth", identities=10, generators=3, frames=2, image_size=32, seed=3)


@pytest.fixture(scope="session")
def synth_manifest(tmp_path_factory, synth_spec):
    return generate_synthetic_dataset(synth_spec, tmp_path_factory.mktemp("synthetic"))


@pytest.fixture(scope="session")
def synth_splits(synth_manifest, synth_spec):
    return standard_splits(synth_manifest, synth_spec)


@pytest.fixture
def unit_rows():
    def _make(n: int, d: int, seed: int = 0) -> torch.Tensor:
        gen = torch.Generator().manual_seed(seed)
        x = torch.randn(n, d, generator=gen, dtype=torch.float64)
        return x / x.norm(dim=-1, keepdim=True)

    return _make
