"""Procedurally rendered desk-scale datasets with exact real/fake pairing.

Each identity is a face-like ellipse with its own colours and a smooth texture
whose contrast is ``identity_confound`` (high-level appearance). A fake video
is its source real video, frame by frame, plus a low-amplitude artifact made of
a blending seam along the face boundary (shared by all generators) and a
generator-specific high-frequency grating and noise pattern.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
from PIL import Image
from tqdm import tqdm

from .schemas import DatasetManifest, PreprocessConfig, SyntheticSpec, VideoRecord
from .seeding import numpy_rng

logger = logging.getLogger(__name__)

FRAME_NOISE = 0.01
MAX_SHIFT = 2


@dataclass(frozen=True)
class Identity:
    background: np.ndarray
    skin: np.ndarray
    waves: np.ndarray  # (2, 4): frequency, orientation, phase, unused
    channel_weights: np.ndarray  # (2, 3)


@dataclass(frozen=True)
class GeneratorPattern:
    seam_strength: float
    frequency: float
    orientation: float
    phase: float
    noise: np.ndarray
    colour: np.ndarray


def generator_name(index: int) -> str:
    return f"gen{index:02d}"


def training_generators(spec: SyntheticSpec) -> List[str]:
    start = spec.generator_offset
    return [generator_name(start + g) for g in range(spec.train_generators or spec.generators)]


def heldout_generators(spec: SyntheticSpec) -> List[str]:
    start = spec.generator_offset
    return [generator_name(start + g) for g in range(spec.train_generators or 0, spec.generators)]


def _identity(spec: SyntheticSpec, k: int) -> Identity:
    rng = numpy_rng(spec.seed, spec.name, "identity", k)
    waves = np.stack(
        [
            rng.uniform(1.0, 3.0, size=2),
            rng.uniform(0.0, np.pi, size=2),
            rng.uniform(0.0, 2 * np.pi, size=2),
            np.zeros(2),
        ],
        axis=1,
    )
    return Identity(
        background=rng.uniform(0.15, 0.85, size=3),
        skin=rng.uniform(0.3, 0.8, size=3),
        waves=waves,
        channel_weights=rng.uniform(-1.0, 1.0, size=(2, 3)),
    )


def _pattern(spec: SyntheticSpec, index: int) -> GeneratorPattern:
    # Keyed by global generator index only, so suites can share or separate families.
    rng = numpy_rng(0, "generator", index)
    return GeneratorPattern(
        seam_strength=float(rng.uniform(0.6, 1.0)),
        frequency=float(rng.uniform(0.2, 0.45)),
        orientation=float(rng.uniform(0.0, np.pi)),
        phase=float(rng.uniform(0.0, 2 * np.pi)),
        noise=rng.choice([-1.0, 1.0], size=(spec.image_size, spec.image_size)),
        colour=rng.uniform(0.5, 1.0, size=3) * rng.choice([-1.0, 1.0], size=3),
    )


def _geometry(size: int, dx: int, dy: int):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx, cy = size / 2 + dx, size / 2 + dy
    rx, ry = 0.3 * size, 0.38 * size
    radius = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    mask = radius <= 1.0
    seam = np.abs(radius - 1.0) < (1.5 / rx)
    return xx, yy, mask, seam


def _render_real(spec: SyntheticSpec, ident: Identity, rng: np.random.Generator) -> tuple[np.ndarray, tuple]:
    size = spec.image_size
    dx, dy = (int(v) for v in rng.integers(-MAX_SHIFT, MAX_SHIFT + 1, size=2))
    xx, yy, mask, seam = _geometry(size, dx, dy)
    image = np.broadcast_to(ident.background, (size, size, 3)).copy()
    texture = np.zeros((size, size, 3))
    for (freq, theta, phase, _), weights in zip(ident.waves, ident.channel_weights):
        wave = np.cos(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) / size + phase)
        texture += wave[..., None] * weights
    face = ident.skin + 0.25 * spec.identity_confound * texture
    face = face * rng.uniform(0.97, 1.03)
    image[mask] = face[mask]
    image += rng.normal(0.0, FRAME_NOISE, size=image.shape)
    return image, (xx, yy, mask, seam, dx, dy)


def _artifact(pattern: GeneratorPattern, geometry: tuple, size: int) -> np.ndarray:
    xx, yy, mask, seam, dx, dy = geometry
    grating = np.cos(
        2 * np.pi * pattern.frequency * ((xx - dx) * np.cos(pattern.orientation) + (yy - dy) * np.sin(pattern.orientation))
        + pattern.phase
    )
    noise = np.roll(pattern.noise, shift=(dy, dx), axis=(0, 1))
    specific = (0.6 * grating + 0.4 * noise) * mask
    shared = pattern.seam_strength * seam.astype(np.float64)
    signal = 0.5 * shared + 0.5 * specific
    return signal[..., None] * pattern.colour


def _to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)


def _split_of(spec: SyntheticSpec) -> Dict[int, str]:
    order = numpy_rng(spec.seed, spec.name, "splits").permutation(spec.identities)
    n_test = int(round(spec.test_fraction * spec.identities))
    n_val = int(round(spec.val_fraction * spec.identities))
    splits = {}
    for rank, k in enumerate(order):
        splits[int(k)] = "test" if rank < n_test else "val" if rank < n_test + n_val else "train"
    return splits


def synthetic_fingerprint(spec: SyntheticSpec) -> str:
    config = PreprocessConfig(frames_per_video=spec.frames, crop_size=spec.image_size, detector="synthetic")
    return config.fingerprint()


def generate_synthetic_dataset(spec: SyntheticSpec, out_dir: Union[str, Path]) -> DatasetManifest:
    """Render every video of ``spec`` to PNG frames under ``out_dir`` and return its manifest."""
    out_dir = Path(out_dir) / spec.name
    splits = _split_of(spec)
    patterns = {
        generator_name(spec.generator_offset + g): _pattern(spec, spec.generator_offset + g)
        for g in range(spec.generators)
    }
    records: List[VideoRecord] = []
    for k in tqdm(range(spec.identities), desc=f"render {spec.name}", disable=None):
        ident = _identity(spec, k)
        real_id = f"{spec.name}/real/{k:04d}"
        frame_paths: Dict[str, List[str]] = {"real": [], **{g: [] for g in patterns}}
        for f in range(spec.frames):
            rng = numpy_rng(spec.seed, spec.name, "frame", k, f)
            image, geometry = _render_real(spec, ident, rng)
            outputs = {"real": image}
            for gen, pattern in patterns.items():
                outputs[gen] = image + spec.artifact_amplitude * _artifact(pattern, geometry, spec.image_size)
            for tag, pixels in outputs.items():
                path = out_dir / tag / f"{k:04d}" / f"{f:03d}.png"
                path.parent.mkdir(parents=True, exist_ok=True)
                Image.fromarray(_to_uint8(pixels)).save(path, format="PNG")
                frame_paths[tag].append(str(path.resolve()))
        common = {"split": splits[k], "dataset": spec.name, "year": spec.year}
        records.append(
            VideoRecord(
                video_id=real_id, label="real", source_id=real_id, generator="real",
                frame_paths=frame_paths["real"], **common,
            )
        )
        for gen in patterns:
            records.append(
                VideoRecord(
                    video_id=f"{spec.name}/{gen}/{k:04d}", label="fake", source_id=real_id, generator=gen,
                    frame_paths=frame_paths[gen], **common,
                )
            )
    logger.info(
        "Rendered synthetic dataset %s: %d real, %d fake videos",
        spec.name,
        spec.identities,
        spec.identities * spec.generators,
    )
    return DatasetManifest(
        name=spec.name,
        preprocessing_fingerprint=synthetic_fingerprint(spec),
        records=records,
    )


def standard_splits(manifest: DatasetManifest, spec: SyntheticSpec) -> Dict[str, DatasetManifest]:
    """Train on the training generators; validate and test on the held-out ones."""
    seen, unseen = training_generators(spec), heldout_generators(spec) or training_generators(spec)
    return {
        "train": manifest.subset(split="train", generators=seen, name=f"{spec.name}-train"),
        "val": manifest.subset(split="val", generators=unseen, name=f"{spec.name}-val"),
        "test": manifest.subset(split="test", generators=unseen, name=f"{spec.name}-test"),
    }


def generate_synthetic_suite(specs: Sequence[SyntheticSpec], out_dir: Union[str, Path]) -> List[DatasetManifest]:
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("synthetic suite datasets need distinct names")
    return [generate_synthetic_dataset(spec, out_dir) for spec in specs]


def default_suite(identities: int = 24, frames: int = 4, image_size: int = 64) -> List[SyntheticSpec]:
    """Three datasets from different 'years' with disjoint generator families."""
    return [
        SyntheticSpec(name=f"synth{year}", year=year, generator_offset=3 * i, identities=identities,
                      frames=frames, image_size=image_size, seed=i)
        for i, year in enumerate((2019, 2021, 2025))
    ]


__all__ = [
    "generator_name",
    "training_generators",
    "heldout_generators",
    "generate_synthetic_dataset",
    "generate_synthetic_suite",
    "standard_splits",
    "default_suite",
    "synthetic_fingerprint",
]
