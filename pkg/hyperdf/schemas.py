"""Declarative types: configs, manifests, reports."""

from __future__ import annotations

import hashlib
import math
from enum import Enum
from typing import Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

TOOL_VERSION = "0.4.0"


class LossWeights(BaseModel):
    alpha: float = Field(0.1, ge=0.0)
    beta: float = Field(0.5, ge=0.0)

    @model_validator(mode="after")
    def _validate_finite(self) -> "LossWeights":
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("loss weights must be finite")
        return self


class PolicyKind(str, Enum):
    HEAD_ONLY = "head_only"
    LN_ONLY = "ln_only"
    BIAS_ONLY = "bias_only"
    LOW_RANK = "low_rank"
    FULL = "full"


class ParamPolicy(BaseModel):
    kind: PolicyKind = PolicyKind.LN_ONLY
    rank: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _validate_rank(self) -> "ParamPolicy":
        if self.kind is PolicyKind.LOW_RANK:
            if self.rank is None:
                self.rank = 1
        elif self.rank is not None:
            raise ValueError("rank is only valid for the low_rank policy")
        return self

    @property
    def label(self) -> str:
        if self.kind is PolicyKind.LOW_RANK:
            return f"low_rank(r={self.rank})"
        return self.kind.value


class Backbone(str, Enum):
    TINY_VIT = "tiny_vit"
    PRETRAINED_CLIP_VISION = "pretrained_clip_vision"


CLIP_L14_CONTRACT = {"image_size": 224, "patch_size": 14, "width": 1024, "depth": 24, "heads": 16}


class EncoderSpec(BaseModel):
    backbone: Backbone = Backbone.TINY_VIT
    image_size: int = Field(64, ge=8)
    patch_size: int = Field(8, ge=1)
    width: int = Field(64, ge=2)
    depth: int = Field(4, ge=1)
    heads: int = Field(4, ge=1)
    mlp_ratio: int = Field(4, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _clip_defaults(cls, data):
        if isinstance(data, dict) and data.get("backbone") in (
            Backbone.PRETRAINED_CLIP_VISION,
            Backbone.PRETRAINED_CLIP_VISION.value,
        ):
            return {**CLIP_L14_CONTRACT, **data}
        return data

    @model_validator(mode="after")
    def _validate_shape(self) -> "EncoderSpec":
        if self.image_size % self.patch_size:
            raise ValueError("image_size must be a multiple of patch_size")
        if self.width % self.heads:
            raise ValueError("width must be divisible by heads")
        if self.backbone is Backbone.PRETRAINED_CLIP_VISION:
            for key, expected in CLIP_L14_CONTRACT.items():
                if getattr(self, key) != expected:
                    raise ValueError(f"pretrained CLIP vision encoder requires {key}={expected}")
        return self

    @property
    def num_tokens(self) -> int:
        """Patch tokens plus the class token."""
        return (self.image_size // self.patch_size) ** 2 + 1

    @classmethod
    def tiny(cls, **overrides) -> "EncoderSpec":
        return cls(**overrides)

    @classmethod
    def clip_vit_l14(cls) -> "EncoderSpec":
        return cls(backbone=Backbone.PRETRAINED_CLIP_VISION)


class AugmentConfig(BaseModel):
    """Probabilities and magnitudes of the training-time image augmentations."""

    flip_p: float = Field(0.5, ge=0.0, le=1.0)
    affine_p: float = Field(0.3, ge=0.0, le=1.0)
    affine_degrees: float = Field(10.0, ge=0.0)
    affine_translate: float = Field(0.05, ge=0.0, le=0.5)
    affine_scale: tuple[float, float] = (0.9, 1.1)
    blur_p: float = Field(0.1, ge=0.0, le=1.0)
    blur_sigma: tuple[float, float] = (0.1, 2.0)
    jitter_p: float = Field(0.3, ge=0.0, le=1.0)
    jitter_brightness: float = Field(0.2, ge=0.0)
    jitter_contrast: float = Field(0.2, ge=0.0)
    jitter_saturation: float = Field(0.2, ge=0.0)
    jitter_hue: float = Field(0.05, ge=0.0, le=0.5)
    jpeg_p: float = Field(0.3, ge=0.0, le=1.0)
    jpeg_quality: tuple[int, int] = (30, 90)

    @model_validator(mode="after")
    def _validate_ranges(self) -> "AugmentConfig":
        for name in ("affine_scale", "blur_sigma", "jpeg_quality"):
            lo, hi = getattr(self, name)
            if lo > hi or lo <= 0:
                raise ValueError(f"{name} must be an increasing positive range")
        if self.jpeg_quality[1] > 100:
            raise ValueError("jpeg_quality must lie in (0, 100]")
        return self

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(flip_p=0.0, affine_p=0.0, blur_p=0.0, jitter_p=0.0, jpeg_p=0.0)


class PreprocessConfig(BaseModel):
    frames_per_video: int = Field(32, ge=1)
    bbox_margin: float = Field(1.3, ge=1.0)
    crop_size: int = Field(256, ge=8)
    detector: str = "stub"
    alignment: bool = True
    output_format: Literal["png", "bmp"] = "png"

    def fingerprint(self) -> str:
        payload = self.model_dump_json()
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class SyntheticSpec(BaseModel):
    """Parameters of a procedurally rendered desk-scale dataset."""

    name: str = "synthetic"
    identities: int = Field(40, ge=2)
    generators: int = Field(3, ge=1)
    train_generators: Optional[int] = Field(None, ge=1)
    frames: int = Field(8, ge=1)
    image_size: int = Field(64, ge=16)
    artifact_amplitude: float = Field(0.06, ge=0.0)
    identity_confound: float = Field(0.5, ge=0.0)
    val_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    test_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    year: int = 2019
    generator_offset: int = Field(0, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _validate_splits(self) -> "SyntheticSpec":
        if self.train_generators is None:
            self.train_generators = max(1, self.generators - 1)
        if self.train_generators > self.generators:
            raise ValueError("train_generators cannot exceed generators")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("val_fraction + test_fraction must leave identities for training")
        return self


class Precision(str, Enum):
    FULL = "full"
    REDUCED = "reduced"


class TrainConfig(BaseModel):
    batch_size: int = Field(128, ge=1)
    extended_batch_size: int = Field(1024, ge=1)
    eval_batch_size: int = Field(256, ge=1)
    lr_min: float = Field(1e-5, gt=0.0)
    lr_max: float = Field(3e-4, gt=0.0)
    warmup_epochs: int = Field(1, ge=1)
    decay_epochs: int = Field(9, ge=1)
    max_cycles: int = Field(2, ge=1)
    max_steps: Optional[int] = Field(None, ge=1)
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, ge=0.0, lt=1.0)
    weight_decay: float = Field(0.0, ge=0.0)
    allow_weight_decay: bool = False
    precision: Precision = Precision.REDUCED
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    policy: ParamPolicy = Field(default_factory=ParamPolicy)
    encoder: EncoderSpec = Field(default_factory=EncoderSpec)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    l2_normalize: bool = True
    slerp_extension: bool = True
    balance_classes: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def _validate_training(self) -> "TrainConfig":
        if self.extended_batch_size < self.batch_size:
            raise ValueError("extended_batch_size must be >= batch_size")
        if self.extended_batch_size % self.batch_size:
            raise ValueError("extended_batch_size must be a multiple of batch_size")
        if self.lr_min >= self.lr_max:
            raise ValueError("lr_min must be < lr_max")
        if self.weight_decay > 0 and not self.allow_weight_decay:
            raise ValueError("weight_decay > 0 requires allow_weight_decay=true")
        if not self.l2_normalize:
            uses_sphere = self.loss_weights.alpha > 0 or self.loss_weights.beta > 0
            if uses_sphere or self.extends_batch:
                raise ValueError("slerp extension and alignment/uniformity require l2_normalize")
        return self

    @property
    def extends_batch(self) -> bool:
        return self.slerp_extension and self.extended_batch_size > self.batch_size

    @property
    def cycle_length_epochs(self) -> int:
        return self.warmup_epochs + self.decay_epochs

    @property
    def total_epochs(self) -> int:
        return self.max_cycles * self.cycle_length_epochs

    def fingerprint(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()[:16]


Label = Literal["real", "fake"]
Split = Literal["train", "val", "test"]
UNKNOWN_SOURCE = "unknown"


class VideoRecord(BaseModel):
    video_id: str
    label: Label
    source_id: str
    generator: str
    frame_paths: List[str] = Field(min_length=1)
    split: Split
    dataset: str
    year: int

    @model_validator(mode="after")
    def _validate_source(self) -> "VideoRecord":
        if self.label == "real" and self.source_id != self.video_id:
            raise ValueError(f"real video {self.video_id} must be its own source")
        return self

    @property
    def target(self) -> int:
        return 1 if self.label == "fake" else 0


class DatasetManifest(BaseModel):
    name: str
    preprocessing_fingerprint: str
    records: List[VideoRecord] = Field(default_factory=list)
    created_at: Optional[str] = None
    tool_version: str = TOOL_VERSION
    excluded: Dict[str, str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _validate_unique(self) -> "DatasetManifest":
        seen: set[str] = set()
        for record in self.records:
            if record.video_id in seen:
                raise ValueError(f"duplicate video_id {record.video_id}")
            seen.add(record.video_id)
        return self

    @property
    def reals(self) -> List[VideoRecord]:
        return [r for r in self.records if r.label == "real"]

    @property
    def fakes(self) -> List[VideoRecord]:
        return [r for r in self.records if r.label == "fake"]

    @property
    def dataset(self) -> str:
        names = sorted({r.dataset for r in self.records})
        return names[0] if len(names) == 1 else self.name

    @property
    def year(self) -> Optional[int]:
        years = [r.year for r in self.records]
        return min(years) if years else None

    @property
    def n_frames(self) -> int:
        return sum(len(r.frame_paths) for r in self.records)

    def subset(
        self,
        *,
        split: Optional[str] = None,
        generators: Optional[Sequence[str]] = None,
        name: Optional[str] = None,
    ) -> "DatasetManifest":
        """Filter records; ``generators`` restricts fakes only, reals are always kept."""
        keep = []
        for record in self.records:
            if split is not None and record.split != split:
                continue
            if generators is not None and record.label == "fake" and record.generator not in generators:
                continue
            keep.append(record)
        return self.model_copy(update={"records": keep, "name": name or self.name})


class VideoScore(BaseModel):
    video_id: str
    label: int = Field(ge=0, le=1)
    frame_probs: List[float] = Field(min_length=1)
    video_prob: float = Field(ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _validate_mean(self) -> "VideoScore":
        mean = math.fsum(self.frame_probs) / len(self.frame_probs)
        if abs(mean - self.video_prob) > 1e-7:
            raise ValueError("video_prob must equal the mean of frame_probs")
        return self


class EvalReport(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    dataset: str
    n_real: int
    n_fake: int
    auroc: float = Field(ge=0.0, le=1.0)
    per_video: List[VideoScore]
    model_fingerprint: str
    config_fingerprint: str
    skipped_frames: int = 0
    excluded_videos: List[str] = Field(default_factory=list)

    @field_validator("per_video")
    @classmethod
    def _validate_videos(cls, value: List[VideoScore]) -> List[VideoScore]:
        if not value:
            raise ValueError("report needs at least one scored video")
        return value


class BenchmarkSummary(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    model_fingerprint: str
    datasets: List[str]
    aurocs: List[float]
    mean_auroc: float


__all__ = [
    "TOOL_VERSION",
    "LossWeights",
    "PolicyKind",
    "ParamPolicy",
    "Backbone",
    "EncoderSpec",
    "AugmentConfig",
    "PreprocessConfig",
    "SyntheticSpec",
    "Precision",
    "TrainConfig",
    "VideoRecord",
    "DatasetManifest",
    "UNKNOWN_SOURCE",
    "VideoScore",
    "EvalReport",
    "BenchmarkSummary",
]
