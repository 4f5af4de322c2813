"""Vision encoders and the detector model built on top of them.

The detector is: encoder -> class token -> (optional) L2 normalization ->
linear head with two logits, column 0 real and column 1 fake.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ShapeMismatch
from .hypersphere import l2_normalize
from .schemas import Backbone, EncoderSpec, ParamPolicy

logger = logging.getLogger(__name__)

# CLIP image statistics; the tiny backbone uses them too so crops are fed identically.
IMAGE_MEAN = (0.48145466, 0.4578275, 0.40821073)
IMAGE_STD = (0.26862954, 0.26130258, 0.27577711)
HEAD_INIT_STD = 0.01


class PatchEmbedding(nn.Module):
    def __init__(self, image_size: int, patch_size: int, width: int) -> None:
        super().__init__()
        self.num_patches = (image_size // patch_size) ** 2
        self.proj = nn.Conv2d(3, width, kernel_size=patch_size, stride=patch_size)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(x).flatten(2).transpose(1, 2)


class Attention(nn.Module):
    def __init__(self, width: int, heads: int) -> None:
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(width, 3 * width)
        self.proj = nn.Linear(width, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv.unbind(0)
        out = F.scaled_dot_product_attention(q, k, v)
        return self.proj(out.transpose(1, 2).reshape(b, n, d))


class Mlp(nn.Module):
    def __init__(self, width: int, hidden: int) -> None:
        super().__init__()
        self.fc1 = nn.Linear(width, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, width)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    """Pre-LN transformer block."""

    def __init__(self, width: int, heads: int, mlp_ratio: int) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(width)
        self.attn = Attention(width, heads)
        self.norm2 = nn.LayerNorm(width)
        self.mlp = Mlp(width, width * mlp_ratio)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class TinyViT(nn.Module):
    """Desk-scale ViT with a class token; returns the final-LN class token."""

    def __init__(self, spec: EncoderSpec) -> None:
        super().__init__()
        self.patch_embed = PatchEmbedding(spec.image_size, spec.patch_size, spec.width)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, spec.width))
        self.pos_embed = nn.Parameter(torch.zeros(1, spec.num_tokens, spec.width))
        self.blocks = nn.ModuleList(
            [Block(spec.width, spec.heads, spec.mlp_ratio) for _ in range(spec.depth)]
        )
        self.norm = nn.LayerNorm(spec.width)
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        x = self.patch_embed(images)
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1) + self.pos_embed
        for block in self.blocks:
            x = block(x)
        return self.norm(x[:, 0])


class ClipVisionEncoder(nn.Module):
    """Adapter over ``transformers.CLIPVisionModel``; patch tokens are discarded."""

    def __init__(self, vision_model: nn.Module) -> None:
        super().__init__()
        self.vision = vision_model

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.vision(pixel_values=images).pooler_output


@dataclass
class ModelOutput:
    features: torch.Tensor
    logits: torch.Tensor

    @property
    def fake_probs(self) -> torch.Tensor:
        return self.logits.softmax(dim=-1)[:, 1]


class DetectorModel(nn.Module):
    def __init__(
        self,
        encoder: nn.Module,
        spec: EncoderSpec,
        policy: ParamPolicy,
        *,
        l2_normalize: bool = True,
    ) -> None:
        super().__init__()
        self.encoder = encoder
        self.head = nn.Linear(spec.width, 2)
        self.spec = spec
        self.policy = policy
        self.l2_normalize = l2_normalize

    def check_input(self, images: torch.Tensor) -> None:
        expected = (3, self.spec.image_size, self.spec.image_size)
        if images.dim() != 4 or tuple(images.shape[1:]) != expected:
            raise ShapeMismatch(f"expected images of shape (B, {expected}), got {tuple(images.shape)}")

    def encode(self, images: torch.Tensor, *, reduced_precision: bool = False) -> torch.Tensor:
        """Raw class-token features in float32."""
        self.check_input(images)
        if reduced_precision:
            with torch.autocast(device_type=images.device.type, dtype=torch.bfloat16):
                tokens = self.encoder(images)
        else:
            tokens = self.encoder(images)
        return tokens.float()

    def embed(self, images: torch.Tensor, *, reduced_precision: bool = False) -> torch.Tensor:
        tokens = self.encode(images, reduced_precision=reduced_precision)
        if self.l2_normalize:
            return l2_normalize(tokens)
        return tokens.to(torch.float64)

    def classify(self, features: torch.Tensor) -> torch.Tensor:
        weight = self.head.weight.to(features.dtype)
        bias = self.head.bias.to(features.dtype)
        return F.linear(features, weight, bias)

    def forward(self, images: torch.Tensor, *, reduced_precision: bool = False) -> ModelOutput:
        features = self.embed(images, reduced_precision=reduced_precision)
        return ModelOutput(features=features, logits=self.classify(features))


def build_encoder(spec: EncoderSpec, weights: Optional[str] = None) -> nn.Module:
    if spec.backbone is Backbone.TINY_VIT:
        return TinyViT(spec)
    from .weights import load_clip_vision

    return ClipVisionEncoder(load_clip_vision(weights))


def build_model(
    spec: EncoderSpec,
    policy: ParamPolicy,
    seed: int,
    *,
    l2_normalize: bool = True,
    weights: Optional[str] = None,
) -> DetectorModel:
    """Deterministically initialise a detector and apply the trainable-parameter policy."""
    from .policies import apply_policy

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        encoder = build_encoder(spec, weights)
        model = DetectorModel(encoder, spec, policy, l2_normalize=l2_normalize)
        nn.init.normal_(model.head.weight, mean=0.0, std=HEAD_INIT_STD)
        nn.init.zeros_(model.head.bias)
        apply_policy(model, policy)
    logger.info(
        "Built %s model (policy=%s, l2=%s, seed=%d)",
        spec.backbone.value,
        policy.label,
        l2_normalize,
        seed,
    )
    return model


def forward(model: DetectorModel, images: torch.Tensor) -> ModelOutput:
    """Inference forward pass in eval mode without gradients."""
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            return model(images)
    finally:
        model.train(was_training)


__all__ = [
    "IMAGE_MEAN",
    "IMAGE_STD",
    "TinyViT",
    "ClipVisionEncoder",
    "ModelOutput",
    "DetectorModel",
    "build_encoder",
    "build_model",
    "forward",
]
