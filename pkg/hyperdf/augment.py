"""Training-time image augmentations driven by an explicit numpy RNG.

Every random draw comes from the ``rng`` argument, so a sample's augmentation
is reproducible from its seed alone regardless of which worker handles it.
"""

from __future__ import annotations

import io

import numpy as np
import torchvision.transforms.functional as TF
from PIL import Image

from .schemas import AugmentConfig


def _jpeg(image: Image.Image, quality: int) -> Image.Image:
    buffer = io.BytesIO()
    image.save(buffer, format="JPEG", quality=int(quality))
    buffer.seek(0)
    with Image.open(buffer) as decoded:
        return decoded.convert("RGB")


def augment(image: Image.Image, rng: np.random.Generator, config: AugmentConfig | None = None) -> Image.Image:
    """Flip, affine, blur, colour jitter and JPEG, each applied with its own probability.

    The draw order is fixed and every stage consumes its coin flip whether or
    not it fires, so changing one probability does not shift the others' streams.
    """
    config = config or AugmentConfig()
    size = image.size

    fire = rng.random(5)

    if fire[0] < config.flip_p:
        image = TF.hflip(image)

    angle = rng.uniform(-config.affine_degrees, config.affine_degrees)
    max_dx = config.affine_translate * size[0]
    max_dy = config.affine_translate * size[1]
    translate = [int(round(rng.uniform(-max_dx, max_dx))), int(round(rng.uniform(-max_dy, max_dy)))]
    scale = rng.uniform(*config.affine_scale)
    if fire[1] < config.affine_p:
        image = TF.affine(image, angle=float(angle), translate=translate, scale=float(scale), shear=[0.0])

    sigma = rng.uniform(*config.blur_sigma)
    if fire[2] < config.blur_p:
        image = TF.gaussian_blur(image, kernel_size=5, sigma=float(sigma))

    brightness = rng.uniform(1 - config.jitter_brightness, 1 + config.jitter_brightness)
    contrast = rng.uniform(1 - config.jitter_contrast, 1 + config.jitter_contrast)
    saturation = rng.uniform(1 - config.jitter_saturation, 1 + config.jitter_saturation)
    hue = rng.uniform(-config.jitter_hue, config.jitter_hue)
    if fire[3] < config.jitter_p:
        image = TF.adjust_brightness(image, max(0.0, brightness))
        image = TF.adjust_contrast(image, max(0.0, contrast))
        image = TF.adjust_saturation(image, max(0.0, saturation))
        image = TF.adjust_hue(image, float(hue))

    quality = rng.integers(config.jpeg_quality[0], config.jpeg_quality[1] + 1)
    if fire[4] < config.jpeg_p:
        image = _jpeg(image, quality)

    if image.size != size:
        image = image.resize(size)
    return image


__all__ = ["augment"]
