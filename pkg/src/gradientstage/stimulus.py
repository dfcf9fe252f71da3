"""Shape-only, texture-only and combined stimulus images from a normal map
and a constant-illumination diffuse image."""
from __future__ import annotations

import warnings

import numpy as np

from .core import DARK_EPS, Image, NormalMap, unit

DEFAULT_LIGHT_1 = np.array([0.3, 0.3, 0.906])
DEFAULT_LIGHT_2 = np.array([-0.3, 0.3, 0.906])


def shape_only(nm: NormalMap, l1=DEFAULT_LIGHT_1, l2=DEFAULT_LIGHT_2) -> Image:
    """Two-light front-lit Lambertian rendering of the normals alone.

    (max(0, n.l1) + max(0, n.l2)) / 2, bounded in [0, 1]; albedo plays no
    part. Non-front lights are allowed but warned about.
    """
    l1 = unit(l1)
    l2 = unit(l2)
    if l1[2] <= 0 or l2[2] <= 0:
        warnings.warn("shape-only lights should face the camera (positive z)")
    shade1 = np.maximum(0.0, nm.normals @ l1)
    shade2 = np.maximum(0.0, nm.normals @ l2)
    vals = 0.5 * (shade1 + shade2)
    return Image(np.where(nm.mask, vals, 0.0), nm.mask)


def texture_only(diffuse_c: Image) -> Image:
    """Constant-illumination diffuse image normalized to [0, 1] by its max.

    Ratios between pixels are preserved exactly.
    """
    vals = diffuse_c.samples[diffuse_c.mask]
    peak = vals.max() if vals.size else 0.0
    if peak < DARK_EPS:
        raise ValueError("texture image is all zero")
    return Image(np.where(diffuse_c.mask, diffuse_c.samples / peak, 0.0), diffuse_c.mask)


def combined(shape: Image, texture: Image) -> Image:
    """Per-pixel product of shape and texture, clamped to [0, 1]."""
    if shape.shape != texture.shape:
        raise ValueError(f"dimension mismatch: {shape.shape} vs {texture.shape}")
    mask = shape.mask & texture.mask
    vals = np.clip(shape.samples * texture.samples, 0.0, 1.0)
    return Image(np.where(mask, vals, 0.0), mask)
