"""Geometry on the unit hypersphere: projection, slerp, pairwise distances.

All computations run in float64 (``GEOMETRY_DTYPE``) whatever the dtype of the
inputs, and results are returned in that dtype; callers cast back if needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import torch

from .errors import ShapeMismatch, ZeroVector

logger = logging.getLogger(__name__)

GEOMETRY_DTYPE = torch.float64
EPS_NORM = 1e-12
EPS_ACOS = 1e-7
THETA_MIN = 1e-4
EPS_RESIDUAL = 1e-9
UNIT_TOL = 1e-5

# A UnitFeature is a tensor whose last dimension has unit Euclidean norm.
UnitFeature = torch.Tensor


def _widen(x: torch.Tensor) -> torch.Tensor:
    if x.device.type == "mps":
        return x.to(torch.float32)
    return x.to(GEOMETRY_DTYPE)


def l2_normalize(v: torch.Tensor, eps_norm: float = EPS_NORM) -> UnitFeature:
    """Project ``v`` (shape ``(..., D)``) onto the unit sphere along its last axis.

    Raises ``ZeroVector`` when any row has norm <= ``eps_norm``.
    """
    wide = _widen(v)
    norms = torch.linalg.vector_norm(wide, dim=-1, keepdim=True)
    if bool((norms <= eps_norm).any()):
        raise ZeroVector(f"cannot normalize vector with norm <= {eps_norm}")
    return wide / norms


def is_unit(v: torch.Tensor, tol: float = UNIT_TOL) -> bool:
    norms = torch.linalg.vector_norm(_widen(v), dim=-1)
    return bool(torch.isfinite(v).all()) and bool(((norms - 1.0).abs() < tol).all())


def _orthogonal_direction(z: torch.Tensor) -> torch.Tensor:
    """A unit vector orthogonal to each row of ``z``, chosen deterministically."""
    axis = z.abs().argmin(dim=-1, keepdim=True)
    basis = torch.zeros_like(z).scatter_(-1, axis, 1.0)
    ortho = basis - (basis * z).sum(dim=-1, keepdim=True) * z
    return ortho / torch.linalg.vector_norm(ortho, dim=-1, keepdim=True)


def slerp(
    z_i: UnitFeature,
    z_j: UnitFeature,
    t: Union[float, torch.Tensor],
    *,
    eps_acos: float = EPS_ACOS,
    theta_min: float = THETA_MIN,
) -> UnitFeature:
    """Spherical linear interpolation between unit features.

    ``z_i`` and ``z_j`` broadcast against each other with shape ``(..., D)``;
    ``t`` is a scalar or a tensor broadcastable to ``(...)``. Pairs closer than
    ``theta_min`` (or whose dot product needed clamping towards 1) fall back to
    normalized linear interpolation. Pairs whose dot product is within
    ``eps_acos`` of -1 rotate towards the part of ``z_j`` orthogonal to ``z_i``
    by the ``atan2`` angle, so the path still ends at ``z_j``; exact antipodes
    have no unique geodesic and turn through a fixed orthogonal direction.
    """
    a = _widen(z_i)
    b = _widen(z_j)
    a, b = torch.broadcast_tensors(a, b)
    if a.shape[-1] < 1:
        raise ShapeMismatch("slerp needs non-empty feature vectors")
    t = torch.as_tensor(t, dtype=a.dtype, device=a.device)
    t = t.reshape(t.shape + (1,)) if t.dim() else t

    raw_dot = (a * b).sum(dim=-1, keepdim=True)
    dot = raw_dot.clamp(-1.0 + eps_acos, 1.0 - eps_acos)
    theta = torch.arccos(dot)
    degenerate = (raw_dot > 1.0 - eps_acos) | (theta < theta_min)

    sin_theta = torch.sin(theta)
    w_a = torch.sin((1.0 - t) * theta) / sin_theta
    w_b = torch.sin(t * theta) / sin_theta
    spherical = w_a * a + w_b * b

    if bool(degenerate.any()):
        linear = (1.0 - t) * a + t * b
        linear = linear / torch.linalg.vector_norm(linear, dim=-1, keepdim=True)
        spherical = torch.where(degenerate, linear, spherical)

    antipodal = raw_dot < -1.0 + eps_acos
    n_antipodal = int(antipodal.sum())
    if n_antipodal:
        logger.warning("slerp: %d near-antipodal pair(s) interpolated along the orthogonal residual", n_antipodal)
        residual = b - raw_dot * a
        r_norm = torch.linalg.vector_norm(residual, dim=-1, keepdim=True)
        direction = torch.where(
            r_norm > EPS_RESIDUAL, residual / r_norm.clamp_min(EPS_RESIDUAL), _orthogonal_direction(a)
        )
        angle = torch.atan2(r_norm, raw_dot)
        rotated = torch.cos(angle * t) * a + torch.sin(angle * t) * direction
        spherical = torch.where(antipodal, rotated, spherical)
    return spherical


@dataclass(frozen=True)
class FeatureBatch:
    """Unit features ``(B, D)`` with integer labels ``(B,)`` (0 real, 1 fake)."""

    features: torch.Tensor
    labels: torch.Tensor

    def __post_init__(self) -> None:
        if self.features.dim() != 2:
            raise ShapeMismatch(f"features must be 2-D, got shape {tuple(self.features.shape)}")
        if self.labels.dim() != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise ShapeMismatch("labels length must equal the number of feature rows")
        if not is_unit(self.features.detach()):
            raise ZeroVector("feature rows must be finite and unit-norm")
        if self.labels.numel() and not bool(((self.labels == 0) | (self.labels == 1)).all()):
            raise ValueError("labels must be 0 (real) or 1 (fake)")

    def __len__(self) -> int:
        return self.features.shape[0]


def pairwise_sq_dists(batch: Union[FeatureBatch, torch.Tensor]) -> torch.Tensor:
    """Symmetric ``(B, B)`` matrix of squared Euclidean distances, zero diagonal.

    Uses ``|x|^2 + |y|^2 - 2 x.y`` so it stays exact off the sphere as well;
    entries are clamped to ``[0, 4]``.
    """
    z = batch.features if isinstance(batch, FeatureBatch) else batch
    z = _widen(z)
    sq = (z * z).sum(dim=-1)
    gram = z @ z.transpose(0, 1)
    d = sq[:, None] + sq[None, :] - 2.0 * gram
    d = d.clamp(0.0, 4.0)
    eye = torch.eye(d.shape[0], dtype=torch.bool, device=d.device)
    return d.masked_fill(eye, 0.0)


__all__ = [
    "UnitFeature",
    "FeatureBatch",
    "l2_normalize",
    "is_unit",
    "slerp",
    "pairwise_sq_dists",
    "EPS_NORM",
    "EPS_ACOS",
    "THETA_MIN",
]
