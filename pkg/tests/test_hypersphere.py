import logging
import math

import numpy as np
import pytest
import torch

from hyperdf.errors import ShapeMismatch, ZeroVector
from hyperdf.hypersphere import FeatureBatch, is_unit, l2_normalize, pairwise_sq_dists, slerp

T_GRID = [i / 10 for i in range(11)]


def _angle(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.arccos((a * b).sum(-1).clamp(-1.0, 1.0))


class TestL2Normalize:
    def test_rows_become_unit(self):
        x = torch.randn(50, 16, generator=torch.Generator().manual_seed(1))
        z = l2_normalize(x)
        assert z.dtype == torch.float64
        np.testing.assert_allclose(z.norm(dim=-1).numpy(), 1.0, atol=1e-12)
        assert is_unit(z)

    def test_zero_row_rejected(self):
        x = torch.ones(3, 4)
        x[1] = 0.0
        with pytest.raises(ZeroVector):
            l2_normalize(x)

    def test_direction_preserved(self):
        x = torch.tensor([[3.0, 4.0]])
        np.testing.assert_allclose(l2_normalize(x).numpy(), [[0.6, 0.8]], atol=1e-12)

    def test_idempotent(self, unit_rows):
        z = l2_normalize(unit_rows(20, 7, seed=5) * 3.0)
        np.testing.assert_allclose(l2_normalize(z).numpy(), z.numpy(), rtol=0, atol=1e-15)


class TestSlerpGeometry:
    @pytest.mark.parametrize("dim", [8, 64, 1024])
    def test_norm_endpoints_angle_symmetry(self, unit_rows, dim):
        a = unit_rows(1000, dim, seed=dim)
        b = unit_rows(1000, dim, seed=dim + 1)
        theta = _angle(a, b)
        for t in T_GRID:
            out = slerp(a, b, t)
            np.testing.assert_allclose(out.norm(dim=-1).numpy(), 1.0, atol=1e-5)
            np.testing.assert_allclose(_angle(a, out).numpy(), (t * theta).numpy(), atol=1e-4)
            mirrored = slerp(b, a, 1.0 - t)
            np.testing.assert_allclose(out.numpy(), mirrored.numpy(), atol=1e-10)
        np.testing.assert_allclose(slerp(a, b, 0.0).numpy(), a.numpy(), atol=1e-12)
        np.testing.assert_allclose(slerp(a, b, 1.0).numpy(), b.numpy(), atol=1e-12)

    def test_angle_grows_with_t(self, unit_rows):
        a, b = unit_rows(200, 32, 3), unit_rows(200, 32, 4)
        grid = torch.linspace(0.0, 1.0, 41, dtype=torch.float64)
        angles = torch.stack([_angle(a, slerp(a, b, float(t))) for t in grid])
        assert bool((angles.diff(dim=0) > 0).all())

    def test_per_row_t(self, unit_rows):
        a, b = unit_rows(5, 8, 0), unit_rows(5, 8, 1)
        t = torch.linspace(0, 1, 5, dtype=torch.float64)
        out = slerp(a, b, t)
        for i in range(5):
            np.testing.assert_allclose(out[i].numpy(), slerp(a[i], b[i], float(t[i])).numpy(), atol=1e-12)

    def test_identical_inputs_return_input(self, unit_rows):
        a = unit_rows(4, 16)
        out = slerp(a, a.clone(), 0.37)
        assert torch.isfinite(out).all()
        np.testing.assert_allclose(out.numpy(), a.numpy(), atol=1e-12)

    def test_nearly_identical_falls_back_to_lerp(self):
        a = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
        b = l2_normalize(torch.tensor([1.0, 1e-6, 0.0], dtype=torch.float64))
        out = slerp(a, b, 0.5)
        assert torch.isfinite(out).all()
        assert abs(float(out.norm()) - 1.0) < 1e-12

    def test_antipodal_pair_is_finite_and_warns(self, caplog):
        caplog.set_level(logging.WARNING, logger="hyperdf.hypersphere")
        a = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
        out = slerp(a, -a, 0.5)
        assert torch.isfinite(out).all()
        np.testing.assert_allclose(out.norm(dim=-1).numpy(), 1.0, atol=1e-9)
        assert "antipodal" in caplog.text

    def test_near_antipodal_pair_keeps_endpoints(self, caplog):
        caplog.set_level(logging.WARNING, logger="hyperdf.hypersphere")
        a = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
        b = l2_normalize(torch.tensor([-1.0, 3.0e-4, 0.0], dtype=torch.float64))
        assert float((a * b).sum()) > -1.0
        theta = _angle(a, b)
        np.testing.assert_allclose(slerp(a, b, 0.0).numpy(), a.numpy(), atol=1e-12)
        np.testing.assert_allclose(slerp(a, b, 1.0).numpy(), b.numpy(), atol=1e-12)
        for t in T_GRID:
            out = slerp(a, b, t)
            assert abs(float(out.norm()) - 1.0) < 1e-12
            assert abs(float(_angle(a, out)) - t * float(theta)) < 1e-6
        assert "near-antipodal" in caplog.text

    def test_exact_antipode_reaches_other_pole(self):
        a = torch.tensor([[0.0, 1.0, 0.0]], dtype=torch.float64)
        np.testing.assert_allclose(slerp(a, -a, 1.0).numpy(), (-a).numpy(), atol=1e-12)

    def test_quarter_circle_midpoint(self):
        a = torch.tensor([1.0, 0.0], dtype=torch.float64)
        b = torch.tensor([0.0, 1.0], dtype=torch.float64)
        h = math.sqrt(0.5)
        np.testing.assert_allclose(slerp(a, b, 0.5).numpy(), [h, h], atol=1e-12)

    def test_empty_features_rejected(self):
        with pytest.raises(ShapeMismatch):
            slerp(torch.zeros(2, 0), torch.zeros(2, 0), 0.5)


class TestFeatureBatch:
    def test_validates_shapes_and_norms(self, unit_rows):
        z = unit_rows(4, 8)
        FeatureBatch(features=z, labels=torch.tensor([0, 1, 0, 1]))
        with pytest.raises(ShapeMismatch):
            FeatureBatch(features=z, labels=torch.tensor([0, 1]))
        with pytest.raises(ShapeMismatch):
            FeatureBatch(features=z[0], labels=torch.tensor([0]))
        with pytest.raises(ZeroVector):
            FeatureBatch(features=z * 2, labels=torch.tensor([0, 1, 0, 1]))
        with pytest.raises(ValueError):
            FeatureBatch(features=z, labels=torch.tensor([0, 1, 2, 1]))


class TestPairwiseDistances:
    def test_matches_brute_force(self, unit_rows):
        z = unit_rows(12, 6)
        d = pairwise_sq_dists(z)
        brute = ((z[:, None, :] - z[None, :, :]) ** 2).sum(-1)
        np.testing.assert_allclose(d.numpy(), brute.numpy(), atol=1e-12)
        assert torch.equal(d, d.T)
        assert torch.all(torch.diagonal(d) == 0)

    def test_clamped_to_sphere_range(self, unit_rows):
        z = unit_rows(3, 4)
        d = pairwise_sq_dists(torch.cat([z, -z]))
        assert float(d.min()) >= 0.0 and float(d.max()) <= 4.0
