import math

import numpy as np
import pytest
import torch
from torch.autograd import gradcheck

from hyperdf.errors import NoPositivePairs
from hyperdf.hypersphere import FeatureBatch, l2_normalize
from hyperdf.losses import alignment_loss, combined_loss, count_pairs, cross_entropy, uniformity_loss
from hyperdf.schemas import LossWeights


def _random_batch(rng: np.random.Generator, b: int, d: int) -> FeatureBatch:
    x = torch.from_numpy(rng.normal(size=(b, d)))
    labels = torch.from_numpy(rng.integers(0, 2, size=b))
    labels[0], labels[1], labels[2] = 0, 0, 1
    return FeatureBatch(features=l2_normalize(x), labels=labels)


def _align_oracle(z: np.ndarray, y: np.ndarray) -> float:
    total, count = 0.0, 0
    for i in range(len(z)):
        for j in range(i + 1, len(z)):
            if y[i] == y[j]:
                total += float(((z[i] - z[j]) ** 2).sum())
                count += 1
    return total / count


def _uniform_oracle(z: np.ndarray) -> float:
    terms = [
        math.exp(-2.0 * float(((z[i] - z[j]) ** 2).sum())) for i in range(len(z)) for j in range(i + 1, len(z))
    ]
    return math.log(sum(terms) / len(terms))


def _ce_oracle(logits: np.ndarray, y: np.ndarray) -> float:
    total = 0.0
    for row, label in zip(logits, y):
        top = max(row)
        log_norm = top + math.log(sum(math.exp(v - top) for v in row))
        total += log_norm - row[label]
    return total / len(y)


class TestLossOracles:
    def test_alignment_and_uniformity_match_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            b = int(rng.integers(3, 33))
            batch = _random_batch(rng, b, int(rng.integers(2, 17)))
            z, y = batch.features.numpy(), batch.labels.numpy()
            assert abs(float(alignment_loss(batch)) - _align_oracle(z, y)) < 1e-6
            assert abs(float(uniformity_loss(batch)) - _uniform_oracle(z)) < 1e-6

    def test_cross_entropy_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            b = int(rng.integers(1, 33))
            logits = rng.normal(scale=4.0, size=(b, 2))
            y = rng.integers(0, 2, size=b)
            value = float(cross_entropy(torch.from_numpy(logits), torch.from_numpy(y)))
            assert abs(value - _ce_oracle(logits, y)) < 1e-9

    def test_combined_is_weighted_sum(self):
        rng = np.random.default_rng(1)
        batch = _random_batch(rng, 16, 8)
        logits = torch.from_numpy(rng.normal(size=(16, 2)))
        weights = LossWeights(alpha=0.1, beta=0.5)
        out = combined_loss(logits, batch, weights)
        expected = (
            float(cross_entropy(logits, batch.labels))
            + 0.1 * float(alignment_loss(batch))
            + 0.5 * float(uniformity_loss(batch))
        )
        assert abs(float(out.total) - expected) < 1e-6
        assert out.as_dict()["positive_pairs"] == count_pairs(batch.labels)["positive_pairs"]
        assert out.as_dict()["all_pairs"] == 16 * 15 // 2

    def test_zero_weights_skip_sphere_terms(self):
        batch = FeatureBatch(features=l2_normalize(torch.randn(2, 4)), labels=torch.tensor([0, 1]))
        out = combined_loss(torch.zeros(2, 2), batch, LossWeights(alpha=0.0, beta=0.0))
        assert out.align == 0.0 and out.uniform == 0.0
        assert abs(out.cross_entropy - math.log(2)) < 1e-12


class TestInvariants:
    def test_batch_order_does_not_matter(self):
        rng = np.random.default_rng(4)
        batch = _random_batch(rng, 20, 6)
        logits = torch.from_numpy(rng.normal(size=(20, 2)))
        perm = torch.from_numpy(rng.permutation(20))
        shuffled = FeatureBatch(features=batch.features[perm], labels=batch.labels[perm])
        for fn in (alignment_loss, uniformity_loss):
            assert float(fn(shuffled)) == pytest.approx(float(fn(batch)), abs=1e-12)
        assert float(cross_entropy(logits[perm], batch.labels[perm])) == pytest.approx(
            float(cross_entropy(logits, batch.labels)), abs=1e-12
        )

    def test_regular_tetrahedron_uniformity(self):
        vertices = torch.tensor([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=torch.float64)
        batch = FeatureBatch(features=l2_normalize(vertices), labels=torch.tensor([0, 0, 1, 1]))
        # every pair sits at cosine -1/3, so squared distance 8/3
        assert float(uniformity_loss(batch)) == pytest.approx(-2.0 * 8.0 / 3.0, abs=1e-12)

    def test_two_point_closed_forms(self):
        pole = torch.tensor([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]], dtype=torch.float64)
        assert float(uniformity_loss(FeatureBatch(features=pole, labels=torch.tensor([0, 1])))) == pytest.approx(
            -8.0, abs=1e-12
        )
        square = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        assert float(alignment_loss(FeatureBatch(features=square, labels=torch.tensor([1, 1])))) == pytest.approx(
            2.0, abs=1e-12
        )


class TestEdgeCases:
    def test_no_positive_pairs(self):
        batch = FeatureBatch(features=l2_normalize(torch.randn(2, 4)), labels=torch.tensor([0, 1]))
        with pytest.raises(NoPositivePairs):
            alignment_loss(batch)

    def test_uniformity_needs_two_rows(self):
        batch = FeatureBatch(features=l2_normalize(torch.randn(1, 4)), labels=torch.tensor([1]))
        with pytest.raises(ValueError):
            uniformity_loss(batch)

    def test_identical_features(self):
        z = l2_normalize(torch.ones(4, 3))
        batch = FeatureBatch(features=z, labels=torch.tensor([0, 0, 1, 1]))
        assert float(alignment_loss(batch)) == pytest.approx(0.0, abs=1e-12)
        assert float(uniformity_loss(batch)) == pytest.approx(0.0, abs=1e-12)

    def test_uniformity_lower_for_spread_features(self):
        spread = FeatureBatch(features=torch.eye(4, dtype=torch.float64), labels=torch.tensor([0, 0, 1, 1]))
        clumped = FeatureBatch(
            features=l2_normalize(torch.eye(4, dtype=torch.float64) * 0.1 + 1.0), labels=torch.tensor([0, 0, 1, 1])
        )
        assert float(uniformity_loss(spread)) < float(uniformity_loss(clumped))


class TestGradients:
    labels = torch.tensor([0, 1, 0, 1, 1, 0])

    def _input(self, seed: int) -> torch.Tensor:
        gen = torch.Generator().manual_seed(seed)
        return torch.randn(6, 5, generator=gen, dtype=torch.float64, requires_grad=True)

    def test_alignment(self):
        fn = lambda x: alignment_loss(FeatureBatch(features=l2_normalize(x), labels=self.labels))  # noqa: E731
        assert gradcheck(fn, (self._input(0),), eps=1e-6, atol=1e-8, rtol=1e-4)

    def test_uniformity(self):
        fn = lambda x: uniformity_loss(FeatureBatch(features=l2_normalize(x), labels=self.labels))  # noqa: E731
        assert gradcheck(fn, (self._input(1),), eps=1e-6, atol=1e-8, rtol=1e-4)

    def test_cross_entropy(self):
        logits = torch.randn(6, 2, generator=torch.Generator().manual_seed(2), dtype=torch.float64, requires_grad=True)
        assert gradcheck(lambda x: cross_entropy(x, self.labels), (logits,), eps=1e-6, atol=1e-8, rtol=1e-4)
