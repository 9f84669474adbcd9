import math

import numpy as np
import pytest

from domainrag.embedding import (
    FusionWeights,
    cosine_similarity,
    fuse,
    style_distance,
    style_vector,
)
from domainrag.errors import (
    DegenerateVectorError,
    DimensionError,
    EmptyInputError,
    ValidationError,
)


def brute_force_style(fmap):
    """Independent mean/population-std, plain Python loops."""
    c, h, w = fmap.shape
    means, stds = [], []
    for ch in range(c):
        vals = [float(fmap[ch, i, j]) for i in range(h) for j in range(w)]
        mu = sum(vals) / len(vals)
        var = sum((v - mu) ** 2 for v in vals) / len(vals)
        means.append(mu)
        stds.append(math.sqrt(var))
    return np.array(means + stds)


class TestCosineSimilarity:
    def test_identical_unit_vectors(self):
        assert cosine_similarity([1, 0], [1, 0]) == 1.0

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 1]) == 0.0

    def test_half_sqrt_two(self):
        assert cosine_similarity([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-8)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            cosine_similarity([1, 0], [1, 0, 0])

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateVectorError):
            cosine_similarity([0, 0], [1, 0])
        with pytest.raises(DegenerateVectorError):
            cosine_similarity([1, 0], [0, 0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            cosine_similarity([1, np.nan], [1, 0])

    def test_symmetry(self, rng):
        for _ in range(50):
            a = rng.normal(size=8)
            b = rng.normal(size=8)
            assert cosine_similarity(a, b) == cosine_similarity(b, a)

    def test_scale_invariance(self, rng):
        for _ in range(50):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            alpha = float(rng.uniform(0.01, 100.0))
            assert cosine_similarity(alpha * a, b) == pytest.approx(
                cosine_similarity(a, b), abs=1e-9
            )

    def test_clamped_to_unit_interval(self, rng):
        for _ in range(200):
            a = rng.normal(size=4)
            assert -1.0 <= cosine_similarity(a, 3.0 * a) <= 1.0


class TestStyleVector:
    def test_constant_map_zero_std(self):
        fmap = np.full((2, 2, 2), 3.0)
        assert np.array_equal(style_vector(fmap), [3, 3, 0, 0])

    def test_hand_computed_single_channel(self):
        out = style_vector(np.array([[[0.0, 2.0]]]))
        assert out == pytest.approx([1.0, 1.0], abs=1e-12)

    def test_layout_means_first(self):
        # 64 channels -> 128-entry descriptor, means then stds.
        fmap = np.zeros((64, 3, 3))
        fmap[5] = 7.0
        out = style_vector(fmap)
        assert out.shape == (128,)
        assert out[5] == 7.0 and out[64 + 5] == 0.0

    def test_empty_map_rejected(self):
        with pytest.raises((EmptyInputError, DimensionError)):
            style_vector(np.zeros((2, 0, 3)))

    def test_spatial_permutation_invariance(self, rng):
        for _ in range(20):
            fmap = rng.normal(size=(3, 4, 5))
            flat = fmap.reshape(3, -1)
            perm = rng.permutation(flat.shape[1])
            shuffled = flat[:, perm].reshape(3, 4, 5)
            assert style_vector(shuffled) == pytest.approx(style_vector(fmap), rel=1e-12, abs=1e-12)

    def test_matches_brute_force_on_random_maps(self, rng):
        for _ in range(100):
            c = int(rng.integers(1, 6))
            h = int(rng.integers(1, 9))
            w = int(rng.integers(1, 9))
            fmap = rng.normal(scale=10.0, size=(c, h, w))
            got = style_vector(fmap)
            want = brute_force_style(fmap)
            np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


class TestStyleDistance:
    def test_identity(self, rng):
        s = np.abs(rng.normal(size=8))
        assert style_distance(s, s) == 0.0

    def test_three_four_five(self):
        assert style_distance([0, 0], [3, 4]) == 5.0

    def test_single_coordinate(self):
        assert style_distance([1, 1, 0, 0], [1, 1, 2, 0]) == 2.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            style_distance([0, 0], [1, 1, 0, 0])

    def test_triangle_inequality(self, rng):
        for _ in range(100):
            a, b, c = (np.abs(rng.normal(size=6)) for _ in range(3))
            assert style_distance(a, c) <= style_distance(a, b) + style_distance(b, c) + 1e-12

    def test_negative_std_half_rejected(self):
        with pytest.raises(ValidationError):
            style_distance([1.0, -0.5], [0.0, 0.0])


class TestFuse:
    def test_identity_weight(self, rng):
        f = rng.normal(size=5)
        g = rng.normal(size=5)
        assert np.array_equal(fuse(f, g, FusionWeights(1.0, 0.0)), f)

    def test_default_weights_worked_example(self):
        out = fuse([1, 1], [1, 0], FusionWeights(1.0, 0.8))
        assert out[0] == 1.8 and out[1] == 1.0

    def test_zero_inputs(self):
        assert np.array_equal(fuse([0, 0], [0, 0], FusionWeights(2.0, 3.0)), [0, 0])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            fuse([1, 2], [1, 2, 3], FusionWeights(1.0, 1.0))

    def test_negative_weight_rejected(self):
        with pytest.raises(ValidationError):
            FusionWeights(-0.1, 1.0)

    def test_bilinearity(self, rng):
        for _ in range(200):
            a = rng.normal(size=4)
            b = rng.normal(size=4)
            l1, l2, m1, m2 = rng.uniform(0, 3, size=4)
            lhs = fuse(a, b, FusionWeights(l1 + m1, l2 + m2))
            rhs = fuse(a, b, FusionWeights(l1, l2)) + fuse(a, b, FusionWeights(m1, m2))
            np.testing.assert_allclose(lhs, rhs, atol=1e-9)
