"""U-statistics: fast identity vs brute force, Hoeffding split, tail params."""

import numpy as np
import pytest

from binwave.ustat import (
    HoeffdingSplit,
    WeightedSample,
    hoeffding_split,
    tail_bound,
    tail_params,
    ustat_bruteforce,
    ustat_fast,
)
from binwave.wavelets import GridFunction, build_basis


def _random_sample(rng, n, d=1, bound=1.0):
    return WeightedSample(
        points=rng.uniform(size=(n, d)),
        weights=rng.uniform(-bound, bound, size=n),
        bound=bound,
    )


class TestWeightedSample:
    def test_validation(self, rng):
        with pytest.raises(ValueError, match="equal length"):
            WeightedSample(np.zeros((3, 1)), np.zeros(2), 1.0)
        with pytest.raises(ValueError, match="two observations"):
            WeightedSample(np.array([[0.5]]), np.array([1.0]), 1.0)
        with pytest.raises(ValueError, match="unit cube"):
            WeightedSample(np.array([[0.5], [1.2]]), np.ones(2), 1.0)
        with pytest.raises(ValueError, match="bound"):
            WeightedSample(np.array([[0.5], [0.2]]), np.array([0.5, 2.0]), 1.0)


class TestFastIdentity:
    def test_two_points_equals_kernel_value(self, haar1):
        # n=2 with unit weights: U = K(x1, x2)
        from binwave.wavelets import kernel_v

        ws = WeightedSample(np.array([[0.1], [0.2]]), np.ones(2), 1.0)
        expect = kernel_v(haar1, 1, 0.1, 0.2)
        assert ustat_fast(haar1, ws, 1, "V") == pytest.approx(expect)
        assert ustat_bruteforce(haar1, ws, 1, "V") == pytest.approx(expect)

    def test_zero_weights_give_zero(self, haar1, rng):
        ws = WeightedSample(rng.uniform(size=(10, 1)), np.zeros(10), 1.0)
        assert ustat_fast(haar1, ws, 2, "V") == 0.0

    def test_repeated_point_unit_weights(self, haar1):
        # all observations at the same x: U = K(x, x) = 2^{jd} for kind V
        ws = WeightedSample(np.full((5, 1), 0.3), np.ones(5), 1.0)
        for j in [0, 2, 4]:
            assert ustat_bruteforce(haar1, ws, j, "V") == pytest.approx(2.0**j)
            assert ustat_fast(haar1, ws, j, "V") == pytest.approx(2.0**j)

    @pytest.mark.parametrize("kind", ["V", "W"])
    def test_matches_bruteforce_haar(self, haar1, rng, kind):
        for n in [20, 57, 150]:
            ws = _random_sample(rng, n)
            for j in [0, 2, 4]:
                fast = ustat_fast(haar1, ws, j, kind)
                brute = ustat_bruteforce(haar1, ws, j, kind)
                np.testing.assert_allclose(fast, brute, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("kind", ["V", "W"])
    def test_matches_bruteforce_daubechies(self, db2, rng, kind):
        for n in [30, 80]:
            ws = _random_sample(rng, n)
            for j in [1, 3, 5]:
                fast = ustat_fast(db2, ws, j, kind)
                brute = ustat_bruteforce(db2, ws, j, kind)
                np.testing.assert_allclose(fast, brute, rtol=1e-6, atol=1e-9)

    def test_matches_bruteforce_d2(self, haar2, rng):
        ws = _random_sample(rng, 60, d=2)
        for kind in ["V", "W"]:
            np.testing.assert_allclose(
                ustat_fast(haar2, ws, 2, kind),
                ustat_bruteforce(haar2, ws, 2, kind),
                rtol=1e-10,
                atol=1e-12,
            )

    def test_permutation_invariance(self, haar1, rng):
        ws = _random_sample(rng, 40)
        perm = rng.permutation(40)
        ws2 = WeightedSample(ws.points[perm], ws.weights[perm], ws.bound)
        for kind in ["V", "W"]:
            assert ustat_fast(haar1, ws, 3, kind) == pytest.approx(
                ustat_fast(haar1, ws2, 3, kind), rel=1e-12
            )

    def test_quadratic_in_weight_scale(self, haar1, rng):
        ws = _random_sample(rng, 30, bound=0.5)
        scaled = WeightedSample(ws.points, 3.0 * ws.weights, 3.0 * ws.bound)
        np.testing.assert_allclose(
            ustat_fast(haar1, scaled, 2, "W"), 9.0 * ustat_fast(haar1, ws, 2, "W"), rtol=1e-12
        )

    def test_level_and_size_validation(self, haar1):
        ws = WeightedSample(np.array([[0.1], [0.2]]), np.ones(2), 1.0)
        with pytest.raises(ValueError, match="level"):
            ustat_fast(haar1, ws, 99, "V")
        with pytest.raises(ValueError, match="kind"):
            ustat_fast(haar1, ws, 1, "X")

    def test_null_monte_carlo_mean_near_zero(self, haar1):
        # f = 1/2, uniform design, weights y - 1/2: E[T] = 0; check the MC
        # mean over replicates stays within 3 standard errors
        rng = np.random.default_rng(7)
        reps = 2000
        n, j = 100, 3
        vals = np.empty(reps)
        for r in range(reps):
            x = rng.uniform(size=(n, 1))
            y = rng.integers(0, 2, size=n).astype(float)
            ws = WeightedSample(x, y - 0.5, 0.5)
            vals[r] = ustat_fast(haar1, ws, j, "V")
        se = vals.std(ddof=1) / np.sqrt(reps)
        assert abs(vals.mean()) < 3 * se + 1e-12


class TestHoeffdingSplit:
    def test_identity_any_reference(self, haar1, rng):
        # linear + degenerate + mean_term telescopes back to the U-statistic
        # for an arbitrary (even wrong) reference function
        xs = GridFunction.axis_points(8)
        for _ in range(5):
            ws = _random_sample(rng, 50)
            ref = GridFunction(rng.normal(size=256), 8)
            for kind in ["V", "W"]:
                split = hoeffding_split(haar1, ws, 3, kind, ref)
                np.testing.assert_allclose(
                    split.total, ustat_fast(haar1, ws, 3, kind), rtol=1e-9, atol=1e-12
                )

    def test_identity_daubechies(self, db2, rng):
        ws = _random_sample(rng, 40)
        ref = GridFunction(np.cos(2 * np.pi * GridFunction.axis_points(9)), 9)
        split = hoeffding_split(db2, ws, 3, "W", ref)
        np.testing.assert_allclose(split.total, ustat_fast(db2, ws, 3, "W"), atol=1e-6)

    def test_centered_null_linear_part_vanishes(self, haar1):
        # under f = 1/2 and uniform design the reference m(x) = E[a|x] g(x)
        # is identically zero, so the linear and mean terms are exactly zero
        # and the whole statistic is its degenerate part
        rng = np.random.default_rng(11)
        x = rng.uniform(size=(80, 1))
        y = rng.integers(0, 2, size=80).astype(float)
        ws = WeightedSample(x, y - 0.5, 0.5)
        ref = GridFunction(np.zeros(256), 8)
        split = hoeffding_split(haar1, ws, 2, "V", ref)
        assert split.linear == 0.0
        assert split.mean_term == 0.0
        np.testing.assert_allclose(split.degenerate, ustat_fast(haar1, ws, 2, "V"), rtol=1e-12)

    def test_unit_weights_kind_w_uniform_reference(self, haar1, rng):
        # constant weights with a W kernel: the reference's detail
        # coefficients vanish for the uniform density, so mean and linear
        # terms are zero by wavelet mean-zeroness
        ws = WeightedSample(rng.uniform(size=(60, 1)), np.ones(60), 1.0)
        ref = GridFunction(np.ones(256), 8)
        split = hoeffding_split(haar1, ws, 3, "W", ref)
        np.testing.assert_allclose(split.mean_term, 0.0, atol=1e-20)
        np.testing.assert_allclose(split.linear, 0.0, atol=1e-12)

    def test_dimension_mismatch(self, haar2, rng):
        ws = _random_sample(rng, 10, d=2)
        with pytest.raises(ValueError, match="dimension"):
            hoeffding_split(haar2, ws, 1, "V", GridFunction(np.ones(16), 4))


class TestTailParams:
    def test_pinned_arithmetic(self):
        tp = tail_params(101, 2, 1)
        assert tp.a1 == pytest.approx(0.02)
        tp2 = tail_params(2, 3, 2)
        assert tp2.a1 == pytest.approx(2.0 ** (3 * 2 / 2))

    def test_difference_identity(self):
        for n, j, d in [(10, 2, 1), (100, 3, 2), (7, 1, 3)]:
            tp = tail_params(n, j, d)
            expect = (1.0 - 2.0 ** (j * d) / n) / (n - 1)
            np.testing.assert_allclose(tp.a2 - tp.a3, expect, rtol=1e-12)

    def test_positive_and_validated(self):
        tp = tail_params(50, 4, 1)
        assert tp.a1 > 0 and tp.a2 > 0 and tp.a3 > 0
        with pytest.raises(ValueError):
            tail_params(1, 2, 1)

    def test_bound_shape(self):
        tp = tail_params(100, 3, 1)
        assert tail_bound(tp, 0.0) == 1.0
        vals = [tail_bound(tp, t) for t in [0.01, 0.1, 1.0, 10.0]]
        assert all(v2 <= v1 for v1, v2 in zip(vals, vals[1:]))
        assert vals[-1] < 1e-3
