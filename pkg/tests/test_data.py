"""Dataset container, CSV round trips, deterministic splitting."""

import numpy as np
import pytest

from binwave.data import Dataset, check_labels, check_points


def _toy(rng, n=20, d=2):
    return Dataset(rng.uniform(size=(n, d)), rng.integers(0, 2, size=n).astype(float))


class TestValidation:
    def test_check_points(self):
        out = check_points([0.1, 0.5, 0.9])
        assert out.shape == (3, 1)
        with pytest.raises(ValueError, match="unit cube"):
            check_points([[0.5], [1.5]])
        with pytest.raises(ValueError, match="non-finite"):
            check_points([[np.inf]])
        with pytest.raises(ValueError, match="2-dimensional"):
            check_points(np.zeros((4, 1)), d=2)
        with pytest.raises(ValueError, match="nonempty"):
            check_points(np.zeros((0, 1)))

    def test_check_labels(self):
        np.testing.assert_array_equal(check_labels([0, 1, 1]), [0.0, 1.0, 1.0])
        with pytest.raises(ValueError, match="binary"):
            check_labels([0.5, 1.0])
        with pytest.raises(ValueError, match="expected 3"):
            check_labels([0, 1], n=3)

    def test_dataset_consistency(self, rng):
        with pytest.raises(ValueError):
            Dataset(rng.uniform(size=(5, 1)), np.zeros(4))


class TestSplitting:
    def test_halves_floor_and_drop(self, rng):
        ds = _toy(rng, n=21)
        a, b = ds.halves()
        assert a.n == b.n == 10
        np.testing.assert_array_equal(a.points, ds.points[:10])
        np.testing.assert_array_equal(b.points, ds.points[10:20])

    def test_thirds(self, rng):
        ds = _toy(rng, n=20)
        parts = ds.thirds()
        assert [p.n for p in parts] == [6, 6, 6]

    def test_seeded_split_is_deterministic(self, rng):
        ds = _toy(rng, n=30)
        a1, b1 = ds.halves(seed=5)
        a2, b2 = ds.halves(seed=5)
        np.testing.assert_array_equal(a1.points, a2.points)
        np.testing.assert_array_equal(b1.labels, b2.labels)
        a3, _ = ds.halves(seed=6)
        assert not np.array_equal(a1.points, a3.points)

    def test_permutation_preserves_pairs(self, rng):
        ds = _toy(rng, n=16, d=1)
        a, b = ds.halves(seed=3)
        seen = np.concatenate([a.points[:, 0], b.points[:, 0]])
        assert np.isin(seen, ds.points[:, 0]).all()
        lookup = {x: y for x, y in zip(ds.points[:, 0], ds.labels)}
        for part in (a, b):
            for x, y in zip(part.points[:, 0], part.labels):
                assert lookup[x] == y

    def test_too_small(self, rng):
        ds = _toy(rng, n=2)
        with pytest.raises(ValueError, match="cannot split"):
            ds.split(3)


class TestCsv:
    def test_round_trip(self, tmp_path, rng):
        ds = _toy(rng, n=12, d=3)
        path = tmp_path / "data.csv"
        ds.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "x_1,x_2,x_3,y"
        back = Dataset.from_csv(path)
        np.testing.assert_allclose(back.points, ds.points, atol=1e-15)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n0.1,0\n")
        with pytest.raises(ValueError, match="header"):
            Dataset.from_csv(path)
