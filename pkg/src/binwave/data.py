"""Datasets of binary responses with covariates in the unit cube.

CSV layout: header ``x_1,...,x_d,y``, one observation per row, y in {0,1}.
Splitting is deterministic: optional seeded permutation, then contiguous
blocks with floor sizes (remainder observations are dropped).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "check_points", "check_labels"]


def check_points(points, d: int | None = None) -> np.ndarray:
    """Validate covariates: finite, inside [0,1]^d, shaped (n, d)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError(f"points must be a nonempty (n, d) array; got shape {np.shape(points)}")
    if d is not None and pts.shape[1] != d:
        raise ValueError(f"expected {d}-dimensional points, got {pts.shape[1]}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite values")
    if pts.min() < 0.0 or pts.max() > 1.0:
        raise ValueError("points must lie in the unit cube [0,1]^d")
    return pts


def check_labels(y, n: int | None = None) -> np.ndarray:
    """Validate binary responses: values in {0, 1}, length n."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    if n is not None and len(arr) != n:
        raise ValueError(f"expected {n} labels, got {len(arr)}")
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError("labels must be binary (0 or 1)")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Binary-response observations (x_i, y_i) with x_i in [0,1]^d."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        pts = check_points(self.points)
        lab = check_labels(self.labels, n=len(pts))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def _permuted(self, seed: int | None) -> "Dataset":
        if seed is None:
            return self
        perm = np.random.default_rng(seed).permutation(self.n)
        return Dataset(self.points[perm], self.labels[perm])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.points[idx], self.labels[idx])

    def split(self, parts: int, seed: int | None = None) -> list["Dataset"]:
        """Equal contiguous blocks of size floor(n / parts); the remainder
        observations are dropped so every part has the same size."""
        if parts < 1:
            raise ValueError("parts must be >= 1")
        size = self.n // parts
        if size < 1:
            raise ValueError(f"cannot split {self.n} observations into {parts} parts")
        ds = self._permuted(seed)
        return [ds.subset(slice(i * size, (i + 1) * size)) for i in range(parts)]

    def halves(self, seed: int | None = None) -> tuple["Dataset", "Dataset"]:
        a, b = self.split(2, seed=seed)
        return a, b

    def thirds(self, seed: int | None = None) -> tuple["Dataset", "Dataset", "Dataset"]:
        a, b, c = self.split(3, seed=seed)
        return a, b, c

    def to_csv(self, path) -> None:
        d = self.d
        header = ",".join([f"x_{a + 1}" for a in range(d)] + ["y"])
        table = np.column_stack([self.points, self.labels])
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header[-1] != "y" or not all(
                name == f"x_{a + 1}" for a, name in enumerate(header[:-1])
            ):
                raise ValueError(f"unexpected CSV header {header} in {path}")
            table = np.loadtxt(fh, delimiter=",", ndmin=2)
        if table.shape[1] != len(header):
            raise ValueError(f"CSV row width {table.shape[1]} does not match header")
        return cls(points=table[:, :-1], labels=table[:, -1])
