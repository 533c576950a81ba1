"""Second-order U-statistics with wavelet projection kernels.

For bounded per-observation weights a_i and the level-j projection kernel K
(scaling span V or detail space W), computes

    U = (1/(n(n-1))) sum_{i1 != i2} a_{i1} K(x_{i1}, x_{i2}) a_{i2}

through the coefficient identity: expanding K over the active basis functions
turns the double sum into per-coefficient squares minus their diagonals, at
cost O(n * active basis per point) instead of O(n^2).  The literal double sum
is kept as a test oracle.  Tail-bound scale parameters for the degenerate
part are provided for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wavelets import GridFunction, WaveletBasis, level_slots, orientations

__all__ = [
    "WeightedSample",
    "TailParams",
    "HoeffdingSplit",
    "ustat_fast",
    "ustat_bruteforce",
    "hoeffding_split",
    "tail_params",
    "tail_bound",
]


@dataclass(frozen=True)
class WeightedSample:
    """Observations with bounded weights: the raw material of every statistic.

    ``weights[i]`` is the per-observation factor (for instance y_i - 1/2 for
    the centered-response statistic, or y_i / g_hat(x_i) for the
    density-normalized one); ``bound`` is an a.s. bound B with |a_i| <= B.
    """

    points: np.ndarray
    weights: np.ndarray
    bound: float

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if pts.shape[0] != len(w):
            raise ValueError("points and weights must have equal length")
        if len(w) < 2:
            raise ValueError("need at least two observations")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise ValueError("points must lie in the unit cube")
        if self.bound <= 0 or np.abs(w).max() > self.bound * (1 + 1e-12):
            raise ValueError(f"weights exceed the stated bound {self.bound}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class TailParams:
    """Scale parameters of the degenerate U-statistic deviation bound."""

    a1: float
    a2: float
    a3: float
    n: int
    j: int
    d: int


def tail_params(n: int, j: int, d: int) -> TailParams:
    """Deviation-bound scales for a level-j projection kernel on n points.

    a1 = 2^{jd/2}/(n-1), a2 = (sqrt(2^{jd}/n) + 1)/(n-1),
    a3 = (sqrt(2^{jd}/n) + 2^{jd}/n)/(n-1).
    """
    if n < 2:
        raise ValueError("n >= 2 required")
    dim = 2.0 ** (j * d)
    ratio = dim / n
    return TailParams(
        a1=np.sqrt(dim) / (n - 1),
        a2=(np.sqrt(ratio) + 1.0) / (n - 1),
        a3=(np.sqrt(ratio) + ratio) / (n - 1),
        n=n,
        j=j,
        d=d,
    )


def tail_bound(tp: TailParams, t: float, C: float = 1.0) -> float:
    """Shape of the four-regime deviation bound at threshold t.

    exp(-Cnt^2) + exp(-Ct^2/a1^2) + exp(-Ct/a2) + exp(-C sqrt(t)/sqrt(a3)),
    capped at 1.  The constant C is existential in the underlying bound; the
    default 1 gives the shape only, not a validated probability.
    """
    if t <= 0:
        return 1.0
    total = (
        np.exp(-C * tp.n * t * t)
        + np.exp(-C * t * t / tp.a1**2)
        + np.exp(-C * t / tp.a2)
        + np.exp(-C * np.sqrt(t) / np.sqrt(tp.a3))
    )
    return float(min(1.0, total))


def _kind_orientations(basis: WaveletBasis, kind: str) -> list[tuple[int, ...]]:
    if kind == "V":
        return [(0,) * basis.d]
    if kind == "W":
        return orientations(basis.d)
    raise ValueError(f"kind must be 'V' or 'W', got {kind!r}")


def ustat_fast(basis: WaveletBasis, ws: WeightedSample, j: int, kind: str) -> float:
    """U-statistic via the coefficient identity.

    For each active basis function, (sum_i a_i psi(x_i))^2 collects the full
    double sum including the diagonal; subtracting sum_i a_i^2 psi(x_i)^2
    leaves exactly the off-diagonal part.  Algebraically identical to
    :func:`ustat_bruteforce`.
    """
    basis.check_level(j)
    if ws.points.shape[1] != basis.d:
        raise ValueError(f"sample is {ws.points.shape[1]}-dimensional, basis is {basis.d}")
    n = ws.n
    a = ws.weights
    total = 0.0
    for fams in _kind_orientations(basis, kind):
        idx, vals = level_slots(basis, j, fams, ws.points)
        av = a[:, None] * vals
        coeff_sums = np.bincount(idx.ravel(), weights=av.ravel(), minlength=(1 << j) ** basis.d)
        total += float(coeff_sums @ coeff_sums) - float((av * av).sum())
    return total / (n * (n - 1))


def ustat_bruteforce(basis: WaveletBasis, ws: WeightedSample, j: int, kind: str) -> float:
    """Literal double sum over ordered pairs i1 != i2; O(n^2) test oracle."""
    basis.check_level(j)
    from .wavelets import kernel_v, kernel_w

    kfun = kernel_v if kind == "V" else kernel_w
    if kind not in ("V", "W"):
        raise ValueError(f"kind must be 'V' or 'W', got {kind!r}")
    n = ws.n
    total = 0.0
    for i in range(n):
        xi = np.broadcast_to(ws.points[i], (n, basis.d))
        row = np.asarray(kfun(basis, j, xi, ws.points))
        row = np.atleast_1d(row)
        contrib = ws.weights[i] * row * ws.weights
        total += contrib.sum() - contrib[i]
    return float(total) / (n * (n - 1))


@dataclass(frozen=True)
class HoeffdingSplit:
    """Linear/degenerate decomposition of the U-statistic around a reference.

    ``linear + degenerate + mean_term`` reproduces the U-statistic exactly for
    any reference; when the reference equals the true conditional-mean-weight
    times design density, the three terms are the Hajek projection, the purely
    degenerate remainder, and the population mean.
    """

    linear: float
    degenerate: float
    mean_term: float

    @property
    def total(self) -> float:
        return self.linear + self.degenerate + self.mean_term


def hoeffding_split(
    basis: WaveletBasis,
    ws: WeightedSample,
    j: int,
    kind: str,
    reference: GridFunction,
) -> HoeffdingSplit:
    """Decompose the U-statistic against a supplied reference function.

    ``reference`` is a grid tabulation of m(x) = E[a | X = x] g(x); its
    coefficients c = <m, psi> (midpoint quadrature) center the per-coefficient
    sums S:

        mean_term = sum c^2
        linear    = sum (2/n) c (S - n c)
        degenerate= sum [ (S - n c)^2 - sum_i (a_i psi(x_i) - c)^2 ] / (n(n-1))
    """
    basis.check_level(j)
    if reference.d != basis.d:
        raise ValueError("reference function dimension does not match basis")
    n = ws.n
    a = ws.weights
    linear = degenerate = mean_term = 0.0
    weight = reference.values / reference.values.size
    for fams in _kind_orientations(basis, kind):
        idx, vals = level_slots(basis, j, fams, ws.points)
        av = a[:, None] * vals
        nper = (1 << j) ** basis.d
        coeff_sums = np.bincount(idx.ravel(), weights=av.ravel(), minlength=nper)
        sq_sums = np.bincount(idx.ravel(), weights=(av * av).ravel(), minlength=nper)
        gi, gv = level_slots(basis, j, fams, reference.grid_points())
        c = np.bincount(gi.ravel(), weights=(weight.ravel()[:, None] * gv).ravel(), minlength=nper)
        centered = coeff_sums - n * c
        mean_term += float(c @ c)
        linear += float((2.0 / n) * c @ centered)
        diag = sq_sums - 2.0 * c * coeff_sums + n * c * c
        degenerate += float((centered @ centered - diag.sum()) / (n * (n - 1)))
    return HoeffdingSplit(linear=linear, degenerate=degenerate, mean_term=mean_term)
