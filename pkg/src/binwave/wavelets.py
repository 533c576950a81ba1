"""Periodized wavelet bases on [0,1]^d: evaluation, projection kernels, transforms.

The multiresolution machinery underlying the whole package.  A basis is a
tensor product of a 1-d orthonormal pair (scaling function phi, mother psi),
periodized to the unit cube.  Haar is evaluated in closed form; Daubechies
families are tabulated on a dyadic grid by the cascade refinement scheme and
evaluated by nearest-dyadic lookup.

Level conventions used throughout the package:

* ``kernel_v(basis, j, ...)`` is the reproducing kernel of the span of the
  level-j scaling tensors (dimension ``2^{jd}``; for haar it equals
  ``2^{jd} * 1{same dyadic cell at scale j}``).
* ``kernel_w(basis, j, ...)`` is the kernel of the level-j detail space
  (orientations with at least one mother factor), so that pointwise
  ``kernel_v(j+1) = kernel_v(j) + kernel_w(j)``.
* A :class:`CoeffTree` stores the scaling block at the coarsest level J0 plus
  detail blocks for levels J0..max_level; truncating the tree at detail level
  j spans the same space as the level-(j+1) scaling tensors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

__all__ = [
    "WaveletBasis",
    "CoeffTree",
    "GridFunction",
    "build_basis",
    "eval_basis",
    "kernel_v",
    "kernel_w",
    "analyze",
    "synthesize",
    "besov_norm",
    "distance_to_besov_ball",
    "orientations",
]


def orientations(d: int, include_zero: bool = False) -> list[tuple[int, ...]]:
    """All per-axis function selectors in {0,1}^d, 0 = scaling, 1 = mother.

    The all-zero orientation (pure scaling tensor) is excluded unless
    ``include_zero`` is set; detail spaces sum over the other 2^d - 1.
    """
    vs = [v for v in product((0, 1), repeat=d)]
    if not include_zero:
        vs = [v for v in vs if any(v)]
    return vs


def _daubechies_filter(nv: int) -> np.ndarray:
    """Orthonormal Daubechies low-pass filter with ``nv`` vanishing moments.

    Spectral factorization of the Daubechies autocorrelation polynomial:
    the half-band polynomial P(y) = sum_k C(nv-1+k, k) y^k is factored by
    root finding, roots are mapped to the z-plane, and the minimum-modulus
    root of each pair enters the transfer function
    m0(z) = ((1+z)/2)^nv * L(z) with L(1) = 1.  Returns h of length 2*nv
    with sum(h) = sqrt(2).
    """
    if nv == 1:
        return np.array([1.0, 1.0]) / math.sqrt(2.0)
    acorr = [math.comb(nv - 1 + k, k) for k in range(nv)]
    roots_y = np.roots(acorr[::-1])
    zroots = []
    for y0 in roots_y:
        # y = (2 - z - 1/z)/4 maps each y-root to a reciprocal z-pair
        b = 4.0 * y0 - 2.0
        disc = np.sqrt(b * b - 4.0 + 0j)
        z1, z2 = (-b + disc) / 2.0, (-b - disc) / 2.0
        zroots.append(z1 if abs(z1) < abs(z2) else z2)
    lpoly = np.array([1.0 + 0j])
    for z0 in zroots:
        lpoly = np.convolve(lpoly, np.array([-z0, 1.0])) / (1.0 - z0)
    binpart = np.array([math.comb(nv, k) for k in range(nv + 1)], dtype=float)
    m0 = np.convolve(binpart / 2.0**nv, lpoly.real)
    h = math.sqrt(2.0) * m0
    if abs(h[0]) < abs(h[-1]):
        h = h[::-1]  # canonical extremal-phase orientation
    return h


def _cascade_tables(h: np.ndarray, table_res: int) -> tuple[np.ndarray, np.ndarray]:
    """Tabulate phi and psi on the dyadic grid {m 2^-R} over [0, 2*nv - 1].

    Values at the integers solve the two-scale eigenproblem; finer dyadic
    points follow by iterating the refinement relation, which makes the
    tabulation satisfy it exactly (up to roundoff) on the grid.
    """
    width = len(h) - 1
    npts = width << table_res
    phi = np.zeros(npts + 1)
    if width >= 2:
        a = np.arange(1, width)
        idx = 2 * a[:, None] - a[None, :]
        mat = np.where((idx >= 0) & (idx < len(h)), math.sqrt(2.0) * h[np.clip(idx, 0, len(h) - 1)], 0.0)
        eigvals, eigvecs = np.linalg.eig(mat)
        v = np.real(eigvecs[:, np.argmin(np.abs(eigvals - 1.0))])
        v = v / v.sum()
        phi[(a << table_res)] = v
    else:
        phi[0] = 1.0  # haar: phi(0)=1 under the right-continuous convention
    for r in range(1, table_res + 1):
        step = 1 << (table_res - r)
        pos = np.arange(1, (width << r), 2) * step
        acc = np.zeros(len(pos))
        for k, hk in enumerate(h):
            src = 2 * pos - (k << table_res)
            ok = (src >= 0) & (src <= npts)
            acc[ok] += hk * phi[src[ok]]
        phi[pos] = math.sqrt(2.0) * acc
    g = ((-1.0) ** np.arange(len(h))) * h[::-1]  # g_k = (-1)^k h_{2nv-1-k}
    psi = np.zeros(npts + 1)
    m = np.arange(npts + 1)
    for k, gk in enumerate(g):
        src = 2 * m - (k << table_res)
        ok = (src >= 0) & (src <= npts)
        psi[ok] += gk * phi[src[ok]]
    psi *= math.sqrt(2.0)
    return phi, psi


@dataclass(frozen=True)
class WaveletBasis:
    """Periodized tensor-product wavelet basis on [0,1]^d.

    Immutable; all evaluation methods are pure and thread-safe.  ``table_res``
    (R) is the dyadic tabulation resolution: non-dyadic arguments are resolved
    by nearest-dyadic lookup, and levels up to ``max_level`` = R - 2 are usable
    so that on-grid quadrature at the working resolutions stays exact.
    """

    family: str
    vanishing_moments: int
    d: int
    table_res: int
    j0: int
    filter: np.ndarray | None = field(default=None, repr=False)
    phi_table: np.ndarray | None = field(default=None, repr=False)
    psi_table: np.ndarray | None = field(default=None, repr=False)

    @property
    def support_width(self) -> int:
        return 2 * self.vanishing_moments - 1

    @property
    def max_level(self) -> int:
        return self.table_res - 2

    def check_level(self, j: int) -> None:
        if not self.j0 <= j <= self.max_level:
            raise ValueError(
                f"level {j} outside usable range [{self.j0}, {self.max_level}] "
                f"for {self.family} basis with table resolution {self.table_res}"
            )

    def _lookup(self, fam: int, t: np.ndarray) -> np.ndarray:
        """Nearest-dyadic table value of phi (fam=0) or psi (fam=1) at t."""
        if self.family == "haar":
            inside = (t >= 0.0) & (t < 1.0)
            if fam == 0:
                return np.where(inside, 1.0, 0.0)
            return np.where(inside, np.where(t < 0.5, 1.0, -1.0), 0.0)
        table = self.phi_table if fam == 0 else self.psi_table
        idx = np.rint(t * (1 << self.table_res)).astype(np.int64)
        ok = (idx >= 0) & (idx < len(table))
        return np.where(ok, table[np.clip(idx, 0, len(table) - 1)], 0.0)

    def _slots_1d(self, fam: int, level: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Active periodized translates at one level along one axis.

        Returns ``(k, vals)`` of shape (n, m): for each point the translate
        indices (distinct, wrapped mod 2^level) and the periodized values
        ``2^{level/2} sum_m base(2^level x - k + m 2^level)``.  Every translate
        not listed has value 0 at that point.
        """
        x = np.asarray(x, dtype=float)
        nper = 1 << level
        scale = 2.0 ** (level / 2.0)
        tx = nper * x
        if self.family == "haar":
            kf = np.floor(tx).astype(np.int64)
            frac = tx - kf
            k = (kf % nper)[:, None]
            if fam == 0:
                vals = np.full_like(frac, scale)[:, None]
            else:
                vals = np.where(frac < 0.5, scale, -scale)[:, None]
            return k, vals
        width = self.support_width
        if nper >= width:
            kf = np.floor(tx).astype(np.int64)
            ks = kf[:, None] - np.arange(width)[None, :]
            t = tx[:, None] - ks
            return ks % nper, scale * self._lookup(fam, t)
        ks = np.broadcast_to(np.arange(nper)[None, :], (len(x), nper))
        t0 = tx[:, None] - np.arange(nper)[None, :]
        vals = np.zeros_like(t0)
        for wrap in range(0, width // nper + 2):
            vals += self._lookup(fam, t0 + wrap * nper)
        return ks.copy(), scale * vals


def build_basis(family: str, S: int | None = None, d: int = 1, R: int = 12) -> WaveletBasis:
    """Construct a periodized wavelet basis.

    Parameters
    ----------
    family : str
        ``"haar"`` or ``"daubechies-N"`` with N >= 2 vanishing moments.
    S : int, optional
        Regularity/vanishing-moment count; must be consistent with the family
        (haar forces S = 1, daubechies-N forces S = N).  Inferred if omitted.
    d : int
        Dimension of the cube, 1 <= d <= 3.
    R : int
        Dyadic tabulation resolution; levels up to R - 2 are usable.

    The coarsest level J0 is the smallest integer with 2^J0 >= S, which keeps
    every periodized level an orthonormal system.
    """
    if not 1 <= d <= 3:
        raise ValueError(f"d={d} unsupported; kernel index sets grow as 2^(j*d), d <= 3 only")
    if family == "haar":
        nv = 1
    elif family.startswith("daubechies-"):
        try:
            nv = int(family.split("-", 1)[1])
        except ValueError:
            raise ValueError(f"unsupported family {family!r}") from None
        if nv < 2:
            raise ValueError("daubechies-N requires N >= 2 (N = 1 is haar)")
    else:
        raise ValueError(f"unsupported family {family!r}")
    if S is not None and S != nv:
        raise ValueError(f"S={S} inconsistent with family {family!r} (expects S={nv})")
    j0 = (nv - 1).bit_length()  # smallest j with 2^j >= nv
    if R < j0 + 2:
        raise ValueError(f"R={R} too small: need R >= J0 + 2 = {j0 + 2} for any usable level")
    if family == "haar":
        return WaveletBasis("haar", 1, d, R, j0)
    h = _daubechies_filter(nv)
    phi, psi = _cascade_tables(h, R)
    return WaveletBasis(family, nv, d, R, j0, filter=h, phi_table=phi, psi_table=psi)


def _as_points(x, d: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(-1, 1) if d == 1 else pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ValueError(f"points must have shape (n, {d}); got {np.shape(x)}")
    return pts


def level_slots(
    basis: WaveletBasis, level: int, fams: tuple[int, ...], points: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Active tensor translates of one (level, orientation) at given points.

    Returns ``(idx, vals)`` of shape (n, m): flattened translate multi-indices
    (row-major over axes, each axis mod 2^level) and the tensor-product values.
    The translate lists are duplicate-free per point, so coefficient sums and
    diagonal corrections can both be accumulated from them directly.
    """
    pts = _as_points(points, basis.d)
    idx, vals = basis._slots_1d(fams[0], level, pts[:, 0])
    nper = 1 << level
    for axis in range(1, basis.d):
        ka, va = basis._slots_1d(fams[axis], level, pts[:, axis])
        n = len(pts)
        idx = (idx[:, :, None] * nper + ka[:, None, :]).reshape(n, -1)
        vals = (vals[:, :, None] * va[:, None, :]).reshape(n, -1)
    return idx, vals


def empirical_level_coeffs(
    basis: WaveletBasis,
    level: int,
    fams: tuple[int, ...],
    points: np.ndarray,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Weighted sums ``sum_i w_i psi^v_{level,k}(x_i)`` over all translates k.

    Workhorse for empirical projection estimates and for the fast U-statistic
    identity; returns a dense vector of length ``2^{level*d}``.
    """
    idx, vals = level_slots(basis, level, fams, points)
    if weights is not None:
        vals = vals * np.asarray(weights, dtype=float)[:, None]
    return np.bincount(idx.ravel(), weights=vals.ravel(), minlength=(1 << level) ** basis.d)


def eval_basis(basis: WaveletBasis, l: int, k, v, x) -> np.ndarray | float:
    """Evaluate one periodized basis function psi^v_{l,k} at point(s) x.

    ``v`` is the orientation tuple in {0,1}^d (scalars accepted for d = 1);
    ``k`` the translate multi-index with each entry in [0, 2^l).  The value is
    the tensor product of periodized 1-d factors 2^{l/2} base(2^l x_a - k_a).
    """
    if np.isscalar(v):
        v = (int(v),)
    if np.isscalar(k):
        k = (int(k),)
    if len(v) != basis.d or len(k) != basis.d:
        raise ValueError(f"orientation/translate must have {basis.d} entries")
    if l < basis.j0 or l > basis.max_level:
        raise ValueError(f"level {l} out of range [{basis.j0}, {basis.max_level}]")
    nper = 1 << l
    if any(not 0 <= ka < nper for ka in k):
        raise ValueError(f"translate {k} out of range for level {l}")
    pts = _as_points(x, basis.d)
    scale = 2.0 ** (l / 2.0)
    out = np.ones(len(pts))
    width = basis.support_width
    for axis in range(basis.d):
        t0 = nper * pts[:, axis] - k[axis]
        t0 = t0 - nper * np.floor(t0 / nper)  # wrap into [0, nper)
        acc = np.zeros(len(pts))
        for wrap in range(0, width // nper + 2):
            acc += basis._lookup(v[axis], t0 + wrap * nper)
        out *= scale * acc
    scalar_in = np.asarray(x).ndim <= 1 and basis.d >= 1 and np.asarray(x).size == basis.d
    return float(out[0]) if scalar_in else out


def _pair_kernel_orient(basis, j, fams, p1, p2) -> np.ndarray:
    i1, v1 = level_slots(basis, j, fams, p1)
    i2, v2 = level_slots(basis, j, fams, p2)
    match = i1[:, :, None] == i2[:, None, :]
    return np.where(match, v1[:, :, None] * v2[:, None, :], 0.0).sum(axis=(1, 2))


def kernel_v(basis: WaveletBasis, j: int, x1, x2) -> np.ndarray | float:
    """Projection kernel of the level-j scaling span, evaluated pairwise.

    K_{V_j}(x1, x2) = sum over the 2^{jd} level-j scaling tensors of
    psi(x1) psi(x2); for haar this is 2^{jd} when x1 and x2 share the scale-j
    dyadic cell and 0 otherwise.  Accepts single points or paired batches.
    """
    basis.check_level(j)
    p1, p2 = _as_points(x1, basis.d), _as_points(x2, basis.d)
    if len(p1) != len(p2):
        raise ValueError("x1 and x2 must pair up")
    out = _pair_kernel_orient(basis, j, (0,) * basis.d, p1, p2)
    return float(out[0]) if len(out) == 1 else out


def kernel_w(basis: WaveletBasis, j: int, x1, x2) -> np.ndarray | float:
    """Detail-space kernel at level j: the orientation sum with v != 0.

    Pointwise K_{W_j} = K_{V_{j+1}} - K_{V_j}.
    """
    basis.check_level(j)
    p1, p2 = _as_points(x1, basis.d), _as_points(x2, basis.d)
    if len(p1) != len(p2):
        raise ValueError("x1 and x2 must pair up")
    out = np.zeros(len(p1))
    for fams in orientations(basis.d):
        out += _pair_kernel_orient(basis, j, fams, p1, p2)
    return float(out[0]) if len(out) == 1 else out


# ---------------------------------------------------------------------------
# Grid functions and coefficient trees


@dataclass(frozen=True)
class GridFunction:
    """Function values on the midpoint dyadic grid {(m + 1/2) 2^-R_g}^d.

    Quadrature is the midpoint rule (mean of grid values), exact for
    piecewise-constant integrands at the grid scale, which is what makes the
    haar pipelines exact end to end.
    """

    values: np.ndarray
    resolution: int
    interpretation: str = "generic"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        npts = 1 << self.resolution
        if v.shape != (npts,) * v.ndim or v.ndim < 1:
            raise ValueError(f"values shape {v.shape} incompatible with resolution {self.resolution}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.ndim

    @staticmethod
    def axis_points(resolution: int) -> np.ndarray:
        npts = 1 << resolution
        return (np.arange(npts) + 0.5) / npts

    def grid_points(self) -> np.ndarray:
        """All grid midpoints as an (n, d) array in row-major cell order."""
        axes = [self.axis_points(self.resolution)] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def integral(self) -> float:
        return float(self.values.mean())

    def inner(self, other: "GridFunction") -> float:
        self._check_compatible(other)
        return float((self.values * other.values).mean())

    def l2_norm(self) -> float:
        return float(np.sqrt((self.values**2).mean()))

    def eval_at(self, points) -> np.ndarray:
        """Piecewise-constant evaluation: the value of the containing cell."""
        pts = _as_points(points, self.d)
        npts = 1 << self.resolution
        cells = np.clip(np.floor(pts * npts).astype(np.int64), 0, npts - 1)
        return self.values[tuple(cells[:, a] for a in range(self.d))]

    def to_resolution(self, resolution: int) -> "GridFunction":
        """Coarsen by cell averaging (the exact L2 projection between grids)."""
        if resolution > self.resolution:
            raise ValueError("can only coarsen a grid function")
        if resolution == self.resolution:
            return self
        factor = 1 << (self.resolution - resolution)
        v = self.values
        for axis in range(self.d):
            shape = v.shape[:axis] + ((1 << resolution), factor) + v.shape[axis + 1 :]
            v = v.reshape(shape).mean(axis=axis + 1)
        return GridFunction(v, resolution, self.interpretation)

    def _check_compatible(self, other: "GridFunction") -> None:
        if self.resolution != other.resolution or self.d != other.d:
            raise ValueError(
                f"grid mismatch: ({self.d}, 2^-{self.resolution}) vs ({other.d}, 2^-{other.resolution})"
            )

    def save(self, path) -> None:
        """Write to disk: CSV for a .csv suffix, flat little-endian binary
        otherwise; both start with the one-line header ``d,R_g``."""
        path = Path(path)
        header = f"{self.d},{self.resolution}\n"
        if path.suffix == ".csv":
            with open(path, "w") as fh:
                fh.write(header)
                np.savetxt(fh, self.values.ravel(), fmt="%.17g")
        else:
            with open(path, "wb") as fh:
                fh.write(header.encode())
                fh.write(self.values.ravel().astype("<f8").tobytes())

    @classmethod
    def load(cls, path, interpretation: str = "generic") -> "GridFunction":
        path = Path(path)
        if path.suffix == ".csv":
            with open(path) as fh:
                d, res = (int(tok) for tok in fh.readline().strip().split(","))
                flat = np.loadtxt(fh)
        else:
            with open(path, "rb") as fh:
                d, res = (int(tok) for tok in fh.readline().decode().strip().split(","))
                flat = np.frombuffer(fh.read(), dtype="<f8").copy()
        return cls(flat.reshape((1 << res,) * d), res, interpretation)


def _orient_key(v: tuple[int, ...]) -> str:
    return "".join(str(b) for b in v)


@dataclass(frozen=True)
class CoeffTree:
    """Wavelet coefficients: scaling block at J0 plus detail blocks per level.

    ``scaling`` is the flat vector of level-J0 scaling coefficients
    (length 2^{J0 d}); ``detail[l][v]`` the flat coefficient vector of
    orientation v at level l, J0 <= l <= max_level, each of length 2^{ld}.
    """

    d: int
    j0: int
    max_level: int
    scaling: np.ndarray
    detail: dict[int, dict[tuple[int, ...], np.ndarray]]
    source_resolution: int | None = None

    def __post_init__(self):
        if len(self.scaling) != (1 << self.j0) ** self.d:
            raise ValueError("scaling block has wrong length")
        for l, blocks in self.detail.items():
            for v, c in blocks.items():
                if len(c) != (1 << l) ** self.d:
                    raise ValueError(f"detail block ({l}, {v}) has wrong length")

    def level_norm(self, l: int) -> float:
        """L2 norm of the level-l detail block across all orientations."""
        blocks = self.detail.get(l)
        if not blocks:
            return 0.0
        return float(np.sqrt(sum(float(c @ c) for c in blocks.values())))

    def squared_sum(self, max_level: int | None = None) -> float:
        top = self.max_level if max_level is None else max_level
        total = float(self.scaling @ self.scaling)
        for l in self.detail:
            if l <= top:
                total += self.level_norm(l) ** 2
        return total

    def to_json_dict(self) -> dict:
        return {
            "d": self.d,
            "J0": self.j0,
            "max_level": self.max_level,
            "source_resolution": self.source_resolution,
            "scaling": self.scaling.tolist(),
            "detail": {
                str(l): {_orient_key(v): c.tolist() for v, c in blocks.items()}
                for l, blocks in self.detail.items()
            },
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CoeffTree":
        detail = {
            int(l): {
                tuple(int(ch) for ch in key): np.asarray(c, dtype=float)
                for key, c in blocks.items()
            }
            for l, blocks in data["detail"].items()
        }
        return cls(
            d=int(data["d"]),
            j0=int(data["J0"]),
            max_level=int(data["max_level"]),
            scaling=np.asarray(data["scaling"], dtype=float),
            detail=detail,
            source_resolution=data.get("source_resolution"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "CoeffTree":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def _grid_axis_slots(basis: WaveletBasis, level: int, fam: int, resolution: int):
    return basis._slots_1d(fam, level, GridFunction.axis_points(resolution))


def _accumulate_coeffs(basis, level, fams, h: GridFunction) -> np.ndarray:
    """Quadrature coefficients <h, psi^v_{level,.}> for every translate."""
    res = h.resolution
    nper = 1 << level
    axis_slots = [_grid_axis_slots(basis, level, fams[a], res) for a in range(h.d)]
    out = np.zeros(nper**h.d)
    weight = h.values / h.values.size
    if h.d == 1:
        k, v = axis_slots[0]
        return np.bincount(k.ravel(), weights=(weight[:, None] * v).ravel(), minlength=nper)
    ranges = [range(ks.shape[1]) for ks, _ in axis_slots]
    for combo in product(*ranges):
        vals = weight
        flat = np.zeros((1,) * h.d, dtype=np.int64)
        for a, s in enumerate(combo):
            ks, vs = axis_slots[a]
            shape = [1] * h.d
            shape[a] = -1
            vals = vals * vs[:, s].reshape(shape)
            flat = flat * nper + ks[:, s].reshape(shape)
        np.add.at(out, np.broadcast_to(flat, vals.shape).ravel(), vals.ravel())
    return out


def _synth_level(basis, level, fams, coef: np.ndarray, resolution: int) -> np.ndarray:
    """Evaluate ``sum_k coef[k] psi^v_{level,k}`` on the midpoint grid."""
    nper = 1 << level
    d = basis.d
    axis_slots = [_grid_axis_slots(basis, level, fams[a], resolution) for a in range(d)]
    npts = 1 << resolution
    out = np.zeros((npts,) * d)
    if d == 1:
        k, v = axis_slots[0]
        return (coef[k] * v).sum(axis=1)
    cgrid = coef.reshape((nper,) * d)
    ranges = [range(ks.shape[1]) for ks, _ in axis_slots]
    for combo in product(*ranges):
        gathered = cgrid[np.ix_(*[axis_slots[a][0][:, s] for a, s in enumerate(combo)])]
        for a, s in enumerate(combo):
            shape = [1] * d
            shape[a] = -1
            gathered = gathered * axis_slots[a][1][:, s].reshape(shape)
        out += gathered
    return out


def analyze(basis: WaveletBasis, h: GridFunction, max_level: int) -> CoeffTree:
    """Transform a grid function into its coefficient tree up to max_level.

    Coefficients are midpoint-quadrature inner products on h's grid, exact for
    haar whenever h is piecewise constant at the grid scale.  Requires
    ``max_level <= R_g - 2`` so every retained basis function is resolved.
    """
    if h.d != basis.d:
        raise ValueError(f"grid function is {h.d}-dimensional, basis is {basis.d}-dimensional")
    if max_level > h.resolution - 2:
        raise ValueError(f"max_level {max_level} too fine for grid resolution {h.resolution}")
    basis.check_level(max_level)
    scaling = _accumulate_coeffs(basis, basis.j0, (0,) * basis.d, h)
    detail = {
        l: {v: _accumulate_coeffs(basis, l, v, h) for v in orientations(basis.d)}
        for l in range(basis.j0, max_level + 1)
    }
    return CoeffTree(basis.d, basis.j0, max_level, scaling, detail, source_resolution=h.resolution)


def synthesize(
    basis: WaveletBasis, coeffs: CoeffTree, j: int, resolution: int | None = None
) -> GridFunction:
    """Sum the series truncated at detail level j back onto a grid.

    Returns the projection of the analyzed function onto the span of the
    scaling block plus detail levels J0..j.
    """
    if j > coeffs.max_level:
        raise ValueError(f"truncation level {j} exceeds stored max_level {coeffs.max_level}")
    if resolution is None:
        resolution = coeffs.source_resolution or min(basis.table_res, j + 2)
    out = _synth_level(basis, coeffs.j0, (0,) * basis.d, coeffs.scaling, resolution)
    for l in sorted(coeffs.detail):
        if l > j:
            continue
        for v, c in coeffs.detail[l].items():
            out = out + _synth_level(basis, l, v, c, resolution)
    return GridFunction(out, resolution)


def besov_norm(coeffs: CoeffTree, beta: float) -> float:
    """Besov-type norm from the coefficient tree, sup truncated at max_level.

    ``2^{J0 beta} ||scaling||_2 + max_l 2^{l beta} ||detail level l||_2``; the
    level sup runs over the resolved levels only, so functions with energy
    beyond max_level are measured through their resolved part.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    norm = 2.0 ** (coeffs.j0 * beta) * float(np.sqrt(coeffs.scaling @ coeffs.scaling))
    tail = max(
        (2.0 ** (l * beta) * coeffs.level_norm(l) for l in coeffs.detail),
        default=0.0,
    )
    return norm + tail


def distance_to_besov_ball(coeffs: CoeffTree, beta: float, M: float) -> float:
    """L2 distance (over resolved levels) to the decoupled Besov constraint set.

    The constraint set caps the scaling block at M 2^{-J0 beta} and every
    detail level l at M 2^{-l beta}.  Because the caps act on disjoint blocks,
    the nearest member shrinks each violating block radially and the distance
    is the root of the summed squared excesses.  Membership in the Besov ball
    of radius M (summed-norm form) implies distance zero; the two sets agree
    up to a factor two in M.
    """
    if beta <= 0 or M <= 0:
        raise ValueError("beta and M must be positive")
    excess = max(float(np.sqrt(coeffs.scaling @ coeffs.scaling)) - M * 2.0 ** (-coeffs.j0 * beta), 0.0) ** 2
    for l in coeffs.detail:
        excess += max(coeffs.level_norm(l) - M * 2.0 ** (-l * beta), 0.0) ** 2
    return float(np.sqrt(excess))
