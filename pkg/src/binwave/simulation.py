"""Ground-truth models, samplers, and Monte Carlo drivers.

Named regression / design-density truths on the unit cube, a sign-indexed
family of localized bumps, single-level detail-packet alternatives,
reproducible rejection sampling with counter-based replicate streams, Monte
Carlo experiments (test size and power, confidence-ball coverage, estimation
rate slopes), and empirical calibration of the pipeline constants.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .confidence import (
    ConfidenceConfig,
    build_confidence_ball,
    contains,
    radius_upper_bound,
)
from .data import Dataset
from .estimators import (
    DEFAULT_DENSITY_THRESHOLD,
    DEFAULT_REGRESSION_THRESHOLD,
    ClassParams,
    density_candidate,
    estimate_density,
    estimate_regression,
    lepski_select,
    level_grids,
)
from .gof import (
    CompositeTestConfig,
    SimpleTestConfig,
    composite_test,
    minimax_separation,
    simple_null_test,
    theory_level,
)
from .ustat import WeightedSample, ustat_fast
from .wavelets import (
    GridFunction,
    WaveletBasis,
    _synth_level,
    empirical_level_coeffs,
    eval_basis,
)

__all__ = [
    "BumpFamily",
    "CALIBRATION_KINDS",
    "ExperimentReport",
    "ModelSpec",
    "SHELL_TRUTHS",
    "bump_profile",
    "calibrate",
    "density_truth",
    "design_cdf_gap",
    "load_calibration",
    "make_bump_regression",
    "make_model",
    "make_shell_regression",
    "mc_coverage",
    "mc_rate",
    "mc_rejection_rate",
    "model_fingerprint",
    "rate_slope",
    "regression_truth",
    "replicate_stream",
    "sample_dataset",
    "save_calibration",
]


def replicate_stream(seed: int, replicate: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, replicate).

    Each replicate owns an independent Philox stream, so parallel runs are
    reproducible regardless of scheduling order.
    """
    if seed < 0 or replicate < 0:
        raise ValueError("seed and replicate index must be nonnegative")
    return np.random.Generator(np.random.Philox(key=[seed, replicate]))


# ---------------------------------------------------------------------------
# ground-truth models


@dataclass(frozen=True)
class ModelSpec:
    """A ground-truth pair: regression function f and design density g.

    Both live on the same midpoint grid.  ``density_bound`` is the constant
    envelope used by the rejection sampler and must dominate g everywhere;
    it defaults to the grid maximum of g.
    """

    f: GridFunction
    g: GridFunction
    beta: float
    gamma: float
    d: int
    density_bound: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.f.d != self.d or self.g.d != self.d:
            raise ValueError("f and g must match the stated dimension")
        if self.f.resolution != self.g.resolution:
            raise ValueError("f and g must share the model grid")
        if self.beta <= 0 or self.gamma <= 0:
            raise ValueError("smoothness labels must be positive")
        fv, gv = self.f.values, self.g.values
        if fv.min() <= 0.0 or fv.max() >= 1.0:
            raise ValueError("regression truth must lie strictly inside (0, 1)")
        if gv.min() <= 0.0:
            raise ValueError("design density must be positive")
        if abs(self.g.integral() - 1.0) > 1e-6:
            raise ValueError(f"design density integrates to {self.g.integral():.8f}, not 1")
        if self.density_bound is None:
            object.__setattr__(self, "density_bound", float(gv.max()))
        elif gv.max() > self.density_bound * (1.0 + 1e-9):
            raise ValueError("density exceeds its sampling envelope")

    @property
    def resolution(self) -> int:
        return self.f.resolution

    def check_brackets(self, B_L: float, B_U: float) -> None:
        """Raise unless g stays inside the stated density brackets."""
        gv = self.g.values
        if gv.min() < B_L - 1e-12 or gv.max() > B_U + 1e-12:
            raise ValueError(
                f"density range [{gv.min():.4f}, {gv.max():.4f}] leaves [{B_L}, {B_U}]"
            )


def model_fingerprint(model: ModelSpec) -> str:
    """Content hash of a model: labels plus both value grids."""
    h = hashlib.sha256()
    meta = {
        "name": model.name,
        "beta": model.beta,
        "gamma": model.gamma,
        "d": model.d,
        "resolution": model.resolution,
        "density_bound": model.density_bound,
    }
    h.update(json.dumps(meta, sort_keys=True).encode())
    h.update(model.f.values.tobytes())
    h.update(model.g.values.tobytes())
    return h.hexdigest()


def _first_axis(resolution: int, d: int) -> np.ndarray:
    """First coordinate over the full d-dimensional midpoint grid."""
    xs = GridFunction.axis_points(resolution)
    shape = (xs.size,) + (1,) * (d - 1)
    return np.broadcast_to(xs.reshape(shape), (xs.size,) * d).copy()


def regression_truth(name: str, resolution: int, d: int = 1) -> GridFunction:
    """Named regression profiles.

    "half" is the flat null f = 1/2; "smooth_step" is a Lipschitz-scale
    sigmoid ridge 1/2 + 0.3 tanh(10 sin(2 pi x_1)).
    """
    npts = 1 << resolution
    if name == "half":
        vals = np.full((npts,) * d, 0.5)
    elif name == "smooth_step":
        x1 = _first_axis(resolution, d)
        vals = 0.5 + 0.3 * np.tanh(10.0 * np.sin(2.0 * np.pi * x1))
    else:
        raise ValueError(f"unknown regression profile {name!r}")
    return GridFunction(vals, resolution, interpretation="regression")


def density_truth(name: str, resolution: int, d: int = 1) -> GridFunction:
    """Named design densities: "uniform" and the Lipschitz "ramp" 0.6 + 0.8 x_1."""
    npts = 1 << resolution
    if name == "uniform":
        vals = np.ones((npts,) * d)
    elif name == "ramp":
        vals = 0.6 + 0.8 * _first_axis(resolution, d)
    else:
        raise ValueError(f"unknown density profile {name!r}")
    return GridFunction(vals, resolution, interpretation="density")


# ---------------------------------------------------------------------------
# bump family and shell packets

_SUPPORT_EPS = 1e-12


def _bump_window(t) -> np.ndarray:
    """Smooth compact window exp(-1/(t(1/2 - t))) on (0, 1/2), zero outside."""
    t = np.asarray(t, dtype=float)
    s = t * (0.5 - t)
    out = np.zeros_like(s)
    mask = s > _SUPPORT_EPS
    out[mask] = np.exp(-1.0 / s[mask])
    return out


@lru_cache(maxsize=8)
def _profile_constants(d: int) -> tuple[float, float, float]:
    """(centering constant, L2 normalizer, sup norm) of the d-dim profile.

    Computed once by midpoint quadrature of the two separable axis factors on
    a 2^16-point grid over the support interval [0, 1/2].
    """
    q = 1 << 16
    t = (np.arange(q) + 0.5) * (0.5 / q)
    h = 0.5 / q
    w = _bump_window(t)
    osc = w * np.sin(4.0 * np.pi * t)
    support = float((w > 0).sum()) * h
    c = float(osc.sum()) * h / support
    osc_c = np.where(w > 0, osc - c, 0.0)
    i_osc = float((osc_c**2).sum()) * h
    i_win = float((w**2).sum()) * h
    norm = float(np.sqrt(i_osc * i_win ** (d - 1)))
    peak = float(np.abs(osc_c).max() * w.max() ** (d - 1) / norm)
    return c, norm, peak


def bump_profile(points, d: int) -> np.ndarray:
    """The localized mean-zero, unit-L2 profile on the unit cube.

    A product of the smooth window in every coordinate with the
    sign-alternating factor sin(4 pi t_1), numerically centered to quadrature
    mean zero and normalized to unit L2 norm; supported in [0, 1/2]^d.
    """
    c, norm, _ = _profile_constants(d)
    pts = np.asarray(points, dtype=float)
    if d == 1 and pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ValueError(f"points must be (n, {d})")
    w1 = _bump_window(pts[:, 0])
    vals = np.where(w1 > 0, w1 * np.sin(4.0 * np.pi * pts[:, 0]) - c, 0.0)
    for axis in range(1, d):
        vals = vals * _bump_window(pts[:, axis])
    return vals / norm


@dataclass(frozen=True)
class BumpFamily:
    """Sign-indexed family f = 1/2 + eps k^{-beta/d} sum_j lam_j H((x - x_j) m).

    The unit cube is tiled by k congruent cells (k must be a d-th power of
    the side count m), each carrying one signed copy of the localized profile
    H.  Every sign vector gives the same offset ||f - 1/2||_2 =
    eps k^{-beta/d}.  ``H`` is a tabulation of the profile on [0, 1]^d.
    """

    k: int
    beta: float
    d: int
    eps: float
    lam: tuple[int, ...]
    profile_res: int = 14
    H: GridFunction | None = None

    def __post_init__(self):
        if self.d < 1 or self.beta <= 0 or self.eps <= 0:
            raise ValueError("need d >= 1, beta > 0, eps > 0")
        m = round(self.k ** (1.0 / self.d))
        if self.k < 1 or m**self.d != self.k:
            raise ValueError("regular tiling needs k to be a d-th power of an integer")
        object.__setattr__(self, "_side", m)
        lam = tuple(int(s) for s in self.lam)
        if len(lam) != self.k or not set(lam) <= {-1, 1}:
            raise ValueError("lam must hold k signs in {-1, +1}")
        object.__setattr__(self, "lam", lam)
        _, _, peak = _profile_constants(self.d)
        if self.l2_offset() * peak >= 0.5:
            raise ValueError("amplitude pushes f outside (0, 1)")
        if self.H is None:
            res = min(self.profile_res, 18 // self.d)
            object.__setattr__(self, "H", self._tabulate_profile(res))

    def l2_offset(self) -> float:
        """The common L2 distance of every family member from 1/2."""
        return self.eps * self.k ** (-self.beta / self.d)

    def _tabulate_profile(self, resolution: int) -> GridFunction:
        vals = self._signed_field(resolution, m=1, lam=np.ones(1), amplitude=1.0)
        return GridFunction(vals, resolution)

    def _signed_field(self, resolution, m, lam, amplitude) -> np.ndarray:
        """amplitude * lam_j H((x - x_j) m) on the midpoint grid, additively
        over one axis factor per dimension (the profile is separable)."""
        c, norm, _ = _profile_constants(self.d)
        scaled = GridFunction.axis_points(resolution) * m
        cells = np.minimum(scaled.astype(np.int64), m - 1)
        t = scaled - cells
        w = _bump_window(t)
        osc = np.where(w > 0, w * np.sin(4.0 * np.pi * t) - c, 0.0) / norm
        def along(axis, arr):
            shape = (1,) * axis + (arr.size,) + (1,) * (self.d - 1 - axis)
            return arr.reshape(shape)

        field = along(0, osc)
        flat = along(0, cells * m ** (self.d - 1))
        for axis in range(1, self.d):
            field = field * along(axis, w)
            flat = flat + along(axis, cells * m ** (self.d - 1 - axis))
        signs = np.asarray(lam, dtype=float)[np.broadcast_to(flat, (1 << resolution,) * self.d)]
        return amplitude * signs * np.broadcast_to(field, signs.shape)

    def regression(self, resolution: int) -> GridFunction:
        """Materialize f on the midpoint grid at the given resolution."""
        vals = 0.5 + self._signed_field(
            resolution, m=self._side, lam=self.lam, amplitude=self.l2_offset()
        )
        if vals.min() <= 0.0 or vals.max() >= 1.0:
            raise ValueError("amplitude pushes f outside (0, 1)")
        return GridFunction(vals, resolution, interpretation="regression")


def make_bump_regression(k, beta, d, eps, lam, resolution: int = 12) -> GridFunction:
    """Regression truth of the bump family member with signs ``lam``."""
    return BumpFamily(k=k, beta=beta, d=d, eps=eps, lam=tuple(lam)).regression(resolution)


def make_shell_regression(
    basis: WaveletBasis, level: int, r: float, resolution: int | None = None
) -> GridFunction:
    """Single-level alternating detail packet at L2 distance r from 1/2.

    f = 1/2 + (r 2^{-l/2}) sum_k (-1)^k psi_{l,k}: all translates carry equal
    energy, so ||f - 1/2||_2 = r exactly in the periodized basis, and the
    smoothness-s Besov seminorm is 2^{l s} r.
    """
    if basis.d != 1:
        raise ValueError("shell packets are one-dimensional")
    basis.check_level(level)
    if r <= 0:
        raise ValueError("packet amplitude must be positive")
    res = basis.table_res if resolution is None else resolution
    xs = GridFunction.axis_points(res)
    acc = np.zeros_like(xs)
    for kk in range(1 << level):
        acc += (-1) ** kk * np.asarray(eval_basis(basis, level, kk, 1, xs))
    vals = 0.5 + (r / 2.0 ** (level / 2.0)) * acc
    if vals.min() <= 0.0 or vals.max() >= 1.0:
        raise ValueError("packet amplitude leaves the probability range")
    return GridFunction(vals, res, interpretation="regression")


# level and amplitude of packet truths sitting inside the smoothness-beta
# ball of radius 1 (seminorm 2^{l beta} r <= 1) while violating the next
# dyadic class by a wide margin
SHELL_TRUTHS = {0.5: (3, 0.35), 1.0: (2, 0.225), 2.0: (1, 0.225)}


def make_model(
    f="half",
    g="uniform",
    beta: float = 1.0,
    gamma: float = 1.0,
    d: int = 1,
    resolution: int = 12,
    basis: WaveletBasis | None = None,
    name: str | None = None,
) -> ModelSpec:
    """Assemble a ModelSpec from named profiles or constructor dicts.

    ``f`` is "half", "smooth_step", or a dict: kind "bump" with keys
    {k, eps, signs or sign_seed} or kind "shell" with keys {level, r} (shell
    construction needs ``basis``).  ``g`` is "uniform" or "ramp".
    """
    if isinstance(f, str):
        f_grid, f_tag = regression_truth(f, resolution, d), f
    elif isinstance(f, dict):
        kind = f.get("kind")
        if kind == "bump":
            k = int(f["k"])
            if "signs" in f:
                lam = tuple(int(s) for s in f["signs"])
            else:
                rng = replicate_stream(int(f.get("sign_seed", 0)))
                lam = tuple(rng.choice([-1, 1], size=k).tolist())
            f_grid = make_bump_regression(k, beta, d, float(f["eps"]), lam, resolution)
        elif kind == "shell":
            if basis is None:
                raise ValueError("shell models need a basis")
            f_grid = make_shell_regression(basis, int(f["level"]), float(f["r"]), resolution)
        else:
            raise ValueError(f"unknown regression constructor kind {kind!r}")
        f_tag = kind
    else:
        raise ValueError("f must be a profile name or a constructor dict")
    g_grid = density_truth(g, resolution, d)
    return ModelSpec(
        f=f_grid,
        g=g_grid,
        beta=beta,
        gamma=gamma,
        d=d,
        name=name if name is not None else f"{f_tag}-{g}",
    )


# ---------------------------------------------------------------------------
# sampling


def sample_dataset(model: ModelSpec, n: int, seed: int, replicate: int = 0) -> Dataset:
    """Draw n iid (x, y) pairs from the model, reproducibly.

    Design points come from rejection sampling of g against the constant
    envelope ``density_bound``; labels are Bernoulli draws at f(x).  The
    whole draw is a pure function of (seed, replicate).
    """
    if n < 1:
        raise ValueError("need n >= 1")
    rng = replicate_stream(seed, replicate)
    bound = model.density_bound
    chunks, got = [], 0
    while got < n:
        batch = int(np.ceil((n - got) * bound * 1.25)) + 16
        x = rng.random((batch, model.d))
        u = rng.random(batch)
        keep = u * bound <= model.g.eval_at(x)
        chunks.append(x[keep])
        got += int(keep.sum())
    pts = np.concatenate(chunks)[:n]
    labels = (rng.random(n) < model.f.eval_at(pts)).astype(float)
    return Dataset(pts, labels)


def design_cdf_gap(model: ModelSpec, points) -> float:
    """Sup gap between the empirical CDF of a sample and the quadrature CDF
    of g at the model's cell edges (one-dimensional models)."""
    if model.d != 1:
        raise ValueError("CDF comparison is one-dimensional")
    gv = model.g.values
    cdf = np.cumsum(gv) / gv.size
    x = np.sort(np.asarray(points, dtype=float).ravel())
    edges = (np.arange(gv.size) + 1.0) / gv.size
    ecdf = np.searchsorted(x, edges, side="right") / x.size
    return float(np.abs(ecdf - cdf).max())


# ---------------------------------------------------------------------------
# experiment reports


def _mean_se(values) -> tuple[float, float]:
    """Sample mean and Monte Carlo standard error sd/sqrt(R)."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two replicates for a standard error")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


@dataclass(frozen=True)
class ExperimentReport:
    """Per-replicate records plus deterministic summary statistics."""

    kind: str
    config: dict
    replicates: tuple[dict, ...]
    summary: dict
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "replicates", tuple(self.replicates))
        reps = self.config.get("reps")
        if reps is not None:
            groups = len(self.config["ns"]) if "ns" in self.config else 1
            if len(self.replicates) != reps * groups:
                raise ValueError(
                    f"got {len(self.replicates)} records for reps={reps} x {groups} groups"
                )

    def summary_json(self) -> str:
        """Deterministic JSON of everything except the per-replicate table."""
        payload = {
            "kind": self.kind,
            "config": self.config,
            "summary": self.summary,
            "seed": self.seed,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    def replicate_table(self) -> tuple[list[str], list[list]]:
        """Column names and rows of the per-replicate records."""
        cols: set[str] = set()
        for rec in self.replicates:
            cols.update(rec)
        names = sorted(cols)
        rows = [[rec.get(c, "") for c in names] for rec in self.replicates]
        return names, rows


def _map_replicates(fn, count: int, threads: int | None) -> list:
    """Ordered replicate map; results are independent of the thread count."""
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, range(count)))
    return [fn(i) for i in range(count)]


# ---------------------------------------------------------------------------
# Monte Carlo drivers


def mc_rejection_rate(
    test_kind: str,
    model: ModelSpec,
    n: int,
    reps: int,
    cfg,
    basis: WaveletBasis,
    seed: int = 0,
    threads: int | None = None,
) -> ExperimentReport:
    """Monte Carlo rejection frequency of one test on one model.

    ``test_kind`` is "simple" (cfg a SimpleTestConfig) or "composite" (cfg a
    CompositeTestConfig); per-level statistic traces are kept in the
    replicate records for diagnosis.
    """
    if test_kind not in ("simple", "composite"):
        raise ValueError(f"unknown test kind {test_kind!r}")
    if reps < 100:
        raise ValueError("rejection-rate experiments need reps >= 100")

    def one(r: int) -> dict:
        ds = sample_dataset(model, n, seed, r)
        if test_kind == "simple":
            out = simple_null_test(ds, cfg, basis)
        else:
            out = composite_test(ds, cfg, basis, split_seed=r)
        rec = {"replicate": r, "reject": int(out.reject)}
        for l in sorted(out.statistics):
            rec[f"stat_{l}"] = out.statistics[l]
            rec[f"cutoff_{l}"] = out.cutoffs[l]
        return rec

    records = _map_replicates(one, reps, threads)
    rate, se = _mean_se([rec["reject"] for rec in records])
    return ExperimentReport(
        kind=f"rejection-{test_kind}",
        config={
            "test_kind": test_kind,
            "model": model.name,
            "model_hash": model_fingerprint(model),
            "n": n,
            "reps": reps,
            "test_cfg": asdict(cfg),
        },
        replicates=tuple(records),
        summary={"rejection_rate": rate, "rejection_rate_se": se},
        seed=seed,
    )


def mc_coverage(
    model: ModelSpec,
    n: int,
    reps: int,
    cfg: ConfidenceConfig,
    basis: WaveletBasis,
    seed: int = 0,
    threads: int | None = None,
) -> ExperimentReport:
    """Empirical coverage of the confidence ball at the true regression."""
    if reps < 2:
        raise ValueError("need reps >= 2")
    if model.resolution != basis.table_res:
        raise ValueError("model grid must match the basis tables for coverage checks")

    def one(r: int) -> dict:
        ds = sample_dataset(model, n, seed, r)
        ball = build_confidence_ball(ds, replace(cfg, split_seed=r), basis)
        return {
            "replicate": r,
            "covered": int(contains(ball, model.f)),
            "beta_hat": ball.beta_hat,
            "radius_sq": radius_upper_bound(ball),
            "u_hat": ball.U_hat,
        }

    records = _map_replicates(one, reps, threads)
    cov, cov_se = _mean_se([rec["covered"] for rec in records])
    beta_hats = [rec["beta_hat"] for rec in records]
    freq = {str(b): beta_hats.count(b) / reps for b in sorted(set(beta_hats))}
    return ExperimentReport(
        kind="coverage",
        config={
            "model": model.name,
            "model_hash": model_fingerprint(model),
            "n": n,
            "reps": reps,
            "confidence_cfg": asdict(cfg),
        },
        replicates=tuple(records),
        summary={
            "coverage": cov,
            "coverage_se": cov_se,
            "median_radius_sq": float(np.median([rec["radius_sq"] for rec in records])),
            "beta_hat_freq": freq,
        },
        seed=seed,
    )


def mc_rate(
    model: ModelSpec,
    ns,
    reps: int,
    estimator_kind: str,
    params: ClassParams,
    basis: WaveletBasis,
    seed: int = 0,
    threads: int | None = None,
    density_threshold: float = DEFAULT_DENSITY_THRESHOLD,
    regression_threshold: float = DEFAULT_REGRESSION_THRESHOLD,
) -> ExperimentReport:
    """Mean squared estimation error across a grid of sample sizes.

    Fits the chosen estimator at every (n, replicate) pair, reports per-n
    means with standard errors, and the log-log slope of the mean MSE.
    """
    ns = sorted(int(v) for v in ns)
    if len(set(ns)) < 3:
        raise ValueError("need at least three distinct sample sizes")
    if reps < 2:
        raise ValueError("need reps >= 2")
    if estimator_kind not in ("density", "regression"):
        raise ValueError(f"unknown estimator kind {estimator_kind!r}")
    if model.resolution != basis.table_res:
        raise ValueError("model grid must match the basis tables for error norms")
    truth = model.g if estimator_kind == "density" else model.f

    def one(idx: int) -> dict:
        i_n, r = divmod(idx, reps)
        n = ns[i_n]
        ds = sample_dataset(model, n, seed, idx)
        if estimator_kind == "density":
            est = estimate_density(ds.points, params, basis, C_star=density_threshold)
        else:
            est = estimate_regression(
                ds,
                params,
                basis,
                C_starstar=regression_threshold,
                C_star=density_threshold,
                split_seed=idx,
            )
        mse = float(((est.estimate.values - truth.values) ** 2).mean())
        return {"replicate": r, "n": n, "mse": mse, "level": est.selected_level}

    records = _map_replicates(one, len(ns) * reps, threads)
    mean_mse, se_mse = {}, {}
    for n in ns:
        m, s = _mean_se([rec["mse"] for rec in records if rec["n"] == n])
        mean_mse[str(n)], se_mse[str(n)] = m, s
    slope, ci = rate_slope(ns, [mean_mse[str(n)] for n in ns])
    return ExperimentReport(
        kind=f"rate-{estimator_kind}",
        config={
            "model": model.name,
            "model_hash": model_fingerprint(model),
            "ns": ns,
            "reps": reps,
            "estimator_kind": estimator_kind,
            "params": asdict(params),
            "density_threshold": density_threshold,
            "regression_threshold": regression_threshold,
        },
        replicates=tuple(records),
        summary={
            "mse_mean": mean_mse,
            "mse_se": se_mse,
            "slope": slope,
            "slope_ci": [ci[0], ci[1]],
        },
        seed=seed,
    )


def rate_slope(ns, mses) -> tuple[float, tuple[float, float]]:
    """Least-squares slope of log(mse) on log(n) with a normal-theory CI.

    The CI half-width comes from the residual scatter around the fitted
    line; an exact power law has zero residuals and a degenerate CI.
    """
    ns = np.asarray(ns, dtype=float)
    mses = np.asarray(mses, dtype=float)
    if ns.size != mses.size or np.unique(ns).size < 3:
        raise ValueError("need at least three distinct sample sizes")
    if not (np.all(ns > 0) and np.all(mses > 0) and np.all(np.isfinite(mses))):
        raise ValueError("sample sizes and errors must be positive and finite")
    x = np.log(ns)
    y = np.log(mses)
    xc = x - x.mean()
    sxx = float((xc**2).sum())
    slope = float((xc * y).sum() / sxx)
    resid = y - y.mean() - slope * xc
    dof = x.size - 2
    se = float(np.sqrt((resid**2).sum() / dof / sxx)) if dof > 0 else 0.0
    return slope, (slope - 1.96 * se, slope + 1.96 * se)


# ---------------------------------------------------------------------------
# calibration

CALIBRATION_KINDS = (
    "simple-C",
    "composite-zeta",
    "density-error",
    "lepski",
    "slack",
    "power-D",
)


def _upper_quantile(values, p: float) -> float:
    return float(np.quantile(np.asarray(values, dtype=float), p, method="higher"))


def calibrate(
    kind: str,
    panel,
    basis: WaveletBasis,
    *,
    alpha: float,
    reps: int,
    n: int,
    seed: int,
    params: ClassParams | None = None,
    test_cfg=None,
    confidence_cfg: ConfidenceConfig | None = None,
    estimator_kind: str = "density",
    density_threshold: float = DEFAULT_DENSITY_THRESHOLD,
    threshold_grid=None,
    target_power: float = 0.92,
    bump_cells: int = 2,
    shell_level: int = 2,
    floor: float | None = None,
    threads: int | None = None,
) -> dict:
    """Empirically calibrate one pipeline constant over a null panel.

    Kinds: "simple-C" (cutoff constant of the simple null test),
    "composite-zeta" (composite slack multiplier), "density-error" (the
    rate-normalized density error constant), "lepski" (level-selection
    threshold by oracle agreement), "slack" (confidence-ball deterministic
    slack), "power-D" (smallest separation multiplier reaching the target
    power, by doubling search).  Returns a JSON-ready payload holding the
    constants, the seed, and a hash of the panel.
    """
    if kind not in CALIBRATION_KINDS:
        raise ValueError(f"unknown calibration kind {kind!r}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if reps < 2:
        raise ValueError("need reps >= 2")
    panel = list(panel) if panel is not None else []
    if kind != "power-D" and not panel:
        raise ValueError("calibration needs a nonempty null panel")

    if kind == "simple-C":
        constants = _calibrate_simple(panel, basis, alpha, reps, n, seed, threads)
    elif kind == "composite-zeta":
        if test_cfg is None:
            raise ValueError("composite calibration needs a CompositeTestConfig template")
        constants = _calibrate_zeta(panel, basis, test_cfg, alpha, reps, n, seed, threads)
    elif kind == "density-error":
        if params is None:
            raise ValueError("density-error calibration needs ClassParams")
        constants = _calibrate_density_error(
            panel, basis, params, alpha, reps, n, seed, density_threshold,
            0.05 if floor is None else floor, threads,
        )
    elif kind == "lepski":
        if params is None:
            raise ValueError("lepski calibration needs ClassParams")
        grid = np.geomspace(0.25, 16.0, 13) if threshold_grid is None else np.asarray(threshold_grid, float)
        constants = _calibrate_lepski(
            panel, basis, params, estimator_kind, grid, reps, n, seed,
            density_threshold, threads,
        )
    elif kind == "slack":
        if confidence_cfg is None:
            raise ValueError("slack calibration needs a ConfidenceConfig template")
        constants = _calibrate_slack(
            panel, basis, confidence_cfg, alpha, reps, n, seed,
            0.1 if floor is None else floor, threads,
        )
    else:
        if test_cfg is None:
            raise ValueError("power calibration needs a test config template")
        constants = _calibrate_power(
            basis, test_cfg, reps, n, seed, target_power, bump_cells, shell_level, threads,
        )

    digest = hashlib.sha256("".join(model_fingerprint(m) for m in panel).encode())
    return {
        "kind": kind,
        "alpha": alpha,
        "reps": reps,
        "n": n,
        "seed": seed,
        "panel": [m.name for m in panel],
        "panel_hash": digest.hexdigest(),
        "constants": constants,
    }


def _panel_map(fn, panel, reps, threads):
    """Replicate map over panel x reps with globally unique stream indices."""
    total = len(panel) * reps
    return _map_replicates(lambda idx: fn(panel[idx // reps], idx), total, threads)


def _calibrate_simple(panel, basis, alpha, reps, n, seed, threads) -> dict:
    for model in panel:
        if np.abs(model.f.values - 0.5).max() > 1e-9:
            raise ValueError("simple-test calibration panel must have f = 1/2")

    d = basis.d

    def one(model, idx):
        ds = sample_dataset(model, n, seed, idx)
        j0, _ = theory_level(n, model.beta, d, basis)
        ws = WeightedSample(ds.points, ds.labels - 0.5, 0.5)
        t = ustat_fast(basis, ws, j0, "V")
        return abs(t) * n / 2.0 ** (j0 * d / 2.0)

    pooled = _panel_map(one, panel, reps, threads)
    return {"C": _upper_quantile(pooled, 1.0 - alpha)}


def _calibrate_zeta(panel, basis, test_cfg, alpha, reps, n, seed, threads) -> dict:
    base_cfg = replace(test_cfg, zeta=0.0)
    d = basis.d

    def one(model, idx):
        ds = sample_dataset(model, n, seed, idx)
        out = composite_test(ds, base_cfg, basis, split_seed=idx)
        n_half = ds.n // 2
        needed = 0.0
        for l, t in out.statistics.items():
            root = np.sqrt(max(t, 0.0)) - np.sqrt(out.cutoffs[l])
            scale = 2.0 ** ((l + out.j0) * d / 8.0) / np.sqrt(n_half)
            needed = max(needed, root / scale)
        return needed

    pooled = _panel_map(one, panel, reps, threads)
    return {"zeta": _upper_quantile(pooled, 1.0 - alpha)}


def _calibrate_density_error(
    panel, basis, params, alpha, reps, n, seed, density_threshold, floor, threads
) -> dict:
    for model in panel:
        if model.resolution != basis.table_res:
            raise ValueError("panel grids must match the basis tables")

    def one(model, idx):
        ds = sample_dataset(model, n, seed, idx)
        est = estimate_density(ds.points, params, basis, C_star=density_threshold)
        err = float(np.sqrt(((est.estimate.values - model.g.values) ** 2).mean()))
        gamma = params.gamma_min
        return err * float(n) ** (gamma / (2.0 * gamma + basis.d))

    pooled = _panel_map(one, panel, reps, threads)
    return {"C_star": max(floor, _upper_quantile(pooled, 1.0 - alpha))}


def _calibrate_lepski(
    panel, basis, params, estimator_kind, grid, reps, n, seed, density_threshold, threads
) -> dict:
    if estimator_kind not in ("density", "regression"):
        raise ValueError(f"unknown estimator kind {estimator_kind!r}")
    for model in panel:
        if model.resolution != basis.table_res:
            raise ValueError("panel grids must match the basis tables")
    d = basis.d
    fams = (0,) * d

    def one(model, idx):
        ds = sample_dataset(model, n, seed, idx)
        if estimator_kind == "density":
            truth = model.g
            n_fit = ds.n
            levels = level_grids(max(n_fit, 4), d, params, basis).t2
            cand = {l: density_candidate(basis, ds.points, l) for l in levels}
        else:
            truth = model.f
            first, second = ds.halves(seed=idx)
            dens = estimate_density(second, params, basis, C_star=density_threshold)
            weights = first.labels / dens(first.points)
            n_fit = first.n
            cand = {}
            for j in level_grids(max(n_fit, 4), d, params, basis).t1:
                coef = empirical_level_coeffs(basis, j, fams, first.points, weights) / n_fit
                cand[j] = GridFunction(
                    _synth_level(basis, j, fams, coef, basis.table_res), basis.table_res
                )
        errs = {
            l: float(((c.values - truth.values) ** 2).mean()) for l, c in cand.items()
        }
        oracle = min(errs, key=errs.get)
        return [abs(lepski_select(cand, C, n_fit, d) - oracle) <= 1 for C in grid]

    hits = np.array(_panel_map(one, panel, reps, threads))
    agreement = hits.mean(axis=0)
    good = np.flatnonzero(agreement >= 0.9)
    pick = int(good[0]) if good.size else int(np.argmax(agreement))
    return {"threshold": float(grid[pick]), "agreement": float(agreement[pick])}


def _calibrate_slack(panel, basis, cfg, alpha, reps, n, seed, floor, threads) -> dict:
    for model in panel:
        if model.resolution != basis.table_res:
            raise ValueError("panel grids must match the basis tables")

    def one(model, idx):
        ds = sample_dataset(model, n, seed, idx)
        ball = build_confidence_ball(ds, replace(cfg, split_seed=idx, slack_C=0.0), basis)
        dist_sq = float(((ball.center.values - model.f.values) ** 2).mean())
        need = max(0.0, dist_sq - ball.U_hat - ball.z_alpha * ball.tau(dist_sq))
        b, dd, m = ball.beta_hat, ball.d, ball.n_eff
        gamma = cfg.params.gamma_min
        shape = float(m) ** (-4.0 * b / (4.0 * b + dd)) + float(m) ** (
            -b / (2.0 * b + dd)
        ) * float(m) ** (-gamma / (2.0 * gamma + dd))
        return need / shape

    pooled = _panel_map(one, panel, reps, threads)
    return {"slack_C": max(floor, _upper_quantile(pooled, 1.0 - alpha))}


def _calibrate_power(
    basis, test_cfg, reps, n, seed, target_power, bump_cells, shell_level, threads
) -> dict:
    """Doubling search for the smallest separation multiplier with the
    target rejection rate; alternatives are bumps (simple test) or shell
    packets just outside the null ball (composite test)."""
    if basis.d != 1:
        raise ValueError("power calibration is one-dimensional")
    simple = isinstance(test_cfg, SimpleTestConfig)
    beta_sep = test_cfg.beta if simple else test_cfg.beta2

    def alternative(D: float) -> ModelSpec:
        sep = minimax_separation(n, beta_sep, 1, D)
        if simple:
            eps = np.sqrt(sep) * bump_cells**beta_sep
            signs = tuple(-1 if j % 2 else 1 for j in range(bump_cells))
            f = make_bump_regression(bump_cells, beta_sep, 1, eps, signs, basis.table_res)
        else:
            r = np.sqrt(sep) + test_cfg.M * 2.0 ** (-shell_level * test_cfg.beta1)
            f = make_shell_regression(basis, shell_level, r, basis.table_res)
        return ModelSpec(
            f=f,
            g=density_truth("uniform", basis.table_res, 1),
            beta=beta_sep,
            gamma=8.0,
            d=1,
            name=f"alternative-D{D:g}",
        )

    D = 1.0
    for _ in range(13):
        try:
            model = alternative(D)
        except ValueError as exc:
            raise ValueError(f"target power not reached before D={D:g}: {exc}") from exc
        report = mc_rejection_rate(
            "simple" if simple else "composite", model, n, reps, test_cfg, basis,
            seed=seed, threads=threads,
        )
        power = report.summary["rejection_rate"]
        if power >= target_power:
            return {"D": D, "power": power}
        D *= 2.0
    raise ValueError(f"target power not reached within the search budget (last D={D / 2:g})")


def save_calibration(payload: dict, path) -> None:
    """Persist a calibration payload as deterministic JSON."""
    with open(Path(path), "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_calibration(path) -> dict:
    with open(Path(path)) as fh:
        return json.load(fh)
