"""Honest adaptive L2 confidence balls for the regression function.

The construction runs on three equal parts of the sample: the first part
produces the center estimate and, through a sequence of composite tests over
a dyadic smoothness grid, the selected smoothness beta_hat; the second part
the density estimate; the third the centered U-statistic that estimates the
squared distance between truth and center.  Membership of a candidate h is
the displayed inequality

    ||h - f_hat||_2^2 <= U_hat + slack + z(alpha) tau(h),
    tau(h)^2 = C1 ||h - f_hat||_2^2 / n + C2 2^{j1} / (n (n - 1)),

so the ball is a closed L2 ball around the center whose squared radius
solves a scalar quadratic (see :func:`radius_upper_bound`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .estimators import (
    DEFAULT_DENSITY_THRESHOLD,
    DEFAULT_REGRESSION_THRESHOLD,
    ClassParams,
    estimate_density,
    estimate_regression,
)
from .gof import CompositeTestConfig, TestOutcome, composite_test, theory_level
from .ustat import WeightedSample, ustat_fast
from .wavelets import GridFunction, WaveletBasis

__all__ = [
    "BetaGrid",
    "ConfidenceConfig",
    "SmoothnessSelection",
    "ConfidenceBall",
    "beta_grid",
    "shell_radius",
    "select_smoothness",
    "build_confidence_ball",
    "contains",
    "radius_upper_bound",
    "AdaptiveConfidenceBall",
]


@dataclass(frozen=True)
class BetaGrid:
    """Dyadic smoothness grid beta_j = 2^{j-1} beta_min, j = 1..N."""

    beta_min: float
    beta_max: float
    N: int
    levels: tuple[float, ...]


def beta_grid(beta_min: float, beta_max: float) -> BetaGrid:
    """Grid with N = ceil(log2(beta_max / beta_min)) dyadic levels.

    Requires beta_max > 2 beta_min so the grid has at least two entries and
    the sequential tests have something to compare.
    """
    if beta_min <= 0 or beta_max <= 2.0 * beta_min:
        raise ValueError("need 0 < beta_min and beta_max > 2*beta_min")
    N = math.ceil(math.log2(beta_max / beta_min) - 1e-12)
    levels = tuple(2.0 ** (j - 1) * beta_min for j in range(1, N + 1))
    return BetaGrid(beta_min=beta_min, beta_max=beta_max, N=N, levels=levels)


def shell_radius(n: int, beta: float, d: int, M_star: float) -> float:
    """Separation radius of a smoothness shell: M* n^{-(2b/d)/(4b/d + 1)}."""
    if n < 1 or beta <= 0 or d < 1 or M_star <= 0:
        raise ValueError("all arguments must be positive")
    b = beta / d
    return M_star * float(n) ** (-2.0 * b / (4.0 * b + 1.0))


@dataclass(frozen=True)
class ConfidenceConfig:
    """Constants of the confidence construction.

    ``zeta``/``C_star`` feed the sequential composite tests, ``slack_C`` the
    deterministic slack, ``C1``/``C2`` the stochastic radius term.  ``z_alpha``
    defaults to 1/alpha (the Chebyshev-grade choice); explicit values below
    1/alpha are rejected.  ``floor_ustat`` optionally floors the distance
    estimate at zero before the ball is assembled, which is not part of the
    displayed predicate and defaults off.
    """

    params: ClassParams
    alpha: float
    zeta: float
    C_star: float
    slack_C: float
    C1: float
    C2: float
    M_star: float = 1.0
    z_alpha: float | None = None
    density_threshold: float = DEFAULT_DENSITY_THRESHOLD
    regression_threshold: float = DEFAULT_REGRESSION_THRESHOLD
    floor_ustat: bool = False
    split_seed: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        self.params.require_confidence()
        if min(self.zeta, self.C_star, self.slack_C, self.C1, self.C2) < 0:
            raise ValueError("constants must be nonnegative")
        if self.M_star <= 0:
            raise ValueError("M_star must be positive")
        if self.z_alpha is None:
            object.__setattr__(self, "z_alpha", 1.0 / self.alpha)
        elif self.z_alpha < 1.0 / self.alpha - 1e-12:
            raise ValueError(f"z_alpha must be at least 1/alpha = {1.0 / self.alpha}")


@dataclass(frozen=True)
class SmoothnessSelection:
    """Result of the sequential shell tests: beta_hat plus the trace."""

    beta_hat: float
    grid: BetaGrid
    test_level: float
    outcomes: tuple[TestOutcome, ...]
    tested_pairs: tuple[tuple[float, float], ...]


def select_smoothness(
    dataset_part: Dataset,
    grid: BetaGrid,
    cfg: ConfidenceConfig,
    basis: WaveletBasis,
) -> SmoothnessSelection:
    """Sequential smoothness selection over the dyadic grid.

    For j = 1..N-1, tests the null "the regression lies in the smoother
    shell j+1" against the shell-j alternative (composite test with
    beta1 = beta_{j+1}, beta2 = beta_j), each at level alpha/(4N).  The first
    rejection stops the scan and sets beta_hat = beta_j; if every test
    accepts, beta_hat = beta_N.
    """
    level_alpha = cfg.alpha / (4.0 * grid.N)
    outcomes = []
    pairs = []
    beta_hat = grid.levels[-1]
    for j in range(1, grid.N):
        beta2, beta1 = grid.levels[j - 1], grid.levels[j]
        test_cfg = CompositeTestConfig(
            beta1=beta1,
            beta2=beta2,
            alpha=level_alpha,
            zeta=cfg.zeta,
            C_star=cfg.C_star,
            params=cfg.params,
            density_threshold=cfg.density_threshold,
        )
        out = composite_test(dataset_part, test_cfg, basis, split_seed=cfg.split_seed)
        outcomes.append(out)
        pairs.append((beta1, beta2))
        if out.reject:
            beta_hat = beta2
            break
    return SmoothnessSelection(
        beta_hat=beta_hat,
        grid=grid,
        test_level=level_alpha,
        outcomes=tuple(outcomes),
        tested_pairs=tuple(pairs),
    )


@dataclass(frozen=True)
class ConfidenceBall:
    """Adaptive confidence ball: center, distance estimate, radius pieces."""

    beta_hat: float
    center: GridFunction
    U_hat: float
    deterministic_slack: float
    z_alpha: float
    tau_const_C1: float
    tau_const_C2: float
    j1: int
    n_eff: int
    d: int
    selection: SmoothnessSelection | None = None
    constants: dict = field(default_factory=dict)

    def tau(self, dist_sq: float) -> float:
        """Stochastic radius term at squared distance dist_sq from center."""
        return math.sqrt(
            self.tau_const_C1 * dist_sq / self.n_eff
            + self.tau_const_C2 * 2.0**self.j1 / (self.n_eff * (self.n_eff - 1))
        )

    def threshold(self, dist_sq: float) -> float:
        return self.U_hat + self.deterministic_slack + self.z_alpha * self.tau(dist_sq)

    def to_json_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat,
            "U_hat": self.U_hat,
            "deterministic_slack": self.deterministic_slack,
            "z_alpha": self.z_alpha,
            "tau_const_C1": self.tau_const_C1,
            "tau_const_C2": self.tau_const_C2,
            "j1": self.j1,
            "n_eff": self.n_eff,
            "d": self.d,
            "radius_upper_bound": radius_upper_bound(self),
            "constants": self.constants,
        }


def contains(ball: ConfidenceBall, h: GridFunction) -> bool:
    """Membership predicate, evaluated by grid quadrature against the center."""
    if h.resolution != ball.center.resolution or h.d != ball.center.d:
        raise ValueError("grid mismatch between candidate and ball center")
    dist_sq = float(((h.values - ball.center.values) ** 2).mean())
    return dist_sq <= ball.threshold(dist_sq)


def radius_upper_bound(ball: ConfidenceBall) -> float:
    """Squared L2 radius of the membership region, in closed form.

    Solves r^2 = A + z sqrt(B1 r^2 + B2) with A = U_hat + slack,
    B1 = C1/n, B2 = C2 2^{j1}/(n(n-1)): substituting s = sqrt(B1 r^2 + B2)
    gives the quadratic s^2 - B1 z s - (B1 A + B2) = 0 whose positive root
    yields the largest r^2.  An empty membership region returns 0.
    """
    n = ball.n_eff
    a = ball.U_hat + ball.deterministic_slack
    b1 = ball.tau_const_C1 / n
    b2 = ball.tau_const_C2 * 2.0**ball.j1 / (n * (n - 1))
    z = ball.z_alpha
    if b1 == 0.0:
        return max(0.0, a + z * math.sqrt(b2))
    disc = b1 * b1 * z * z + 4.0 * (b1 * a + b2)
    if disc < 0.0:
        return 0.0
    s = (b1 * z + math.sqrt(disc)) / 2.0
    return max(0.0, a + z * s)


def build_confidence_ball(
    dataset: Dataset,
    cfg: ConfidenceConfig,
    basis: WaveletBasis,
    alpha: float | None = None,
) -> ConfidenceBall:
    """Three-part construction of the adaptive confidence ball.

    Part 1 gives the center estimate and beta_hat, part 2 the density
    estimate, part 3 the centered U-statistic at level
    j1 = ceil((2/(4 beta_hat + d)) log2 n) with n the common part size.  The
    deterministic slack is slack_C * (n^{-4b/(4b+d)} +
    n^{-b/(2b+d)} n^{-gamma_min/(2 gamma_min+d)}) at b = beta_hat.
    """
    if alpha is not None and alpha != cfg.alpha:
        raise ValueError("alpha argument conflicts with cfg.alpha")
    part1, part2, part3 = dataset.thirds(seed=cfg.split_seed)
    n = part3.n
    if n < 2:
        raise ValueError("parts too small for the distance statistic")
    grid = beta_grid(cfg.params.beta_min, cfg.params.beta_max)
    regression = estimate_regression(
        part1,
        cfg.params,
        basis,
        C_starstar=cfg.regression_threshold,
        C_star=cfg.density_threshold,
    )
    selection = select_smoothness(part1, grid, cfg, basis)
    density = estimate_density(part2, cfg.params, basis, C_star=cfg.density_threshold)
    beta_hat = selection.beta_hat
    j1, _ = theory_level(n, beta_hat, basis.d, basis)
    f_at = regression(part3.points)
    g_at = density(part3.points)
    weights = (part3.labels - f_at) / g_at
    bound = 1.0 / (cfg.params.B_L / 2.0)
    u_hat = ustat_fast(basis, WeightedSample(part3.points, weights, bound), j1, "V")
    if cfg.floor_ustat:
        u_hat = max(0.0, u_hat)
    b = beta_hat
    d = basis.d
    slack = cfg.slack_C * (
        float(n) ** (-4.0 * b / (4.0 * b + d))
        + float(n) ** (-b / (2.0 * b + d))
        * float(n) ** (-cfg.params.gamma_min / (2.0 * cfg.params.gamma_min + d))
    )
    return ConfidenceBall(
        beta_hat=beta_hat,
        center=regression.estimate,
        U_hat=u_hat,
        deterministic_slack=slack,
        z_alpha=cfg.z_alpha,
        tau_const_C1=cfg.C1,
        tau_const_C2=cfg.C2,
        j1=j1,
        n_eff=n,
        d=d,
        selection=selection,
        constants={
            "alpha": cfg.alpha,
            "zeta": cfg.zeta,
            "C_star": cfg.C_star,
            "slack_C": cfg.slack_C,
            "M_star": cfg.M_star,
            "density_threshold": cfg.density_threshold,
            "regression_threshold": cfg.regression_threshold,
            "floor_ustat": cfg.floor_ustat,
            "regression_level": regression.selected_level,
            "density_level": density.selected_level,
        },
    )


class AdaptiveConfidenceBall:
    """Estimator-style wrapper: fit builds the ball, query methods follow.

    Thin object-oriented facade over :func:`build_confidence_ball` for use
    alongside the estimator classes; all statistical content lives in the
    functional API.
    """

    def __init__(self, cfg: ConfidenceConfig, basis: WaveletBasis):
        self.cfg = cfg
        self.basis = basis

    def fit(self, dataset: Dataset) -> "AdaptiveConfidenceBall":
        self.ball_ = build_confidence_ball(dataset, self.cfg, self.basis)
        return self

    def contains(self, h: GridFunction) -> bool:
        self._check_fitted()
        return contains(self.ball_, h)

    def radius_upper_bound(self) -> float:
        self._check_fitted()
        return radius_upper_bound(self.ball_)

    @property
    def beta_hat_(self) -> float:
        self._check_fitted()
        return self.ball_.beta_hat

    def _check_fitted(self):
        if not hasattr(self, "ball_"):
            raise RuntimeError("confidence ball is not fitted")
