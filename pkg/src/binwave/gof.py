"""Goodness-of-fit tests for the regression function via projection U-statistics.

Two procedures:

* the simple-null test of f = 1/2 against smooth alternatives separated in
  L2, using the centered-response statistic at the single theory level j0;
* the composite test of membership in a Besov ball against alternatives
  separated from it, scanning one detail-space statistic per level up to j0
  with density-normalized weights and the closed-form cutoffs.

Cutoff constants are existential in the theory; defaults are meant to come
from null calibration (simulation module).  Cutoffs use the lower bracket of
the density smoothness, the conservative end of the admissible range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .estimators import (
    DEFAULT_DENSITY_THRESHOLD,
    ClassParams,
    estimate_density,
)
from .ustat import WeightedSample, ustat_fast
from .wavelets import WaveletBasis

__all__ = [
    "SimpleTestConfig",
    "CompositeTestConfig",
    "TestOutcome",
    "theory_level",
    "simple_null_test",
    "composite_test",
    "composite_cutoff",
    "minimax_separation",
]


def theory_level(n: int, beta: float, d: int, basis: WaveletBasis) -> tuple[int, str | None]:
    """j0 = ceil((2/(4 beta + d)) log2 n), clamped into the basis range.

    Returns the level and a warning string when clamping moved it; small
    samples cannot always honor the asymptotic prescription.
    """
    raw = math.ceil((2.0 / (4.0 * beta + d)) * math.log2(n) - 1e-9)
    j0 = min(max(raw, basis.j0), basis.max_level)
    warning = None
    if j0 != raw:
        warning = f"theory level {raw} clamped to {j0} for basis range [{basis.j0}, {basis.max_level}]"
    return j0, warning


def minimax_separation(n: int, beta: float, d: int, D: float) -> float:
    """Separation radius D * n^{-4 beta / (4 beta + d)} (squared L2 scale)."""
    if n < 1 or beta <= 0 or d < 1 or D <= 0:
        raise ValueError("all arguments must be positive")
    return D * float(n) ** (-4.0 * beta / (4.0 * beta + d))


@dataclass(frozen=True)
class SimpleTestConfig:
    """Simple-null test parameters: smoothness labels, level, cutoff constant."""

    beta: float
    gamma: float
    alpha: float
    C: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.beta <= 0 or self.gamma <= self.beta:
            raise ValueError("need 0 < beta < gamma")
        if self.C <= 0:
            raise ValueError("cutoff constant must be positive")


@dataclass(frozen=True)
class CompositeTestConfig:
    """Composite test parameters.

    The null ball has smoothness ``beta1``; alternatives are separated from it
    at the ``beta2`` rate (beta2 < beta1).  ``C_star`` is the density-error
    constant inside the cutoff; ``B_L_prime`` defaults to the density clamp
    floor B_L / 2.  ``density_threshold`` is the Lepski constant used to build
    the plug-in density estimate and is deliberately distinct from C_star.
    """

    beta1: float
    beta2: float
    alpha: float
    zeta: float
    C_star: float
    params: ClassParams
    density_threshold: float = DEFAULT_DENSITY_THRESHOLD
    B_L_prime: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if not 0 < self.beta2 < self.beta1:
            raise ValueError("need 0 < beta2 < beta1")
        if not self.params.gamma_min > 2.0 * self.beta2:
            raise ValueError(
                f"composite test requires gamma_min > 2*beta2 "
                f"(got {self.params.gamma_min} <= {2.0 * self.beta2})"
            )
        if self.zeta < 0 or self.C_star < 0:
            raise ValueError("zeta and C_star must be nonnegative")
        if self.B_L_prime is None:
            object.__setattr__(self, "B_L_prime", self.params.B_L / 2.0)
        if self.B_L_prime <= 0:
            raise ValueError("B_L_prime must be positive")

    @property
    def gamma_min(self) -> float:
        return self.params.gamma_min

    @property
    def M(self) -> float:
        return self.params.M


@dataclass(frozen=True)
class TestOutcome:
    """Statistics, cutoffs, and the decision of one test run.

    ``statistics`` and ``cutoffs`` are keyed by level; the simple test has a
    single entry at j0 and rejects two-sided, the composite test rejects when
    any level's statistic exceeds its cutoff one-sided.
    """

    kind: str
    statistics: dict[int, float]
    cutoffs: dict[int, float]
    reject: bool
    j0: int
    constants: dict = field(default_factory=dict)
    warning: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "statistics": {str(l): v for l, v in self.statistics.items()},
            "cutoffs": {str(l): v for l, v in self.cutoffs.items()},
            "reject": bool(self.reject),
            "j0": self.j0,
            "constants": self.constants,
            "warning": self.warning,
        }


def simple_null_test(dataset: Dataset, cfg: SimpleTestConfig, basis: WaveletBasis) -> TestOutcome:
    """Test f = 1/2: centered-response U-statistic at the theory level.

    T = U-statistic of the weights y_i - 1/2 with the scaling kernel at j0;
    rejects when |T| > C 2^{j0 d/2} / n.
    """
    n = dataset.n
    if n < 2:
        raise ValueError("need at least two observations")
    if dataset.d != basis.d:
        raise ValueError("dataset dimension does not match basis")
    j0, warning = theory_level(n, cfg.beta, basis.d, basis)
    ws = WeightedSample(dataset.points, dataset.labels - 0.5, 0.5)
    stat = ustat_fast(basis, ws, j0, "V")
    cutoff = cfg.C * 2.0 ** (j0 * basis.d / 2.0) / n
    return TestOutcome(
        kind="simple",
        statistics={j0: stat},
        cutoffs={j0: cutoff},
        reject=bool(abs(stat) > cutoff),
        j0=j0,
        constants={"C": cfg.C, "beta": cfg.beta, "gamma": cfg.gamma, "alpha": cfg.alpha},
        warning=warning,
    )


def composite_cutoff(
    l: int,
    j0: int,
    n: int,
    d: int,
    M: float,
    beta1: float,
    gamma_min: float,
    cstar_ratio: float,
    zeta: float,
) -> float:
    """Level-l rejection cutoff of the composite test.

    (M 2^{-l beta1} + cstar_ratio * n^{-gamma_min/(2 gamma_min + d)}
       + zeta 2^{(l + j0) d / 8} / sqrt(n))^2,
    where cstar_ratio = C_star / B_L_prime.
    """
    bias = M * 2.0 ** (-l * beta1)
    density_err = cstar_ratio * float(n) ** (-gamma_min / (2.0 * gamma_min + d))
    stochastic = zeta * 2.0 ** ((l + j0) * d / 8.0) / math.sqrt(n)
    return (bias + density_err + stochastic) ** 2


def composite_test(
    dataset: Dataset,
    cfg: CompositeTestConfig,
    basis: WaveletBasis,
    split_seed: int | None = None,
) -> TestOutcome:
    """Composite Besov-ball test with estimated design density.

    The sample is halved: the second half builds the clamped density
    estimate, the first carries the detail-space statistics
    T_n(l) = U-statistic of weights y_i / g_hat(x_i) at levels J0..j0.
    Rejects when any statistic exceeds its closed-form cutoff.
    """
    if dataset.n < 4:
        raise ValueError("composite test needs at least four observations to split")
    if dataset.d != basis.d:
        raise ValueError("dataset dimension does not match basis")
    first, second = dataset.halves(seed=split_seed)
    density = estimate_density(second, cfg.params, basis, C_star=cfg.density_threshold)
    n = first.n
    j0, warning = theory_level(n, cfg.beta2, basis.d, basis)
    gvals = density(first.points)
    ws = WeightedSample(first.points, first.labels / gvals, 1.0 / cfg.B_L_prime)
    ratio = cfg.C_star / cfg.B_L_prime
    statistics: dict[int, float] = {}
    cutoffs: dict[int, float] = {}
    for l in range(basis.j0, j0 + 1):
        statistics[l] = ustat_fast(basis, ws, l, "W")
        cutoffs[l] = composite_cutoff(
            l, j0, n, basis.d, cfg.M, cfg.beta1, cfg.gamma_min, ratio, cfg.zeta
        )
    reject = any(statistics[l] > cutoffs[l] for l in statistics)
    return TestOutcome(
        kind="composite",
        statistics=statistics,
        cutoffs=cutoffs,
        reject=bool(reject),
        j0=j0,
        constants={
            "beta1": cfg.beta1,
            "beta2": cfg.beta2,
            "alpha": cfg.alpha,
            "zeta": cfg.zeta,
            "C_star": cfg.C_star,
            "B_L_prime": cfg.B_L_prime,
            "gamma_min": cfg.gamma_min,
            "M": cfg.M,
            "density_level": density.selected_level,
        },
        warning=warning,
    )
