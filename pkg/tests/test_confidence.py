"""Beta grid, shell radii, smoothness selection, confidence balls."""

import numpy as np
import pytest

from binwave.confidence import (
    AdaptiveConfidenceBall,
    BetaGrid,
    ConfidenceBall,
    ConfidenceConfig,
    beta_grid,
    build_confidence_ball,
    contains,
    radius_upper_bound,
    select_smoothness,
    shell_radius,
)
from binwave.data import Dataset
from binwave.estimators import ClassParams
from binwave.gof import minimax_separation
from binwave.wavelets import GridFunction, build_basis, eval_basis


def _params(**kw):
    base = dict(
        beta_min=0.5, beta_max=2.5, gamma_min=6.0, gamma_max=8.0,
        M=1.0, M_prime=1.0, B_L=0.5, B_U=2.0,
    )
    base.update(kw)
    return ClassParams(**base)


def _cfg(**kw):
    base = dict(
        params=_params(), alpha=0.1, zeta=1.0, C_star=0.1, slack_C=0.5,
        C1=1.0, C2=1.0,
    )
    base.update(kw)
    return ConfidenceConfig(**base)


def _ball(**kw):
    base = dict(
        beta_hat=1.0,
        center=GridFunction(np.full(64, 0.5), 6),
        U_hat=0.0,
        deterministic_slack=0.0,
        z_alpha=10.0,
        tau_const_C1=0.0,
        tau_const_C2=2e-6,
        j1=0,
        n_eff=2,
        d=1,
    )
    base.update(kw)
    return ConfidenceBall(**base)


class TestBetaGrid:
    def test_pinned_grids(self):
        g = beta_grid(0.5, 4.0)
        assert g.N == 3 and g.levels == (0.5, 1.0, 2.0)
        g2 = beta_grid(1.0, 2.01)
        assert g2.N == 2 and g2.levels == (1.0, 2.0)

    def test_dyadic_structure(self):
        g = beta_grid(0.3, 10.0)
        for a, b in zip(g.levels, g.levels[1:]):
            assert b == 2.0 * a

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            beta_grid(1.0, 2.0)
        with pytest.raises(ValueError):
            beta_grid(-1.0, 5.0)


class TestShellRadius:
    def test_pinned_value(self):
        assert shell_radius(1024, 1.0, 1, 1.0) == pytest.approx(0.0625)

    def test_square_is_separation_rate(self):
        for n, beta in [(500, 0.5), (2048, 2.0)]:
            np.testing.assert_allclose(
                shell_radius(n, beta, 1, 1.0) ** 2,
                minimax_separation(n, beta, 1, 1.0),
                rtol=1e-12,
            )

    def test_decreasing_in_beta(self):
        radii = [shell_radius(1024, b, 1, 1.0) for b in [0.5, 1.0, 2.0, 4.0]]
        assert all(r2 < r1 for r1, r2 in zip(radii, radii[1:]))


class TestConfidenceConfig:
    def test_z_alpha_default_and_floor(self):
        assert _cfg().z_alpha == pytest.approx(10.0)
        assert _cfg(z_alpha=25.0).z_alpha == 25.0
        with pytest.raises(ValueError, match="z_alpha"):
            _cfg(z_alpha=5.0)

    def test_requires_confidence_precondition(self):
        with pytest.raises(ValueError, match="2\\*beta_max"):
            _cfg(params=_params(gamma_min=3.0, gamma_max=4.0))


class TestSelectSmoothness:
    def test_all_accept_falls_through_to_smoothest(self, haar1, rng):
        ds = Dataset(rng.uniform(size=(240, 1)), rng.integers(0, 2, 240).astype(float))
        grid = beta_grid(0.5, 2.5)
        sel = select_smoothness(ds, grid, _cfg(zeta=50.0), haar1)
        assert sel.beta_hat == grid.levels[-1]
        assert len(sel.outcomes) == grid.N - 1
        assert sel.test_level == pytest.approx(0.1 / (4 * grid.N))

    def test_first_rejection_stops_scan(self, haar1, rng):
        # strong step signal plus near-zero cutoffs force the first test to
        # reject, so the scan stops after one outcome
        x = rng.uniform(size=(240, 1))
        y = (x[:, 0] < 0.5).astype(float)
        grid = beta_grid(0.5, 2.5)
        cfg = _cfg(zeta=0.0, C_star=0.0, params=_params(M=1e-6))
        sel = select_smoothness(Dataset(x, y), grid, cfg, haar1)
        assert sel.beta_hat == grid.levels[0]
        assert len(sel.outcomes) == 1
        assert sel.outcomes[0].reject

    def test_tested_pairs_are_adjacent_levels(self, haar1, rng):
        ds = Dataset(rng.uniform(size=(200, 1)), rng.integers(0, 2, 200).astype(float))
        grid = beta_grid(0.5, 2.5)
        sel = select_smoothness(ds, grid, _cfg(zeta=50.0), haar1)
        assert sel.tested_pairs == ((1.0, 0.5), (2.0, 1.0))


class TestContains:
    def test_hand_built_predicate(self):
        # U=0.01, slack=0.002, z=10, tau=0.001: threshold 0.022
        ball = _ball(U_hat=0.01, deterministic_slack=0.002)
        assert ball.tau(0.123) == pytest.approx(0.001)
        h_in = GridFunction(0.5 + np.sqrt(0.02) * np.ones(64) * 1.0, 6)
        assert float(((h_in.values - 0.5) ** 2).mean()) == pytest.approx(0.02)
        assert contains(ball, h_in)
        h_out = GridFunction(0.5 + np.sqrt(0.025) * np.ones(64), 6)
        assert not contains(ball, h_out)

    def test_depends_only_on_distance(self, haar1):
        ball = _ball(U_hat=0.01, deterministic_slack=0.002)
        xs = GridFunction.axis_points(6)
        a = 0.11
        for k in [0, 1]:
            h1 = GridFunction(0.5 + a * np.asarray(eval_basis(haar1, 1, k, 1, xs)), 6)
            h2 = GridFunction(0.5 + a * np.sign(np.sin(2 * np.pi * xs)), 6)
            d1 = ((h1.values - 0.5) ** 2).mean()
            d2 = ((h2.values - 0.5) ** 2).mean()
            np.testing.assert_allclose(d1, d2, rtol=1e-12)
            assert contains(ball, h1) == contains(ball, h2)

    def test_far_candidate_rejected(self):
        ball = _ball(U_hat=0.01)
        h = GridFunction(np.full(64, 100.0), 6)
        assert not contains(ball, h)

    def test_failure_set_upward_closed(self):
        ball = _ball(U_hat=0.005, deterministic_slack=0.001, tau_const_C1=0.3, n_eff=50)
        dists = np.linspace(0.0, 0.1, 400)
        ok = np.array([t <= ball.threshold(t) for t in dists])
        # membership holds on an initial interval then fails forever
        if (~ok).any():
            first_fail = int(np.argmax(~ok))
            assert not ok[first_fail:].any()

    def test_negative_threshold_excludes_center(self):
        ball = _ball(U_hat=-1.0)
        assert not contains(ball, GridFunction(np.full(64, 0.5), 6))
        assert radius_upper_bound(ball) == 0.0

    def test_grid_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            contains(_ball(), GridFunction(np.full(32, 0.5), 5))


class TestRadiusUpperBound:
    def test_closed_form_without_linear_term(self):
        ball = _ball(U_hat=0.0, deterministic_slack=0.0, tau_const_C1=0.0,
                     tau_const_C2=3.0, j1=2, n_eff=10, z_alpha=10.0)
        expect = 10.0 * np.sqrt(3.0 * 4.0 / (10 * 9))
        assert radius_upper_bound(ball) == pytest.approx(expect)

    def test_monotone_in_u_hat(self):
        radii = [
            radius_upper_bound(_ball(U_hat=u, tau_const_C1=0.5, n_eff=30))
            for u in [0.0, 0.01, 0.1]
        ]
        assert radii[0] < radii[1] < radii[2]

    def test_boundary_consistency_with_contains(self):
        # the closed-form radius is exactly the crossing point of the
        # membership predicate
        ball = _ball(U_hat=0.02, deterministic_slack=0.003, tau_const_C1=0.7,
                     tau_const_C2=0.4, j1=3, n_eff=40)
        r2 = radius_upper_bound(ball)
        assert r2 > 0
        eps = 1e-9
        assert (r2 - eps) <= ball.threshold(r2 - eps)
        assert (r2 + 1e-6) > ball.threshold(r2 + 1e-6)


class TestBuildConfidenceBall:
    def test_end_to_end_structure(self, haar1, rng):
        n = 660
        ds = Dataset(rng.uniform(size=(n, 1)), rng.integers(0, 2, n).astype(float))
        cfg = _cfg(split_seed=1)
        ball = build_confidence_ball(ds, cfg, haar1)
        grid = beta_grid(0.5, 2.5)
        assert ball.beta_hat in grid.levels
        assert ball.n_eff == n // 3
        from binwave.gof import theory_level

        j1, _ = theory_level(ball.n_eff, ball.beta_hat, 1, haar1)
        assert ball.j1 == j1
        assert ball.z_alpha == pytest.approx(10.0)
        assert ball.constants["regression_level"] >= haar1.j0
        assert 0.0 <= ball.center.values.min() <= ball.center.values.max() <= 1.0

    def test_determinism(self, haar1, rng):
        ds = Dataset(rng.uniform(size=(300, 1)), rng.integers(0, 2, 300).astype(float))
        cfg = _cfg(split_seed=3)
        a = build_confidence_ball(ds, cfg, haar1)
        b = build_confidence_ball(ds, cfg, haar1)
        assert a.U_hat == b.U_hat
        assert a.beta_hat == b.beta_hat
        np.testing.assert_array_equal(a.center.values, b.center.values)

    def test_floor_flag(self, haar1, rng):
        ds = Dataset(rng.uniform(size=(300, 1)), rng.integers(0, 2, 300).astype(float))
        floored = build_confidence_ball(ds, _cfg(split_seed=2, floor_ustat=True), haar1)
        assert floored.U_hat >= 0.0

    def test_too_small_rejected(self, haar1, rng):
        ds = Dataset(rng.uniform(size=(4, 1)), rng.integers(0, 2, 4).astype(float))
        with pytest.raises(ValueError):
            build_confidence_ball(ds, _cfg(), haar1)


class TestWrapper:
    def test_fit_and_query(self, haar1, rng):
        ds = Dataset(rng.uniform(size=(330, 1)), rng.integers(0, 2, 330).astype(float))
        acb = AdaptiveConfidenceBall(_cfg(split_seed=5), haar1).fit(ds)
        assert acb.beta_hat_ in beta_grid(0.5, 2.5).levels
        assert acb.radius_upper_bound() >= 0.0
        h = GridFunction(np.full(2**haar1.table_res, 0.5), haar1.table_res)
        assert isinstance(acb.contains(h), bool)

    def test_unfitted(self, haar1):
        acb = AdaptiveConfidenceBall(_cfg(), haar1)
        with pytest.raises(RuntimeError, match="not fitted"):
            acb.radius_upper_bound()
