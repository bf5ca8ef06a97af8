"""Drift evaluators against hand computations and independent oracles."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from filtralab import drifts as D
from filtralab.errors import DomainError, SingularityError
from filtralab.grids import GridPath, TimeGrid
from filtralab.paths import (
    reciprocal_scale,
    running_supremum,
    simulate_brownian,
    bracket_estimate,
)


class TestHFunc:
    def test_h_at_zero_and_infinity(self):
        assert D.h_func(0.0) == 0.0
        # normalization: integral of s^2 e^{-s^2/2} over (0, inf) is sqrt(pi/2)
        total, _ = quad(lambda s: math.sqrt(2 / math.pi) * s * s * math.exp(-s * s / 2), 0, 50)
        assert total == pytest.approx(1.0, abs=1e-9)
        assert float(D.h_func(40.0)) == pytest.approx(1.0, abs=1e-12)

    def test_h_against_quadrature_oracle(self):
        for y in np.linspace(0.0, 6.0, 25):
            want, _ = quad(
                lambda s: math.sqrt(2 / math.pi) * s * s * math.exp(-s * s / 2), 0, y
            )
            assert abs(float(D.h_func(y)) - want) <= 1e-9

    def test_h_at_one_frozen_value(self):
        assert float(D.h_func(1.0)) == pytest.approx(0.1987480430987991, abs=1e-12)

    def test_emery_Z_shape(self):
        # Z = 1 at w = 0, even in w, decreasing in |w|, within [0, 1]
        w = np.linspace(-4.0, 4.0, 101)
        for t in np.linspace(0.0, 0.99, 100):
            z = D.emery_Z(w, t)
            assert np.all((0.0 <= z) & (z <= 1.0 + 1e-15))
            assert z[50] == pytest.approx(1.0)
            assert np.allclose(z, z[::-1], atol=1e-14)
            assert np.all(np.diff(z[50:]) <= 1e-15)

    def test_emery_Z_rejects_t_past_one(self):
        with pytest.raises(DomainError):
            D.emery_Z(0.3, 1.0)


class TestBridgeDrift:
    def test_hand_values(self):
        grid = TimeGrid(0.0, 0.5, 2)
        w = GridPath(grid, np.array([0.0, 0.3, 1.0]))
        ds = D.bridge_drift(w, W1=1.0, delta=0.05)
        # step over (0.5, 1.0] is outside the window 1 - delta = 0.95? No: 1.0 > 0.95 -> masked
        assert ds.increments[0] == pytest.approx((1.0 - 0.0) / 1.0 * 0.5)
        assert ds.increments[1] == 0.0

    def test_rate_matches_log_density_derivative(self):
        # oracle: finite difference of log q_t(x) in W_t, q = N(W_t, 1-t) density at x=W1
        rng = np.random.default_rng(0)
        for _ in range(100):
            t = rng.uniform(0.0, 0.95)
            wt = rng.normal()
            w1 = rng.normal()
            eps = 1e-6

            def logq(w):
                return -((w1 - w) ** 2) / (2 * (1 - t))

            fd = (logq(wt + eps) - logq(wt - eps)) / (2 * eps)
            rate = (w1 - wt) / (1.0 - t)
            assert abs(fd - rate) <= 1e-6 * max(1.0, abs(rate))

    def test_zero_rate_at_terminal_value(self):
        grid = TimeGrid(0.0, 0.25, 4)
        w = GridPath(grid, np.array([0.0, 1.0, 1.0, 0.5, 1.0]))
        ds = D.bridge_drift(w, W1=1.0)
        assert ds.increments[1] == 0.0  # W_t = W1 at the left endpoint
        assert ds.increments[0] == pytest.approx(1.0 * 0.25)  # t=0, rate W1


class TestProgressiveDrift:
    def _azema(self, grid, z, dndw):
        zero = GridPath(grid, np.zeros(grid.n + 1))
        return D.AzemaData(GridPath(grid, z), GridPath(grid, dndw), zero, zero)

    def test_immersion_case_zero_drift(self):
        grid = TimeGrid(0.0, 0.1, 5)
        w = GridPath(grid, np.zeros(6))
        az = self._azema(grid, np.ones(6), np.zeros(6))
        ds = D.progressive_drift(w, az, t_time=0.45)
        assert np.all(ds.increments == 0.0)

    def test_rate_is_dndw_over_z(self):
        grid = TimeGrid(0.0, 0.1, 4)
        w = GridPath(grid, np.zeros(5))
        az = self._azema(grid, np.full(5, 0.5), np.full(5, 0.2))
        ds = D.progressive_drift(w, az, t_time=1.0)
        assert np.allclose(ds.increments, 0.2 / 0.5 * 0.1)

    def test_partial_step_at_the_random_time(self):
        grid = TimeGrid(0.0, 0.1, 4)
        w = GridPath(grid, np.zeros(5))
        az = self._azema(grid, np.full(5, 0.5), np.full(5, 0.2))
        ds = D.progressive_drift(w, az, t_time=0.25)
        assert ds.increments[2] == pytest.approx(0.4 * 0.05)
        assert ds.increments[3] == 0.0

    def test_vanishing_Z_raises(self):
        grid = TimeGrid(0.0, 0.1, 4)
        w = GridPath(grid, np.zeros(5))
        az = self._azema(grid, np.array([1.0, 0.0, 1.0, 1.0, 1.0]), np.full(5, 0.2))
        with pytest.raises(SingularityError):
            D.progressive_drift(w, az, t_time=1.0)

    def test_emery_instance_rate_zero_at_origin_level(self):
        # dNdW = -h'(0) sgn(0)/sqrt(0.5) = 0 at W_t = 0
        grid = TimeGrid(0.0, 0.5, 1)
        w = GridPath(grid, np.array([0.0, 0.3]))
        az = D.emery_azema(w)
        assert az.dNdW.values[0] == 0.0


class TestHonestDrift:
    def test_two_sided_rates(self):
        grid = TimeGrid(0.0, 0.1, 9)
        w = GridPath(grid, np.zeros(10))
        zero = GridPath(grid, np.zeros(10))
        az = D.AzemaData(
            GridPath(grid, np.full(10, 0.5)), GridPath(grid, np.full(10, 0.2)), zero, zero
        )
        ds = D.honest_drift(w, az, g=0.45, delta=0.1, horizon_cap=0.9)
        # before g: +dNdW/Z = 0.4 per unit time
        assert ds.increments[0] == pytest.approx(0.4 * 0.1)
        # partial step into g: rate * (g - t_left)
        assert ds.increments[4] == pytest.approx(0.4 * 0.05)
        # after g + delta: -dNdW/(1-Z) = -0.4
        assert ds.increments[6] == pytest.approx(-0.4 * 0.1)
        # trimmed neighbourhood contributes nothing
        assert ds.increments[5] == 0.0

    def test_zero_dndw_zero_drift(self):
        grid = TimeGrid(0.0, 0.1, 9)
        w = GridPath(grid, np.zeros(10))
        zero = GridPath(grid, np.zeros(10))
        az = D.AzemaData(
            GridPath(grid, np.full(10, 0.5)), GridPath(grid, np.zeros(10)), zero, zero
        )
        ds = D.honest_drift(w, az, g=0.45)
        assert np.all(ds.increments == 0.0)

    def test_honest_Z_against_monte_carlo(self):
        # oracle: P[no zero of W on (t, 1] | W_t = x] by simulation
        rng = np.random.default_rng(12)
        t, x = 0.4, 0.6
        n, steps = 40_000, 600
        dt = (1.0 - t) / steps
        incs = rng.normal(0.0, math.sqrt(dt), size=(n, steps))
        paths = x + np.cumsum(incs, axis=1)
        no_zero = np.all(paths > 0.0, axis=1)
        z_mc = 1.0 - np.mean(no_zero)
        z_formula = float(D.honest_Z(x, t))
        # discrete monitoring misses some zeros: allow the known O(sqrt(dt)) slack
        assert abs(z_mc - z_formula) <= 4.0 / math.sqrt(n) + 1.3 * math.sqrt(dt)


class TestSupremumDrift:
    def test_hand_rate(self):
        # U-X = 0.2, T-t = 0.1, d<M,X> = dt: rate -3.0
        grid = TimeGrid(0.0, 0.01, 1)
        u = GridPath(grid, np.array([0.7, 0.7]))
        x = GridPath(grid, np.array([0.5, 0.5]))
        ttimes = np.array([0.1, math.inf])
        br = GridPath(grid, np.array([0.0, 0.01]))
        ds = D.supremum_drift(u, x, ttimes, br)
        assert ds.increments[0] == pytest.approx(-3.0 * 0.01)

    def test_vanishing_factor(self):
        # (U-X)^2 = T - t: rate 0
        grid = TimeGrid(0.0, 0.01, 1)
        u = GridPath(grid, np.array([0.7, 0.7]))
        x = GridPath(grid, np.array([0.5, 0.5]))
        ttimes = np.array([0.04, math.inf])
        br = GridPath(grid, np.array([0.0, 0.01]))
        ds = D.supremum_drift(u, x, ttimes, br)
        assert ds.increments[0] == pytest.approx(0.0, abs=1e-15)

    def test_record_point_cancellation(self):
        # at U = X the instance bracket vanishes and the step contributes 0,
        # while the cancelled rate tends to -1
        grid = TimeGrid(0.0, 0.01, 1)
        u = GridPath(grid, np.array([0.5, 0.5]))
        x = GridPath(grid, np.array([0.5, 0.5]))
        ttimes = np.array([0.005, math.inf])
        br = GridPath(grid, np.array([0.0, 0.0]))
        ds = D.supremum_drift(u, x, ttimes, br)
        assert ds.increments[0] == 0.0
        rate = D.supremum_instance_rate(np.array([1e-9]), np.array([0.5]))
        assert rate[0] == pytest.approx(-1.0, abs=1e-12)

    def test_noncancelling_bracket_at_record_raises(self):
        grid = TimeGrid(0.0, 0.01, 1)
        u = GridPath(grid, np.array([0.5, 0.5]))
        x = GridPath(grid, np.array([0.5, 0.5]))
        ttimes = np.array([0.005, math.inf])
        br = GridPath(grid, np.array([0.0, 0.01]))
        with pytest.raises(SingularityError):
            D.supremum_drift(u, x, ttimes, br)

    def test_instance_cumulative_drift_bounded(self):
        # the instance correction is bounded even through records
        grid = TimeGrid(0.0, 1e-3, 1000)
        ens = simulate_brownian(grid, 5, seed=30)
        for i in range(5):
            x = ens.path(i)
            u = running_supremum(x)
            gap = u.values[:-1] - x.values[:-1]
            tau = np.full(grid.n, 0.25)
            rate = D.supremum_instance_rate(gap, tau)
            assert np.all(np.isfinite(rate))
            assert np.max(np.abs(np.cumsum(rate * grid.dt))) < 10.0


class TestEmeryAfterDrift:
    def test_hand_value(self):
        # t = 0.5, W_t = 0, W1 = 1: rate = 2/(e^{-1} - 1) + 2 = -1.163953...
        val = float(D.emery_after_rate(0.0, 0.5, 1.0))
        assert val == pytest.approx(2.0 / (math.exp(-1.0) - 1.0) + 2.0, abs=1e-12)
        assert val == pytest.approx(-1.163953413738653, abs=1e-9)

    def test_singular_at_half_level(self):
        with pytest.raises(SingularityError):
            D.emery_after_rate(0.5, 0.3, 1.0)

    def test_rate_magnitude_grows_near_level(self):
        vals = [abs(float(D.emery_after_rate(0.5 + d, 0.3, 1.0))) for d in (0.1, 0.01, 0.001)]
        assert vals[0] < vals[1] < vals[2]

    def test_window_masking(self):
        grid = TimeGrid(0.0, 0.1, 9)
        w = GridPath(grid, np.linspace(0.0, 0.9, 10))
        ds = D.emery_after_drift(w, W1=0.9, xi=0.3, delta=0.1, horizon_cap=0.9)
        t_left = grid.times()[:-1]
        outside = (t_left < 0.4 - 1e-12) | (grid.times()[1:] > 0.9 + 1e-12)
        assert np.all(ds.increments[outside] == 0.0)
        assert np.any(ds.increments != 0.0)


class TestFutureInfDecomposition:
    def test_transform_is_2I_minus_Z(self):
        grid = TimeGrid(0.0, 0.25, 4)
        z = GridPath(grid, np.array([1.0, 1.2, 0.9, 1.5, 2.0]))
        i = GridPath(grid, np.array([0.5, 0.5, 0.8, 0.8, 1.0]))
        br = bracket_estimate(
            GridPath(grid, -1.0 / z.values), GridPath(grid, -1.0 / z.values)
        )
        ds, transform = D.future_inf_decomposition(z, i, reciprocal_scale(), br)
        assert np.allclose(transform.values, 2 * i.values - z.values)

    def test_drift_reduces_when_I_constant(self):
        grid = TimeGrid(0.0, 0.25, 4)
        z = GridPath(grid, np.array([1.0, 1.2, 0.9, 1.5, 2.0]))
        i = GridPath(grid, np.full(5, 0.5))
        e_z = GridPath(grid, -1.0 / z.values)
        br = bracket_estimate(e_z, e_z)
        ds, _ = D.future_inf_decomposition(z, i, reciprocal_scale(), br)
        want = np.diff(br.values) / (-1.0 / z.values[:-1])
        assert np.allclose(ds.increments, want)

    def test_positive_paths_required(self):
        grid = TimeGrid(0.0, 0.25, 4)
        z = GridPath(grid, np.array([1.0, -1.2, 0.9, 1.5, 2.0]))
        i = GridPath(grid, np.full(5, 0.5))
        br = GridPath(grid, np.zeros(5))
        with pytest.raises(DomainError):
            D.future_inf_decomposition(z, i, reciprocal_scale(), br)

    def test_initial_pitman_mean_zero(self):
        # E[2 I_0 - Z_0] = 2 (r0/2) - r0 = 0 under the uniform initial-infimum law
        rng = np.random.default_rng(9)
        r0 = 1.0
        i0 = r0 * rng.uniform(size=200_000)
        m = np.mean(2 * i0 - r0)
        se = np.std(2 * i0 - r0, ddof=1) / math.sqrt(len(i0))
        assert abs(m) <= 3 * se


class TestDriftSeriesFiniteness:
    def test_rates_finite_inside_windows(self):
        grid = TimeGrid(0.0, 1e-3, 1000)
        ens = simulate_brownian(grid, 50, seed=31)
        for i in range(50):
            w = ens.path(i)
            w1 = float(w.values[-1])
            ds = D.bridge_drift(w, w1)
            assert np.all(np.isfinite(ds.increments))
            az = D.emery_azema(w)
            ds2 = D.progressive_drift(w, az, t_time=0.9)
            assert np.all(np.isfinite(ds2.increments))
