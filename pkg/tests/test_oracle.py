import math

import numpy as np
import pytest
from scipy import stats

from vsbbm import oracle
from vsbbm.model import SpeedProfile


class TestBridgeStayBelow:
    def test_values(self):
        assert oracle.bridge_stay_below(0.0, 1.0, 2.0) == 0.0
        assert oracle.bridge_stay_below(1.0, 1.0, 2.0) == pytest.approx(
            0.6321205588285577, rel=1e-12)

    def test_small_exponent_expansion(self):
        # leading order matches 2ab/T with relative error ~ ab/T
        exact = oracle.bridge_stay_below(0.1, 0.1, 100.0)
        approx = 2 * 0.1 * 0.1 / 100.0
        assert abs(exact - approx) / approx < 1.05e-4

    def test_symmetry_and_limits(self):
        assert oracle.bridge_stay_below(0.7, 2.1, 3.0) == oracle.bridge_stay_below(2.1, 0.7, 3.0)
        assert oracle.bridge_stay_below(50.0, 50.0, 1.0) == pytest.approx(1.0)
        assert oracle.bridge_stay_below(1e-9, 1e-9, 1e6) == pytest.approx(0.0, abs=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            oracle.bridge_stay_below(-1.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            oracle.bridge_stay_below(1.0, 1.0, 0.0)

    def test_monte_carlo_cross_check(self):
        est, se = oracle.mc_bridge_stay_below(1.0, 1.0, 2.0, n_paths=40_000, seed=5)
        assert abs(est - oracle.bridge_stay_below(1.0, 1.0, 2.0)) <= 3.0 * se

    def test_monte_carlo_unbiased_at_coarse_grid(self):
        # the sub-bridge correction removes discretisation bias entirely
        exact = oracle.bridge_stay_below(0.8, 1.3, 4.0)
        est, se = oracle.mc_bridge_stay_below(0.8, 1.3, 4.0, n_paths=40_000,
                                              n_steps=8, seed=6)
        assert abs(est - exact) <= 3.0 * se


class TestBridgeFromR:
    def test_value(self):
        # sqrt(2/pi) * sqrt(4) * 1 / (10^4 - 4)
        v = oracle.bridge_stay_below_from_r(1.0, 4.0, 1e4)
        assert v == pytest.approx(math.sqrt(2 / math.pi) * 2.0 / 9996.0, rel=1e-12)
        assert v == pytest.approx(1.596e-4, rel=1e-3)

    def test_linearity_in_y(self):
        v1 = oracle.bridge_stay_below_from_r(1.0, 4.0, 1e4)
        v2 = oracle.bridge_stay_below_from_r(2.0, 4.0, 1e4)
        assert v2 == pytest.approx(2.0 * v1, rel=1e-12)

    def test_mc_agreement_in_regime(self):
        y, r, span = 1.0, 4.0, 1e4
        pred = oracle.bridge_stay_below_from_r(y, r, span)
        est, se = oracle.mc_bridge_stay_below_from_r(y, r, span,
                                                     n_samples=50_000, seed=17)
        assert se / est < 0.05
        assert 0.8 * est <= pred <= 1.2 * est

    def test_domain(self):
        with pytest.raises(ValueError):
            oracle.bridge_stay_below_from_r(1.0, 5.0, 4.0)


class TestGaussianMaxBound:
    def test_value(self):
        assert oracle.gaussian_max_bound(0.0, 2.0) == pytest.approx(
            0.19947114020071635, rel=1e-12)

    def test_monotone_decreasing_in_x(self):
        xs = np.linspace(0.0, 6.0, 25)
        vals = [oracle.gaussian_max_bound(x, 4.0) for x in xs]
        assert np.all(np.diff(vals) < 0.0)

    def test_domain(self):
        with pytest.raises(ValueError):
            oracle.gaussian_max_bound(-0.5, 2.0)
        with pytest.raises(ValueError):
            oracle.gaussian_max_bound(0.5, 0.0)


class TestManyToOne:
    def test_level_limits(self):
        prof = SpeedProfile.homogeneous(5.0)
        assert oracle.many_to_one_level_count(prof, 5.0, -1e9) == pytest.approx(
            math.exp(5.0), rel=1e-9)
        assert oracle.many_to_one_level_count(prof, 5.0, 0.0) == pytest.approx(
            math.exp(5.0) / 2.0, rel=1e-12)

    def test_value(self):
        prof = SpeedProfile.homogeneous(5.0)
        # e^5 * Phi-bar(3/sqrt(5)), frozen from scipy.stats.norm.sf
        assert oracle.many_to_one_level_count(prof, 5.0, 3.0) == pytest.approx(
            13.335849547598986, rel=1e-10)
        assert oracle.many_to_one_level_count(prof, 5.0, 3.0) == pytest.approx(
            math.exp(5.0) * stats.norm.sf(3.0 / math.sqrt(5.0)), rel=1e-12)

    def test_uses_accumulated_variance(self):
        prof = SpeedProfile.plus(0.5, 16.0)
        # at s = 12 the accumulated variance is 13
        expect = math.exp(12.0) * stats.norm.sf(2.0 / math.sqrt(13.0))
        assert oracle.many_to_one_level_count(prof, 12.0, 2.0) == pytest.approx(
            expect, rel=1e-12)

    def test_monotone_in_level(self):
        prof = SpeedProfile.homogeneous(8.0)
        levels = np.linspace(-5.0, 10.0, 31)
        vals = [oracle.many_to_one_level_count(prof, 6.0, a) for a in levels]
        assert np.all(np.diff(vals) < 0.0)


class TestGumbelDoubleLog:
    def test_exact_gumbel_slope(self):
        rng = np.random.default_rng(3)
        sample = stats.gumbel_r.rvs(size=100_000, random_state=rng)
        ys = np.linspace(-1.5, 2.5, 41)
        f_hat = np.searchsorted(np.sort(sample), ys, side="right") / sample.size
        y, v, dropped = oracle.gumbel_double_log(ys, f_hat)
        assert dropped == 0
        slope = np.polyfit(y, v, 1)[0]
        assert slope == pytest.approx(1.0, abs=0.03)

    def test_model_law_slope_sqrt2(self):
        # P(Y <= y) = exp(-exp(-sqrt(2) y)): plug-in transform is linear
        ys = np.linspace(-1.0, 3.0, 21)
        f = np.exp(-np.exp(-math.sqrt(2.0) * ys))
        y, v, _ = oracle.gumbel_double_log(ys, f)
        slope = np.polyfit(y, v, 1)[0]
        assert slope == pytest.approx(math.sqrt(2.0), rel=1e-9)

    def test_degenerate_input_dropped(self):
        ys = np.array([-1.0, 0.0, 1.0])
        f = np.array([0.0, 1.0, 1.0])
        y, v, dropped = oracle.gumbel_double_log(ys, f)
        assert dropped == 3 and y.size == 0 and v.size == 0
