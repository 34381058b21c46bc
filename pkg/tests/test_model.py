import math

import numpy as np
import pytest
from scipy.integrate import quad

from vsbbm.model import (
    SQRT2,
    BranchingLaw,
    Sign,
    SpeedProfile,
    StepSum,
    log_correction_coefficient,
)


class TestSpeedProfile:
    def test_construction_validates(self):
        with pytest.raises(ValueError):
            SpeedProfile.plus(0.5, -1.0)
        with pytest.raises(ValueError):
            SpeedProfile.plus(-0.5, 16.0)
        with pytest.raises(ValueError):
            SpeedProfile.minus(0.5, 0.9)  # t <= 1 breaks sigma1^2 > 0
        with pytest.raises(ValueError):
            SpeedProfile(Sign.PLUS, 0.5, 16.0, change_fraction=0.3)

    def test_variances_sum_to_two_exactly(self):
        for prof in (SpeedProfile.plus(0.37, 23.0), SpeedProfile.minus(0.11, 7.0),
                     SpeedProfile.homogeneous(12.0)):
            assert prof.sigma1_sq + prof.sigma2_sq == 2.0

    def test_sigma_squared_values(self):
        prof = SpeedProfile.plus(0.5, 16.0)
        assert prof.sigma_squared(3.0) == pytest.approx(1.25, abs=1e-15)
        assert prof.sigma_squared(10.0) == pytest.approx(0.75, abs=1e-15)
        # s = t/2 already belongs to the second phase
        assert prof.sigma_squared(8.0) == pytest.approx(0.75, abs=1e-15)

    def test_sigma_squared_domain(self):
        prof = SpeedProfile.plus(0.5, 16.0)
        with pytest.raises(ValueError):
            prof.sigma_squared(-0.1)
        with pytest.raises(ValueError):
            prof.sigma_squared(16.1)

    def test_cumulative_speed_endpoints(self):
        for prof in (SpeedProfile.plus(0.3, 20.0), SpeedProfile.minus(0.3, 20.0)):
            assert prof.cumulative_speed(0.0) == 0.0
            assert prof.cumulative_speed(prof.horizon) == pytest.approx(prof.horizon, rel=1e-15)

    def test_cumulative_speed_piecewise_value(self):
        # oracle: quadrature of the instantaneous variance
        prof = SpeedProfile.plus(0.5, 16.0)
        val, _ = quad(prof.sigma_squared, 0.0, 12.0, points=[8.0])
        assert val == pytest.approx(13.0, abs=1e-9)
        assert prof.cumulative_speed(12.0) == pytest.approx(13.0, abs=1e-12)

    def test_cumulative_speed_monotone_and_slopes(self):
        prof = SpeedProfile.minus(0.4, 30.0)
        s = np.linspace(0.0, 30.0, 301)
        vals = np.array([prof.cumulative_speed(x) for x in s])
        assert np.all(np.diff(vals) >= 0.0)
        h = 1e-7
        tc = prof.change_time
        left = (prof.cumulative_speed(tc) - prof.cumulative_speed(tc - h)) / h
        right = (prof.cumulative_speed(tc + h) - prof.cumulative_speed(tc)) / h
        assert left == pytest.approx(prof.sigma1_sq, rel=1e-6)
        assert right == pytest.approx(prof.sigma2_sq, rel=1e-6)

    def test_covariance(self):
        prof = SpeedProfile.plus(0.5, 16.0)
        assert prof.covariance(16.0, 16.0, 0.0) == 0.0
        assert prof.covariance(16.0, 16.0, 16.0) == pytest.approx(16.0)
        assert prof.covariance(16.0, 16.0, 12.0) == pytest.approx(13.0)
        # symmetry in (s, r) and monotonicity in d
        assert prof.covariance(5.0, 11.0, 9.0) == prof.covariance(11.0, 5.0, 9.0)
        ds = np.linspace(0.0, 16.0, 33)
        cov = [prof.covariance(16.0, 16.0, d) for d in ds]
        assert np.all(np.diff(cov) >= 0.0)
        with pytest.raises(ValueError):
            prof.covariance(17.0, 5.0, 1.0)

    def test_recentering_values(self):
        # frozen from direct evaluation of the closed forms
        assert SpeedProfile.minus(0.25, 100.0).recentering() == pytest.approx(
            138.1650091702792, abs=1e-9)
        assert SpeedProfile.plus(0.25, 100.0).recentering() == pytest.approx(
            132.26846608311442, abs=1e-9)
        # alpha > 1/2 falls back to the single-speed centering, either sign
        fallback = 136.53683563676407
        assert SpeedProfile.plus(0.75, 100.0).recentering() == pytest.approx(fallback, abs=1e-9)
        assert SpeedProfile.minus(0.75, 100.0).recentering() == pytest.approx(fallback, abs=1e-9)
        assert SpeedProfile.homogeneous(100.0).recentering() == pytest.approx(fallback, abs=1e-9)

    def test_recentering_minus_correction_monotone_in_alpha(self):
        # the ln-t correction grows with alpha until it matches the
        # single-speed coefficient exactly at alpha = 1/2
        t = 100.0
        alphas = np.linspace(0.05, 0.5, 10)
        vals = [SpeedProfile.minus(a, t).recentering() for a in alphas]
        assert np.all(np.diff(vals) < 0.0)
        standard = SpeedProfile.homogeneous(t).recentering()
        assert all(v > standard for v in vals[:-1])
        assert vals[-1] == pytest.approx(standard, abs=1e-12)

    def test_config_roundtrip(self):
        for prof in (SpeedProfile.plus(0.3, 12.0), SpeedProfile.homogeneous(8.0)):
            again = SpeedProfile.from_config(prof.to_config())
            assert again == prof


class TestCorrectionPrediction:
    def test_limits(self):
        assert log_correction_coefficient("minus", 1e-9).log_coefficient == pytest.approx(
            -0.35355339059327373, abs=1e-8)
        assert log_correction_coefficient("plus", 1e-9).log_coefficient == pytest.approx(
            -2.1213203435596424, abs=1e-8)

    def test_continuity_at_half(self):
        lo = log_correction_coefficient("minus", 0.5).log_coefficient
        hi = log_correction_coefficient("plus", 0.5).log_coefficient
        assert lo == pytest.approx(-1.0606601717798212, abs=1e-15)
        assert hi == pytest.approx(-1.0606601717798212, abs=1e-15)
        # both branch formulas agree at 1/2 to machine precision
        assert abs((1 + 4 * 0.5) / (2 * SQRT2) - 3 * (2 - 2 * 0.5) / (2 * SQRT2)) < 1e-15

    def test_negative_for_all_alpha(self):
        for sign in ("plus", "minus", None):
            for alpha in (0.01, 0.2, 0.5, 0.8, 3.0):
                assert log_correction_coefficient(sign, alpha).log_coefficient < 0.0

    def test_plus_slope_is_horizon_dependent(self):
        pred = log_correction_coefficient("plus", 0.25)
        s100 = pred.leading_slope(100.0)
        prof = SpeedProfile.plus(0.25, 100.0)
        assert s100 == pytest.approx(SQRT2 * (prof.sigma1 + prof.sigma2) / 2.0, rel=1e-15)
        assert pred.leading_slope(1e8) == pytest.approx(SQRT2, abs=1e-4)
        # minus slope is the constant sqrt(2)
        assert log_correction_coefficient("minus", 0.25).leading_slope(40.0) == SQRT2

    def test_sigma_form_tends_to_asymptote(self):
        # the finite-horizon correction differs by ~ alpha * t^-alpha
        pred = log_correction_coefficient("plus", 0.25)
        assert pred.log_coefficient_at(1e12) == pytest.approx(pred.log_coefficient, abs=5e-4)
        with pytest.raises(ValueError):
            log_correction_coefficient("plus", 0.0)


class TestBranchingLaw:
    def test_binary(self):
        law = BranchingLaw.binary()
        assert law.probabilities == (0.0, 1.0)
        assert law.second_factorial_moment == pytest.approx(2.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            BranchingLaw((0.5, 0.4))  # does not sum to one
        with pytest.raises(ValueError):
            BranchingLaw((1.0,))  # mean 1, not 2
        with pytest.raises(ValueError):
            BranchingLaw((-0.1, 1.1))

    def test_mixed_law(self):
        law = BranchingLaw((0.5, 0.0, 0.5))  # p1 = p3 = 1/2, mean 2
        assert law.second_factorial_moment == pytest.approx(3.0)
        w = np.array([0.0, 0.25, 1.0])
        expected = 0.5 * w + 0.5 * w**3
        assert np.allclose(law.generating_function(w), expected)

    def test_sample_offspring_matches_law(self):
        law = BranchingLaw((0.5, 0.0, 0.5))
        rng = np.random.default_rng(7)
        u = rng.random(200_000)
        ks = law.sample_offspring(u)
        freq1 = np.mean(ks == 1)
        assert set(np.unique(ks)) == {1, 3}
        assert freq1 == pytest.approx(0.5, abs=0.005)

    def test_config_roundtrip(self):
        law = BranchingLaw((0.25, 0.5, 0.25))  # mean 2
        assert BranchingLaw.from_config(law.to_config()) == law


class TestStepSum:
    def test_evaluation(self):
        phi = StepSum(weights=(1.0, 2.0), thresholds=(0.0, 1.0))
        x = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
        assert np.allclose(phi(x), [0.0, 1.0, 1.0, 3.0, 3.0])
        assert phi.min_threshold == 0.0
        assert phi.total_weight == 3.0

    def test_validation(self):
        with pytest.raises(ValueError):
            StepSum(weights=(), thresholds=())
        with pytest.raises(ValueError):
            StepSum(weights=(1.0, -1.0), thresholds=(0.0, 1.0))
