"""Speed profiles, branching laws and recentering predictions.

This is the shared vocabulary of the package: the two-speed diffusion
profile sigma1^2 = 1 +/- t^-alpha on the first half of the run, the
offspring law normalised to mean two, and the closed-form centering
terms (linear speed and ln-t correction) that the particle engine, the
PDE solver and the statistics layer all compare against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

SQRT2 = math.sqrt(2.0)

#: ln-t coefficient of the classical single-speed centering sqrt(2)t - (3/(2 sqrt 2)) ln t
BBM_LOG_COEFF = 3.0 / (2.0 * SQRT2)


class Sign(Enum):
    """Which way the first-phase variance deviates from one."""

    PLUS = "plus"    # sigma1^2 = 1 + t^-alpha  (fast phase first)
    MINUS = "minus"  # sigma1^2 = 1 - t^-alpha  (slow phase first)

    @classmethod
    def parse(cls, value) -> "Sign | None":
        """Accept Sign, 'plus'/'minus'/'homogeneous' or None."""
        if value is None or value == "homogeneous":
            return None
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise-constant variance profile with a single change at t/2.

    ``sign`` None means the homogeneous (single-speed) process with
    variance one throughout; otherwise sigma1^2 = 1 +/- horizon^-alpha on
    [0, t/2) and sigma2^2 = 2 - sigma1^2 on [t/2, t].
    """

    sign: Sign | None
    alpha: float
    horizon: float
    change_fraction: float = 0.5

    def __post_init__(self):
        if not (self.horizon > 0.0):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.change_fraction != 0.5:
            raise ValueError("the speed change is pinned at half the horizon")
        if self.sign is not None:
            if not (self.alpha > 0.0):
                raise ValueError(f"alpha must be positive, got {self.alpha}")
            if self.horizon <= 1.0:
                # t^-alpha >= 1 would push the slow phase to zero or below
                raise ValueError("two-speed profiles need horizon > 1")

    @classmethod
    def homogeneous(cls, horizon: float) -> "SpeedProfile":
        return cls(sign=None, alpha=0.0, horizon=float(horizon))

    @classmethod
    def plus(cls, alpha: float, horizon: float) -> "SpeedProfile":
        return cls(sign=Sign.PLUS, alpha=float(alpha), horizon=float(horizon))

    @classmethod
    def minus(cls, alpha: float, horizon: float) -> "SpeedProfile":
        return cls(sign=Sign.MINUS, alpha=float(alpha), horizon=float(horizon))

    # -- profile values ------------------------------------------------

    @property
    def epsilon(self) -> float:
        """The deviation t^-alpha of the first-phase variance from one."""
        if self.sign is None:
            return 0.0
        return self.horizon ** (-self.alpha)

    @property
    def sigma1_sq(self) -> float:
        if self.sign is Sign.PLUS:
            return 1.0 + self.epsilon
        if self.sign is Sign.MINUS:
            return 1.0 - self.epsilon
        return 1.0

    @property
    def sigma2_sq(self) -> float:
        return 2.0 - self.sigma1_sq

    @property
    def sigma1(self) -> float:
        return math.sqrt(self.sigma1_sq)

    @property
    def sigma2(self) -> float:
        return math.sqrt(self.sigma2_sq)

    @property
    def change_time(self) -> float:
        return self.horizon * self.change_fraction

    def sigma_squared(self, s: float) -> float:
        """Instantaneous variance at time s (first phase for s < t/2)."""
        self._check_time(s)
        return self.sigma1_sq if s < self.change_time else self.sigma2_sq

    def cumulative_speed(self, s: float) -> float:
        """Accumulated variance up to time s; piecewise linear, continuous."""
        self._check_time(s)
        first = min(s, self.change_time)
        second = max(s - self.change_time, 0.0)
        return first * self.sigma1_sq + second * self.sigma2_sq

    def covariance(self, s: float, r: float, d: float) -> float:
        """Covariance of two particle positions with most recent common
        ancestor at time d, evaluated at times s and r."""
        self._check_time(s)
        self._check_time(r)
        self._check_time(d)
        return self.cumulative_speed(min(d, s, r))

    def recentering(self) -> float:
        """Deterministic centering of the maximum at the horizon.

        For alpha > 1/2 (and for the homogeneous profile) this is the
        classical sqrt(2)t - (3/(2 sqrt 2)) ln t; for alpha <= 1/2 the
        plus case carries the (sigma1+sigma2)/2 speed and the widened
        ln-t correction, the minus case the (1+4 alpha) correction.
        """
        t = self.horizon
        log_t = math.log(t)
        if self.sign is None or self.alpha > 0.5:
            return SQRT2 * t - BBM_LOG_COEFF * log_t
        if self.sign is Sign.PLUS:
            slope = SQRT2 * (self.sigma1 + self.sigma2) / 2.0
            return slope * t - BBM_LOG_COEFF * (2.0 - 2.0 * self.alpha) * log_t
        return SQRT2 * t - (1.0 + 4.0 * self.alpha) / (2.0 * SQRT2) * log_t

    # -- plumbing ------------------------------------------------------

    def _check_time(self, s: float) -> None:
        if not (0.0 <= s <= self.horizon):
            raise ValueError(f"time {s} outside [0, {self.horizon}]")

    def to_config(self) -> dict:
        return {
            "sign": self.sign.value if self.sign is not None else "homogeneous",
            "alpha": self.alpha,
            "horizon": self.horizon,
        }

    @classmethod
    def from_config(cls, block: dict) -> "SpeedProfile":
        sign = Sign.parse(block.get("sign", "homogeneous"))
        return cls(sign=sign, alpha=float(block.get("alpha", 0.0)),
                   horizon=float(block["horizon"]))

    def label(self) -> str:
        if self.sign is None:
            return f"homogeneous(t={self.horizon:g})"
        return f"{self.sign.value}(alpha={self.alpha:g}, t={self.horizon:g})"


@dataclass(frozen=True)
class CorrectionPrediction:
    """Predicted centering coefficients for one (sign, alpha) family.

    ``log_coefficient`` is the asymptotic coefficient of ln t (negative).
    ``leading_slope`` maps a horizon to the coefficient of t, which in the
    plus case depends on the horizon through (sigma1+sigma2)/2.
    ``log_coefficient_at`` is the finite-horizon sigma-form of the ln-t
    coefficient; it coincides with ``log_coefficient`` in the limit.
    """

    log_coefficient: float
    leading_slope: Callable[[float], float]
    log_coefficient_at: Callable[[float], float]


def log_correction_coefficient(sign, alpha: float) -> CorrectionPrediction:
    """Predicted ln-t correction coefficient and leading slope.

    Minus family: -(1+4 alpha)/(2 sqrt 2) for alpha <= 1/2, the classical
    -3/(2 sqrt 2) beyond. Plus family: -3(2-2 alpha)/(2 sqrt 2) for
    alpha < 1/2 (sigma-form available per horizon), classical beyond.
    """
    sign = Sign.parse(sign)
    if not (alpha > 0.0):
        raise ValueError(f"alpha must be positive, got {alpha}")

    if sign is None:
        const = -BBM_LOG_COEFF
        return CorrectionPrediction(const, lambda t: SQRT2, lambda t: const)

    if sign is Sign.MINUS:
        if alpha <= 0.5:
            const = -(1.0 + 4.0 * alpha) / (2.0 * SQRT2)
        else:
            const = -BBM_LOG_COEFF
        return CorrectionPrediction(const, lambda t: SQRT2, lambda t, c=const: c)

    # plus case
    if alpha >= 0.5:
        asymptotic = -BBM_LOG_COEFF
    else:
        asymptotic = -BBM_LOG_COEFF * (2.0 - 2.0 * alpha)

    def slope_at(t: float, a: float = alpha) -> float:
        if a > 0.5:
            return SQRT2
        prof = SpeedProfile.plus(a, t)
        return SQRT2 * (prof.sigma1 + prof.sigma2) / 2.0

    def sigma_form_at(t: float, a: float = alpha) -> float:
        prof = SpeedProfile.plus(a, t)
        if a >= 0.5:
            return -BBM_LOG_COEFF * prof.sigma1
        return -BBM_LOG_COEFF * (prof.sigma1 + prof.sigma2 * (1.0 - 2.0 * a))

    return CorrectionPrediction(asymptotic, slope_at, sigma_form_at)


@dataclass(frozen=True)
class BranchingLaw:
    """Offspring distribution (p_1, p_2, ...) with mean two.

    Mean two keeps the expected population at e^t; the entries index the
    number of children k >= 1, so the process never dies out.
    """

    probabilities: tuple

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must be a non-empty sequence")
        if np.any(p < 0.0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        ks = np.arange(1, p.size + 1)
        mean = float(ks @ p)
        if abs(mean - 2.0) > 1e-12:
            raise ValueError(f"offspring mean is {mean!r}, must be 2")
        object.__setattr__(self, "probabilities", tuple(float(x) for x in p))

    @classmethod
    def binary(cls) -> "BranchingLaw":
        """Always split in two: the default law, giving F(u) = u - u^2."""
        return cls((0.0, 1.0))

    @property
    def counts(self) -> np.ndarray:
        return np.arange(1, len(self.probabilities) + 1)

    @property
    def max_children(self) -> int:
        return len(self.probabilities)

    @property
    def second_factorial_moment(self) -> float:
        """sum k(k-1) p_k, finite by construction."""
        ks = self.counts
        return float((ks * (ks - 1)) @ np.asarray(self.probabilities))

    def generating_function(self, w):
        """sum p_k w^k for w in [0, 1], vectorised."""
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        for k, pk in zip(self.counts, self.probabilities):
            if pk:
                out = out + pk * w ** k
        return out

    def sample_offspring(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in (0,1) to offspring counts by inverse CDF."""
        cum = np.cumsum(self.probabilities)
        idx = np.searchsorted(cum, u, side="right")
        idx = np.minimum(idx, len(self.probabilities) - 1)
        return idx + 1

    def to_config(self) -> dict:
        return {"probabilities": list(self.probabilities)}

    @classmethod
    def from_config(cls, block: dict) -> "BranchingLaw":
        return cls(tuple(block["probabilities"]))


@dataclass(frozen=True)
class StepSum:
    """Finite sum of weighted step functions phi(x) = sum c_l 1_{x >= u_l}.

    The test functions used for Laplace functionals of the extremal
    process; also generates the matching PDE initial data.
    """

    weights: tuple
    thresholds: tuple

    def __post_init__(self):
        w = tuple(float(c) for c in self.weights)
        u = tuple(float(x) for x in self.thresholds)
        if len(w) != len(u) or not w:
            raise ValueError("weights and thresholds must have equal, positive length")
        if any(c <= 0 for c in w):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "thresholds", u)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c, u in zip(self.weights, self.thresholds):
            out = out + c * (x >= u)
        return out

    @property
    def min_threshold(self) -> float:
        return min(self.thresholds)

    @property
    def total_weight(self) -> float:
        return float(sum(self.weights))
