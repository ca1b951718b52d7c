import logging
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import bisect
from scipy.special import betaln, betainc, roots_jacobi
from scipy.stats import kstest

from errors import InapplicableError, InvalidInputError, LimitUnknownError, QuadratureError
from models_laws import BetaParams, LawKind, LimitDistribution
from models_rewards import GridMeasure, RewardVector
from models_utility import UtilityFamily, UtilitySpec

QUANTILE_XTOL = 1e-12
QUAD_WARN_TOL = 1e-8
QUAD_FAIL_TOL = 1e-2

Rewards = Union[RewardVector, np.ndarray, list]


def as_reward_array(rewards: Rewards) -> np.ndarray:
    values = rewards.rewards if isinstance(rewards, RewardVector) else rewards
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("rewards must be a non-empty 1-D array")
    return arr


def half_shift(gamma: float, sign: int) -> float:
    """(1 + sign * gamma) / 2 on the shortest decimal form of gamma: 0.8 gives exactly 0.1"""
    return float((1 + sign * Fraction(repr(float(gamma)))) / 2)


def limit_distribution(utility: UtilitySpec) -> LimitDistribution:
    """Closed-form limit of the empirical law of the optimal rewards as n -> inf"""
    if utility.is_extended:
        raise LimitUnknownError(
            f"limit unknown for {utility}: the extension alters U near 0")
    family = utility.family
    if family is UtilityFamily.POWER:
        a = half_shift(utility.gamma, -1)
        return LimitDistribution.beta_law(a, a)
    if family is UtilityFamily.NEG_POWER:
        a = half_shift(utility.gamma, +1)
        return LimitDistribution.beta_law(a, a)
    if family is UtilityFamily.LOG:
        return LimitDistribution.beta_law(0.5, 0.5)
    # finite U'(0): only the endpoint mass bound 1/(kappa + 1) is known
    return LimitDistribution.endpoint_mass(utility.kappa())


def beta_cdf(params: BetaParams, x):
    """Regularized incomplete beta I_x(alpha, beta); x is clipped to [0, 1]"""
    result = betainc(params.alpha, params.beta, np.clip(np.asarray(x, dtype=float), 0.0, 1.0))
    return float(result) if np.ndim(result) == 0 else result


def beta_quantile(params: BetaParams, q: float) -> float:
    """Inverse of beta_cdf by bisection"""
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError(f"quantile level must be in [0, 1], got {q}")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0
    return float(bisect(lambda x: beta_cdf(params, x) - q, 0.0, 1.0, xtol=QUANTILE_XTOL))


def ks_distance(rewards: Rewards, law: LimitDistribution) -> float:
    """Two-sided Kolmogorov-Smirnov distance between the empirical law of rewards and a Beta law"""
    if law.kind is not LawKind.BETA:
        raise InapplicableError(
            "KS distance is undefined for an endpoint mass bound; use endpoint_mass_fraction")
    arr = as_reward_array(rewards)
    return float(kstest(arr, lambda x: beta_cdf(law.beta, x)).statistic)


def grid_ks_distance(measure: GridMeasure, law: LimitDistribution) -> float:
    """Sup distance between the cumulative grid weights and a Beta CDF at cell boundaries"""
    if law.kind is not LawKind.BETA:
        raise InapplicableError("grid KS distance needs a Beta law")
    if measure.m < 2:
        raise InvalidInputError("grid KS distance needs at least two grid points")
    boundaries = 0.5 * (measure.grid[:-1] + measure.grid[1:])
    cumulative = measure.cdf()[:-1]
    return float(np.max(np.abs(cumulative - beta_cdf(law.beta, boundaries))))


def endpoint_mass_fraction(rewards: Rewards, tol: float) -> Tuple[float, float]:
    """Fractions of rewards within tol of 0 and within tol of 1"""
    if not tol > 0:
        raise InvalidInputError(f"tol must be > 0, got {tol}")
    arr = as_reward_array(rewards)
    return float(np.mean(arr <= tol)), float(np.mean(arr >= 1.0 - tol))


@lru_cache(maxsize=32)
def _jacobi_rule(points: int, right_exp: float, left_exp: float):
    # weight (1 - t)^right_exp (1 + t)^left_exp on [-1, 1]
    return roots_jacobi(points, right_exp, left_exp)


def _jacobi_piece(integrand, lo: float, hi: float, left_exp: float,
                  right_exp: float, points: int) -> float:
    """Integrate integrand over [lo, hi] when it behaves like (x-lo)^left_exp (hi-x)^right_exp"""
    t, w = _jacobi_rule(points, right_exp, left_exp)
    half = 0.5 * (hi - lo)
    theta = lo + half * (1.0 + t)
    smooth = integrand(theta) / ((1.0 + t) ** left_exp * (1.0 - t) ** right_exp)
    return float(half * np.sum(w * smooth))


class FlatnessCheck:
    """
    F(c) = E|X - c|^gamma for X ~ Beta(p, q), computed after the substitution
    x = sin^2(theta). The theta interval is split at theta_c = arcsin(sqrt(c))
    and each piece is integrated with Gauss-Jacobi nodes matched to the
    algebraic behaviour at its ends, so the remaining factor is smooth.
    """

    def __init__(self, gamma: float, law: BetaParams, quad_points: int):
        if not 0 < gamma < 1:
            raise InvalidInputError(f"gamma must be in (0, 1), got {gamma}")
        if quad_points < 2:
            raise InvalidInputError(f"quad_points must be >= 2, got {quad_points}")
        self.gamma = gamma
        self.law = law
        self.quad_points = quad_points
        self.log_norm = betaln(law.alpha, law.beta)

    def _integrand(self, c: float):
        p, q, g = self.law.alpha, self.law.beta, self.gamma

        def integrand(theta):
            s, co = np.sin(theta), np.cos(theta)
            density = 2.0 * np.exp((2 * p - 1) * np.log(s) + (2 * q - 1) * np.log(co) - self.log_norm)
            return density * np.abs(s * s - c) ** g
        return integrand

    def expected_distance(self, c: float, points: Optional[int] = None) -> float:
        points = points or self.quad_points
        p, q, g = self.law.alpha, self.law.beta, self.gamma
        integrand = self._integrand(c)
        theta_c = float(np.arcsin(np.sqrt(c)))
        top = 0.5 * np.pi
        if c <= 0.0:
            return _jacobi_piece(integrand, 0.0, top, 2 * p - 1 + 2 * g, 2 * q - 1, points)
        if c >= 1.0:
            return _jacobi_piece(integrand, 0.0, top, 2 * p - 1, 2 * q - 1 + 2 * g, points)
        return (_jacobi_piece(integrand, 0.0, theta_c, 2 * p - 1, g, points)
                + _jacobi_piece(integrand, theta_c, top, g, 2 * q - 1, points))

    def error_estimate(self, c: float) -> float:
        coarse = max(2, self.quad_points // 2)
        return abs(self.expected_distance(c) - self.expected_distance(c, coarse))

    def max_deviation(self, c_grid_size: int) -> float:
        if c_grid_size < 2:
            raise InvalidInputError(f"c_grid_size must be >= 2, got {c_grid_size}")
        c_values = np.linspace(0.0, 1.0, c_grid_size)
        values = np.array([self.expected_distance(c) for c in c_values])
        if not np.all(np.isfinite(values)):
            raise QuadratureError(f"non-finite quadrature value for gamma={self.gamma}")

        error = max(self.error_estimate(c) for c in (0.0, 0.5, c_values[1]))
        if error > QUAD_FAIL_TOL:
            raise QuadratureError(
                f"quadrature did not converge for gamma={self.gamma}: estimated error {error:.3e}")
        if error > QUAD_WARN_TOL:
            logging.warning(f"Flatness quadrature error estimate {error:.3e} "
                            f"with {self.quad_points} points")
        return float(np.max(np.abs(values - self.expected_distance(0.5))))


def lemma6_flatness(gamma: float, c_grid_size: int = 101, quad_points: int = 2000,
                    law: Optional[BetaParams] = None) -> float:
    """
    max_c |F(c) - F(1/2)| for F(c) = E|X - c|^gamma. Under the Power limit law
    Beta((1-gamma)/2, (1-gamma)/2) F is constant in c; pass another law as a
    negative control.
    """
    if not 0 < gamma < 1:
        raise InvalidInputError(f"gamma must be in (0, 1), got {gamma}")
    if law is None:
        a = half_shift(gamma, -1)
        law = BetaParams(a, a)
    deviation = FlatnessCheck(gamma, law, quad_points).max_deviation(c_grid_size)
    logging.info(f"Flatness gamma={gamma} law=Beta({law.alpha}, {law.beta}): "
                 f"max deviation {deviation:.3e}")
    return deviation
