import logging
from typing import Optional

import numpy as np
from scipy.special import expit

from errors import InvalidInputError
from models_btl import (BTLInstance, BoundReport, ConcavityMethod, OrderReport,
                        StrongConcavityEstimate)
from models_rewards import InitMode, RewardVector, SolverConfig
from models_utility import UtilityFamily, UtilitySpec
from utils_asymptotics import as_reward_array
from utils_solver import PairwiseObjective, ProjectedAscent, staggered_init

PROBE_POINTS = 10_000
POWER_PROBE_FLOOR = 1e-4
ORDER_TOL = 1e-9
BOUND_TOL = 1e-9


def strong_concavity(utility: UtilitySpec) -> StrongConcavityEstimate:
    family = utility.family
    if family is UtilityFamily.LINEAR:
        return StrongConcavityEstimate(0.0, ConcavityMethod.ANALYTIC,
                                       caveat="U'' = 0, bound inapplicable")
    if family is UtilityFamily.LOG_SIGMOID:
        # -U''(x) = sigmoid(x/s) sigmoid(-x/s) / s^2, smallest at |x| = 1
        z = 1.0 / utility.sigma
        mu = float(expit(z) * expit(-z) / utility.sigma ** 2)
        return StrongConcavityEstimate(mu, ConcavityMethod.ANALYTIC)
    if family is UtilityFamily.POWER:
        probe = np.linspace(POWER_PROBE_FLOOR, 1.0, PROBE_POINTS)
        mu = float(np.min(-utility.second_deriv(probe)))
        return StrongConcavityEstimate(
            max(mu, 0.0), ConcavityMethod.GRID_MIN_NEG_SECOND_DERIV,
            domain=(POWER_PROBE_FLOOR, 1.0),
            caveat="probed on the positive branch away from the singularity at 0")

    # log / negpow: -U'' is decreasing on (0, 1], so the minimum sits at x = 1
    mu = float(-utility.second_deriv(1.0))
    caveat = "positive branch only"
    if utility.is_extended:
        caveat = "positive branch only; the linear continuation below 0 has U'' = 0"
    return StrongConcavityEstimate(mu, ConcavityMethod.ANALYTIC, domain=(0.0, 1.0), caveat=caveat)


def btl_objective(utility: UtilitySpec, instance: BTLInstance,
                  min_gap: float = 1e-12) -> PairwiseObjective:
    """
    sum over i != j of U(r_i - r_j) sigmoid(theta_i - theta_j).

    Pairs with theta_i > theta_j are guarded so the search stays in the cell
    that keeps the score order. Inside that cell every pair of distinct
    scores is evaluated on the branch of U it ends on, so a tie is split
    with the one-sided slope of the side it is allowed to move to.
    """
    rows, cols = np.nonzero(~np.eye(instance.n, dtype=bool))
    higher = instance.thetas[rows] - instance.thetas[cols]
    weights = expit(higher)
    return PairwiseObjective(utility, instance.n, rows, cols, weights, min_gap,
                             guard=higher > 0,
                             strict_guard=utility.has_infinite_slope_at_zero,
                             tie_signs=np.where(higher < 0, -1.0, 1.0))


def order_preserved(rewards, instance: BTLInstance, tol: float = ORDER_TOL) -> OrderReport:
    """Pairs with theta_i > theta_j but r_i < r_j (inversions) or r_i == r_j (ties)"""
    r = as_reward_array(rewards)
    if r.size != instance.n:
        raise InvalidInputError(f"{r.size} rewards for {instance.n} BTL scores")
    report = OrderReport()
    higher_i, lower_j = np.nonzero(instance.thetas[:, None] > instance.thetas[None, :])
    for i, j in zip(higher_i.tolist(), lower_j.tolist()):
        if r[i] < r[j] - tol:
            report.inversions.append((i, j))
        elif abs(r[i] - r[j]) <= tol:
            on_bound = min(r[i], r[j]) >= 1.0 - tol or max(r[i], r[j]) <= tol
            (report.boundary_ties if on_bound else report.ties).append((i, j))
    return report


class BTLSolver:
    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or SolverConfig()

    def initial_point(self, instance: BTLInstance) -> np.ndarray:
        if self.config.init is InitMode.CUSTOM:
            r0 = np.asarray(self.config.initial_rewards, dtype=float)
            if r0.shape != (instance.n,):
                raise InvalidInputError(
                    f"initial_rewards has {r0.size} entries, expected {instance.n}")
            return r0
        r0 = np.empty(instance.n)
        r0[np.argsort(-instance.thetas, kind="stable")] = staggered_init(instance.n)
        return r0

    def solve_btl(self, utility: UtilitySpec, instance: BTLInstance) -> RewardVector:
        if not utility.is_finite_everywhere:
            raise InvalidInputError(
                f"BTL objective needs U finite on [-1, 1]; use the appendixA extension for {utility}")
        logging.info(f"Solving BTL objective: utility={utility} instance={instance.name} n={instance.n}")
        objective = btl_objective(utility, instance, self.config.min_gap)
        result = ProjectedAscent(self.config).run(objective, self.initial_point(instance))
        # the odd power continuation and the epsilon kink make S non-concave off the cell
        result.unique = utility.is_strictly_concave and utility.is_concave_on_reals
        result.ordered = order_preserved(result, instance).order_ok
        if not result.ordered:
            logging.warning(f"BTL solution for {instance.name} inverts the score order")
            result.converged = False
            result.status = "unordered"
        logging.info(f"Solved BTL {instance.name}: S={result.objective:.12g} "
                     f"iterations={result.iterations} residual={result.grad_norm_final:.3e}")
        return result

    def check_thm5_bound(self, rewards, instance: BTLInstance, utility: UtilitySpec) -> BoundReport:
        """Continuity bound between reward gaps and score gaps"""
        r = as_reward_array(rewards)
        if r.size != instance.n:
            raise InvalidInputError(f"{r.size} rewards for {instance.n} BTL scores")
        estimate = strong_concavity(utility)
        u_one = float(utility.eval(1.0))
        if not estimate.applicable:
            return BoundReport(False, reason="mu = 0, bound inapplicable", mu=estimate.mu)
        if u_one <= 0:
            return BoundReport(False, reason=f"U(1) = {u_one:.6g} <= 0, bound inapplicable",
                               mu=estimate.mu)

        i, j = np.triu_indices(instance.n, k=1)
        gaps = np.abs(r[i] - r[j])
        scale = u_one * (1.0 + np.exp(instance.theta_max)) / estimate.mu
        bounds = 2.0 * np.sqrt(scale * np.abs(instance.thetas[i] - instance.thetas[j]))
        slack = bounds - gaps
        bad = np.flatnonzero(slack < -BOUND_TOL)
        report = BoundReport(
            applicable=True,
            mu=estimate.mu,
            pairs_checked=int(i.size),
            worst_slack=float(np.min(slack)),
            violations=[(int(i[k]), int(j[k]), float(gaps[k]), float(bounds[k])) for k in bad],
        )
        if report.violations:
            logging.warning(f"{len(report.violations)} pair(s) violate the continuity bound "
                            f"on {instance.name}")
        return report


def solve_btl(utility: UtilitySpec, instance: BTLInstance,
              config: Optional[SolverConfig] = None) -> RewardVector:
    return BTLSolver(config).solve_btl(utility, instance)


def check_thm5_bound(rewards, instance: BTLInstance, utility: UtilitySpec) -> BoundReport:
    return BTLSolver().check_thm5_bound(rewards, instance, utility)
