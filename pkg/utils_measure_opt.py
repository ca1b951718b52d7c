import logging
from typing import Optional

import numpy as np

from errors import InvalidInputError
from models_rewards import GridMeasure, SolverConfig
from models_utility import NEG_INF, UtilitySpec
from utils_asymptotics import as_reward_array

MAX_GRID = 1001
REFRESH_EVERY = 1000
CERTIFY_RTOL = 1e-9


def build_kernel(utility: UtilitySpec, grid: np.ndarray) -> np.ndarray:
    """K_ij = U(|x_i - x_j|); the diagonal is U(0), -inf for singular families"""
    grid = np.asarray(grid, dtype=float)
    return utility.eval(np.abs(grid[:, None] - grid[None, :]))


def expected_utility(measure: GridMeasure, utility: UtilitySpec) -> float:
    """E U(|X - X'|) for X, X' iid from the grid measure, i.e. w^T K w"""
    kernel = build_kernel(utility, measure.grid)
    w = measure.weights
    support = w > 0
    if np.isneginf(kernel[np.ix_(support, support)]).any():
        return NEG_INF
    return float(w[support] @ kernel[np.ix_(support, support)] @ w[support])


def empirical_expected_utility(rewards, utility: UtilitySpec) -> float:
    """Plug-in value of the n-point empirical measure, diagonal U(0)/n included"""
    r = as_reward_array(rewards)
    values = utility.eval(np.abs(r[:, None] - r[None, :]))
    if np.isneginf(values).any():
        return NEG_INF
    return float(values.sum() / r.size ** 2)


def is_certified(kernel: np.ndarray) -> bool:
    """True when K is conditionally negative semidefinite, so w^T K w is concave on the simplex"""
    m = kernel.shape[0]
    centering = np.eye(m) - np.full((m, m), 1.0 / m)
    projected = centering @ kernel @ centering
    eigenvalues = np.linalg.eigvalsh(0.5 * (projected + projected.T))
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    return bool(eigenvalues[-1] <= CERTIFY_RTOL * scale)


class MeasureOptimizer:
    """
    Frank-Wolfe ascent of w^T K w over the probability simplex on an odd
    equispaced grid of [0, 1].

    step_rule:
        classic   - step 2/(t+2) towards the best vertex
        exact     - closed-form maximizer of the quadratic along the FW segment
        pairwise  - moves mass from the worst support point to the best vertex,
                    exact step
    """

    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or SolverConfig()

    def optimize_measure(self, utility: UtilitySpec, m: int) -> GridMeasure:
        if m % 2 == 0 or m < 3:
            raise InvalidInputError(f"grid size must be odd and >= 3, got {m}")
        if m > MAX_GRID:
            raise InvalidInputError(f"grid size must be <= {MAX_GRID}, got {m}")
        if utility.is_singular:
            raise InvalidInputError(
                f"{utility} is -inf on the diagonal; use the appendixA extension")

        cfg = self.config
        grid = np.linspace(0.0, 1.0, m)
        kernel = build_kernel(utility, grid)
        certified = is_certified(kernel)
        if not certified:
            logging.warning(f"Kernel for {utility} is not conditionally negative "
                            "semidefinite; result is not certified")

        w = np.full(m, 1.0 / m)
        kw = kernel @ w
        value = float(w @ kw)
        trace = [value] if cfg.record_trace else None
        logging.info(f"Optimizing grid measure: utility={utility} m={m} "
                     f"step_rule={cfg.step_rule}")

        gap = stop_gap = np.inf
        iteration = 0
        while iteration < cfg.max_iters:
            best = int(np.argmax(kw))
            gap = 2.0 * (kw[best] - value)
            if cfg.step_rule == "pairwise":
                support = np.flatnonzero(w > 0)
                away = int(support[np.argmin(kw[support])])
                # the FW gap can vanish while a sliver of mass sits off the optimal support
                stop_gap = 2.0 * (kw[best] - kw[away])
            else:
                stop_gap = gap
            if stop_gap <= cfg.grad_tol:
                break

            if cfg.step_rule == "pairwise":
                slope = kw[best] - kw[away]
                curvature = kernel[best, best] + kernel[away, away] - 2.0 * kernel[best, away]
                step = w[away]
                if curvature < 0:
                    step = min(step, -slope / curvature)
                w[best] += step
                if step >= w[away]:
                    w[away] = 0.0
                else:
                    w[away] -= step
                kw += step * (kernel[:, best] - kernel[:, away])
            else:
                if cfg.step_rule == "classic":
                    step = 2.0 / (iteration + 2.0)
                else:
                    slope = kw[best] - value
                    curvature = kernel[best, best] - 2.0 * kw[best] + value
                    step = 1.0 if curvature >= 0 else min(1.0, -slope / curvature)
                w *= 1.0 - step
                w[best] += step
                kw = (1.0 - step) * kw + step * kernel[:, best]

            iteration += 1
            if iteration % REFRESH_EVERY == 0:
                w /= w.sum()
                kw = kernel @ w
            value = float(w @ kw)
            if trace is not None:
                trace.append(value)

        converged = stop_gap <= cfg.grad_tol
        if not converged:
            logging.warning(f"Frank-Wolfe did not converge for {utility}: "
                            f"gap {gap:.3e} after {iteration} iterations")

        symmetric = GridMeasure(grid, np.clip(w, 0.0, None) / np.clip(w, 0.0, None).sum()).symmetrized()
        result = GridMeasure(
            grid=grid,
            weights=symmetric.weights,
            objective=float(symmetric.weights @ kernel @ symmetric.weights),
            fw_gap=float(gap),
            iterations=iteration,
            certified=certified,
            converged=converged,
            trace=trace,
        )
        logging.info(f"Grid measure for {utility}: objective={result.objective:.12g} "
                     f"gap={gap:.3e} iterations={iteration}")
        return result


def optimize_measure(utility: UtilitySpec, m: int, config: Optional[SolverConfig] = None) -> GridMeasure:
    return MeasureOptimizer(config).optimize_measure(utility, m)
