import logging
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from errors import InfeasibleStartError, InvalidInputError
from models_rewards import InitMode, RewardVector, SolverConfig
from models_utility import NEG_INF, POS_INF, UtilitySpec

ARMIJO_SIGMA = 1e-4
MIN_STEP_FRACTION = 2.0 ** -45
BB_MIN, BB_MAX = 1e-20, 1e20
ACTIVE_EPS = 1e-3
ROUNDING_ULPS = 64
MAX_FLAT_STEPS = 25
MAX_N = 1000
MAX_ORACLE_GRID = 501
TIE_RTOL = 1e-9
ORDER_TOL = 1e-9


class PairwiseObjective:
    """
    S(r) = sum_p w_p * U(r[rows_p] - r[cols_p]).

    The BTL problem uses every ordered pair i != j with sigmoid weights.
    Pairs flagged in `guard` must keep a nonnegative difference (a positive
    one when `strict_guard` is set); any other point scores -inf, which keeps
    the line search inside the cell where S is concave. `tie_signs` gives the
    side an exactly tied pair is evaluated on when U'(0) is one-sided.
    """

    def __init__(self, utility: UtilitySpec, n: int, rows, cols,
                 weights: Optional[np.ndarray] = None, min_gap: float = 1e-12,
                 guard: Optional[np.ndarray] = None, strict_guard: bool = False,
                 tie_signs: Optional[np.ndarray] = None):
        self.utility = utility
        self.n = int(n)
        self.rows = np.asarray(rows, dtype=np.intp)
        self.cols = np.asarray(cols, dtype=np.intp)
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        self.min_gap = float(min_gap)
        self.guard = None if guard is None else np.asarray(guard, dtype=bool)
        self.strict_guard = bool(strict_guard)
        self.tie_signs = (np.ones(self.rows.size) if tie_signs is None
                          else np.asarray(tie_signs, dtype=float))

    @classmethod
    def ordered(cls, utility: UtilitySpec, n: int, min_gap: float = 1e-12) -> "PairwiseObjective":
        """The i < j pairs in plain reward coordinates, unguarded"""
        rows, cols = np.triu_indices(n, k=1)
        return cls(utility, n, rows, cols, None, min_gap)

    def from_rewards(self, r: np.ndarray) -> np.ndarray:
        return np.array(r, dtype=float)

    def to_rewards(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=float)

    def differences(self, x: np.ndarray) -> np.ndarray:
        return x[self.rows] - x[self.cols]

    def _weighted(self, values: np.ndarray) -> np.ndarray:
        return values if self.weights is None else values * self.weights

    def crosses_guard(self, d: np.ndarray) -> bool:
        if self.guard is None:
            return False
        guarded = d[self.guard]
        return bool(np.any(guarded <= 0.0) if self.strict_guard else np.any(guarded < 0.0))

    def value_and_scale(self, x: np.ndarray) -> Tuple[float, float]:
        """Objective and the sum of absolute terms (used as a rounding scale)"""
        d = self.differences(x)
        if self.crosses_guard(d):
            return NEG_INF, POS_INF
        terms = self._weighted(self.utility.eval(d))
        if np.isneginf(terms).any():
            return NEG_INF, POS_INF
        return float(terms.sum()), float(np.abs(terms).sum())

    def value(self, x: np.ndarray) -> float:
        return self.value_and_scale(x)[0]

    def _safe_differences(self, x: np.ndarray) -> np.ndarray:
        # Power has U'(0+) = inf; an exact tie is moved min_gap to its oriented side
        d = self.differences(x)
        tied = d == 0.0
        if tied.any():
            d = np.where(tied, self.tie_signs * self.min_gap, d)
        return d

    def gradient(self, x: np.ndarray) -> np.ndarray:
        dp = self._weighted(self.utility.deriv(self._safe_differences(x)))
        return (np.bincount(self.rows, weights=dp, minlength=self.n)
                - np.bincount(self.cols, weights=dp, minlength=self.n))

    def hessian(self, x: np.ndarray) -> np.ndarray:
        c = self._weighted(self.utility.second_deriv(self._safe_differences(x)))
        hess = np.zeros((self.n, self.n))
        hess[self.rows, self.cols] -= c
        hess[self.cols, self.rows] -= c
        hess[np.diag_indices(self.n)] += (np.bincount(self.rows, weights=c, minlength=self.n)
                                          + np.bincount(self.cols, weights=c, minlength=self.n))
        return hess


class OrderedObjective(PairwiseObjective):
    """
    sum_{i<j} U(r_i - r_j) in reflected coordinates.

    The first n // 2 ranks are stored as y_i = 1 - r_i and the rest as
    y_i = r_i, so rewards crowding against 1 keep the same relative precision
    as those crowding against 0. Every pair is guarded: a point that swaps
    two ranks is infeasible.
    """

    def __init__(self, utility: UtilitySpec, n: int, min_gap: float = 1e-12):
        rows, cols = np.triu_indices(n, k=1)
        super().__init__(utility, n, rows, cols, None, min_gap,
                         guard=np.ones(rows.size, dtype=bool),
                         strict_guard=utility.has_infinite_slope_at_zero)
        self.signs = np.where(np.arange(n) < n // 2, -1.0, 1.0)
        self.shift = (1.0 - self.signs) / 2.0
        self.offsets = self.shift[self.rows] - self.shift[self.cols]

    def from_rewards(self, r: np.ndarray) -> np.ndarray:
        return self.signs * (np.asarray(r, dtype=float) - self.shift)

    def to_rewards(self, y: np.ndarray) -> np.ndarray:
        return np.clip(self.shift + self.signs * y, 0.0, 1.0)

    def differences(self, y: np.ndarray) -> np.ndarray:
        signed = self.signs * y
        return signed[self.rows] - signed[self.cols] + self.offsets

    def gradient(self, y: np.ndarray) -> np.ndarray:
        return self.signs * super().gradient(y)

    def hessian(self, y: np.ndarray) -> np.ndarray:
        return np.outer(self.signs, self.signs) * super().hessian(y)


def stationarity(r: np.ndarray, g: np.ndarray) -> float:
    """Projected gradient norm ||P(r + g) - r||_2 on the unit box"""
    return float(np.linalg.norm(np.clip(r + g, 0.0, 1.0) - r))


class ProjectedAscent:
    """
    Monotone projected ascent on the box [0, 1]^n.

    Each iteration moves along x(t) = P(x + t p) with Armijo backtracking.
    With direction="newton" and a strictly concave utility, p is the
    projected Newton direction (reduced Hessian on the free coordinates,
    unit push on the active ones). Otherwise, or when the reduced Hessian
    is not negative definite, p is the gradient scaled by a Barzilai-Borwein
    step. The iterate lives in the objective's own coordinates and is mapped
    back to rewards on return.
    """

    def __init__(self, config: SolverConfig):
        self.config = config

    def run(self, objective: PairwiseObjective, r0: np.ndarray) -> RewardVector:
        cfg = self.config
        x = np.clip(objective.from_rewards(np.clip(np.asarray(r0, dtype=float), 0.0, 1.0)), 0.0, 1.0)
        f, scale = objective.value_and_scale(x)
        if not np.isfinite(f):
            raise InfeasibleStartError(
                f"Objective is -inf at the initial point for {objective.utility}; "
                "start from distinct, correctly ordered rewards")
        g = objective.gradient(x)
        res = stationarity(x, g)
        trace = [f] if cfg.record_trace else None

        first = np.max(np.abs(np.clip(x + g, 0.0, 1.0) - x))
        alpha = 1.0 / first if first > 0 else 1.0
        use_newton = cfg.direction == "newton" and objective.utility.is_strictly_concave

        iterations = 0
        flat_steps = 0
        status = "converged"
        while res > cfg.grad_tol:
            if iterations >= cfg.max_iters:
                status = "max_iters reached"
                break
            step = None
            if use_newton:
                direction = self._newton_direction(objective, x, g, res)
                if direction is not None:
                    step = self._line_search(objective, x, f, scale, g, res, direction)
            if step is None:
                step = self._line_search(objective, x, f, scale, g, res, alpha * g)
            if step is None:
                status = "line search stalled"
                logging.info(f"Line search stalled after {iterations} iterations "
                             f"(residual {res:.3e})")
                break

            x_new, f_new, scale_new, g_new, res_new, flat = step
            s = x_new - x
            sy = -float(s @ (g_new - g))
            alpha = float(np.clip((s @ s) / sy, BB_MIN, BB_MAX)) if sy > 0 else BB_MAX
            flat_steps = flat_steps + 1 if flat else 0

            x, f, scale, g, res = x_new, f_new, scale_new, g_new, res_new
            iterations += 1
            if trace is not None:
                trace.append(f)
            if iterations % 1000 == 0:
                logging.debug(f"iteration {iterations}: S={f:.12g} residual={res:.3e}")
            if flat_steps >= MAX_FLAT_STEPS and res > cfg.grad_tol:
                status = "stalled at rounding level"
                break

        converged = res <= cfg.grad_tol
        if not converged:
            logging.warning(f"Solver did not converge for {objective.utility}: {status}, "
                            f"residual {res:.3e} after {iterations} iterations")
        return RewardVector(
            rewards=objective.to_rewards(x),
            objective=f,
            iterations=iterations,
            grad_norm_final=res,
            converged=converged,
            status=status if not converged else "converged",
            trace=trace,
        )

    def _newton_direction(self, objective: PairwiseObjective, x: np.ndarray,
                          g: np.ndarray, res: float) -> Optional[np.ndarray]:
        # with an infinite slope at 0, coordinates a hair away from a bound are still free
        eps_k = 0.0 if objective.strict_guard else min(ACTIVE_EPS, res)
        active = ((x <= eps_k) & (g < 0)) | ((x >= 1.0 - eps_k) & (g > 0))
        free = ~active

        direction = np.zeros_like(x)
        direction[active] = np.sign(g[active])
        if not free.any():
            return direction

        reduced = -objective.hessian(x)[np.ix_(free, free)]
        if not np.all(np.isfinite(reduced)):
            return None
        diagonal = np.diag(reduced)
        if np.any(diagonal <= 0):
            return None
        # symmetric diagonal scaling first, the curvature spans many decades
        scaling = 1.0 / np.sqrt(diagonal)
        scaled = reduced * np.outer(scaling, scaling)
        ridge = 1e-12
        identity = np.eye(scaled.shape[0])
        for _ in range(4):
            try:
                factor = cho_factor(scaled + ridge * identity)
                direction[free] = scaling * cho_solve(factor, scaling * g[free])
                break
            except (LinAlgError, ValueError):
                ridge *= 1e3
        else:
            return None
        return direction if np.all(np.isfinite(direction)) else None

    def _line_search(self, objective: PairwiseObjective, x: np.ndarray, f: float,
                     scale: float, g: np.ndarray, res: float, direction: np.ndarray):
        """
        Backtrack along the projection arc. A trial is accepted on sufficient
        ascent, or, when the change in S is below rounding, if it lowers the
        projected gradient norm. Returns None when no trial qualifies.
        """
        t = 1.0
        while t >= MIN_STEP_FRACTION:
            trial = np.clip(x + t * direction, 0.0, 1.0)
            delta = trial - x
            if not np.any(delta):
                return None
            predicted = float(g @ delta)
            f_trial, scale_trial = objective.value_and_scale(trial)
            if np.isfinite(f_trial):
                if predicted > 0 and f_trial >= f + ARMIJO_SIGMA * predicted:
                    g_trial = objective.gradient(trial)
                    return (trial, f_trial, scale_trial, g_trial,
                            stationarity(trial, g_trial), f_trial <= f)
                rounding = ROUNDING_ULPS * np.finfo(float).eps * max(scale, scale_trial)
                if f_trial >= f - rounding:
                    g_trial = objective.gradient(trial)
                    res_trial = stationarity(trial, g_trial)
                    if res_trial < res:
                        return trial, f_trial, scale_trial, g_trial, res_trial, True
            t *= 0.5
        return None


def staggered_init(n: int) -> np.ndarray:
    """r_i = (n - i) / (n - 1): distinct, ordered, endpoints at 1 and 0"""
    return (n - 1 - np.arange(n)) / (n - 1)


class RewardSolver:
    """Finite-n interpolation program max sum_{i<j} U(r_i - r_j) on the ordered box"""

    def __init__(self, config: Optional[SolverConfig] = None):
        self.config = config or SolverConfig()

    def objective(self, utility: UtilitySpec, rewards) -> float:
        """S(r) for rewards in rank order; -inf when a singular U meets a tie"""
        r = np.asarray(rewards, dtype=float)
        if r.ndim != 1 or r.size < 1:
            raise InvalidInputError("rewards must be a non-empty 1-D array")
        if np.any(r < -1e-12) or np.any(r > 1.0 + 1e-12):
            raise InvalidInputError("rewards must lie in [0, 1]")
        return PairwiseObjective.ordered(utility, r.size).value(r)

    def initial_point(self, n: int) -> np.ndarray:
        """Staggered start, or the configured custom rewards sorted into rank order"""
        if self.config.init is InitMode.CUSTOM:
            r0 = np.asarray(self.config.initial_rewards, dtype=float)
            if r0.shape != (n,):
                raise InvalidInputError(
                    f"initial_rewards has {r0.size} entries, expected {n}")
            if np.any(r0 < 0) or np.any(r0 > 1):
                raise InvalidInputError("initial_rewards must lie in [0, 1]")
            if np.any(np.diff(r0) > 0):
                logging.info("Sorting custom initial rewards into nonincreasing order")
            return np.sort(r0)[::-1]
        return staggered_init(n)

    def solve_finite_n(self, utility: UtilitySpec, n: int) -> RewardVector:
        if n < 2:
            raise InvalidInputError(f"n must be >= 2, got {n}")
        if n > MAX_N:
            raise InvalidInputError(f"n must be <= {MAX_N}, got {n}")

        logging.info(f"Solving interpolation program: utility={utility} n={n}")
        objective = OrderedObjective(utility, n, self.config.min_gap)
        result = ProjectedAscent(self.config).run(objective, self.initial_point(n))
        result.unique = utility.is_strictly_concave
        result.ordered = result.is_nonincreasing(ORDER_TOL)
        if not result.ordered:
            logging.warning(f"Solution for {utility} n={n} is not nonincreasing")
            result.converged = False
            result.status = "unordered"
        logging.info(f"Solved {utility} n={n}: S={result.objective:.12g} "
                     f"iterations={result.iterations} residual={result.grad_norm_final:.3e}")
        return result

    def brute_force_oracle(self, utility: UtilitySpec, n: int, grid_m: int) -> RewardVector:
        """Exhaustive search over ordered grid tuples with r_1 = 1 and r_n = 0"""
        if n not in (2, 3, 4):
            raise InvalidInputError(f"brute-force oracle supports n in {{2, 3, 4}}, got {n}")
        if not 2 <= grid_m <= MAX_ORACLE_GRID:
            raise InvalidInputError(f"grid_m must be in [2, {MAX_ORACLE_GRID}], got {grid_m}")

        grid = np.linspace(0.0, 1.0, grid_m)
        if n == 2:
            interior = np.empty((1, 0))
        elif n == 3:
            interior = grid[:, None]
        else:
            lower, upper = np.triu_indices(grid_m)
            interior = np.column_stack([grid[upper], grid[lower]])
        count = interior.shape[0]
        candidates = np.column_stack([np.ones(count), interior, np.zeros(count)])

        rows, cols = np.triu_indices(n, k=1)
        values = utility.eval(candidates[:, rows] - candidates[:, cols]).sum(axis=1)
        best_index = int(np.argmax(values))
        best = float(values[best_index])
        if not np.isfinite(best):
            raise InvalidInputError(f"grid_m={grid_m} is too coarse for {utility}")

        tie_mask = values >= best - TIE_RTOL * max(1.0, abs(best))
        ties = candidates[tie_mask]
        logging.info(f"Brute-force oracle {utility} n={n} grid_m={grid_m}: "
                     f"S={best:.12g}, {len(ties)} tie(s)")
        return RewardVector(
            rewards=candidates[best_index],
            objective=best,
            iterations=0,
            grad_norm_final=float("nan"),
            unique=len(ties) == 1,
            status="exhaustive grid search",
            ties=ties,
        )


def objective(utility: UtilitySpec, rewards) -> float:
    return RewardSolver().objective(utility, rewards)


def solve_finite_n(utility: UtilitySpec, n: int, config: Optional[SolverConfig] = None) -> RewardVector:
    return RewardSolver(config).solve_finite_n(utility, n)


def brute_force_oracle(utility: UtilitySpec, n: int, grid_m: int) -> RewardVector:
    return RewardSolver().brute_force_oracle(utility, n, grid_m)
