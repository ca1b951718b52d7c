from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from errors import InvalidInputError, NonConvergenceError


class InitMode(Enum):
    STAGGERED = "staggered"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SolverConfig:
    """Settings shared by the reward solver, the BTL solver and the measure optimizer"""
    max_iters: int = 50000
    grad_tol: float = 1e-8
    init: InitMode = InitMode.STAGGERED
    min_gap: float = 1e-12
    seed: int = 0
    initial_rewards: Optional[Sequence[float]] = None
    record_trace: bool = False
    direction: str = "newton"
    step_rule: str = "pairwise"

    def __post_init__(self):
        if self.max_iters < 0:
            raise InvalidInputError(f"max_iters must be >= 0, got {self.max_iters}")
        if not self.grad_tol > 0:
            raise InvalidInputError(f"grad_tol must be > 0, got {self.grad_tol}")
        if not self.min_gap > 0:
            raise InvalidInputError(f"min_gap must be > 0, got {self.min_gap}")
        if self.init is InitMode.CUSTOM and self.initial_rewards is None:
            raise InvalidInputError("custom init needs initial_rewards")
        if self.direction not in ("newton", "gradient"):
            raise InvalidInputError(f"Unknown search direction '{self.direction}'")
        if self.step_rule not in ("classic", "exact", "pairwise"):
            raise InvalidInputError(f"Unknown step rule '{self.step_rule}'")


@dataclass(eq=False)
class RewardVector:
    """A finite-n optimum together with the solver's diagnostics"""
    rewards: np.ndarray
    objective: float
    iterations: int
    grad_norm_final: float
    converged: bool = True
    unique: bool = True
    ordered: bool = True
    status: str = "converged"
    trace: Optional[List[float]] = None
    ties: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=float)

    @property
    def n(self) -> int:
        return int(self.rewards.size)

    def is_nonincreasing(self, tol: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.rewards) <= tol))

    def require_converged(self, label: str = "solve") -> "RewardVector":
        if not self.converged:
            raise NonConvergenceError(
                f"{label} did not converge: {self.status}, residual {self.grad_norm_final:.3e}",
                residual=self.grad_norm_final, iterations=self.iterations)
        return self

    def to_dict(self) -> Dict:
        payload = {
            "rewards": self.rewards.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "grad_norm_final": self.grad_norm_final,
            "converged": self.converged,
            "unique": self.unique,
            "ordered": self.ordered,
            "status": self.status,
        }
        if self.ties is not None:
            payload["tie_count"] = int(len(self.ties))
        return payload

    def to_frame(self) -> pd.DataFrame:
        """Rows of (rank, reward), rank starting at 1"""
        return pd.DataFrame({
            "rank": np.arange(1, self.n + 1),
            "reward": self.rewards,
        })


@dataclass(eq=False)
class GridMeasure:
    """Probability weights on m equispaced points of [0, 1]"""
    grid: np.ndarray
    weights: np.ndarray
    objective: Optional[float] = None
    fw_gap: Optional[float] = None
    iterations: int = 0
    certified: bool = False
    converged: bool = False
    trace: Optional[List[float]] = field(default=None, repr=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.grid.shape != self.weights.shape or self.grid.ndim != 1:
            raise InvalidInputError("grid and weights must be 1-D arrays of equal length")
        if np.any(self.weights < -1e-15):
            raise InvalidInputError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"weights sum to {self.weights.sum()}, not 1")

    @classmethod
    def uniform(cls, m: int) -> "GridMeasure":
        return cls(np.linspace(0.0, 1.0, m), np.full(m, 1.0 / m))

    @classmethod
    def from_masses(cls, m: int, masses: Dict[int, float]) -> "GridMeasure":
        """Measure with the given mass at grid indices"""
        weights = np.zeros(m)
        for index, mass in masses.items():
            weights[index] += mass
        return cls(np.linspace(0.0, 1.0, m), weights)

    @property
    def m(self) -> int:
        return int(self.grid.size)

    def cdf(self) -> np.ndarray:
        """Cumulative weights at each grid point"""
        return np.minimum(np.cumsum(self.weights), 1.0)

    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.weights - self.weights[::-1])))

    def symmetrized(self) -> "GridMeasure":
        weights = 0.5 * (self.weights + self.weights[::-1])
        return GridMeasure(self.grid, weights / weights.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.grid, "weight": self.weights})

    def summary(self) -> Dict:
        return {
            "m": self.m,
            "objective": self.objective,
            "fw_gap": self.fw_gap,
            "iterations": self.iterations,
            "certified": self.certified,
            "converged": self.converged,
            "symmetry_error": self.symmetry_error(),
        }
