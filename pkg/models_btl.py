from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import InvalidInputError

PRESET_SIZE = 20


class ConcavityMethod(Enum):
    ANALYTIC = "analytic"
    GRID_MIN_NEG_SECOND_DERIV = "grid_min_neg_second_deriv"


@dataclass(frozen=True)
class StrongConcavityEstimate:
    """mu with -U'' >= mu; mu = 0 means the continuity bound does not apply"""
    mu: float
    method: ConcavityMethod
    domain: Tuple[float, float] = (-1.0, 1.0)
    caveat: Optional[str] = None

    def __post_init__(self):
        if not self.mu >= 0:
            raise InvalidInputError(f"mu must be >= 0, got {self.mu}")

    @property
    def applicable(self) -> bool:
        return self.mu > 0

    def to_dict(self) -> Dict:
        return {
            "mu": self.mu,
            "method": self.method.value,
            "domain": list(self.domain),
            "caveat": self.caveat,
        }


@dataclass(eq=False)
class BTLInstance:
    """Latent Bradley-Terry-Luce scores; item i beats j with probability sigmoid(theta_i - theta_j)"""
    thetas: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        if self.thetas.ndim != 1 or self.thetas.size < 2:
            raise InvalidInputError("BTL instance needs at least two scores")
        if not np.all(np.isfinite(self.thetas)):
            raise InvalidInputError("BTL scores must be finite")

    @property
    def n(self) -> int:
        return int(self.thetas.size)

    @property
    def theta_max(self) -> float:
        return float(np.max(np.abs(self.thetas)))

    def shifted(self, offset: float) -> "BTLInstance":
        return BTLInstance(self.thetas + offset, name=f"{self.name}+{offset}")

    @classmethod
    def preset(cls, name: str) -> "BTLInstance":
        """'left' or 'right': two clusters of scores over 20 items"""
        i = np.arange(1, PRESET_SIZE + 1, dtype=float)
        if name == "left":
            thetas = np.where(i <= 15, i / 20.0, (i + 10.0) / 6.0)
        elif name == "right":
            thetas = np.where(i <= 5, i / 10.0, (i + 10.0) / 6.0)
        else:
            raise InvalidInputError(f"Unknown BTL preset '{name}' (expected left or right)")
        return cls(thetas, name=f"preset:{name}")


@dataclass
class OrderReport:
    """
    Pairs (i, j) with theta_i > theta_j, sorted into inversions (r_i < r_j),
    interior ties and ties where both rewards sit on the same box bound.
    """
    inversions: List[Tuple[int, int]] = field(default_factory=list)
    ties: List[Tuple[int, int]] = field(default_factory=list)
    boundary_ties: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def order_ok(self) -> bool:
        return not self.inversions

    @property
    def strict(self) -> bool:
        """No inversions and no interior ties; ties clamped at 0 or 1 are allowed"""
        return not self.inversions and not self.ties

    def to_dict(self) -> Dict:
        return {
            "order_ok": self.order_ok,
            "strict": self.strict,
            "inversions": [list(pair) for pair in self.inversions],
            "tie_count": len(self.ties),
            "boundary_tie_count": len(self.boundary_ties),
        }


@dataclass
class BoundReport:
    """Pairwise check of |r_i - r_j| <= 2 sqrt(U(1)(1 + e^theta_max)|theta_i - theta_j| / mu)"""
    applicable: bool
    reason: Optional[str] = None
    mu: float = 0.0
    pairs_checked: int = 0
    worst_slack: Optional[float] = None
    violations: List[Tuple[int, int, float, float]] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "applicable": self.applicable,
            "reason": self.reason,
            "mu": self.mu,
            "pairs_checked": self.pairs_checked,
            "worst_slack": self.worst_slack,
            "violation_count": len(self.violations),
            "violations": [
                {"i": i, "j": j, "gap": gap, "bound": bound}
                for i, j, gap, bound in self.violations
            ],
        }
