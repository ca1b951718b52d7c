from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np

from errors import InvalidInputError


class LawKind(Enum):
    BETA = "beta"
    ENDPOINT_MASS_BOUND = "endpoint_mass_bound"


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        for name, value in (("alpha", self.alpha), ("beta", self.beta)):
            if not np.isfinite(value) or value <= 0:
                raise InvalidInputError(f"Beta {name} must be a positive number, got {value}")

    @property
    def is_symmetric(self) -> bool:
        return self.alpha == self.beta


@dataclass(frozen=True)
class LimitDistribution:
    """Limiting law of the optimal rewards as n grows"""
    kind: LawKind
    beta: Optional[BetaParams] = None
    mass_lower_bound: Optional[float] = None
    kappa: Optional[float] = None

    def __post_init__(self):
        if self.kind is LawKind.BETA and self.beta is None:
            raise InvalidInputError("Beta law needs BetaParams")
        if self.kind is LawKind.ENDPOINT_MASS_BOUND:
            if self.mass_lower_bound is None or not 0 < self.mass_lower_bound <= 0.5:
                raise InvalidInputError(
                    f"endpoint mass bound must be in (0, 0.5], got {self.mass_lower_bound}")

    @classmethod
    def beta_law(cls, alpha: float, beta: float) -> "LimitDistribution":
        return cls(LawKind.BETA, beta=BetaParams(alpha, beta))

    @classmethod
    def endpoint_mass(cls, kappa: float) -> "LimitDistribution":
        return cls(LawKind.ENDPOINT_MASS_BOUND, mass_lower_bound=1.0 / (kappa + 1.0), kappa=kappa)

    def to_dict(self) -> Dict:
        if self.kind is LawKind.BETA:
            return {"kind": "beta", "alpha": self.beta.alpha, "beta": self.beta.beta}
        return {
            "kind": "endpoint_mass_bound",
            "mass_lower_bound": self.mass_lower_bound,
            "kappa": self.kappa,
        }
