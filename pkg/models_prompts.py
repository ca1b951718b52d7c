from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from errors import InvalidInputError
from models_utility import UtilitySpec


class PromptKind(Enum):
    OPEN_ENDED = "open_ended"
    CONCRETE = "concrete"


class TargetLaw(Enum):
    NEAR_UNIFORM = "near_uniform"
    POLARIZED = "polarized"


TARGET_FOR_KIND = {
    PromptKind.OPEN_ENDED: TargetLaw.NEAR_UNIFORM,
    PromptKind.CONCRETE: TargetLaw.POLARIZED,
}


@dataclass(frozen=True)
class PromptSpec:
    id: str
    kind: PromptKind
    n_responses: int = 8

    def __post_init__(self):
        if not isinstance(self.kind, PromptKind):
            raise InvalidInputError(f"Unknown prompt kind: {self.kind!r}")
        if self.n_responses < 2:
            raise InvalidInputError(f"n_responses must be >= 2, got {self.n_responses}")

    @property
    def target(self) -> TargetLaw:
        return TARGET_FOR_KIND[self.kind]


@dataclass(frozen=True)
class PromptAwarePolicy:
    """Utility chosen by prompt kind"""
    open_ended_utility: UtilitySpec
    concrete_utility: UtilitySpec

    def __post_init__(self):
        for value in (self.open_ended_utility, self.concrete_utility):
            if not isinstance(value, UtilitySpec):
                raise InvalidInputError(f"policy utilities must be UtilitySpec, got {value!r}")

    @classmethod
    def default(cls) -> "PromptAwarePolicy":
        """-1/x (softened near 0) for open-ended prompts, x for concrete ones"""
        return cls(UtilitySpec.neg_power(1.0, extended=True, epsilon=0.1), UtilitySpec.linear())

    def utility_for(self, kind: PromptKind) -> UtilitySpec:
        return self.open_ended_utility if kind is PromptKind.OPEN_ENDED else self.concrete_utility

    def to_dict(self) -> Dict[str, str]:
        return {
            "open_ended": self.open_ended_utility.to_string(),
            "concrete": self.concrete_utility.to_string(),
        }


@dataclass(eq=False)
class PromptOutcome:
    prompt: PromptSpec
    fixed: np.ndarray
    aware: np.ndarray
    converged: bool = True


@dataclass(eq=False)
class CollapseReport:
    """n is None when each prompt kept its own response count"""
    n: Optional[int]
    fixed_utility: UtilitySpec
    policy: PromptAwarePolicy
    collapse_gap_fixed: float
    separation_gap_aware: float
    outcomes: List[PromptOutcome] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(outcome.converged for outcome in self.outcomes)

    def kind_counts(self) -> Dict[str, int]:
        counts = {kind.value: 0 for kind in PromptKind}
        for outcome in self.outcomes:
            counts[outcome.prompt.kind.value] += 1
        return counts

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "prompt_count": len(self.outcomes),
            "kind_counts": self.kind_counts(),
            "fixed_utility": self.fixed_utility.to_string(),
            "policy": self.policy.to_dict(),
            "collapse_gap_fixed": self.collapse_gap_fixed,
            "separation_gap_aware": self.separation_gap_aware,
            "converged": self.all_converged,
            "prompts": [
                {
                    "id": outcome.prompt.id,
                    "kind": outcome.prompt.kind.value,
                    "n_responses": int(outcome.fixed.size),
                    "fixed": outcome.fixed.tolist(),
                    "aware": outcome.aware.tolist(),
                }
                for outcome in self.outcomes
            ],
        }

    def to_frame(self) -> pd.DataFrame:
        """Long format: prompt_id, kind, rank, reward, mode"""
        rows = []
        for outcome in self.outcomes:
            for mode, rewards in (("fixed", outcome.fixed), ("aware", outcome.aware)):
                for rank, reward in enumerate(rewards, start=1):
                    rows.append({
                        "prompt_id": outcome.prompt.id,
                        "kind": outcome.prompt.kind.value,
                        "rank": rank,
                        "reward": float(reward),
                        "mode": mode,
                    })
        return pd.DataFrame(rows, columns=["prompt_id", "kind", "rank", "reward", "mode"])
