import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import ks_2samp

from errors import InvalidInputError, RewardCollapseError
from models_prompts import (CollapseReport, PromptAwarePolicy, PromptKind, PromptOutcome,
                            PromptSpec)
from models_rewards import RewardVector, SolverConfig
from models_utility import UtilitySpec
from utils_solver import RewardSolver


def generate_prompts(count: int, seed: int = 0, n_responses: int = 8) -> List[PromptSpec]:
    """Balanced, seeded mix of open-ended and concrete prompts"""
    if count < 2:
        raise InvalidInputError(f"count must be >= 2, got {count}")
    kinds = [PromptKind.OPEN_ENDED, PromptKind.CONCRETE] * ((count + 1) // 2)
    order = np.random.default_rng(seed).permutation(count)
    return [
        PromptSpec(id=f"prompt-{index:03d}", kind=kinds[order[index]], n_responses=n_responses)
        for index in range(count)
    ]


def kind_gap(outcomes: Sequence[PromptOutcome], mode: str) -> float:
    """Two-sample KS distance between the pooled rewards of the two prompt kinds"""
    pooled = {kind: [] for kind in PromptKind}
    for outcome in outcomes:
        pooled[outcome.prompt.kind].append(getattr(outcome, mode))
    if not pooled[PromptKind.OPEN_ENDED] or not pooled[PromptKind.CONCRETE]:
        raise InvalidInputError("collapse experiment needs prompts of both kinds")
    open_ended = np.concatenate(pooled[PromptKind.OPEN_ENDED])
    concrete = np.concatenate(pooled[PromptKind.CONCRETE])
    return float(ks_2samp(open_ended, concrete).statistic)


class PromptLab:
    """
    Per-prompt interpolation optima under one fixed utility and under a
    prompt-aware policy. The rankings are the identity, so every prompt that
    shares a utility and a response count poses the same optimization
    instance and the instance is solved once.
    """

    def __init__(self, config: Optional[SolverConfig] = None, threads: int = 1):
        self.config = config or SolverConfig()
        self.threads = max(1, int(threads))

    def collapse_experiment(self, prompts: Sequence[PromptSpec], fixed_utility: UtilitySpec,
                            policy: PromptAwarePolicy, n: Optional[int] = None) -> CollapseReport:
        """n overrides every prompt's n_responses; None keeps each prompt's own count"""
        if not prompts:
            raise InvalidInputError("collapse experiment needs at least one prompt")
        sizes = {prompt.id: n if n is not None else prompt.n_responses for prompt in prompts}
        too_small = min(sizes.values())
        if too_small < 4:
            raise InvalidInputError(f"n must be >= 4, got {too_small}")

        requests: Dict[Tuple[str, int], UtilitySpec] = {}
        owners: Dict[Tuple[str, int], str] = {}
        for prompt in prompts:
            for utility in (fixed_utility, policy.utility_for(prompt.kind)):
                key = (utility.to_string(), sizes[prompt.id])
                requests.setdefault(key, utility)
                owners.setdefault(key, prompt.id)

        logging.info(f"Collapse experiment: {len(prompts)} prompts, "
                     f"{len(requests)} distinct instance(s), {self.threads} thread(s)")
        solver = RewardSolver(self.config)
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            futures = {key: pool.submit(solver.solve_finite_n, utility, key[1])
                       for key, utility in requests.items()}
            solved: Dict[Tuple[str, int], RewardVector] = {}
            for key, future in futures.items():
                try:
                    solved[key] = future.result()
                except RewardCollapseError as e:
                    logging.error(f"Solve failed for prompt {owners[key]}: {str(e)}")
                    raise type(e)(f"prompt {owners[key]}: {e}") from e

        outcomes = []
        for prompt in prompts:
            size = sizes[prompt.id]
            fixed = solved[(fixed_utility.to_string(), size)]
            aware = solved[(policy.utility_for(prompt.kind).to_string(), size)]
            outcomes.append(PromptOutcome(
                prompt=prompt,
                fixed=fixed.rewards.copy(),
                aware=aware.rewards.copy(),
                converged=fixed.converged and aware.converged,
            ))

        report = CollapseReport(
            n=n,
            fixed_utility=fixed_utility,
            policy=policy,
            collapse_gap_fixed=kind_gap(outcomes, "fixed"),
            separation_gap_aware=kind_gap(outcomes, "aware"),
            outcomes=outcomes,
        )
        logging.info(f"Collapse gap (fixed) {report.collapse_gap_fixed:.6g}, "
                     f"separation gap (aware) {report.separation_gap_aware:.6g}")
        return report


def collapse_experiment(prompts: Sequence[PromptSpec], fixed_utility: UtilitySpec,
                        policy: PromptAwarePolicy, n: Optional[int] = None,
                        config: Optional[SolverConfig] = None, threads: int = 1) -> CollapseReport:
    return PromptLab(config, threads).collapse_experiment(prompts, fixed_utility, policy, n)
