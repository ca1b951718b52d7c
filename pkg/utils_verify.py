import os
import logging
import tempfile
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from models_btl import BTLInstance
from models_laws import BetaParams, LimitDistribution
from models_prompts import PromptAwarePolicy
from models_rewards import RewardVector, SolverConfig
from models_utility import UtilitySpec
from utils_asymptotics import (FlatnessCheck, beta_cdf, beta_quantile, endpoint_mass_fraction,
                               grid_ks_distance, half_shift, ks_distance, lemma6_flatness,
                               limit_distribution)
from utils_btl import BTLSolver, order_preserved
from utils_measure_opt import MeasureOptimizer, empirical_expected_utility
from utils_output import ArtifactWriter, dumps, read_rewards
from utils_promptlab import PromptLab, generate_prompts
from utils_solver import RewardSolver

CheckOutcome = Tuple[bool, str]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


@dataclass
class VerifyReport:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_dict(self) -> Dict:
        return {
            "passed": self.passed,
            "check_count": len(self.checks),
            "failed": [check.name for check in self.checks if not check.passed],
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail,
                 "seconds": round(c.seconds, 3)}
                for c in self.checks
            ],
        }


def strictly_concave_families() -> List[UtilitySpec]:
    return [
        UtilitySpec.power(0.5),
        UtilitySpec.neg_power(1.0, extended=True, epsilon=0.1),
        UtilitySpec.log(),
        UtilitySpec.log_sigmoid(1.0),
    ]


def shape_families() -> List[UtilitySpec]:
    return strictly_concave_families() + [
        UtilitySpec.power(0.8),
        UtilitySpec.neg_power(0.5),
        UtilitySpec.log(extended=True, epsilon=0.05),
        UtilitySpec.linear(),
    ]


def read_bytes(path: str) -> bytes:
    with open(path, 'rb') as f:
        return f.read()


class InvariantSuite:
    """Every cross-module property in one pass/fail run"""

    def __init__(self, solver_config: Optional[SolverConfig] = None,
                 measure_config: Optional[SolverConfig] = None, threads: int = 1):
        self.solver_config = solver_config or SolverConfig()
        self.measure_config = measure_config or SolverConfig()
        self.threads = threads
        self.solver = RewardSolver(self.solver_config)
        self._solved: Dict[Tuple[str, int], RewardVector] = {}

    def solve(self, utility: UtilitySpec, n: int) -> RewardVector:
        """Converged finite-n optimum, solved once per (utility, n) across checks"""
        key = (utility.to_string(), n)
        if key not in self._solved:
            label = f"{utility} n={n}"
            self._solved[key] = self.solver.solve_finite_n(utility, n).require_converged(label)
        return self._solved[key]

    def checks(self) -> List[Tuple[str, Callable[[], CheckOutcome]]]:
        return [
            ("utility.shape", self.check_utility_shape),
            ("solver.two_points", self.check_two_points),
            ("solver.power_three_points", self.check_power_three_points),
            ("solver.symmetry_and_order", self.check_symmetry_and_order),
            ("solver.endpoints", self.check_endpoints),
            ("solver.ascent_trace", self.check_ascent_trace),
            ("solver.oracle_dominance", self.check_oracle_dominance),
            ("asymptotics.beta_cdf", self.check_beta_cdf),
            ("asymptotics.limit_laws", self.check_limit_laws),
            ("asymptotics.power_ks_trend", self.check_power_ks_trend),
            ("asymptotics.singular_ks", self.check_singular_ks),
            ("asymptotics.endpoint_mass", self.check_endpoint_mass),
            ("asymptotics.flatness", self.check_flatness),
            ("asymptotics.quadrature_consistency", self.check_quadrature_consistency),
            ("asymptotics.beta_shift_identity", self.check_beta_shift_identity),
            ("measure_opt.linear_endpoints", self.check_linear_measure),
            ("measure_opt.power_cross_oracle", self.check_power_measure),
            ("measure_opt.cross_oracle_extremes", self.check_cross_oracle_extremes),
            ("btl.order_preservation", self.check_btl_order),
            ("btl.shift_and_strict", self.check_btl_shift_and_strict),
            ("promptlab.collapse", self.check_collapse),
            ("promptlab.determinism", self.check_collapse_determinism),
            ("output.round_trip", self.check_artifact_round_trip),
        ]

    def run(self) -> VerifyReport:
        report = VerifyReport()
        for name, check in self.checks():
            start = time.perf_counter()
            try:
                passed, detail = check()
            except Exception as e:
                logging.error(f"Check {name} raised: {str(e)}")
                passed, detail = False, f"{type(e).__name__}: {e}"
            elapsed = time.perf_counter() - start
            logging.info(f"Check {name}: {'pass' if passed else 'FAIL'} ({detail})")
            report.checks.append(CheckResult(name, bool(passed), detail, elapsed))
        return report

    def check_utility_shape(self) -> CheckOutcome:
        x = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        increasing = concave = True
        worst_deriv = 0.0
        for utility in shape_families():
            values = utility.eval(x)
            increasing = increasing and bool(np.all(np.diff(values) > 0))
            mid = values[1:-1]
            chord = 0.5 * (values[:-2] + values[2:])
            concave = concave and bool(np.all(mid >= chord - 1e-12 * (1.0 + np.abs(mid))))
            numeric = (utility.eval(x + h) - utility.eval(x - h)) / (2 * h)
            excess = np.abs(utility.deriv(x) - numeric) - (1e-7 + 1e-5 * np.abs(numeric))
            worst_deriv = max(worst_deriv, float(np.max(excess)))
        jump = max(abs(utility.eval(side) - utility.eval(0.0))
                   for utility in shape_families() if utility.is_extended
                   for side in (-1e-12, 1e-12))
        ok = increasing and concave and worst_deriv <= 0.0 and jump <= 1e-9
        return ok, (f"increasing={increasing}, concave={concave}, "
                    f"derivative excess {worst_deriv:.2e}, jump at 0 {jump:.2e}")

    def check_two_points(self) -> CheckOutcome:
        worst = 0.0
        for utility in strictly_concave_families() + [UtilitySpec.linear()]:
            r = self.solve(utility, 2).rewards
            worst = max(worst, float(np.max(np.abs(r - [1.0, 0.0]))))
        return worst <= 1e-12, f"max deviation from (1, 0): {worst:.3e}"

    def check_power_three_points(self) -> CheckOutcome:
        r = self.solve(UtilitySpec.power(0.5), 3).rewards
        error = float(np.max(np.abs(r - [1.0, 0.5, 0.0])))
        return error <= 1e-8, f"max deviation from (1, 0.5, 0): {error:.3e}"

    def check_symmetry_and_order(self) -> CheckOutcome:
        worst = 0.0
        ordered = True
        for utility in strictly_concave_families():
            for n in (8, 51, 100):
                result = self.solve(utility, n)
                r = result.rewards
                worst = max(worst, float(np.max(np.abs(r + r[::-1] - 1.0))))
                ordered = ordered and result.is_nonincreasing(1e-9)
        return worst <= 1e-6 and ordered, f"symmetry error {worst:.3e}, ordered={ordered}"

    def check_endpoints(self) -> CheckOutcome:
        worst = 0.0
        for utility in strictly_concave_families():
            for n in (8, 51):
                r = self.solve(utility, n).rewards
                worst = max(worst, abs(r[0] - 1.0), abs(r[-1]))
        return worst <= 1e-12, f"max distance of r_1 from 1 and r_n from 0: {worst:.3e}"

    def check_ascent_trace(self) -> CheckOutcome:
        solver = RewardSolver(replace(self.solver_config, record_trace=True))
        worst = 0.0
        for utility in strictly_concave_families():
            trace = np.asarray(solver.solve_finite_n(utility, 30).require_converged(str(utility)).trace)
            drops = trace[:-1] - trace[1:] - 1e-9 * np.maximum(1.0, np.abs(trace[:-1]))
            worst = max(worst, float(np.max(drops, initial=-np.inf)))
        return worst <= 0.0, f"largest objective drop beyond rounding {worst:.2e}"

    def check_oracle_dominance(self) -> CheckOutcome:
        worst = np.inf
        for utility in strictly_concave_families() + [UtilitySpec.linear()]:
            for n, grid_m in ((3, 201), (4, 101)):
                solved = self.solve(utility, n).objective
                oracle = self.solver.brute_force_oracle(utility, n, grid_m).objective
                worst = min(worst, solved - oracle)
        return worst >= -1e-4, f"min(solver - oracle) = {worst:.3e}"

    def check_beta_cdf(self) -> CheckOutcome:
        arcsine = BetaParams(0.5, 0.5)
        values_ok = (abs(beta_cdf(arcsine, 0.5) - 0.5) <= 1e-12
                     and abs(beta_cdf(BetaParams(1, 1), 0.3) - 0.3) <= 1e-12
                     and abs(beta_cdf(arcsine, 0.25) - 1.0 / 3.0) <= 1e-10)
        xs = np.random.default_rng(self.solver_config.seed).uniform(0.01, 0.99, 100)
        params = BetaParams(0.25, 0.25)
        round_trip = max(abs(beta_quantile(params, beta_cdf(params, x)) - x) for x in xs)
        return values_ok and round_trip <= 1e-8, f"quantile round trip {round_trip:.3e}"

    def check_limit_laws(self) -> CheckOutcome:
        law = limit_distribution(UtilitySpec.power(0.8))
        beta_ok = abs(law.beta.alpha - 0.1) <= 1e-12 and abs(law.beta.beta - 0.1) <= 1e-12
        uniform = limit_distribution(UtilitySpec.neg_power(1.0)).beta
        bound = limit_distribution(UtilitySpec.log_sigmoid(1.0)).mass_lower_bound
        ok = beta_ok and uniform.alpha == 1.0 and abs(bound - 0.3498) <= 1e-3
        return ok, f"power 0.8 -> {law.to_dict()}, logsigmoid bound {bound:.4f}"

    def check_power_ks_trend(self) -> CheckOutcome:
        ok = True
        details = []
        for gamma in (0.2, 0.5, 0.8):
            utility = UtilitySpec.power(gamma)
            law = limit_distribution(utility)
            ks = [ks_distance(self.solve(utility, n), law) for n in (12, 50, 200)]
            ok = ok and ks[0] > ks[1] > ks[2] and ks[2] <= 0.06
            details.append(f"gamma={gamma}: " + ", ".join(f"{v:.4f}" for v in ks))
        return ok, "KS at n=12, 50, 200; " + "; ".join(details)

    def check_singular_ks(self) -> CheckOutcome:
        softened = self.solve(UtilitySpec.neg_power(1.0, extended=True, epsilon=0.01), 200)
        uniform_ks = ks_distance(softened, LimitDistribution.beta_law(1.0, 1.0))
        log = UtilitySpec.log()
        log_ks = ks_distance(self.solve(log, 200), limit_distribution(log))
        return uniform_ks <= 0.05 and log_ks <= 0.06, \
            f"negpow (eps=0.01) vs uniform {uniform_ks:.4f}, log vs arcsine {log_ks:.4f}"

    def check_endpoint_mass(self) -> CheckOutcome:
        result = self.solve(UtilitySpec.log_sigmoid(1.0), 100)
        low, high = endpoint_mass_fraction(result, 1e-4)
        return low >= 0.34 and high >= 0.34, f"endpoint fractions ({low:.2f}, {high:.2f})"

    def check_flatness(self) -> CheckOutcome:
        flat = max(lemma6_flatness(g, 101, 2000) for g in (0.2, 0.5, 0.8))
        control = lemma6_flatness(0.5, 101, 2000, law=BetaParams(1.0, 1.0))
        return flat <= 1e-3 and control >= 0.05, f"max deviation {flat:.3e}, control {control:.3f}"

    def check_quadrature_consistency(self) -> CheckOutcome:
        check = FlatnessCheck(0.8, BetaParams(0.1, 0.1), quad_points=1000)
        nodes = max(abs(check.expected_distance(c, 200) - check.expected_distance(c))
                    for c in (0.0, 0.3, 0.5, 1.0))
        coarse = lemma6_flatness(0.5, 21, 400)
        fine = lemma6_flatness(0.5, 21, 2000)
        ok = nodes <= 1e-8 and abs(fine - coarse) <= 1e-6
        return ok, f"200 vs 1000 nodes {nodes:.2e}, deviation 400 vs 2000 nodes {abs(fine - coarse):.2e}"

    def check_beta_shift_identity(self) -> CheckOutcome:
        gammas = np.linspace(0.0, 1.0, 101)
        worst = max(abs(half_shift(g, -1) + half_shift(g, +1) - 1.0) for g in gammas)
        exact = all(half_shift(g, -1) + half_shift(g, +1) == 1.0 for g in (0.2, 0.5, 0.8))
        return worst <= 1e-15 and exact, f"max |(1-gamma)/2 + (1+gamma)/2 - 1| = {worst:.1e}"

    def check_linear_measure(self) -> CheckOutcome:
        measure = MeasureOptimizer(self.measure_config).optimize_measure(UtilitySpec.linear(), 201)
        low, high = measure.weights[0], measure.weights[-1]
        return min(low, high) >= 0.499, f"endpoint weights ({low:.4f}, {high:.4f})"

    def check_power_measure(self) -> CheckOutcome:
        utility = UtilitySpec.power(0.5)
        measure = MeasureOptimizer(self.measure_config).optimize_measure(utility, 201)
        ks = grid_ks_distance(measure, limit_distribution(utility))
        solved = self.solve(utility, 201)
        plug_in = empirical_expected_utility(solved, utility)
        difference = measure.objective - plug_in
        ok = (ks <= 0.05 and difference >= -5e-3 and abs(difference) <= 1e-2
              and measure.symmetry_error() <= 1e-9)
        return ok, f"grid KS {ks:.4f}, objective - plug-in {difference:.2e}"

    def check_cross_oracle_extremes(self) -> CheckOutcome:
        optimizer = MeasureOptimizer(self.measure_config)
        worst = np.inf
        for gamma in (0.2, 0.8):
            utility = UtilitySpec.power(gamma)
            solved = self.solve(utility, 201)
            measure = optimizer.optimize_measure(utility, 201)
            worst = min(worst, measure.objective - empirical_expected_utility(solved, utility))
        return worst >= -5e-3, f"min(grid optimum - plug-in) over gamma 0.2, 0.8: {worst:.2e}"

    def check_btl_order(self) -> CheckOutcome:
        solver = BTLSolver(self.solver_config)
        utility = UtilitySpec.power(0.5)
        instances = [BTLInstance.preset("left"), BTLInstance.preset("right")]
        rng = np.random.default_rng(self.solver_config.seed)
        instances += [BTLInstance(rng.normal(size=8), name=f"random-{k}") for k in range(50)]
        inversions = 0
        violations = 0
        for instance in instances:
            rewards = solver.solve_btl(utility, instance).require_converged(instance.name)
            inversions += len(order_preserved(rewards, instance).inversions)
            violations += len(solver.check_thm5_bound(rewards, instance, utility).violations)
        return inversions == 0 and violations == 0, \
            f"{inversions} inversion(s), {violations} bound violation(s) over {len(instances)} instances"

    def check_btl_shift_and_strict(self) -> CheckOutcome:
        solver = BTLSolver(self.solver_config)
        utility = UtilitySpec.log_sigmoid(1.0)
        instance = BTLInstance([1.2, 0.4, -0.3, -1.0], name="shift")
        base = solver.solve_btl(utility, instance).require_converged(instance.name).rewards
        moved = solver.solve_btl(utility, instance.shifted(3.0)).require_converged(instance.name).rewards
        shift_error = float(np.max(np.abs(base - moved)))
        strict = True
        for preset in ("left", "right"):
            instance = BTLInstance.preset(preset)
            result = solver.solve_btl(utility, instance).require_converged(preset)
            strict = strict and result.unique and order_preserved(result, instance).strict
        return shift_error <= 1e-7 and strict, \
            f"shift error {shift_error:.2e}, strict order on presets={strict}"

    def check_collapse(self) -> CheckOutcome:
        lab = PromptLab(self.solver_config, self.threads)
        prompts = generate_prompts(16, seed=self.solver_config.seed)
        report = lab.collapse_experiment(prompts, UtilitySpec.log_sigmoid(1.0),
                                         PromptAwarePolicy.default(), 8)
        ok = report.collapse_gap_fixed == 0.0 and report.separation_gap_aware >= 0.3
        return ok, (f"collapse gap {report.collapse_gap_fixed}, "
                    f"separation gap {report.separation_gap_aware:.3f}")

    def check_collapse_determinism(self) -> CheckOutcome:
        lab = PromptLab(self.solver_config, self.threads)
        fixed = UtilitySpec.log_sigmoid(1.0)
        runs = [lab.collapse_experiment(generate_prompts(10, seed=self.solver_config.seed), fixed,
                                        PromptAwarePolicy.default(), 6) for _ in range(2)]
        same = dumps(runs[0].to_dict()) == dumps(runs[1].to_dict())
        mirrored = lab.collapse_experiment(generate_prompts(10, seed=self.solver_config.seed), fixed,
                                           PromptAwarePolicy(fixed, fixed), 6)
        gap = mirrored.separation_gap_aware
        return same and gap == 0.0, f"repeat identical={same}, identical-policy separation {gap}"

    def check_artifact_round_trip(self) -> CheckOutcome:
        utility = UtilitySpec.power(0.5)
        result = self.solve(utility, 50)
        law = limit_distribution(utility)
        with tempfile.TemporaryDirectory() as directory:
            first = ArtifactWriter(os.path.join(directory, "first"), "both")
            second = ArtifactWriter(os.path.join(directory, "second"), "both")
            paths = first.write(result.to_dict(), result.to_frame())
            repeat = second.write(result.to_dict(), result.to_frame())
            identical = all(read_bytes(a) == read_bytes(b) for a, b in zip(paths, repeat))
            drift = max(abs(ks_distance(read_rewards(path), law) - ks_distance(result, law))
                        for path in paths)
        return identical and drift <= 1e-12, f"byte-identical={identical}, KS drift {drift:.2e}"


def run_verify(solver_config: Optional[SolverConfig] = None,
               measure_config: Optional[SolverConfig] = None, threads: int = 1) -> VerifyReport:
    return InvariantSuite(solver_config, measure_config, threads).run()
