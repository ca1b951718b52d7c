"""Finite-n interpolation program: objective, projected ascent and grid oracle."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import STRICTLY_CONCAVE
from errors import InfeasibleStartError, InvalidInputError, NonConvergenceError
from models_rewards import InitMode, RewardVector, SolverConfig
from models_utility import UtilitySpec
import utils_solver
from utils_solver import (OrderedObjective, PairwiseObjective, RewardSolver, brute_force_oracle,
                          objective, solve_finite_n, staggered_init, stationarity)


class TestObjective:
    def test_power_three_points(self):
        assert objective(UtilitySpec.power(0.5), [1.0, 0.5, 0.0]) == pytest.approx(2.41421356, abs=1e-8)

    def test_coincident_rewards_under_log_are_neg_inf(self):
        assert objective(UtilitySpec.log(), [1.0, 0.5, 0.5]) == float("-inf")

    def test_single_reward_has_empty_sum(self):
        assert objective(UtilitySpec.linear(), [0.3]) == 0.0

    @pytest.mark.parametrize("rewards", [[1.2, 0.0], [0.5, -0.1], [], [[0.1, 0.2]]])
    def test_rejects_rewards_outside_the_box(self, rewards):
        with pytest.raises(InvalidInputError):
            objective(UtilitySpec.linear(), rewards)

    @given(st.lists(st.floats(min_value=0.0, max_value=0.5), min_size=2, max_size=8),
           st.floats(min_value=0.0, max_value=0.5))
    @settings(max_examples=50, deadline=None)
    def test_translation_invariant(self, rewards, shift):
        r = np.sort(rewards)[::-1]
        u = UtilitySpec.log_sigmoid(1.0)
        assert objective(u, r + shift) == pytest.approx(objective(u, r), rel=1e-12, abs=1e-12)


class TestDerivatives:
    @pytest.mark.parametrize("name", sorted(STRICTLY_CONCAVE))
    def test_gradient_matches_finite_differences(self, name):
        u = STRICTLY_CONCAVE[name]
        r = np.array([0.97, 0.71, 0.52, 0.33, 0.08])
        obj = PairwiseObjective.ordered(u, r.size)
        h = 1e-7
        numeric = np.array([(obj.value(r + h * e) - obj.value(r - h * e)) / (2 * h)
                            for e in np.eye(r.size)])
        np.testing.assert_allclose(obj.gradient(r), numeric, rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("name", sorted(STRICTLY_CONCAVE))
    def test_hessian_is_symmetric_and_matches_gradient(self, name):
        u = STRICTLY_CONCAVE[name]
        r = np.array([0.95, 0.6, 0.45, 0.1])
        obj = PairwiseObjective.ordered(u, r.size)
        hess = obj.hessian(r)
        np.testing.assert_allclose(hess, hess.T)
        h = 1e-6
        numeric = np.column_stack([(obj.gradient(r + h * e) - obj.gradient(r - h * e)) / (2 * h)
                                   for e in np.eye(r.size)])
        np.testing.assert_allclose(hess, numeric, rtol=1e-4, atol=1e-5)
        assert np.all(np.linalg.eigvalsh(hess) <= 1e-9)

    def test_weighted_pairs(self):
        u = UtilitySpec.linear()
        obj = PairwiseObjective(u, 2, [0, 1], [1, 0], weights=np.array([2.0, 0.5]))
        r = np.array([0.8, 0.2])
        assert obj.value(r) == pytest.approx(2.0 * 0.6 + 0.5 * -0.6)
        np.testing.assert_allclose(obj.gradient(r), [1.5, -1.5])

    def test_stationarity_is_zero_at_a_pushing_corner(self):
        assert stationarity(np.array([1.0, 0.0]), np.array([3.0, -3.0])) == 0.0

    def test_exact_tie_uses_the_oriented_slope(self):
        u = UtilitySpec.neg_power(1.0, extended=True, epsilon=0.1)
        weights = np.array([0.6, 0.4])
        r = np.array([0.5, 0.5])
        oriented = PairwiseObjective(u, 2, [0, 1], [1, 0], weights=weights, tie_signs=[1.0, -1.0])
        np.testing.assert_allclose(oriented.gradient(r), [59.6, -59.6])
        unoriented = PairwiseObjective(u, 2, [0, 1], [1, 0], weights=weights)
        np.testing.assert_allclose(unoriented.gradient(r), [20.0, -20.0])

    def test_guard_rejects_crossing_pairs(self):
        u = UtilitySpec.linear()
        guarded = PairwiseObjective(u, 2, [0], [1], guard=[True])
        assert guarded.value(np.array([0.3, 0.3])) == 0.0
        assert guarded.value(np.array([0.3, 0.4])) == float("-inf")
        strict = PairwiseObjective(u, 2, [0], [1], guard=[True], strict_guard=True)
        assert strict.value(np.array([0.3, 0.3])) == float("-inf")


class TestOrderedObjective:
    rewards = np.array([1.0, 0.999, 0.6, 0.45, 0.2, 1e-3, 0.0])

    def test_reflection_round_trip(self):
        obj = OrderedObjective(UtilitySpec.power(0.5), self.rewards.size)
        y = obj.from_rewards(self.rewards)
        np.testing.assert_allclose(y[:3], [0.0, 1e-3, 0.4], atol=1e-15)
        np.testing.assert_allclose(obj.to_rewards(y), self.rewards, atol=1e-15)

    @pytest.mark.parametrize("name", sorted(STRICTLY_CONCAVE))
    def test_matches_plain_coordinates(self, name):
        u = STRICTLY_CONCAVE[name]
        r = np.array([0.97, 0.71, 0.52, 0.33, 0.08])
        plain = PairwiseObjective.ordered(u, r.size)
        reflected = OrderedObjective(u, r.size)
        y = reflected.from_rewards(r)
        assert reflected.value(y) == pytest.approx(plain.value(r), rel=1e-12)
        np.testing.assert_allclose(reflected.gradient(y), reflected.signs * plain.gradient(r), rtol=1e-10)
        signs = np.outer(reflected.signs, reflected.signs)
        np.testing.assert_allclose(reflected.hessian(y), signs * plain.hessian(r), rtol=1e-10)

    def test_crossing_is_infeasible_only_inside_the_solver(self):
        u = UtilitySpec.power(0.5)
        r = np.array([0.4, 0.6, 0.0])
        assert np.isfinite(objective(u, r))
        reflected = OrderedObjective(u, 3)
        assert reflected.value(reflected.from_rewards(r)) == float("-inf")

    def test_power_ties_are_infeasible_logsigmoid_ties_are_not(self):
        r = np.array([1.0, 1.0, 0.0])
        power = OrderedObjective(UtilitySpec.power(0.5), 3)
        assert power.value(power.from_rewards(r)) == float("-inf")
        smooth = OrderedObjective(UtilitySpec.log_sigmoid(1.0), 3)
        assert np.isfinite(smooth.value(smooth.from_rewards(r)))


class TestSolveFiniteN:
    def test_staggered_init(self):
        np.testing.assert_allclose(staggered_init(5), [1.0, 0.75, 0.5, 0.25, 0.0])

    def test_two_points(self, solver, any_utility):
        result = solver.solve_finite_n(any_utility, 2)
        np.testing.assert_allclose(result.rewards, [1.0, 0.0], atol=1e-12)
        assert result.converged

    @pytest.mark.parametrize("gamma", [0.2, 0.5, 0.8])
    def test_power_three_points(self, solver, gamma):
        result = solver.solve_finite_n(UtilitySpec.power(gamma), 3)
        np.testing.assert_allclose(result.rewards, [1.0, 0.5, 0.0], atol=1e-8)

    @pytest.mark.parametrize("n", [5, 8, 20])
    def test_symmetric_ordered_with_pinned_endpoints(self, solver, concave_utility, n):
        result = solver.solve_finite_n(concave_utility, n)
        r = result.rewards
        assert result.converged
        assert result.unique and result.ordered
        assert r[0] == pytest.approx(1.0, abs=1e-9)
        assert r[-1] == pytest.approx(0.0, abs=1e-9)
        assert np.max(np.abs(r + r[::-1] - 1.0)) <= 1e-6
        assert result.is_nonincreasing(0.0)

    @pytest.mark.parametrize("n", [51, 100])
    @pytest.mark.parametrize("gamma", [0.2, 0.5, 0.8])
    def test_power_converges_ordered_and_symmetric(self, solver, gamma, n):
        result = solver.solve_finite_n(UtilitySpec.power(gamma), n)
        r = result.rewards
        assert result.converged, result.status
        assert result.ordered and result.is_nonincreasing(0.0)
        assert result.grad_norm_final <= 1e-8
        assert r[0] == pytest.approx(1.0, abs=1e-8)
        assert r[-1] == pytest.approx(0.0, abs=1e-8)
        assert np.max(np.abs(r + r[::-1] - 1.0)) <= 1e-6

    @pytest.mark.slow
    def test_power_at_two_hundred(self, solver):
        result = solver.solve_finite_n(UtilitySpec.power(0.8), 200)
        assert result.converged, result.status
        assert result.is_nonincreasing(0.0)
        assert np.max(np.abs(result.rewards + result.rewards[::-1] - 1.0)) <= 1e-6

    def test_unordered_result_is_not_converged(self, monkeypatch):
        crossed = RewardVector(rewards=[0.2, 0.8, 0.0], objective=0.0, iterations=3, grad_norm_final=0.0)
        monkeypatch.setattr(utils_solver.ProjectedAscent, "run", lambda self, obj, r0: crossed)
        result = solve_finite_n(UtilitySpec.power(0.5), 3)
        assert not result.ordered
        assert not result.converged
        assert result.status == "unordered"
        with pytest.raises(NonConvergenceError) as info:
            result.require_converged()
        assert info.value.iterations == 3

    def test_linear_is_not_unique(self, solver):
        result = solver.solve_finite_n(UtilitySpec.linear(), 4)
        np.testing.assert_allclose(result.rewards, [1.0, 1.0, 0.0, 0.0], atol=1e-9)
        assert result.objective == pytest.approx(4.0)
        assert not result.unique

    def test_trace_is_monotone(self):
        config = SolverConfig(record_trace=True)
        result = RewardSolver(config).solve_finite_n(UtilitySpec.log(), 30)
        trace = np.asarray(result.trace)
        assert trace.size == result.iterations + 1
        assert np.all(np.diff(trace) >= -1e-9 * np.maximum(1.0, np.abs(trace[1:])))

    def test_gradient_direction_agrees_with_newton(self):
        u = UtilitySpec.log_sigmoid(1.0)
        newton = solve_finite_n(u, 6)
        gradient = solve_finite_n(u, 6, SolverConfig(direction="gradient"))
        assert gradient.converged
        np.testing.assert_allclose(gradient.rewards, newton.rewards, atol=1e-6)

    def test_custom_init_reaches_same_optimum(self, solver):
        u = UtilitySpec.log()
        start = np.array([0.9, 0.85, 0.3, 0.2, 0.1])
        custom = RewardSolver(SolverConfig(init=InitMode.CUSTOM, initial_rewards=start))
        np.testing.assert_allclose(custom.solve_finite_n(u, 5).rewards,
                                   solver.solve_finite_n(u, 5).rewards, atol=1e-7)

    def test_unsorted_custom_start_is_put_in_rank_order(self, solver):
        u = UtilitySpec.log()
        start = np.array([0.1, 0.9, 0.3, 0.85, 0.2])
        custom = RewardSolver(SolverConfig(init=InitMode.CUSTOM, initial_rewards=start))
        np.testing.assert_allclose(custom.initial_point(5), np.sort(start)[::-1])
        np.testing.assert_allclose(custom.solve_finite_n(u, 5).rewards,
                                   solver.solve_finite_n(u, 5).rewards, atol=1e-7)

    def test_coincident_start_is_infeasible_for_power(self):
        config = SolverConfig(init=InitMode.CUSTOM, initial_rewards=[1.0, 1.0, 0.0])
        with pytest.raises(InfeasibleStartError):
            RewardSolver(config).solve_finite_n(UtilitySpec.power(0.5), 3)

    def test_coincident_start_is_infeasible_for_log(self):
        config = SolverConfig(init=InitMode.CUSTOM, initial_rewards=[0.5, 0.5, 0.0])
        with pytest.raises(InfeasibleStartError) as info:
            RewardSolver(config).solve_finite_n(UtilitySpec.log(), 3)
        assert info.value.code == "infeasible_start"

    def test_custom_init_with_wrong_length(self):
        config = SolverConfig(init=InitMode.CUSTOM, initial_rewards=[1.0, 0.0])
        with pytest.raises(InvalidInputError):
            RewardSolver(config).solve_finite_n(UtilitySpec.log(), 3)

    def test_iteration_cap_reports_non_convergence(self):
        result = solve_finite_n(UtilitySpec.power(0.5), 10, SolverConfig(max_iters=0))
        assert not result.converged
        assert result.status == "max_iters reached"
        assert result.iterations == 0

    @pytest.mark.parametrize("n", [0, 1, 1001])
    def test_rejects_bad_n(self, solver, n):
        with pytest.raises(InvalidInputError):
            solver.solve_finite_n(UtilitySpec.linear(), n)

    @pytest.mark.parametrize("kwargs", [
        {"max_iters": -1}, {"grad_tol": 0.0}, {"min_gap": -1.0},
        {"direction": "sideways"}, {"step_rule": "golden"}, {"init": InitMode.CUSTOM},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(InvalidInputError):
            SolverConfig(**kwargs)

    def test_to_frame_and_dict(self, solver):
        result = solver.solve_finite_n(UtilitySpec.log_sigmoid(1.0), 4)
        frame = result.to_frame()
        assert list(frame.columns) == ["rank", "reward"]
        assert frame["rank"].tolist() == [1, 2, 3, 4]
        payload = result.to_dict()
        assert payload["converged"] is True
        assert "tie_count" not in payload


class TestBruteForceOracle:
    def test_linear_three_points_is_all_ties(self):
        result = brute_force_oracle(UtilitySpec.linear(), 3, 101)
        assert result.objective == pytest.approx(2.0)
        assert len(result.ties) == 101
        assert not result.unique
        assert result.to_dict()["tie_count"] == 101

    def test_power_three_points_finds_midpoint(self):
        result = brute_force_oracle(UtilitySpec.power(0.5), 3, 101)
        np.testing.assert_allclose(result.rewards, [1.0, 0.5, 0.0])
        assert result.unique

    def test_four_point_candidates_are_ordered(self):
        result = brute_force_oracle(UtilitySpec.log_sigmoid(1.0), 4, 11)
        assert result.ties.shape[1] == 4
        assert np.all(np.diff(result.rewards) <= 0)

    def test_two_points(self):
        result = brute_force_oracle(UtilitySpec.log(), 2, 2)
        np.testing.assert_allclose(result.rewards, [1.0, 0.0])
        assert result.objective == pytest.approx(0.0)

    @pytest.mark.parametrize("n, grid_m", [(3, 51), (4, 41)])
    def test_solver_dominates_oracle(self, solver, any_utility, n, grid_m):
        solved = solver.solve_finite_n(any_utility, n).objective
        oracle = brute_force_oracle(any_utility, n, grid_m).objective
        assert solved >= oracle - 1e-4

    @pytest.mark.parametrize("n, grid_m", [(5, 11), (1, 11), (3, 1), (3, 502)])
    def test_rejects_out_of_range(self, n, grid_m):
        with pytest.raises(InvalidInputError):
            brute_force_oracle(UtilitySpec.linear(), n, grid_m)

    def test_too_coarse_grid_for_singular_utility(self):
        with pytest.raises(InvalidInputError):
            brute_force_oracle(UtilitySpec.log(), 4, 2)
