from itertools import product as iter_product

import numpy as np
import pytest

import augdp
from augdp.dp import _successor_id
from conftest import random_additive_instance, size_capped

# objective values of the eight feasible command sequences of the bundled
# three-stage running-max instance at h=1, keyed by command values
COUNTER_COSTS = {
    (0.0, 0.0, 0.0): 0.0,
    (0.0, 0.0, 1.0): 0.5,
    (0.0, 1.0, 0.0): 2.0,
    (0.0, 1.0, -1.0): 2.5,
    (1.0, 0.0, -1.0): 0.5,
    (1.0, 0.0, 0.0): 0.0,
    (1.0, -1.0, 0.0): -1.0,
    (1.0, -1.0, 1.0): -1.5,
}


def enumerate_feasible(problem):
    """All feasible command sequences with their objective values."""
    upts = problem.input_grid.points
    spts = problem.state_grid.points
    out = {}
    for ids in iter_product(range(problem.input_grid.size), repeat=problem.horizon):
        sid = problem.initial_id
        states = [spts[sid]]
        feasible = True
        for k, j in enumerate(ids):
            nid = _successor_id(problem, states[-1], upts[j], problem.t0 + k)
            if nid < 0:
                feasible = False
                break
            sid = nid
            states.append(spts[sid])
        if feasible:
            key = tuple(float(upts[j][0]) for j in ids)
            out[key] = problem.objective.evaluate_sequence(
                states, [upts[j] for j in ids], problem.t0
            )
    return out


class TestFeasibleInputs:
    def test_counterexample_midpoint(self):
        problem = augdp.counterexample_problem(1.0)
        got = augdp.feasible_inputs(problem, [0.0], 2)
        assert [float(u[0]) for u in got] == [0.0, 1.0]

    def test_identity_dynamics_full_grid(self):
        problem = augdp.FiniteHorizonProblem(
            t0=0,
            T=2,
            dynamics=lambda x, u, t: x,
            state_grid=augdp.PointGrid([0.0, 1.0, 2.0]),
            input_grid=augdp.InputGrid([-1.0, 0.0, 1.0]),
            objective=augdp.AdditiveObjective(lambda x, u, t: 0.0, lambda x: 0.0),
            initial_state=[0.0],
            strict=True,
        )
        got = augdp.feasible_inputs(problem, [1.0], 0)
        assert [float(u[0]) for u in got] == [-1.0, 0.0, 1.0]

    def test_matches_membership_filter(self):
        rng = np.random.default_rng(4)
        problem = augdp.random_fs_instance(rng, max_states=4)
        spts = problem.state_grid.points
        upts = problem.input_grid.points
        for t in range(problem.t0, problem.T):
            for i in range(spts.shape[0]):
                got = augdp.feasible_inputs(problem, spts[i], t)
                expect = [
                    upts[j]
                    for j in range(upts.shape[0])
                    if problem.state_grid.locate_exact(
                        problem.dynamics(spts[i], upts[j], t), problem.atol
                    )
                    >= 0
                ]
                assert [tuple(u) for u in got] == [tuple(u) for u in expect]

    def test_errors(self):
        problem = augdp.counterexample_problem(1.0)
        with pytest.raises(ValueError, match="stage"):
            augdp.feasible_inputs(problem, [0.0], 3)
        with pytest.raises(ValueError, match="grid"):
            augdp.feasible_inputs(problem, [0.25], 1)


class TestBellmanBackward:
    def test_terminal_anchoring_one_stage(self):
        grid = augdp.PointGrid([0.0, 1.0, 2.0])
        problem = augdp.FiniteHorizonProblem(
            t0=0,
            T=1,
            dynamics=lambda x, u, t: x,
            state_grid=grid,
            input_grid=augdp.InputGrid([0.0]),
            objective=augdp.AdditiveObjective(lambda x, u, t: 0.0, lambda x: 7.0 * float(x[0])),
            initial_state=[0.0],
            strict=True,
        )
        values, _policy = augdp.bellman_backward(problem)
        for i, x in enumerate([0.0, 1.0, 2.0]):
            assert values.value(1, i) == 7.0 * x

    def test_augmented_counterexample_start_value(self):
        problem = augdp.counterexample_problem(1.0)
        aug = augdp.augment(problem, acc_axes=augdp.counterexample_acc_axes(1.0))
        values, _policy = augdp.bellman_backward(aug.product)
        assert values.value(aug.product.t0, aug.product.initial_id) == -1.5

    def test_requires_additive_objective(self):
        problem = augdp.counterexample_problem(1.0)
        with pytest.raises(TypeError, match="additive"):
            augdp.bellman_backward(problem)

    def test_matches_oracle_on_random_additive_instances(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            problem = random_additive_instance(rng)
            values, policy = augdp.bellman_backward(problem)
            oracle = augdp.brute_force_solve(problem)
            traj = augdp.rollout(problem, policy)
            assert traj.objective_value == oracle.objective_value
            assert values.value(problem.t0, problem.initial_id) == oracle.objective_value

    def test_bellman_consistency_invariant(self):
        rng = np.random.default_rng(5)
        problem = random_additive_instance(rng)
        values, _policy = augdp.bellman_backward(problem)
        spts = problem.state_grid.points
        for t in range(problem.t0, problem.T):
            for i in range(spts.shape[0]):
                options = [
                    float(problem.objective.stage_cost(spts[i], u, t))
                    + values.value(t + 1, _successor_id(problem, spts[i], u, t))
                    for u in augdp.feasible_inputs(problem, spts[i], t)
                ]
                if options:
                    assert values.value(t, i) == pytest.approx(min(options), abs=1e-12)
                else:
                    assert not values.is_feasible(t, i)

    def test_infeasible_initial_state_raises(self):
        problem = augdp.FiniteHorizonProblem(
            t0=0,
            T=2,
            dynamics=lambda x, u, t: np.array([np.nan]),
            state_grid=augdp.PointGrid([0.0]),
            input_grid=augdp.InputGrid([0.0]),
            objective=augdp.AdditiveObjective(lambda x, u, t: 0.0, lambda x: 0.0),
            initial_state=[0.0],
        )
        with pytest.raises(augdp.InfeasibleProblemError):
            augdp.bellman_backward(problem)

    def test_determinism_bit_for_bit(self):
        rng1, rng2 = np.random.default_rng(33), np.random.default_rng(33)
        p1 = random_additive_instance(rng1)
        p2 = random_additive_instance(rng2)
        v1, pol1 = augdp.bellman_backward(p1)
        v2, pol2 = augdp.bellman_backward(p2)
        np.testing.assert_array_equal(v1.values, v2.values)
        np.testing.assert_array_equal(pol1.input_ids, pol2.input_ids)


class TestRollout:
    def test_identity_zero_cost(self):
        problem = augdp.FiniteHorizonProblem(
            t0=0,
            T=3,
            dynamics=lambda x, u, t: x,
            state_grid=augdp.PointGrid([0.0, 1.0]),
            input_grid=augdp.InputGrid([0.0]),
            objective=augdp.AdditiveObjective(lambda x, u, t: 0.0, lambda x: 0.0),
            initial_state=[1.0],
            strict=True,
        )
        _values, policy = augdp.bellman_backward(problem)
        traj = augdp.rollout(problem, policy)
        assert traj.objective_value == 0.0
        np.testing.assert_array_equal(traj.states.ravel(), [1.0, 1.0, 1.0, 1.0])

    def test_augmented_counterexample_projects_to_known_optimum(self):
        problem = augdp.counterexample_problem(1.0)
        aug = augdp.augment(problem, acc_axes=augdp.counterexample_acc_axes(1.0))
        _values, policy = augdp.bellman_backward(aug.product)
        traj = augdp.rollout(aug.product, policy)
        recovered = augdp.recover(aug, traj)
        assert tuple(recovered.inputs.ravel()) == (1.0, -1.0, 1.0)
        assert recovered.objective_value == -1.5

    def test_value_table_consistency(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            problem = random_additive_instance(rng)
            values, policy = augdp.bellman_backward(problem)
            traj = augdp.rollout(problem, policy)
            assert traj.objective_value == pytest.approx(
                values.value(problem.t0, problem.initial_id), abs=1e-12
            )

    def test_policy_gap_error_names_the_cell(self):
        problem = augdp.counterexample_problem(1.0)
        aug = augdp.augment(problem, acc_axes=augdp.counterexample_acc_axes(1.0))
        _values, policy = augdp.bellman_backward(aug.product)
        policy.input_ids[0, aug.product.initial_id] = -1
        with pytest.raises(augdp.PolicyGapError, match="stage 0"):
            augdp.rollout(aug.product, policy)


class TestBruteForce:
    def test_counterexample_reproduces_all_costs(self):
        problem = augdp.counterexample_problem(1.0)
        assert enumerate_feasible(problem) == COUNTER_COSTS
        best = augdp.brute_force_solve(problem)
        assert tuple(best.inputs.ravel()) == (1.0, -1.0, 1.0)
        assert best.objective_value == -1.5

    def test_counterexample_scales_with_h(self):
        problem = augdp.counterexample_problem(2.0)
        best = augdp.brute_force_solve(problem)
        assert tuple(best.inputs.ravel()) == (2.0, -2.0, 2.0)
        assert best.objective_value == -3.0

    def test_single_stage_single_input(self):
        problem = augdp.FiniteHorizonProblem(
            t0=3,
            T=4,
            dynamics=lambda x, u, t: x + u,
            state_grid=augdp.PointGrid([0.0, 1.0]),
            input_grid=augdp.InputGrid([1.0]),
            objective=augdp.AdditiveObjective(
                lambda x, u, t: 4.0 * float(u[0]) + t, lambda x: float(x[0])
            ),
            initial_state=[0.0],
            strict=True,
        )
        best = augdp.brute_force_solve(problem)
        assert best.objective_value == 4.0 + 3.0 + 1.0

    def test_cap_enforced(self):
        problem = augdp.counterexample_problem(1.0)
        with pytest.raises(augdp.EnumerationCapError):
            augdp.brute_force_solve(problem, cap=26)

    def test_no_feasible_sequence(self):
        problem = augdp.FiniteHorizonProblem(
            t0=0,
            T=2,
            dynamics=lambda x, u, t: np.array([np.nan]),
            state_grid=augdp.PointGrid([0.0]),
            input_grid=augdp.InputGrid([0.0]),
            objective=augdp.AdditiveObjective(lambda x, u, t: 0.0, lambda x: 0.0),
            initial_state=[0.0],
        )
        with pytest.raises(augdp.InfeasibleProblemError):
            augdp.brute_force_solve(problem)

    def test_lexicographic_tie_breaking(self):
        problem = augdp.FiniteHorizonProblem(
            t0=0,
            T=2,
            dynamics=lambda x, u, t: x,
            state_grid=augdp.PointGrid([0.0]),
            input_grid=augdp.InputGrid([5.0, -5.0]),
            objective=augdp.AdditiveObjective(lambda x, u, t: 0.0, lambda x: 0.0),
            initial_state=[0.0],
            strict=True,
        )
        best = augdp.brute_force_solve(problem)
        assert best.input_ids == (0, 0)


class TestPrincipleOfOptimality:
    def test_counterexample_has_exactly_one_violation(self):
        problem = augdp.counterexample_problem(1.0)
        violations = augdp.check_principle_of_optimality(problem)
        assert len(violations) == 1
        v = violations[0]
        assert v.stage == 2 and v.tail_cost == 0.5 and v.best_cost == 0.0

    def test_additive_instances_are_clean(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            max_inputs, max_horizon = size_capped(rng)
            problem = random_additive_instance(
                rng, max_inputs=max_inputs, max_horizon=max_horizon
            )
            assert augdp.check_principle_of_optimality(problem) == []

    def test_augmented_counterexample_is_clean(self):
        problem = augdp.counterexample_problem(1.0)
        aug = augdp.augment(problem, acc_axes=augdp.counterexample_acc_axes(1.0))
        assert augdp.check_principle_of_optimality(aug.product) == []
