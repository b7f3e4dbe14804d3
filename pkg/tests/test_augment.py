import numpy as np
import pytest

import augdp
from augdp.augment import _fold_components
from augdp.dp import _successor_id
from conftest import size_capped


def _capped_instance(rng):
    max_inputs, max_horizon = size_capped(rng)
    return augdp.random_fs_instance(rng, max_inputs=max_inputs, max_horizon=max_horizon)


class TestAugmentCounterexample:
    def test_exact_axes_reproduce_known_optimum(self):
        problem = augdp.counterexample_problem(1.0)
        aug = augdp.augment(problem, acc_axes=augdp.counterexample_acc_axes(1.0))
        _v, _p, ptraj, recovered = augdp.solve_augmented(aug)
        assert recovered.objective_value == -1.5
        assert tuple(recovered.inputs.ravel()) == (1.0, -1.0, 1.0)
        np.testing.assert_array_equal(recovered.states.ravel(), [0.0, 1.0, 0.0, 1.0])
        # product trajectory carries one extra closing stage
        assert ptraj.states.shape[0] == recovered.states.shape[0] + 1

    def test_auto_axes_with_step(self):
        problem = augdp.counterexample_problem(1.0)
        aug = augdp.augment(problem, acc_step=0.5)
        assert augdp.solve_augmented(aug)[3].objective_value == -1.5

    def test_zero_cost_base(self):
        zero = augdp.from_additive(lambda x, u, t: 0.0)
        problem = augdp.FiniteHorizonProblem(
            t0=0,
            T=3,
            dynamics=lambda x, u, t: x + u,
            state_grid=augdp.PointGrid([0.0, 1.0]),
            input_grid=augdp.InputGrid([-1.0, 0.0, 1.0]),
            objective=zero,
            initial_state=[0.0],
            strict=True,
        )
        aug = augdp.augment(problem, acc_step=1.0)
        assert augdp.solve_augmented(aug)[3].objective_value == 0.0


class TestOracleEquivalence:
    def test_random_instances_match_enumeration_exactly(self):
        rng = np.random.default_rng(101)
        for _ in range(40):
            problem = _capped_instance(rng)
            oracle = augdp.brute_force_solve(problem)
            recovered = augdp.solve_augmented(augdp.augment(problem, acc_step=1.0))[3]
            assert recovered.objective_value == oracle.objective_value

    def test_product_problems_satisfy_optimal_substructure(self):
        rng = np.random.default_rng(55)
        for _ in range(15):
            problem = _capped_instance(rng)
            aug = augdp.augment(problem, acc_step=1.0)
            assert augdp.check_principle_of_optimality(aug.product) == []

    def test_hybrid_matches_full(self):
        rng = np.random.default_rng(77)
        for _ in range(25):
            problem = _capped_instance(rng)
            full = augdp.solve_augmented(augdp.augment(problem, acc_step=1.0))[3]
            hybrid = augdp.solve_augmented(augdp.augment_hybrid(problem))[3]
            assert hybrid.objective_value == pytest.approx(full.objective_value, abs=1e-9)


class TestRecover:
    def test_pure_additive_roundtrip_matches_unaugmented_solve(self):
        rng = np.random.default_rng(9)
        problem = augdp.random_fs_instance(rng)
        stage_cost, terminal_cost, _d, _dt = augdp.objectives.split_additive_sup(
            problem.objective
        )
        problem.objective = augdp.from_additive(stage_cost, terminal_cost)
        aug_value = augdp.solve_augmented(augdp.augment(problem, acc_step=1.0))[3].objective_value

        import dataclasses

        plain = dataclasses.replace(problem)
        plain.objective = augdp.AdditiveObjective(stage_cost, terminal_cost)
        values, policy = augdp.bellman_backward(plain)
        assert aug_value == values.value(plain.t0, plain.initial_id)

    def test_constant_objective(self):
        const = augdp.from_additive(lambda x, u, t: 0.0, lambda x: 4.25)
        problem = augdp.FiniteHorizonProblem(
            t0=0,
            T=2,
            dynamics=lambda x, u, t: x,
            state_grid=augdp.PointGrid([0.0]),
            input_grid=augdp.InputGrid([0.0]),
            objective=const,
            initial_state=[0.0],
            strict=True,
        )
        recovered = augdp.solve_augmented(augdp.augment(problem, acc_step=1.0))[3]
        assert recovered.objective_value == 4.25


class TestAggregates:
    def test_running_max_is_monotone_along_rollout(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            problem = _capped_instance(rng)
            aug = augdp.augment(problem, acc_step=1.0)
            _v, _p, ptraj, _rec = augdp.solve_augmented(aug)
            n = aug.n_base
            max_component = ptraj.states[: problem.horizon + 1, n + 1]
            assert np.all(np.diff(max_component[1:]) >= 0)

    def test_undersized_axis_raises_with_stage(self):
        problem = augdp.counterexample_problem(1.0)
        axes = [np.arange(-1.0, 1.01, 0.5), np.array([0.0, 1.0])]
        aug = augdp.augment(problem, acc_axes=axes)
        with pytest.raises(augdp.AggregateRangeError) as err:
            augdp.solve_augmented(aug)
        assert err.value.stage >= 0
        assert "stage" in str(err.value)

    def test_fold_components_flattening(self):
        problem = augdp.counterexample_problem(1.0)
        comps = _fold_components(problem.objective)
        assert [kind for kind, _s, _t in comps] == ["add", "max"]
        bare = augdp.ForwardSeparableObjective(
            1,
            lambda x, u, t: np.array([0.0]),
            lambda x, u, a, t: a,
            lambda x, a: 0.0,
        )
        assert _fold_components(bare) is None


class TestStructuredTablesAgree:
    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_vectorized_builder_matches_scalar_dynamics(self, seed):
        rng = np.random.default_rng(seed)
        problem = _capped_instance(rng)
        aug = augdp.augment(problem, acc_step=1.0)
        product = aug.product
        ppts = product.state_grid.points
        upts = product.input_grid.points
        for t in range(product.t0, product.T):
            succ, _cost, _ovf = aug.tables_ex(t)
            sample = rng.integers(0, product.state_grid.size, size=30)
            for p in sample:
                for j in range(product.input_grid.size):
                    assert succ[p, j] == _successor_id(product, ppts[p], upts[j], t), (t, p, j)

    def test_hybrid_builder_matches_scalar_dynamics(self):
        rng = np.random.default_rng(6)
        problem = _capped_instance(rng)
        aug = augdp.augment_hybrid(problem)
        product = aug.product
        ppts = product.state_grid.points
        upts = product.input_grid.points
        for t in range(product.t0, product.T):
            succ, cost, _ovf = aug.tables_ex(t)
            for p in rng.integers(0, product.state_grid.size, size=30):
                for j in range(product.input_grid.size):
                    assert succ[p, j] == _successor_id(product, ppts[p], upts[j], t)
                    assert cost[p, j] == product.objective.stage_cost(ppts[p], upts[j], t)
