import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augdp.objectives import (
    SupObjective,
    combine_sum,
    evaluate,
    from_additive,
    from_sup,
    split_additive_sup,
)

# the bundled three-stage instance: costs -u, u, -u/2 plus a running max of x
COEFF = (-1.0, 1.0, -0.5)


def _counter_additive():
    return from_additive(lambda x, u, t: COEFF[t] * float(u[0]))


def _counter_sup():
    return from_sup(SupObjective(lambda x, u, t: float(x[0]), lambda x: float(x[0])))


def _seq(states, inputs):
    return [np.atleast_1d(float(s)) for s in states], [np.atleast_1d(float(u)) for u in inputs]


@st.composite
def trajectories(draw):
    n = draw(st.integers(min_value=1, max_value=6))
    vals = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
    states = draw(st.lists(vals, min_size=n + 1, max_size=n + 1))
    inputs = draw(st.lists(vals, min_size=n, max_size=n))
    return states, inputs


class TestFromAdditive:
    def test_all_zero_costs(self):
        obj = from_additive(lambda x, u, t: 0.0)
        states, inputs = _seq([0, 1, 2], [5, -5])
        assert obj.evaluate_sequence(states, inputs, 0) == 0.0

    def test_counterexample_additive_part(self):
        states, inputs = _seq([0, 1, 0, 1], [1, -1, 1])
        assert _counter_additive().evaluate_sequence(states, inputs, 0) == -2.5

    @settings(deadline=None, max_examples=50)
    @given(trajectories())
    def test_matches_direct_summation(self, traj):
        states, inputs = _seq(*traj)
        obj = from_additive(
            lambda x, u, t: 0.25 * float(x[0]) - 0.5 * float(u[0]) + t,
            lambda x: 2.0 * float(x[0]),
        )
        direct = sum(
            0.25 * float(states[k][0]) - 0.5 * float(inputs[k][0]) + k for k in range(len(inputs))
        ) + 2.0 * float(states[-1][0])
        got = obj.evaluate_sequence(states, inputs, 0)
        assert got == pytest.approx(direct, abs=1e-12 * max(1.0, abs(direct)))


class TestFromSup:
    def test_constant_terms(self):
        obj = from_sup(SupObjective(lambda x, u, t: 5.0, lambda x: 5.0))
        states, inputs = _seq([0, 0, 0], [0, 0])
        assert obj.evaluate_sequence(states, inputs, 0) == 5.0

    def test_counterexample_running_max(self):
        states, inputs = _seq([0, 1, 0, 1], [1, -1, 1])
        assert _counter_sup().evaluate_sequence(states, inputs, 0) == 1.0

    @settings(deadline=None, max_examples=50)
    @given(trajectories())
    def test_matches_explicit_max(self, traj):
        states, inputs = _seq(*traj)
        obj = from_sup(
            SupObjective(lambda x, u, t: float(x[0]) + float(u[0]), lambda x: float(x[0]))
        )
        direct = max(
            max(float(states[k][0]) + float(inputs[k][0]) for k in range(len(inputs))),
            float(states[-1][0]),
        )
        assert obj.evaluate_sequence(states, inputs, 0) == direct


class TestCombineSum:
    def test_zero_partner_is_identity(self):
        zero = from_additive(lambda x, u, t: 0.0)
        obj = combine_sum(_counter_additive(), zero)
        states, inputs = _seq([0, 1, 0, 1], [1, -1, 1])
        assert obj.evaluate_sequence(states, inputs, 0) == -2.5

    def test_counterexample_combined_value(self):
        obj = combine_sum(_counter_additive(), _counter_sup())
        states, inputs = _seq([0, 1, 0, 1], [1, -1, 1])
        assert obj.evaluate_sequence(states, inputs, 0) == -1.5

    def test_acc_dim_adds(self):
        a = combine_sum(_counter_additive(), _counter_sup())
        b = combine_sum(a, from_additive(lambda x, u, t: 1.0))
        assert a.acc_dim == 2 and b.acc_dim == 3

    @settings(deadline=None, max_examples=50)
    @given(trajectories())
    def test_sum_of_component_values(self, traj):
        states, inputs = _seq(*traj)
        a = from_additive(lambda x, u, t: float(x[0]) - float(u[0]), lambda x: float(x[0]))
        b = from_sup(SupObjective(lambda x, u, t: float(u[0]), lambda x: 0.0))
        combined = combine_sum(a, b).evaluate_sequence(states, inputs, 0)
        parts = a.evaluate_sequence(states, inputs, 0) + b.evaluate_sequence(states, inputs, 0)
        assert combined == pytest.approx(parts, abs=1e-12 * max(1.0, abs(parts)))

    def test_split_additive_sup(self):
        obj = combine_sum(_counter_sup(), _counter_additive())
        parts = split_additive_sup(obj)
        assert parts is not None
        stage_cost, terminal_cost, sup_stage, sup_terminal = parts
        assert stage_cost(np.array([0.0]), np.array([2.0]), 1) == 2.0
        assert sup_stage(np.array([3.0]), np.array([0.0]), 0) == 3.0
        assert split_additive_sup(_counter_additive()) is None
        assert split_additive_sup(combine_sum(_counter_additive(), _counter_additive())) is None


class TestEvaluate:
    def test_single_stage_is_seed_then_finalize(self):
        obj = combine_sum(_counter_additive(), _counter_sup())
        states, inputs = _seq([0, 1], [1])
        # seed at stage 0: (-1, 0); finalize at x=1: -1 + max(1, 0) = 0
        assert obj.evaluate_sequence(states, inputs, 0) == 0.0

    def test_shape_mismatch(self):
        obj = _counter_additive()
        states, inputs = _seq([0, 1], [1, 1])
        with pytest.raises(ValueError, match="shape"):
            obj.evaluate_sequence(states, inputs, 0)
        with pytest.raises(ValueError):
            obj.evaluate_sequence(states[:1], [], 0)

    def test_suffix_semantics(self):
        # folding from stage 2 scores the tail: -u/2 + max(x(2), x(3))
        obj = combine_sum(_counter_additive(), _counter_sup())
        states, inputs = _seq([0, 1], [1])
        assert obj.evaluate_sequence(states, inputs, 2) == 0.5

    def test_evaluate_accepts_trajectory_objects(self):
        from augdp.dp import Trajectory

        states, inputs = _seq([0, 1, 0, 1], [1, -1, 1])
        traj = Trajectory(0, np.array(states), np.array(inputs), None, float("nan"))
        assert evaluate(combine_sum(_counter_additive(), _counter_sup()), traj) == -1.5
