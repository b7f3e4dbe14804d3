"""Built-in problem instances.

``counterexample_problem`` is the bundled three-stage instance whose
running-max term makes greedy stage decomposition fail: its optimal
trajectory has a tail that is strictly suboptimal for the tail
subproblem, so plain backward induction on the unaugmented problem would
be wrong.  It doubles as an exact regression fixture because every
quantity in it is a small multiple of the step size ``h``.

``random_fs_instance`` generates seeded random fold-objective problems
with integer-valued costs; integer arithmetic is exact in floats, so the
augmented solve must match the enumeration oracle bit for bit on them.
"""

from __future__ import annotations

import numpy as np

from .dp import FiniteHorizonProblem
from .grids import InputGrid, PointGrid
from .objectives import SupObjective, combine_sum, from_additive, from_sup

__all__ = ["counterexample_problem", "counterexample_acc_axes", "random_fs_instance"]


def counterexample_problem(h: float = 1.0) -> FiniteHorizonProblem:
    """Three-stage scalar instance with a running-max objective.

    Dynamics ``x' = x + u`` on states {0, h} with inputs {-h, 0, h};
    objective ``-u(0) + u(1) - u(2)/2 + max_k x(k)``.  Eight input
    sequences are feasible; the optimum is ``(h, -h, h)`` with value
    ``-1.5 h``, and its tail at stage 2 is strictly suboptimal for the
    stage-2 subproblem.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    coeff = (-1.0, 1.0, -0.5)

    def dynamics(x, u, t):
        return x + u

    def stage_cost(x, u, t):
        return coeff[t] * float(u[0])

    additive = from_additive(stage_cost)
    peak = from_sup(SupObjective(lambda x, u, t: float(x[0]), lambda x: float(x[0])))
    return FiniteHorizonProblem(
        t0=0,
        T=3,
        dynamics=dynamics,
        state_grid=PointGrid([0.0, h]),
        input_grid=InputGrid([-h, 0.0, h]),
        objective=combine_sum(additive, peak),
        initial_state=[0.0],
        strict=True,
    )


def counterexample_acc_axes(h: float = 1.0) -> list[np.ndarray]:
    """Exact aggregate axes for fully augmenting the bundled instance.

    Running sums are multiples of h/2 in [-2.5h, 2.5h] and the finalized
    values reach 3.5h; the running max lives on {0, h}.
    """
    return [np.arange(-2.5 * h, 3.5 * h + 0.25 * h, 0.5 * h), np.array([0.0, h])]


def random_fs_instance(
    rng: np.random.Generator,
    max_states: int = 6,
    max_inputs: int = 4,
    max_horizon: int = 6,
) -> FiniteHorizonProblem:
    """Seeded random problem with an additive-plus-running-max objective.

    States and inputs are small integers, dynamics are a random transition
    table over the grid (with a sprinkling of infeasible entries but at
    least one feasible input everywhere), and all cost terms are integers,
    so objective values are exact in floats.
    """
    n_s = int(rng.integers(2, max_states + 1))
    n_u = int(rng.integers(2, max_inputs + 1))
    horizon = int(rng.integers(2, max_horizon + 1))
    t0 = int(rng.integers(0, 3))
    T = t0 + horizon

    state_vals = np.sort(rng.choice(np.arange(-4, 9), size=n_s, replace=False)).astype(float)
    input_vals = np.sort(rng.choice(np.arange(-4, 5), size=n_u, replace=False)).astype(float)
    sindex = {float(v): i for i, v in enumerate(state_vals)}
    uindex = {float(v): j for j, v in enumerate(input_vals)}

    trans = rng.integers(0, n_s, size=(horizon, n_s, n_u))
    drop = rng.random(size=trans.shape) < 0.15
    trans = np.where(drop, -1, trans)
    for k in range(horizon):
        for i in range(n_s):
            if (trans[k, i] < 0).all():
                trans[k, i, int(rng.integers(0, n_u))] = int(rng.integers(0, n_s))

    c_tab = rng.integers(-3, 4, size=(horizon, n_s, n_u)).astype(float)
    c_term = rng.integers(-3, 4, size=n_s).astype(float)
    d_tab = rng.integers(-2, 5, size=(horizon, n_s, n_u)).astype(float)
    d_term = rng.integers(-2, 5, size=n_s).astype(float)

    def dynamics(x, u, t):
        nid = trans[t - t0, sindex[float(x[0])], uindex[float(u[0])]]
        return np.array([np.nan]) if nid < 0 else np.array([state_vals[nid]])

    def stage_cost(x, u, t):
        return c_tab[t - t0, sindex[float(x[0])], uindex[float(u[0])]]

    def terminal_cost(x):
        return c_term[sindex[float(x[0])]]

    def sup_stage(x, u, t):
        return d_tab[t - t0, sindex[float(x[0])], uindex[float(u[0])]]

    def sup_terminal(x):
        return d_term[sindex[float(x[0])]]

    objective = combine_sum(
        from_additive(stage_cost, terminal_cost),
        from_sup(SupObjective(sup_stage, sup_terminal)),
    )
    x0 = state_vals[int(rng.integers(0, n_s))]
    return FiniteHorizonProblem(
        t0=t0,
        T=T,
        dynamics=dynamics,
        state_grid=PointGrid(state_vals),
        input_grid=InputGrid(input_vals),
        objective=objective,
        initial_state=[x0],
        strict=True,
    )
