"""Finite-horizon dynamic programming over explicit grids.

The workhorse types are :class:`FiniteHorizonProblem` (dynamics plus an
objective over gridded states and inputs) and the pair
:class:`ValueTable` / :class:`PolicyTable` that backward induction fills
in.  :func:`brute_force_solve` enumerates every input sequence and is the
independent oracle the rest of the package is tested against.
:func:`check_principle_of_optimality` detects instances where a tail of
an optimal trajectory fails to be optimal for its own tail subproblem,
which is exactly what running-max objectives do and what augmentation
(:mod:`augdp.augment`) repairs.

Successor handling: by default, dynamics outputs are projected to the
nearest grid point, and an output outside the grid's bounding box (plus
``atol`` slack) makes that input infeasible at that state.  With
``strict=True`` an output must land on a grid point (within ``atol``) or
the input is infeasible; use this when the dynamics are exactly grid
closed and projection would hide modelling errors.

Everything here is deterministic: ties in the stage minimisation resolve
to the lowest input id, and the enumeration oracle breaks ties by the
lexicographically smallest input-id sequence.  All tables are plain numpy
arrays; stage ``t`` of backward induction only reads the immutable stage
``t+1`` slice, so per-stage evaluation is safe to parallelise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from .grids import InputGrid, as_state_grid
from .objectives import ForwardSeparableObjective

__all__ = [
    "AdditiveObjective",
    "FiniteHorizonProblem",
    "ValueTable",
    "PolicyTable",
    "Trajectory",
    "OptimalityViolation",
    "InfeasibleProblemError",
    "EnumerationCapError",
    "PolicyGapError",
    "feasible_inputs",
    "bellman_backward",
    "rollout",
    "brute_force_solve",
    "check_principle_of_optimality",
]


class InfeasibleProblemError(RuntimeError):
    """No feasible trajectory exists from the initial state."""


class EnumerationCapError(RuntimeError):
    """The requested exhaustive enumeration is larger than the cap."""


class PolicyGapError(RuntimeError):
    """A rollout reached a cell where the policy has no usable action."""


@dataclass(frozen=True)
class AdditiveObjective:
    """Stage-additive cost ``sum_t stage_cost(x, u, t) + terminal_cost(x_T)``."""

    stage_cost: Callable[[np.ndarray, np.ndarray, int], float]
    terminal_cost: Callable[[np.ndarray], float]

    def evaluate_sequence(self, states, inputs, t0: int) -> float:
        total = 0.0
        for k in range(len(inputs)):
            total += float(self.stage_cost(states[k], inputs[k], t0 + k))
        return total + float(self.terminal_cost(states[len(inputs)]))


Objective = Union[AdditiveObjective, ForwardSeparableObjective]


@dataclass(eq=False)
class FiniteHorizonProblem:
    """A problem over stages ``t0 .. T`` with gridded states and inputs.

    ``dynamics(x, u, t)`` maps a state point and input point to the next
    state; return a non-finite vector to mark the transition infeasible.
    ``stage_tables`` is an optional accelerator: a callable
    ``t -> (succ, cost)`` producing the same (n_states, n_inputs) arrays
    the built-in scalar loop would (successor ids, -1 infeasible, and
    stage costs).  It must agree with the scalar path; the oracle and
    rollout always use the scalar path so disagreement shows up in tests.
    """

    t0: int
    T: int
    dynamics: Callable[[np.ndarray, np.ndarray, int], np.ndarray]
    state_grid: object
    input_grid: object
    objective: Objective
    initial_state: np.ndarray
    strict: bool = False
    atol: float = 1e-9
    stage_tables: Optional[Callable[[int], tuple[np.ndarray, np.ndarray]]] = None

    def __post_init__(self):
        if self.t0 >= self.T:
            raise ValueError(f"need t0 < T, got t0={self.t0}, T={self.T}")
        self.state_grid = as_state_grid(self.state_grid)
        if not isinstance(self.input_grid, InputGrid):
            self.input_grid = InputGrid(self.input_grid)
        self.initial_state = np.atleast_1d(np.asarray(self.initial_state, dtype=float))
        if self.strict:
            sid = self.state_grid.locate_exact(self.initial_state, self.atol)
            if sid < 0:
                raise ValueError("initial state is not a grid point")
        else:
            lo, hi = self.state_grid.bounds
            if np.any(self.initial_state < lo - self.atol) or np.any(
                self.initial_state > hi + self.atol
            ):
                raise ValueError("initial state lies outside the state grid")
            sid = self.state_grid.locate_nearest(self.initial_state)
        self.initial_id = sid

    @property
    def horizon(self) -> int:
        return self.T - self.t0


@dataclass
class ValueTable:
    """Cost-to-go per (stage, state id); +inf marks infeasible cells."""

    t0: int
    T: int
    values: np.ndarray  # (T - t0 + 1, n_states)

    def value(self, t: int, state_id: int) -> float:
        return float(self.values[t - self.t0, state_id])

    def is_feasible(self, t: int, state_id: int) -> bool:
        return bool(np.isfinite(self.values[t - self.t0, state_id]))


@dataclass
class PolicyTable:
    """Minimising input id per (stage, state id); -1 where undefined."""

    t0: int
    T: int
    input_ids: np.ndarray  # (T - t0, n_states)

    def input_id(self, t: int, state_id: int) -> int:
        return int(self.input_ids[t - self.t0, state_id])


@dataclass(frozen=True)
class Trajectory:
    """Realised (states, inputs) pair with its objective value."""

    t0: int
    states: np.ndarray  # (K + 1, n)
    inputs: np.ndarray  # (K, m)
    input_ids: Optional[tuple[int, ...]]
    objective_value: float


@dataclass(frozen=True)
class OptimalityViolation:
    """A stage where the optimal trajectory's tail is strictly suboptimal."""

    stage: int
    tail_cost: float
    best_cost: float


def _successor_id(problem: FiniteHorizonProblem, x, u, t: int) -> int:
    """Effective successor id under the grid semantics; -1 if infeasible."""
    xn = np.atleast_1d(np.asarray(problem.dynamics(x, u, t), dtype=float))
    if not np.all(np.isfinite(xn)):
        return -1
    grid = problem.state_grid
    if problem.strict:
        return grid.locate_exact(xn, problem.atol)
    lo, hi = grid.bounds
    if np.any(xn < lo - problem.atol) or np.any(xn > hi + problem.atol):
        return -1
    return grid.locate_nearest(xn)


def feasible_inputs(problem: FiniteHorizonProblem, x, t: int) -> list[np.ndarray]:
    """Inputs whose successor stays in the state set, in input-grid order."""
    if not (problem.t0 <= t < problem.T):
        raise ValueError(f"stage {t} outside [{problem.t0}, {problem.T})")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if problem.state_grid.locate_exact(x, problem.atol) < 0:
        raise ValueError(f"state {x} is not on the state grid")
    pts = problem.input_grid.points
    return [pts[j] for j in range(pts.shape[0]) if _successor_id(problem, x, pts[j], t) >= 0]


def _stage_tables(problem: FiniteHorizonProblem, t: int) -> tuple[np.ndarray, np.ndarray]:
    if problem.stage_tables is not None:
        return problem.stage_tables(t)
    spts = problem.state_grid.points
    upts = problem.input_grid.points
    n_s, n_u = spts.shape[0], upts.shape[0]
    succ = np.empty((n_s, n_u), dtype=np.int64)
    cost = np.zeros((n_s, n_u), dtype=float)
    stage_cost = problem.objective.stage_cost if isinstance(problem.objective, AdditiveObjective) else None
    for i in range(n_s):
        x = spts[i]
        for j in range(n_u):
            sid = _successor_id(problem, x, upts[j], t)
            succ[i, j] = sid
            if sid >= 0 and stage_cost is not None:
                cost[i, j] = float(stage_cost(x, upts[j], t))
    return succ, cost


def bellman_backward(problem: FiniteHorizonProblem) -> tuple[ValueTable, PolicyTable]:
    """Backward induction for additive objectives.

    Fills the value table from the terminal stage down; each cell takes
    the minimum over feasible inputs of stage cost plus the successor's
    cost-to-go, with ties broken by the lowest input id.  Cells with no
    feasible input get +inf; an infeasible *initial* cell raises
    :class:`InfeasibleProblemError` instead of silently returning +inf.
    """
    obj = problem.objective
    if not isinstance(obj, AdditiveObjective):
        raise TypeError(
            "backward induction needs an additive objective; augment the problem first"
        )
    n_s = problem.state_grid.size
    K = problem.horizon
    spts = problem.state_grid.points
    values = np.full((K + 1, n_s), np.inf)
    policy = np.full((K, n_s), -1, dtype=np.int64)
    values[K] = [float(obj.terminal_cost(spts[i])) for i in range(n_s)]
    for k in range(K - 1, -1, -1):
        succ, cost = _stage_tables(problem, problem.t0 + k)
        feas = succ >= 0
        nxt = np.where(feas, values[k + 1][np.where(feas, succ, 0)], np.inf)
        total = np.where(feas, cost + nxt, np.inf)
        values[k] = total.min(axis=1)
        finite = np.isfinite(values[k])
        policy[k] = np.where(finite, total.argmin(axis=1), -1)
    if not np.isfinite(values[0, problem.initial_id]):
        raise InfeasibleProblemError(
            f"no feasible trajectory from the initial state at stage {problem.t0}"
        )
    return (
        ValueTable(problem.t0, problem.T, values),
        PolicyTable(problem.t0, problem.T, policy),
    )


def rollout(problem: FiniteHorizonProblem, policy: PolicyTable) -> Trajectory:
    """Drive the system with a policy and re-score the trajectory.

    The objective value is recomputed by evaluating the problem's own
    objective on the realised trajectory rather than read from a value
    table, so the two can be cross-checked.
    """
    spts = problem.state_grid.points
    upts = problem.input_grid.points
    sid = problem.initial_id
    states = [spts[sid]]
    inputs = []
    ids: list[int] = []
    for t in range(problem.t0, problem.T):
        x = spts[sid]
        uid = policy.input_id(t, sid)
        if uid < 0:
            raise PolicyGapError(f"policy undefined at state {x} stage {t}")
        u = upts[uid]
        nid = _successor_id(problem, x, u, t)
        if nid < 0:
            raise PolicyGapError(f"policy action {u} infeasible at state {x} stage {t}")
        inputs.append(u)
        ids.append(uid)
        sid = nid
        states.append(spts[sid])
    value = problem.objective.evaluate_sequence(states, inputs, problem.t0)
    return Trajectory(problem.t0, np.array(states), np.array(inputs), tuple(ids), value)


def brute_force_solve(problem: FiniteHorizonProblem, cap: int = 10_000_000) -> Trajectory:
    """Exhaustive enumeration oracle.

    Walks every input-id sequence depth first (so in lexicographic
    order), discards infeasible ones, evaluates the objective on each
    survivor and keeps the strict minimum; the first minimiser found is
    therefore the lexicographically smallest.  Works for additive and
    fold objectives alike and never uses ``stage_tables``.
    """
    K = problem.horizon
    n_u = problem.input_grid.size
    if n_u**K > cap:
        raise EnumerationCapError(f"{n_u}^{K} input sequences exceed the cap of {cap}")
    spts = problem.state_grid.points
    upts = problem.input_grid.points
    best: list = [None, None]  # (value, (ids, states))

    path_ids: list[int] = []
    path_states = [spts[problem.initial_id]]
    succ_memo: dict[tuple[int, int, int], int] = {}

    def walk(depth: int, sid: int) -> None:
        if depth == K:
            value = problem.objective.evaluate_sequence(
                path_states, [upts[j] for j in path_ids], problem.t0
            )
            if best[0] is None or value < best[0]:
                best[0] = value
                best[1] = (tuple(path_ids), [s.copy() for s in path_states])
            return
        t = problem.t0 + depth
        x = path_states[-1]
        for j in range(n_u):
            key = (depth, sid, j)
            nid = succ_memo.get(key)
            if nid is None:
                nid = _successor_id(problem, x, upts[j], t)
                succ_memo[key] = nid
            if nid < 0:
                continue
            path_ids.append(j)
            path_states.append(spts[nid])
            walk(depth + 1, nid)
            path_ids.pop()
            path_states.pop()

    walk(0, problem.initial_id)
    if best[0] is None:
        raise InfeasibleProblemError("no feasible input sequence exists")
    ids, states = best[1]
    return Trajectory(
        problem.t0,
        np.array(states),
        np.array([upts[j] for j in ids]),
        ids,
        float(best[0]),
    )


def check_principle_of_optimality(
    problem: FiniteHorizonProblem, cap: int = 10_000_000, tol: float = 1e-9
) -> list[OptimalityViolation]:
    """Report stages where the optimal trajectory's tail is suboptimal.

    Solves the problem exhaustively, then for each interior stage ``s``
    solves the subproblem restarted at the optimal trajectory's state
    ``x*(s)`` and compares the tail's cost (under the objective's own
    suffix semantics) with the subproblem optimum.  Additive objectives
    always yield an empty list; running-max objectives generally do not.
    """
    base = brute_force_solve(problem, cap)
    violations = []
    for s in range(problem.t0 + 1, problem.T):
        k = s - problem.t0
        sub = replace(problem, t0=s, initial_state=base.states[k])
        tail_cost = problem.objective.evaluate_sequence(base.states[k:], base.inputs[k:], s)
        tail_best = brute_force_solve(sub, cap)
        if tail_cost > tail_best.objective_value + tol:
            violations.append(OptimalityViolation(s, tail_cost, tail_best.objective_value))
    return violations
