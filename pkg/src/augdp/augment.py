"""State augmentation: turn a fold-valued objective into an additive one.

A problem whose objective is a left fold (see :mod:`augdp.objectives`)
generally loses optimal substructure, so plain backward induction is
unsound.  Appending the fold's aggregate to the state restores it: the
augmented problem is stage-additive, satisfies the principle of
optimality, and its optimal trajectories project back onto optimal
trajectories of the original problem with the same value.

Two constructions are provided:

* :func:`augment` - the general path.  Every aggregate component gets a
  grid axis, the horizon grows by one closing stage whose transition
  writes the finalized scalar into the first aggregate component, and the
  terminal cost reads that component.  All stage costs are zero.
* :func:`augment_hybrid` - for objectives that are a sum of an additive
  part and a running-max part.  The additive part stays as ordinary stage
  costs and only the running max is appended, so the state grows by one
  dimension instead of two and the terminal map folds in without any
  aggregate quantisation of the final value.

Aggregate axes may be given explicitly, or derived automatically: the
general path propagates per-component intervals of the fold over the
state and input grids stage by stage (assuming the update is monotone in
the aggregate, which holds for sums and maxima), while the hybrid path
can enumerate the exact finite set of running-max values, making the
augmentation lossless.

Aggregate updates that land between axis points are projected to the
nearest point; updates that leave the axis range make the cell
infeasible and are flagged, and :func:`solve_augmented` raises
:class:`AggregateRangeError` if any *reachable* cell is flagged, naming
the stage.  (Unreachable cells of the product grid may overflow benignly;
only reachable overflow means the axes were sized too small.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dp import (
    AdditiveObjective,
    FiniteHorizonProblem,
    PolicyTable,
    Trajectory,
    ValueTable,
    _successor_id,
    bellman_backward,
    rollout,
)
from .grids import AxisGrid, ProductGrid, locate_points
from .objectives import ForwardSeparableObjective, split_additive_sup

__all__ = [
    "AugmentedProblem",
    "AggregateRangeError",
    "augment",
    "augment_hybrid",
    "recover",
    "solve_augmented",
]


class AggregateRangeError(RuntimeError):
    """A reachable aggregate update left the aggregate axis range."""

    def __init__(self, stage: int):
        super().__init__(
            f"aggregate axis too small: a reachable update leaves the axis at stage {stage}"
        )
        self.stage = stage


def _fold_components(obj) -> Optional[list[tuple]]:
    """Flatten a sum-of-folds tree into per-component leaf specs.

    Returns a list of ``("add", stage_fn, terminal_fn)`` and
    ``("max", stage_fn, terminal_fn)`` entries, one per aggregate
    component, or None when the objective was not built from the
    constructors in :mod:`augdp.objectives`.  Component updates are then
    independent and cheap, which lets the table builders vectorise over
    the aggregate axes instead of calling the fold closures per cell.
    """
    if not isinstance(obj, ForwardSeparableObjective) or obj.structure is None:
        return None
    tag = obj.structure[0]
    if tag == "additive":
        return [("add", obj.structure[1], obj.structure[2])]
    if tag == "sup":
        return [("max", obj.structure[1], obj.structure[2])]
    if tag == "sum":
        left = _fold_components(obj.structure[1])
        right = _fold_components(obj.structure[2])
        if left is None or right is None:
            return None
        return left + right
    return None


@dataclass(eq=False)
class AugmentedProblem:
    """A base problem together with its additive product-state problem.

    ``product`` is an ordinary :class:`FiniteHorizonProblem` over states
    ``(x, aggregate)`` and can be fed to any dp-core routine; its
    ``stage_tables`` accelerator is wired to the builder stored here.
    """

    base: FiniteHorizonProblem
    product: FiniteHorizonProblem
    acc_axes: list[np.ndarray]
    mode: str  # "full" or "hybrid"
    n_base: int
    tables_ex: Callable[[int], tuple[np.ndarray, np.ndarray, np.ndarray]]


def _bulk_successors(problem: FiniteHorizonProblem, t: int) -> np.ndarray:
    """(n_states, n_inputs) successor ids of a problem at stage t.

    Collects the dynamics outputs pointwise (they are arbitrary
    callables) and resolves them to grid ids in one vectorised pass with
    the same semantics as the scalar path.
    """
    spts = problem.state_grid.points
    upts = problem.input_grid.points
    n_s, n_u = spts.shape[0], upts.shape[0]
    nxt = np.empty((n_s * n_u, problem.state_grid.dim))
    row = 0
    for i in range(n_s):
        for j in range(n_u):
            nxt[row] = np.asarray(problem.dynamics(spts[i], upts[j], t), dtype=float)
            row += 1
    ids = locate_points(problem.state_grid, nxt, problem.atol, problem.strict)
    return ids.reshape(n_s, n_u)


def _acc_axis(lo: float, hi: float, step: Optional[float], points: int) -> np.ndarray:
    if hi < lo:
        lo, hi = hi, lo
    if step is not None:
        start = math.floor(lo / step + 1e-9) * step
        count = int(math.ceil((hi - start) / step - 1e-9)) + 1
        return start + step * np.arange(max(count, 1))
    if hi - lo <= 0:
        return np.array([lo])
    return np.linspace(lo, hi, points)


def _propagate_intervals(problem: FiniteHorizonProblem, obj: ForwardSeparableObjective):
    """Per-component aggregate ranges by interval propagation over the grids.

    Assumes ``update`` is monotone in the aggregate argument (true for the
    sum and running-max constructors), so evaluating at the current
    interval corners bounds the next interval.
    """
    spts = problem.state_grid.points
    upts = problem.input_grid.points
    pairs = [(x, u) for x in spts for u in upts]
    seeds = np.array([np.atleast_1d(obj.seed(x, u, problem.t0)) for x, u in pairs], dtype=float)
    lo, hi = seeds.min(axis=0), seeds.max(axis=0)
    run_lo, run_hi = lo.copy(), hi.copy()
    for t in range(problem.t0 + 1, problem.T):
        cand = []
        for x, u in pairs:
            cand.append(np.atleast_1d(obj.update(x, u, lo, t)))
            cand.append(np.atleast_1d(obj.update(x, u, hi, t)))
        arr = np.array(cand, dtype=float)
        lo, hi = arr.min(axis=0), arr.max(axis=0)
        run_lo = np.minimum(run_lo, lo)
        run_hi = np.maximum(run_hi, hi)
    finals = [float(obj.finalize(x, corner)) for x in spts for corner in (lo, hi)]
    return run_lo, run_hi, min(finals), max(finals)


def augment(
    problem: FiniteHorizonProblem,
    acc_axes: Optional[Sequence[np.ndarray]] = None,
    acc_points: int = 65,
    acc_step: Optional[float] = None,
) -> AugmentedProblem:
    """General augmentation of a fold-objective problem.

    The product problem runs over stages ``t0 .. T+1``: the original
    stages advance ``(x, acc)`` jointly (the aggregate is seeded on the
    first transition, so its initial grid value is inert), and the final,
    closing stage leaves ``x`` alone while writing ``finalize(x, acc)``
    into the first aggregate component.  The product objective is additive
    with zero stage costs and terminal cost equal to that component, so
    backward induction applies.

    ``acc_axes`` fixes the aggregate axes explicitly (one 1-D array per
    component); otherwise they are auto-sized by interval propagation with
    either ``acc_step`` spacing or ``acc_points`` uniform points.  The
    first component's axis always also covers the finalized values.
    """
    obj = problem.objective
    if not isinstance(obj, ForwardSeparableObjective):
        raise TypeError("augment expects a fold objective; additive problems need no augmentation")
    base = problem
    n = base.state_grid.dim
    q = obj.acc_dim
    t0, T = base.t0, base.T

    if acc_axes is not None:
        axes = [np.asarray(a, dtype=float).ravel() for a in acc_axes]
        if len(axes) != q:
            raise ValueError(f"need {q} aggregate axes, got {len(axes)}")
    else:
        run_lo, run_hi, fin_lo, fin_hi = _propagate_intervals(base, obj)
        los = run_lo.copy()
        his = run_hi.copy()
        los[0] = min(los[0], fin_lo)
        his[0] = max(his[0], fin_hi)
        axes = [_acc_axis(float(los[c]), float(his[c]), acc_step, acc_points) for c in range(q)]

    axis_grids = [AxisGrid(a) for a in axes]
    product_grid = ProductGrid([base.state_grid] + axis_grids)
    base_pts = base.state_grid.points
    acc_sizes = [g.size for g in axis_grids]
    acc_block = int(np.prod(acc_sizes))
    comps = _fold_components(obj)
    if comps is not None and len(comps) != q:
        comps = None

    if comps is None:
        acc_seed = lambda x, u: np.atleast_1d(np.asarray(obj.seed(x, u, t0), dtype=float))
        acc_update = lambda x, u, acc, t: np.atleast_1d(
            np.asarray(obj.update(x, u, acc, t), dtype=float)
        )
        acc_finalize = lambda x, acc: float(obj.finalize(x, acc))
    else:
        # same fold, but without the nested constructor closures
        def acc_seed(x, u):
            return np.array([stage(x, u, t0) for _kind, stage, _term in comps], dtype=float)

        def acc_update(x, u, acc, t):
            out = np.empty(q)
            for c, (kind, stage, _term) in enumerate(comps):
                v = float(stage(x, u, t))
                out[c] = acc[c] + v if kind == "add" else max(acc[c], v)
            return out

        def acc_finalize(x, acc):
            total = 0.0
            for c, (kind, _stage, term) in enumerate(comps):
                v = float(term(x))
                total += acc[c] + v if kind == "add" else max(acc[c], v)
            return total

    def product_dynamics(z, u, t):
        x, acc = z[:n], z[n:]
        if t < T:
            bid = _successor_id(base, x, u, t)
            if bid < 0:
                return np.full(n + q, np.nan)
            acc_next = acc_seed(x, u) if t == t0 else acc_update(x, u, acc, t)
            return np.concatenate((base_pts[bid], acc_next))
        # closing stage: x stays put, the finalized scalar lands in component 0
        acc_next = np.array(acc, dtype=float)
        acc_next[0] = acc_finalize(x, acc)
        return np.concatenate((x, acc_next))

    product_objective = AdditiveObjective(
        stage_cost=lambda z, u, t: 0.0,
        terminal_cost=lambda z: float(z[n]),
    )
    acc_init = np.array([g.values[g.locate_nearest(0.0)] for g in axis_grids])
    initial = np.concatenate((base_pts[base.initial_id], acc_init))

    n_u = base.input_grid.size
    upts = base.input_grid.points
    strides = product_grid.strides  # [acc_block, ..., 1]
    n_b = base_pts.shape[0]
    base_succ_cache: dict[int, np.ndarray] = {}

    def _base_succ_table(t):
        if t not in base_succ_cache:
            base_succ_cache[t] = _bulk_successors(base, t)
        return base_succ_cache[t]

    def _tables_ex_generic(t):
        n_sp = product_grid.size
        ppts = product_grid.points
        succ = np.full((n_sp, n_u), -1, dtype=np.int64)
        cost = np.zeros((n_sp, n_u), dtype=float)
        overflow = np.zeros((n_sp, n_u), dtype=bool)
        base_succ = _base_succ_table(t) if t < T else None
        for p in range(n_sp):
            z = ppts[p]
            x, acc = z[:n], z[n:]
            bid_here = p // acc_block
            for j in range(n_u):
                if t < T:
                    bid = base_succ[bid_here, j]
                    if bid < 0:
                        continue
                    acc_next = acc_seed(x, upts[j]) if t == t0 else acc_update(x, upts[j], acc, t)
                else:
                    bid = bid_here
                    acc_next = np.array(acc, dtype=float)
                    acc_next[0] = acc_finalize(x, acc)
                pid = bid * strides[0]
                ok = True
                for c, g in enumerate(axis_grids):
                    v = float(acc_next[c])
                    if not np.isfinite(v) or v < g.values[0] - base.atol or v > g.values[-1] + base.atol:
                        overflow[p, j] = True
                        ok = False
                        break
                    pid += g.locate_nearest(v) * strides[c + 1]
                if ok:
                    succ[p, j] = pid
        return succ, cost, overflow

    def _expand(arr, c):
        # (n_b, n_u, Z_c) -> (n_b, n_u, 1, .., Z_c, .., 1) for broadcasting
        shape = (n_b, n_u) + tuple(acc_sizes[k] if k == c else 1 for k in range(q))
        return arr.reshape(shape)

    def _tables_ex_structured(t):
        n_sp = product_grid.size
        if t < T:
            base_succ = _base_succ_table(t)
            total = base_succ.reshape((n_b, n_u) + (1,) * q) * strides[0]
            feas = (base_succ >= 0).reshape((n_b, n_u) + (1,) * q)
            over = np.zeros((n_b, n_u) + (1,) * q, dtype=bool)
            for c, (kind, stage, _term) in enumerate(comps):
                vals = np.array(
                    [[float(stage(base_pts[i], upts[j], t)) for j in range(n_u)] for i in range(n_b)]
                )
                ax = axis_grids[c].values
                if t == t0:
                    nv = np.broadcast_to(vals[:, :, None], (n_b, n_u, ax.size))
                elif kind == "add":
                    nv = vals[:, :, None] + ax[None, None, :]
                else:
                    nv = np.maximum(vals[:, :, None], ax[None, None, :])
                ovc = (nv < ax[0] - base.atol) | (nv > ax[-1] + base.atol)
                ids = axis_grids[c].project(np.clip(nv, ax[0], ax[-1]))
                over = over | _expand(ovc, c)
                total = total + _expand(ids, c) * strides[c + 1]
            succ_full = np.where(feas & ~over, total, -1)
            succ = np.moveaxis(succ_full, 1, -1).reshape(n_sp, n_u)
            overflow = np.moveaxis(
                np.broadcast_to(over, succ_full.shape), 1, -1
            ).reshape(n_sp, n_u)
            return succ, np.zeros((n_sp, n_u)), overflow
        # closing stage: component 0 takes the finalized value, the rest hold
        totals = np.zeros((n_b,) + tuple(acc_sizes))
        for c, (kind, _stage, term) in enumerate(comps):
            tvals = np.array([float(term(base_pts[i])) for i in range(n_b)])
            ax = axis_grids[c].values
            contrib = tvals[:, None] + ax[None, :] if kind == "add" else np.maximum(
                tvals[:, None], ax[None, :]
            )
            shape = (n_b,) + tuple(acc_sizes[k] if k == c else 1 for k in range(q))
            totals = totals + contrib.reshape(shape)
        ax0 = axis_grids[0].values
        over0 = (totals < ax0[0] - base.atol) | (totals > ax0[-1] + base.atol)
        ids0 = axis_grids[0].project(np.clip(totals, ax0[0], ax0[-1]))
        succ_val = np.arange(n_b).reshape((n_b,) + (1,) * q) * strides[0] + ids0 * strides[1]
        for c in range(1, q):
            zc = np.arange(acc_sizes[c]).reshape(
                (1,) + tuple(acc_sizes[c] if k == c else 1 for k in range(q))
            )
            succ_val = succ_val + zc * strides[c + 1]
        succ_col = np.where(over0, -1, succ_val).reshape(n_sp)
        succ = np.repeat(succ_col[:, None], n_u, axis=1)
        overflow = np.repeat(over0.reshape(n_sp)[:, None], n_u, axis=1)
        return succ, np.zeros((n_sp, n_u)), overflow

    tables_ex = _tables_ex_generic if comps is None else _tables_ex_structured

    product = FiniteHorizonProblem(
        t0=t0,
        T=T + 1,
        dynamics=product_dynamics,
        state_grid=product_grid,
        input_grid=base.input_grid,
        objective=product_objective,
        initial_state=initial,
        strict=False,
        atol=base.atol,
        stage_tables=lambda t: tables_ex(t)[:2],
    )
    return AugmentedProblem(base, product, axes, "full", n, tables_ex)


def augment_hybrid(
    problem: FiniteHorizonProblem,
    m_axis: Optional[np.ndarray] = None,
    m_points: Optional[int] = None,
) -> AugmentedProblem:
    """Augment only the running-max part of an additive-plus-max objective.

    The additive part becomes ordinary stage costs (those already admit
    backward induction); the running max gets a single aggregate axis and
    the terminal cost folds the max's terminal term in exactly.  With the
    default ``m_axis`` the axis is the exact set of stage-term values over
    the grids, so the max chain is grid closed and the augmentation is
    lossless; pass ``m_points`` for a uniform axis instead.
    """
    parts = split_additive_sup(problem.objective)
    if parts is None:
        raise TypeError(
            "hybrid augmentation needs an objective built as a sum of an additive "
            "part and a running-max part"
        )
    stage_cost, terminal_cost, sup_stage, sup_terminal = parts
    base = problem
    n = base.state_grid.dim
    t0, T = base.t0, base.T
    base_pts = base.state_grid.points
    upts = base.input_grid.points
    n_u = base.input_grid.size
    n_b = base_pts.shape[0]

    stage_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _base_tables(t):
        if t not in stage_cache:
            d = np.empty((n_b, n_u))
            c = np.empty((n_b, n_u))
            for i in range(n_b):
                for j in range(n_u):
                    d[i, j] = float(sup_stage(base_pts[i], upts[j], t))
                    c[i, j] = float(stage_cost(base_pts[i], upts[j], t))
            stage_cache[t] = (_bulk_successors(base, t), d, c)
        return stage_cache[t]

    if m_axis is not None:
        axis = AxisGrid(m_axis)
    else:
        d_vals = np.concatenate([_base_tables(t)[1].ravel() for t in range(t0, T)])
        if m_points is not None:
            axis = AxisGrid(_acc_axis(float(d_vals.min()), float(d_vals.max()), None, m_points))
        else:
            axis = AxisGrid(np.unique(d_vals))
    M = axis.size

    def product_dynamics(z, u, t):
        x, m = z[:n], float(z[n])
        bid = _successor_id(base, x, u, t)
        if bid < 0:
            return np.full(n + 1, np.nan)
        d = float(sup_stage(x, u, t))
        m_next = d if t == t0 else max(m, d)
        return np.concatenate((base_pts[bid], [m_next]))

    product_objective = AdditiveObjective(
        stage_cost=lambda z, u, t: float(stage_cost(z[:n], u, t)),
        terminal_cost=lambda z: float(terminal_cost(z[:n]))
        + max(float(sup_terminal(z[:n])), float(z[n])),
    )
    product_grid = ProductGrid([base.state_grid, axis])
    initial = np.concatenate(
        (base_pts[base.initial_id], [axis.values[axis.locate_nearest(0.0)]])
    )

    def tables_ex(t):
        base_succ, d, c = _base_tables(t)
        if t == t0:
            m_next = np.broadcast_to(d[:, :, None], (n_b, n_u, M))
        else:
            m_next = np.maximum(d[:, :, None], axis.values[None, None, :])
        over = (m_next < axis.values[0] - base.atol) | (m_next > axis.values[-1] + base.atol)
        m_ids = axis.project(m_next)
        succ3 = np.where(
            (base_succ[:, :, None] >= 0) & ~over, base_succ[:, :, None] * M + m_ids, -1
        )
        succ = succ3.transpose(0, 2, 1).reshape(n_b * M, n_u)
        cost = np.broadcast_to(c[:, :, None], (n_b, n_u, M)).transpose(0, 2, 1).reshape(
            n_b * M, n_u
        )
        overflow = np.broadcast_to(over, (n_b, n_u, M)).transpose(0, 2, 1).reshape(n_b * M, n_u)
        return succ, np.ascontiguousarray(cost), overflow

    product = FiniteHorizonProblem(
        t0=t0,
        T=T,
        dynamics=product_dynamics,
        state_grid=product_grid,
        input_grid=base.input_grid,
        objective=product_objective,
        initial_state=initial,
        strict=False,
        atol=base.atol,
        stage_tables=lambda t: tables_ex(t)[:2],
    )
    return AugmentedProblem(base, product, [axis.values], "hybrid", n, tables_ex)


def recover(aug: AugmentedProblem, product_traj: Trajectory) -> Trajectory:
    """Project a product trajectory back onto the base problem.

    Inputs are unchanged, states are the base components, the closing
    stage (when present) is dropped, and the value is re-evaluated under
    the base objective.  With grid-closed aggregate updates the value
    matches the product optimum exactly; otherwise it differs by the
    aggregate quantisation only.
    """
    K = aug.base.horizon
    states = np.asarray(product_traj.states)[: K + 1, : aug.n_base]
    inputs = np.asarray(product_traj.inputs)[:K]
    ids = product_traj.input_ids[:K] if product_traj.input_ids is not None else None
    value = aug.base.objective.evaluate_sequence(list(states), list(inputs), aug.base.t0)
    return Trajectory(aug.base.t0, states, inputs, ids, value)


def _check_acc_range(aug: AugmentedProblem) -> None:
    product = aug.product
    n_sp = product.state_grid.size
    reach = np.zeros(n_sp, dtype=bool)
    reach[product.initial_id] = True
    for t in range(product.t0, product.T):
        succ, _cost, overflow = aug.tables_ex(t)
        if overflow[reach].any():
            raise AggregateRangeError(t)
        nxt = succ[reach]
        nxt = nxt[nxt >= 0]
        reach = np.zeros(n_sp, dtype=bool)
        reach[nxt] = True
        if not reach.any():
            break


def solve_augmented(
    aug: AugmentedProblem, check_range: bool = True
) -> tuple[ValueTable, PolicyTable, Trajectory, Trajectory]:
    """Backward induction on the product problem plus recovery.

    Returns ``(values, policy, product_trajectory, base_trajectory)``.
    With ``check_range`` a forward reachability sweep first verifies that
    no reachable aggregate update leaves its axis.
    """
    if check_range:
        _check_acc_range(aug)
    values, policy = bellman_backward(aug.product)
    ptraj = rollout(aug.product, policy)
    return values, policy, ptraj, recover(aug, ptraj)
