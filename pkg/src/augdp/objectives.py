"""Trajectory objectives expressed as left-to-right folds.

An objective here is a fold over the trajectory: a *seed* term at the
first stage, a per-stage *update* of a small aggregate vector, and a
*finalize* map from (final state, aggregate) to the scalar cost.  Plain
sums of stage costs fit this shape, and so does a running maximum, which
is what makes demand-charge style costs tractable by state augmentation
(see :mod:`augdp.augment`).

The seed is indexed by the stage it runs at, so the same objective also
defines every tail subproblem: folding from stage ``s`` scores the
trajectory suffix that starts at ``s``.  The optimal-substructure checker
in :mod:`augdp.dp` relies on this.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ForwardSeparableObjective",
    "SupObjective",
    "from_additive",
    "from_sup",
    "combine_sum",
    "evaluate",
    "split_additive_sup",
]

Array = np.ndarray


@dataclass(frozen=True)
class SupObjective:
    """Running-max term: max over stages of ``stage(x, u, t)``, closed by
    ``terminal(x)`` at the final state."""

    stage: Callable[[Array, Array, int], float]
    terminal: Callable[[Array], float]


@dataclass(frozen=True)
class ForwardSeparableObjective:
    """A fold (seed, update, finalize) with an ``acc_dim``-vector aggregate.

    ``seed(x, u, t)`` produces the aggregate at the first stage of a fold
    starting at stage ``t``; ``update(x, u, acc, t)`` advances it through
    each later stage; ``finalize(x, acc)`` maps the final state and
    aggregate to the scalar objective.  ``structure`` records how the
    objective was built so solvers can pick specialised paths; it never
    affects evaluation.
    """

    acc_dim: int
    seed: Callable[[Array, Array, int], Array]
    update: Callable[[Array, Array, Array, int], Array]
    finalize: Callable[[Array, Array], float]
    structure: Optional[tuple] = None

    def evaluate_sequence(self, states, inputs, t0: int) -> float:
        n_in = len(inputs)
        if len(states) != n_in + 1:
            raise ValueError(
                f"trajectory shape mismatch: {len(states)} states for {n_in} inputs"
            )
        if n_in == 0:
            raise ValueError("a trajectory needs at least one stage")
        acc = np.atleast_1d(np.asarray(self.seed(states[0], inputs[0], t0), dtype=float))
        for k in range(1, n_in):
            acc = np.atleast_1d(
                np.asarray(self.update(states[k], inputs[k], acc, t0 + k), dtype=float)
            )
        return float(self.finalize(states[n_in], acc))


def evaluate(objective, trajectory) -> float:
    """Score a trajectory (anything with .states / .inputs / .t0)."""
    return objective.evaluate_sequence(trajectory.states, trajectory.inputs, trajectory.t0)


def from_additive(stage_cost, terminal_cost=None) -> ForwardSeparableObjective:
    """Fold computing ``sum_t stage_cost(x, u, t) + terminal_cost(x_T)``."""
    term = terminal_cost if terminal_cost is not None else (lambda x: 0.0)

    def seed(x, u, t):
        return np.array([float(stage_cost(x, u, t))])

    def update(x, u, acc, t):
        return np.array([acc[0] + float(stage_cost(x, u, t))])

    def finalize(x, acc):
        return float(acc[0]) + float(term(x))

    return ForwardSeparableObjective(1, seed, update, finalize, ("additive", stage_cost, term))


def from_sup(sup: SupObjective) -> ForwardSeparableObjective:
    """Fold computing ``max(max_t sup.stage(x, u, t), sup.terminal(x_T))``."""

    def seed(x, u, t):
        return np.array([float(sup.stage(x, u, t))])

    def update(x, u, acc, t):
        return np.array([max(float(sup.stage(x, u, t)), acc[0])])

    def finalize(x, acc):
        return max(float(sup.terminal(x)), float(acc[0]))

    return ForwardSeparableObjective(1, seed, update, finalize, ("sup", sup.stage, sup.terminal))


def combine_sum(
    a: ForwardSeparableObjective, b: ForwardSeparableObjective
) -> ForwardSeparableObjective:
    """Objective valued ``a + b``; the aggregates evolve side by side."""
    qa = a.acc_dim

    def seed(x, u, t):
        return np.concatenate(
            (np.atleast_1d(a.seed(x, u, t)), np.atleast_1d(b.seed(x, u, t)))
        ).astype(float)

    def update(x, u, acc, t):
        return np.concatenate(
            (
                np.atleast_1d(a.update(x, u, acc[:qa], t)),
                np.atleast_1d(b.update(x, u, acc[qa:], t)),
            )
        ).astype(float)

    def finalize(x, acc):
        return float(a.finalize(x, acc[:qa])) + float(b.finalize(x, acc[qa:]))

    return ForwardSeparableObjective(qa + b.acc_dim, seed, update, finalize, ("sum", a, b))


def split_additive_sup(objective) -> Optional[tuple]:
    """Return ``(stage_cost, terminal_cost, sup_stage, sup_terminal)`` when
    the objective is a sum of one additive fold and one running-max fold
    (either order), else None."""
    if not isinstance(objective, ForwardSeparableObjective) or objective.structure is None:
        return None
    tag = objective.structure[0]
    if tag != "sum":
        return None
    parts = objective.structure[1:]
    tags = {p.structure[0] for p in parts if p.structure is not None}
    if tags != {"additive", "sup"}:
        return None
    add = next(p for p in parts if p.structure[0] == "additive")
    sup = next(p for p in parts if p.structure[0] == "sup")
    return add.structure[1], add.structure[2], sup.structure[1], sup.structure[2]
