"""24-hour battery scheduling under time-of-use prices and a demand charge.

The stored-energy dynamics are ``e' = alpha * (e + eta * u * dt)`` with
``e`` in Wh and the charge/discharge command ``u`` in the battery's native
units (positive charges, negative discharges).  Grid power is accounted in
kW: the command contributes ``u / (1000 * dt)`` kW on top of load minus
solar.  Keeping one canonical unit system (kW for power, $/kWh and $/kW
for prices, Wh for stored energy) is deliberate; the mixed units in
typical battery datasheets are an endless source of factor-of-1000 bugs,
so every field name here carries its unit.

The cost of a day is an energy part (price per kWh times grid energy per
step, summed) plus a demand part (price per kW times the highest on-peak
grid draw).  The demand part is a running max, so the day is scheduled by
the hybrid augmentation in :mod:`augdp.augment`: the energy part stays as
stage costs and one aggregate dimension tracks the on-peak peak so far.
The demand term enters the optimisation as ``max(0, peak)``: off-peak
stages contribute a zero term to the running max, matching billing, where
exporting all peak hours earns no negative demand charge.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .augment import AugmentedProblem, augment_hybrid, solve_augmented
from .dp import (
    FiniteHorizonProblem,
    InfeasibleProblemError,
    PolicyTable,
    Trajectory,
    ValueTable,
    _successor_id,
)
from .grids import AxisGrid, InputGrid
from .objectives import SupObjective, combine_sum, from_additive, from_sup

__all__ = [
    "BatteryParams",
    "PricingPlan",
    "DayProfile",
    "ScheduleResult",
    "BatteryProblem",
    "battery_step",
    "command_kw",
    "grid_power",
    "build_problem",
    "solve_deterministic",
    "schedule_from_trajectory",
    "schedule_for_inputs",
    "zero_schedule",
    "greedy_schedule",
]

WH_PER_KWH = 1000.0


@dataclass(frozen=True)
class BatteryParams:
    """Battery physics: bleed, efficiency, command and capacity limits."""

    alpha: float  # per-step self-discharge multiplier
    eta: float  # charge efficiency
    u_min_wh: float  # largest discharge command (negative or zero)
    u_max_wh: float  # largest charge command (positive or zero)
    e_min_wh: float
    e_max_wh: float
    dt_h: float  # step length in hours

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if not (self.u_min_wh <= 0.0 <= self.u_max_wh):
            raise ValueError("command limits must satisfy u_min <= 0 <= u_max")
        if self.u_min_wh == 0.0 == self.u_max_wh:
            pass  # a disabled battery is allowed
        if self.e_min_wh > self.e_max_wh:
            raise ValueError("capacity bounds must satisfy e_min <= e_max")
        if self.dt_h <= 0.0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class PricingPlan:
    """Time-of-use prices plus a demand price over a fixed daily window."""

    p_on: float  # $/kWh during the on-peak window
    p_off: float  # $/kWh otherwise
    p_d: float  # $/kW on the highest on-peak draw
    t_on: int  # first on-peak step index
    t_off: int  # first step index after the window
    steps: int  # steps per day

    def __post_init__(self):
        if not (0 <= self.t_on < self.t_off <= self.steps):
            raise ValueError(
                f"need 0 <= t_on < t_off <= steps, got {self.t_on}, {self.t_off}, {self.steps}"
            )
        if min(self.p_on, self.p_off, self.p_d) < 0:
            raise ValueError("prices must be nonnegative")

    def on_peak(self, k: int) -> bool:
        return self.t_on <= k < self.t_off

    def price(self, k: int) -> float:
        return self.p_on if self.on_peak(k) else self.p_off


@dataclass(frozen=True)
class DayProfile:
    """Per-step load and solar power in kW."""

    load_kw: np.ndarray
    solar_kw: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "load_kw", np.asarray(self.load_kw, dtype=float))
        object.__setattr__(self, "solar_kw", np.asarray(self.solar_kw, dtype=float))
        if self.load_kw.ndim != 1 or self.load_kw.shape != self.solar_kw.shape:
            raise ValueError("load and solar must be 1-D series of equal length")
        if not (np.all(np.isfinite(self.load_kw)) and np.all(np.isfinite(self.solar_kw))):
            raise ValueError("profile values must be finite")
        if np.any(self.solar_kw < 0):
            raise ValueError("solar power cannot be negative")

    def __len__(self) -> int:
        return int(self.load_kw.shape[0])


@dataclass(frozen=True)
class ScheduleResult:
    """A realised schedule with its cost decomposition."""

    u_wh: np.ndarray  # (K,) battery commands
    e_wh: np.ndarray  # (K + 1,) stored energy
    q_kw: np.ndarray  # (K,) grid power
    on_peak: np.ndarray  # (K,) bool
    dt_h: float
    energy_cost: float
    demand_charge: float
    total_cost: float
    peak_on_peak_kw: float

    @property
    def u_kw(self) -> np.ndarray:
        return self.u_wh / (WH_PER_KWH * self.dt_h)

    @property
    def e_kwh(self) -> np.ndarray:
        return self.e_wh / WH_PER_KWH


@dataclass(eq=False)
class BatteryProblem:
    """A built scheduling problem plus the data needed to score schedules."""

    params: BatteryParams
    plan: PricingPlan
    profile: DayProfile
    e0_wh: float
    clamp_export: bool
    problem: FiniteHorizonProblem


def battery_step(params: BatteryParams, e_wh: float, u_wh: float) -> float:
    """Next stored energy, ``alpha * (e + eta * u * dt)``; no bounds check."""
    return params.alpha * (e_wh + params.eta * u_wh * params.dt_h)


def command_kw(params: BatteryParams, u_wh: float):
    """Grid-side power of a battery command: ``u / (1000 * dt)`` kW."""
    return u_wh / (WH_PER_KWH * params.dt_h)


def grid_power(profile: DayProfile, params: BatteryParams, u_wh: float, k: int) -> float:
    """Power drawn from the grid at step k: load - solar + command."""
    if not 0 <= k < len(profile):
        raise ValueError(f"step {k} outside the profile of length {len(profile)}")
    return float(profile.load_kw[k] - profile.solar_kw[k] + command_kw(params, u_wh))


def build_problem(
    params: BatteryParams,
    plan: PricingPlan,
    profile: DayProfile,
    e0_wh: float,
    e_points: int = 81,
    u_points: int = 17,
    clamp_export: bool = False,
) -> BatteryProblem:
    """Grid the day into a fold-objective problem over stored energy.

    The objective is the sum of an additive part (per-step energy cost)
    and a running-max part (demand price times on-peak grid draw, zero
    off-peak and at the terminal state).  ``clamp_export`` zeroes the
    energy term at steps where the site exports (no export credit); the
    demand term is unaffected.
    """
    if len(profile) != plan.steps:
        raise ValueError(f"profile has {len(profile)} steps, plan expects {plan.steps}")
    if not params.e_min_wh <= e0_wh <= params.e_max_wh:
        raise ValueError("initial energy outside the capacity bounds")

    e_axis = AxisGrid(np.linspace(params.e_min_wh, params.e_max_wh, e_points))
    if params.u_min_wh == params.u_max_wh:
        u_values = np.array([params.u_min_wh])
    else:
        u_values = np.linspace(params.u_min_wh, params.u_max_wh, u_points)
    input_grid = InputGrid(u_values)

    def dynamics(x, u, t):
        return np.array([battery_step(params, float(x[0]), float(u[0]))])

    def stage_cost(x, u, k):
        q = grid_power(profile, params, float(u[0]), k)
        if clamp_export:
            q = max(q, 0.0)
        return plan.price(k) * q * params.dt_h

    def sup_stage(x, u, k):
        if not plan.on_peak(k):
            return 0.0
        return plan.p_d * grid_power(profile, params, float(u[0]), k)

    objective = combine_sum(
        from_additive(stage_cost),
        from_sup(SupObjective(sup_stage, lambda x: 0.0)),
    )
    problem = FiniteHorizonProblem(
        t0=0,
        T=plan.steps,
        dynamics=dynamics,
        state_grid=e_axis,
        input_grid=input_grid,
        objective=objective,
        initial_state=[e0_wh],
    )
    return BatteryProblem(params, plan, profile, e0_wh, clamp_export, problem)


def schedule_from_trajectory(bp: BatteryProblem, traj: Trajectory) -> ScheduleResult:
    """Score a trajectory of the built problem; all fields are recomputed."""
    plan, params, profile = bp.plan, bp.params, bp.profile
    u_wh = np.asarray(traj.inputs, dtype=float).ravel()
    e_wh = np.asarray(traj.states, dtype=float).ravel()
    steps = np.arange(len(u_wh))
    q_kw = np.array([grid_power(profile, params, u, k) for k, u in zip(steps, u_wh)])
    on_peak = np.array([plan.on_peak(int(k)) for k in steps])
    billed = np.maximum(q_kw, 0.0) if bp.clamp_export else q_kw
    prices = np.where(on_peak, plan.p_on, plan.p_off)
    energy_cost = float(np.sum(prices * billed * params.dt_h))
    peak = float(q_kw[on_peak].max()) if on_peak.any() else 0.0
    demand_charge = plan.p_d * peak
    return ScheduleResult(
        u_wh=u_wh,
        e_wh=e_wh,
        q_kw=q_kw,
        on_peak=on_peak,
        dt_h=params.dt_h,
        energy_cost=energy_cost,
        demand_charge=demand_charge,
        total_cost=energy_cost + demand_charge,
        peak_on_peak_kw=peak,
    )


def solve_deterministic(
    bp: BatteryProblem,
    m_axis: Optional[np.ndarray] = None,
    m_points: Optional[int] = None,
    return_details: bool = False,
):
    """Schedule the day by hybrid augmentation plus backward induction.

    By default the peak axis is the exact set of reachable demand-term
    values, so the solve is lossless on the given grids and matches the
    enumeration oracle exactly on instances small enough to enumerate.
    Pass ``m_points`` for a uniform peak axis instead.
    """
    aug = augment_hybrid(bp.problem, m_axis=m_axis, m_points=m_points)
    values, policy, _ptraj, base_traj = solve_augmented(aug)
    result = schedule_from_trajectory(bp, base_traj)
    if return_details:
        return result, SolveDetails(aug, values, policy, base_traj)
    return result


@dataclass(eq=False)
class SolveDetails:
    """Solver internals for tests and reporting."""

    augmented: AugmentedProblem
    values: ValueTable
    policy: PolicyTable
    trajectory: Trajectory


def schedule_for_inputs(bp: BatteryProblem, u_wh) -> ScheduleResult:
    """Roll a fixed command sequence through the gridded dynamics.

    Commands must be input-grid points; successors are projected to the
    energy grid exactly as the solver does, so the resulting cost is
    comparable with (and can never beat) the solver's optimum.
    """
    problem = bp.problem
    upts = problem.input_grid.points
    spts = problem.state_grid.points
    u_wh = np.asarray(u_wh, dtype=float).ravel()
    if len(u_wh) != problem.horizon:
        raise ValueError(f"need {problem.horizon} commands, got {len(u_wh)}")
    sid = problem.initial_id
    states = [spts[sid]]
    inputs = []
    for k, u in enumerate(u_wh):
        diffs = np.abs(upts[:, 0] - u)
        j = int(np.argmin(diffs))
        if diffs[j] > problem.atol:
            raise ValueError(f"command {u} is not on the input grid")
        nid = _successor_id(problem, spts[sid], upts[j], k)
        if nid < 0:
            raise InfeasibleProblemError(f"command {u} infeasible at step {k}")
        inputs.append(upts[j])
        sid = nid
        states.append(spts[sid])
    traj = Trajectory(0, np.array(states), np.array(inputs), None, float("nan"))
    return schedule_from_trajectory(bp, traj)


def zero_schedule(bp: BatteryProblem) -> ScheduleResult:
    """The do-nothing baseline (requires 0 on the input grid)."""
    return schedule_for_inputs(bp, np.zeros(bp.problem.horizon))


def greedy_schedule(bp: BatteryProblem) -> ScheduleResult:
    """Myopic peak shaving: discharge as hard as feasible during the
    on-peak window, charge as hard as feasible otherwise.

    A crude but feasible policy on the same grids, so its cost upper
    bounds the solver's optimum.
    """
    problem = bp.problem
    upts = problem.input_grid.points
    spts = problem.state_grid.points
    sid = problem.initial_id
    states = [spts[sid]]
    inputs = []
    for k in range(problem.horizon):
        order = range(problem.input_grid.size) if bp.plan.on_peak(k) else range(
            problem.input_grid.size - 1, -1, -1
        )
        chosen = -1
        for j in order:
            if _successor_id(problem, spts[sid], upts[j], k) >= 0:
                chosen = j
                break
        if chosen < 0:
            raise InfeasibleProblemError(f"no feasible command at step {k}")
        nid = _successor_id(problem, spts[sid], upts[chosen], k)
        inputs.append(upts[chosen])
        sid = nid
        states.append(spts[sid])
    traj = Trajectory(0, np.array(states), np.array(inputs), None, float("nan"))
    return schedule_from_trajectory(bp, traj)
