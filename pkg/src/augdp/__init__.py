"""Finite-horizon dynamic programming with running-max objectives.

Objectives that fold left-to-right over a trajectory (sums, running
maxima, and sums thereof) break the optimal-substructure property that
backward induction needs.  This package restores it by appending the
fold's aggregate to the state, solves the augmented problem with ordinary
backward induction, and maps solutions back.  The flagship application is
24-hour battery scheduling under time-of-use prices plus a demand charge
(a running max of on-peak grid draw), in deterministic form and with
solar generation driven by a fitted Gauss-Markov model.
"""

from .augment import (
    AggregateRangeError,
    AugmentedProblem,
    augment,
    augment_hybrid,
    recover,
    solve_augmented,
)
from .battery import (
    BatteryParams,
    BatteryProblem,
    DayProfile,
    PricingPlan,
    ScheduleResult,
    battery_step,
    build_problem,
    command_kw,
    greedy_schedule,
    grid_power,
    schedule_for_inputs,
    schedule_from_trajectory,
    solve_deterministic,
    zero_schedule,
)
from .dp import (
    AdditiveObjective,
    EnumerationCapError,
    FiniteHorizonProblem,
    InfeasibleProblemError,
    OptimalityViolation,
    PolicyGapError,
    PolicyTable,
    Trajectory,
    ValueTable,
    bellman_backward,
    brute_force_solve,
    check_principle_of_optimality,
    feasible_inputs,
    rollout,
)
from .grids import AxisGrid, InputGrid, PointGrid, ProductGrid
from .instances import counterexample_acc_axes, counterexample_problem, random_fs_instance
from .objectives import (
    ForwardSeparableObjective,
    SupObjective,
    combine_sum,
    evaluate,
    from_additive,
    from_sup,
)
from .stochastic import (
    GaussMarkovModel,
    LagMatrices,
    NoiseQuadrature,
    NormalizationProfile,
    SimulationOutcome,
    SolarPath,
    StochasticBatteryProblem,
    StochasticProblem,
    StochasticRangeError,
    build_stochastic_problem,
    denormalize,
    factor_psd,
    fit_from_series,
    fit_gauss_markov,
    gauss_quadrature,
    lag_correlation,
    mean_solar_path,
    normalize,
    sample_solar_path,
    sample_w_ensemble,
    simulate_policy,
    solve_stochastic,
    stochastic_bellman,
)

__version__ = "0.1.0"
