"""Gauss-Markov solar modelling and stochastic backward induction.

The solar model is a first-order vector autoregression on per-step
normalised weather variables: ``w(t) = A w(t-1) + B eps(t-1)`` with
standard normal innovations, ``w(0) = 0``, and variable 0 designated as
solar.  ``A`` and ``B`` are chosen to reproduce the lag-0 and lag-1
cross-correlation matrices of the data: ``A = M1 M0^-1`` and
``B B^T = M0 - M1 M0^-1 M1^T``.  Physical solar power comes back through
the per-step normalisation profile, clamped at zero (and pinned to zero
on steps whose deviation is zero, i.e. when the sun is down).

The stochastic solver evaluates the expectation in the backward recursion
by Gauss-Hermite tensor quadrature over the innovation vector: per stage,
``F(x, t) = min_u { c(x, u, t) + sum_j weight_j F(f(x, u, t; v_j), t+1) }``
with successors projected to the grid.  Noise-driven coordinates that
leave the grid are clamped to the boundary and counted (or rejected in
strict mode); coordinates listed in ``hard_dims`` (physical bounds such
as stored energy) make the input infeasible instead.

Fitting and sampling are pure given a seed; the per-stage tables read
only the immutable next-stage slice, so stages parallelise like the
deterministic solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .battery import (
    WH_PER_KWH,
    BatteryParams,
    PricingPlan,
    ScheduleResult,
    battery_step,
    command_kw,
)
from .dp import InfeasibleProblemError, PolicyTable, ValueTable
from .grids import AxisGrid, InputGrid, ProductGrid, as_state_grid

__all__ = [
    "NormalizationProfile",
    "LagMatrices",
    "GaussMarkovModel",
    "NoiseQuadrature",
    "SolarPath",
    "StochasticProblem",
    "StochasticBatteryProblem",
    "StochasticRangeError",
    "normalize",
    "denormalize",
    "lag_correlation",
    "fit_gauss_markov",
    "fit_from_series",
    "factor_psd",
    "sample_solar_path",
    "sample_w_ensemble",
    "mean_solar_path",
    "gauss_quadrature",
    "stochastic_bellman",
    "build_stochastic_problem",
    "solve_stochastic",
    "simulate_policy",
    "SimulationOutcome",
]


class StochasticRangeError(RuntimeError):
    """A noise-driven successor left the grid while strict bounds were on."""


@dataclass(frozen=True)
class NormalizationProfile:
    """Per-variable, per-step mean and standard deviation."""

    mu: np.ndarray  # (steps, d)
    sigma: np.ndarray  # (steps, d), >= 0

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_2d(np.asarray(self.mu, dtype=float)))
        object.__setattr__(self, "sigma", np.atleast_2d(np.asarray(self.sigma, dtype=float)))
        if self.mu.shape != self.sigma.shape:
            raise ValueError("mu and sigma must have identical shapes")
        if np.any(self.sigma < 0) or not np.all(np.isfinite(self.sigma)):
            raise ValueError("sigma must be finite and nonnegative")
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("mu must be finite")

    @property
    def steps(self) -> int:
        return int(self.mu.shape[0])

    @property
    def n_vars(self) -> int:
        return int(self.mu.shape[1])


@dataclass(frozen=True)
class LagMatrices:
    """Estimated lag-0 and lag-1 cross-correlation matrices."""

    m0: np.ndarray
    m1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m0", np.asarray(self.m0, dtype=float))
        object.__setattr__(self, "m1", np.asarray(self.m1, dtype=float))
        for m in (self.m0, self.m1):
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("lag matrices must be square")
            if np.any(np.abs(m) > 1 + 1e-9):
                raise ValueError("correlation entries must lie in [-1, 1]")
        if self.m0.shape != self.m1.shape:
            raise ValueError("lag matrices must have the same shape")


@dataclass(eq=False)
class GaussMarkovModel:
    """Fitted process ``w(t) = a w(t-1) + b eps(t-1)``, eps ~ N(0, I)."""

    a: np.ndarray
    b: np.ndarray
    profile: Optional[NormalizationProfile] = None
    cond_m0: float = float("nan")
    ridge_used: bool = False
    clamped_mass: float = 0.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.shape != self.b.shape or self.a.ndim != 2 or self.a.shape[0] != self.a.shape[1]:
            raise ValueError("a and b must be square matrices of the same size")
        bbt = self.b @ self.b.T
        if np.max(np.abs(bbt - bbt.T)) > 1e-9:
            raise ValueError("b b^T must be symmetric")
        if np.linalg.eigvalsh((bbt + bbt.T) / 2).min() < -1e-9:
            raise ValueError("b b^T must be positive semidefinite")
        if self.profile is not None and self.profile.n_vars != self.a.shape[0]:
            raise ValueError("profile variable count does not match the matrices")

    @property
    def n_vars(self) -> int:
        return int(self.a.shape[0])

    @property
    def spectral_radius(self) -> float:
        """Stationarity diagnostic; reported, not enforced."""
        return float(np.max(np.abs(np.linalg.eigvals(self.a))))


@dataclass(frozen=True)
class NoiseQuadrature:
    """Discrete stand-in for the innovation distribution."""

    nodes: np.ndarray  # (n_nodes, dim)
    weights: np.ndarray  # (n_nodes,)

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.atleast_2d(np.asarray(self.nodes, dtype=float)))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).ravel())
        if self.nodes.shape[0] != self.weights.shape[0]:
            raise ValueError("node and weight counts differ")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")


def _profile_rows(profile: NormalizationProfile, n_steps: int) -> np.ndarray:
    return np.arange(n_steps) % profile.steps


def normalize(series, profile: NormalizationProfile, sigma_floor: Optional[float] = None):
    """Standardise ``(W - mu) / sigma`` per variable and step.

    ``series`` is (steps, d) or (paths, steps, d); the step-of-day index
    is the time index modulo the profile length.  A zero sigma at a used
    step is an error unless ``sigma_floor`` is given, in which case
    ``max(sigma, sigma_floor)`` is used instead.
    """
    arr = np.asarray(series, dtype=float)
    rows = _profile_rows(profile, arr.shape[-2])
    mu = profile.mu[rows]
    sigma = profile.sigma[rows]
    if sigma_floor is not None:
        sigma = np.maximum(sigma, sigma_floor)
    elif np.any(sigma == 0):
        raise ValueError("zero sigma at a used step; pass sigma_floor to enable the fallback")
    return (arr - mu) / sigma


def denormalize(series_w, profile: NormalizationProfile):
    """Inverse of :func:`normalize` (without the floor): ``w sigma + mu``."""
    arr = np.asarray(series_w, dtype=float)
    rows = _profile_rows(profile, arr.shape[-2])
    return arr * profile.sigma[rows] + profile.mu[rows]


def lag_correlation(data, lag: int) -> np.ndarray:
    """Pooled Pearson cross-correlations with the second variable lagged.

    ``data`` is (steps, d) or (paths, steps, d); all (t, t-lag) pairs are
    pooled across paths and time.  Entry (m, n) correlates variable m at
    time t with variable n at time t-lag.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise ValueError("data must be (steps, d) or (paths, steps, d)")
    if lag not in (0, 1):
        raise ValueError("only lags 0 and 1 are supported")
    n_steps = arr.shape[1]
    if n_steps - lag < 2:
        raise ValueError("need at least 2 usable sample pairs")
    later = arr[:, lag:, :].reshape(-1, arr.shape[2])
    earlier = arr[:, : n_steps - lag, :].reshape(-1, arr.shape[2])

    def standardise(x):
        centred = x - x.mean(axis=0)
        std = centred.std(axis=0)
        if np.any(std == 0):
            raise ValueError("a variable is constant over the pooled sample")
        return centred / std

    ls, es = standardise(later), standardise(earlier)
    return (ls.T @ es) / ls.shape[0]


def factor_psd(s, sym_tol: float = 1e-9) -> np.ndarray:
    """A matrix ``B`` with ``B B^T`` equal to the symmetric PSD input.

    Eigendecomposition with negative eigenvalues clamped at zero;
    asymmetry beyond ``sym_tol`` (relative to the largest entry) is an
    error rather than silently averaged away.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("input must be a square matrix")
    scale = max(1.0, float(np.max(np.abs(s))) if s.size else 1.0)
    if np.max(np.abs(s - s.T)) > sym_tol * scale:
        raise ValueError("input is not symmetric within tolerance")
    sym = (s + s.T) / 2
    eigvals, eigvecs = np.linalg.eigh(sym)
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))[None, :]


def fit_gauss_markov(
    m0,
    m1,
    profile: Optional[NormalizationProfile] = None,
    cond_threshold: float = 1e10,
    ridge: float = 1e-8,
) -> GaussMarkovModel:
    """Solve for (A, B) from the lag matrices.

    ``A = M1 M0^-1`` and ``B`` factors ``M0 - M1 M0^-1 M1^T`` (symmetrised
    before factoring).  When M0's condition number exceeds
    ``cond_threshold`` a diagonal ridge is added before inverting; a
    singular M0 beyond that is an error.
    """
    m0 = np.asarray(m0, dtype=float)
    m1 = np.asarray(m1, dtype=float)
    if m0.shape != m1.shape or m0.ndim != 2 or m0.shape[0] != m0.shape[1]:
        raise ValueError("lag matrices must be square and of equal size")
    cond = float(np.linalg.cond(m0))
    ridge_used = not np.isfinite(cond) or cond > cond_threshold
    m0r = m0 + ridge * np.eye(m0.shape[0]) if ridge_used else m0
    try:
        a = np.linalg.solve(m0r.T, m1.T).T
    except np.linalg.LinAlgError as exc:
        raise ValueError("M0 is singular beyond regularisation") from exc
    s = m0 - a @ m1.T
    s = (s + s.T) / 2
    eigvals = np.linalg.eigvalsh(s)
    clamped = float(-min(eigvals.min(), 0.0))
    b = factor_psd(s)
    return GaussMarkovModel(
        a=a, b=b, profile=profile, cond_m0=cond, ridge_used=ridge_used, clamped_mass=clamped
    )


def fit_from_series(series, profile: NormalizationProfile, sigma_floor: Optional[float] = None):
    """Normalise a raw series, estimate the lag matrices, and fit.

    Returns ``(model, lags)``.
    """
    w = normalize(series, profile, sigma_floor=sigma_floor)
    lags = LagMatrices(lag_correlation(w, 0), lag_correlation(w, 1))
    return fit_gauss_markov(lags.m0, lags.m1, profile=profile), lags


def solar_from_w(model: GaussMarkovModel, w_solar: float, t: int) -> float:
    """Physical solar power implied by the normalised solar variable.

    Zero-deviation steps (sun down) pin the output to zero; otherwise the
    denormalised value is clamped at zero.
    """
    if model.profile is None:
        raise ValueError("model carries no normalisation profile")
    row = t % model.profile.steps
    sigma = float(model.profile.sigma[row, 0])
    if sigma == 0.0:
        return 0.0
    return max(0.0, w_solar * sigma + float(model.profile.mu[row, 0]))


@dataclass(frozen=True)
class SolarPath:
    """One sampled solar day plus bookkeeping about clamping."""

    solar_kw: np.ndarray  # (steps,)
    w: np.ndarray  # (steps, d)
    clamped_steps: int  # negative denormalised values clamped to zero
    night_steps: int  # zero-sigma steps pinned to zero


def sample_solar_path(model: GaussMarkovModel, steps: int, seed: int) -> SolarPath:
    """Sample one day of solar power; deterministic given the seed."""
    if model.profile is None:
        raise ValueError("model carries no normalisation profile")
    rng = np.random.default_rng(seed)
    d = model.n_vars
    w = np.zeros((steps, d))
    for t in range(1, steps):
        w[t] = model.a @ w[t - 1] + model.b @ rng.standard_normal(d)
    solar = np.empty(steps)
    clamped = 0
    night = 0
    for t in range(steps):
        row = t % model.profile.steps
        sigma = float(model.profile.sigma[row, 0])
        if sigma == 0.0:
            solar[t] = 0.0
            night += 1
            continue
        raw = w[t, 0] * sigma + float(model.profile.mu[row, 0])
        if raw < 0.0:
            clamped += 1
            raw = 0.0
        solar[t] = raw
    return SolarPath(solar, w, clamped, night)


def sample_w_ensemble(model: GaussMarkovModel, steps: int, n_paths: int, seed: int) -> np.ndarray:
    """Sample (n_paths, steps, d) normalised paths, all starting at zero."""
    rng = np.random.default_rng(seed)
    d = model.n_vars
    out = np.zeros((n_paths, steps, d))
    for t in range(1, steps):
        eps = rng.standard_normal((n_paths, d))
        out[:, t, :] = out[:, t - 1, :] @ model.a.T + eps @ model.b.T
    return out


def mean_solar_path(model: GaussMarkovModel, steps: int) -> np.ndarray:
    """The noise-free solar day (w stays at zero)."""
    return np.array([solar_from_w(model, 0.0, t) for t in range(steps)])


def gauss_quadrature(dim: int, nodes_per_dim: int) -> NoiseQuadrature:
    """Gauss-Hermite tensor rule for a standard normal in ``dim`` variables.

    ``nodes_per_dim = 1`` collapses to the mean (single node at zero,
    weight one); ``n`` nodes integrate polynomials up to degree 2n-1
    exactly under the normal weight.
    """
    if nodes_per_dim < 1:
        raise ValueError("need at least one node per dimension")
    x, w = np.polynomial.hermite.hermgauss(nodes_per_dim)
    v = math.sqrt(2.0) * x
    p = w / math.sqrt(math.pi)
    grids = np.meshgrid(*([v] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([p] * dim), indexing="ij")
    weights = np.ones(nodes.shape[0])
    for g in wgrids:
        weights = weights * g.ravel()
    return NoiseQuadrature(nodes, weights)


@dataclass(eq=False)
class StochasticProblem:
    """Finite-horizon problem with noise-dependent dynamics.

    ``dynamics(x, u, t, v)`` consumes one innovation vector.  Coordinates
    listed in ``hard_dims`` are physical bounds: a successor outside them
    (for any quadrature node) makes the input infeasible.  All other
    coordinates are clamped into the grid range and the clamp is counted.
    ``stage_tables(t, quadrature)`` is an optional accelerator returning
    ``(cost (S, A), succ (J, S, A), n_clamped)`` matching the scalar path.
    """

    t0: int
    T: int
    dynamics: Callable[[np.ndarray, np.ndarray, int, np.ndarray], np.ndarray]
    state_grid: object
    input_grid: object
    stage_cost: Callable[[np.ndarray, np.ndarray, int], float]
    terminal_cost: Callable[[np.ndarray], float]
    initial_state: np.ndarray
    hard_dims: tuple[int, ...] = ()
    atol: float = 1e-9
    stage_tables: Optional[Callable[[int, NoiseQuadrature], tuple]] = None

    def __post_init__(self):
        if self.t0 >= self.T:
            raise ValueError(f"need t0 < T, got t0={self.t0}, T={self.T}")
        self.state_grid = as_state_grid(self.state_grid)
        if not isinstance(self.input_grid, InputGrid):
            self.input_grid = InputGrid(self.input_grid)
        self.initial_state = np.atleast_1d(np.asarray(self.initial_state, dtype=float))
        lo, hi = self.state_grid.bounds
        if np.any(self.initial_state < lo - self.atol) or np.any(
            self.initial_state > hi + self.atol
        ):
            raise ValueError("initial state lies outside the state grid")
        self.initial_id = self.state_grid.locate_nearest(self.initial_state)

    @property
    def horizon(self) -> int:
        return self.T - self.t0


def _scalar_stage_tables(problem: StochasticProblem, t: int, quad: NoiseQuadrature, strict: bool):
    grid = problem.state_grid
    spts = grid.points
    upts = problem.input_grid.points
    lo, hi = grid.bounds
    n_s, n_u, n_j = spts.shape[0], upts.shape[0], quad.nodes.shape[0]
    succ = np.full((n_j, n_s, n_u), -1, dtype=np.int64)
    cost = np.zeros((n_s, n_u), dtype=float)
    hard = set(problem.hard_dims)
    clamped = 0
    for i in range(n_s):
        x = spts[i]
        for a in range(n_u):
            u = upts[a]
            cost[i, a] = float(problem.stage_cost(x, u, t))
            ok = True
            ids = np.empty(n_j, dtype=np.int64)
            for j in range(n_j):
                xn = np.atleast_1d(
                    np.asarray(problem.dynamics(x, u, t, quad.nodes[j]), dtype=float)
                )
                if not np.all(np.isfinite(xn)):
                    ok = False
                    break
                xn = xn.copy()
                for c in range(xn.shape[0]):
                    below, above = xn[c] < lo[c] - problem.atol, xn[c] > hi[c] + problem.atol
                    if below or above:
                        if c in hard:
                            ok = False
                            break
                        if strict:
                            raise StochasticRangeError(
                                f"successor coordinate {c} leaves the grid at stage {t}"
                            )
                        clamped += 1
                    xn[c] = min(max(xn[c], lo[c]), hi[c])
                if not ok:
                    break
                ids[j] = grid.locate_nearest(xn)
            if ok:
                succ[:, i, a] = ids
    return cost, succ, clamped


def stochastic_bellman(
    problem: StochasticProblem,
    quadrature: NoiseQuadrature,
    strict_bounds: bool = False,
) -> tuple[ValueTable, PolicyTable, dict]:
    """Backward induction with a quadrature expectation over successors.

    Returns ``(values, policy, info)`` where info reports how many
    noise-driven successors were clamped to the grid boundary.  With
    ``strict_bounds`` any clamp raises :class:`StochasticRangeError`.
    """
    n_s = problem.state_grid.size
    K = problem.horizon
    spts = problem.state_grid.points
    values = np.full((K + 1, n_s), np.inf)
    policy = np.full((K, n_s), -1, dtype=np.int64)
    values[K] = [float(problem.terminal_cost(spts[i])) for i in range(n_s)]
    total_clamped = 0
    for k in range(K - 1, -1, -1):
        t = problem.t0 + k
        if problem.stage_tables is not None:
            cost, succ, clamped = problem.stage_tables(t, quadrature)
            if strict_bounds and clamped:
                raise StochasticRangeError(f"{clamped} successors left the grid at stage {t}")
        else:
            cost, succ, clamped = _scalar_stage_tables(problem, t, quadrature, strict_bounds)
        total_clamped += int(clamped)
        feas = (succ >= 0).all(axis=0)
        expected = np.zeros_like(cost)
        vnext = values[k + 1]
        for j in range(quadrature.weights.shape[0]):
            expected += quadrature.weights[j] * vnext[np.maximum(succ[j], 0)]
        total = np.where(feas, cost + expected, np.inf)
        values[k] = total.min(axis=1)
        policy[k] = np.where(np.isfinite(values[k]), total.argmin(axis=1), -1)
    if not np.isfinite(values[0, problem.initial_id]):
        raise InfeasibleProblemError(
            f"no feasible trajectory from the initial state at stage {problem.t0}"
        )
    info = {"clamped_successors": total_clamped}
    return (
        ValueTable(problem.t0, problem.T, values),
        PolicyTable(problem.t0, problem.T, policy),
        info,
    )


@dataclass(eq=False)
class StochasticBatteryProblem:
    """Battery day with solar driven by a Gauss-Markov model.

    The solved state is (stored energy, peak so far, normalised weather
    vector); energy is a hard bound, the weather coordinates clamp.
    """

    params: BatteryParams
    plan: PricingPlan
    load_kw: np.ndarray
    model: GaussMarkovModel
    e0_wh: float
    clamp_export: bool
    quadrature: NoiseQuadrature
    e_axis: AxisGrid
    m_axis: AxisGrid
    w_axes: list[AxisGrid]
    u_points: int = 17
    problem: StochasticProblem = field(init=False)

    def __post_init__(self):
        params, plan, model = self.params, self.plan, self.model
        load = np.asarray(self.load_kw, dtype=float)
        if load.shape[0] != plan.steps:
            raise ValueError("load series length does not match the plan")
        self.load_kw = load
        d = model.n_vars
        u_grid = (
            InputGrid([params.u_min_wh])
            if params.u_min_wh == params.u_max_wh
            else InputGrid(np.linspace(params.u_min_wh, params.u_max_wh, self.u_points))
        )
        e_axis, m_axis, w_axes = self.e_axis, self.m_axis, self.w_axes
        grid = ProductGrid([e_axis, m_axis] + list(w_axes))
        w_sizes = [ax.size for ax in w_axes]
        w_grid = ProductGrid(list(w_axes)) if w_axes else None
        u_kw = np.array([command_kw(params, float(u)) for u in u_grid.points[:, 0]])

        def solar_of(w1: float, t: int) -> float:
            return solar_from_w(model, w1, t)

        def dynamics(x, u, t, v):
            e, m, w = float(x[0]), float(x[1]), np.asarray(x[2:], dtype=float)
            en = battery_step(params, e, float(u[0]))
            q = load[t] - solar_of(float(w[0]), t) + command_kw(params, float(u[0]))
            dval = plan.p_d * q if plan.on_peak(t) else 0.0
            mn = dval if t == 0 else max(m, dval)
            wn = model.a @ w + model.b @ np.asarray(v, dtype=float)
            return np.concatenate(([en, mn], wn))

        def stage_cost(x, u, t):
            q = load[t] - solar_of(float(x[2]), t) + command_kw(params, float(u[0]))
            if self.clamp_export:
                q = max(q, 0.0)
            return plan.price(t) * q * params.dt_h

        def terminal_cost(x):
            return max(0.0, float(x[1]))

        E, M = e_axis.size, m_axis.size
        W = int(np.prod(w_sizes)) if w_sizes else 1
        w_pts = w_grid.points if w_grid is not None else np.zeros((1, 0))
        solar_tab = np.array(
            [[solar_of(float(w_pts[i, 0]), t) for i in range(W)] for t in range(plan.steps)]
        )

        def stage_tables(t, quad):
            e_next = np.array(
                [battery_step(params, e, u) for e in e_axis.values for u in u_grid.points[:, 0]]
            ).reshape(E, -1)
            e_ids = e_axis.project_bounded(e_next, self.problem.atol)  # (E, A)
            q = load[t] - solar_tab[t][:, None] + u_kw[None, :]  # (W, A)
            billed = np.maximum(q, 0.0) if self.clamp_export else q
            cost_wa = plan.price(t) * billed * params.dt_h
            if plan.on_peak(t):
                dvals = plan.p_d * q  # (W, A)
            else:
                dvals = np.zeros_like(q)
            if t == 0:
                m_next = np.broadcast_to(dvals[None, :, :], (M, W, q.shape[1]))
            else:
                m_next = np.maximum(m_axis.values[:, None, None], dvals[None, :, :])
            m_ids = m_axis.project(np.clip(m_next, m_axis.values[0], m_axis.values[-1]))
            # innovation step: (W, J, d) successors, clamped per coordinate
            wn = w_pts @ model.a.T  # (W, d)
            wn = wn[:, None, :] + quad.nodes @ model.b.T  # (W, J, d)
            atol = self.problem.atol
            clamped = 0
            w_ids = np.zeros((W, quad.nodes.shape[0]), dtype=np.int64)
            for c, ax in enumerate(w_axes):
                col = wn[:, :, c]
                clamped += int(
                    np.count_nonzero(
                        (col < ax.values[0] - atol) | (col > ax.values[-1] + atol)
                    )
                )
                ids_c = ax.project(np.clip(col, ax.values[0], ax.values[-1]))
                w_ids = w_ids * ax.size + ids_c
            A_n = q.shape[1]
            S = E * M * W
            cost = np.broadcast_to(cost_wa[None, None, :, :], (E, M, W, A_n)).reshape(S, A_n)
            succ = np.empty((quad.nodes.shape[0], S, A_n), dtype=np.int64)
            # em[e, m, w, a] = (e id * M + m id); -1 e ids masked after mixing
            em = e_ids[:, None, None, :] * M + m_ids[None, :, :, :]
            for j in range(quad.nodes.shape[0]):
                full = em * W + w_ids[None, None, :, j][..., None]
                full = np.where(e_ids[:, None, None, :] >= 0, full, -1)
                succ[j] = full.reshape(S, A_n)
            return np.ascontiguousarray(cost), succ, clamped

        initial = np.concatenate(
            (
                [e_axis.values[e_axis.locate_nearest(self.e0_wh)]],
                [m_axis.values[m_axis.locate_nearest(0.0)]],
                np.zeros(d),
            )
        )
        self.problem = StochasticProblem(
            t0=0,
            T=plan.steps,
            dynamics=dynamics,
            state_grid=grid,
            input_grid=u_grid,
            stage_cost=stage_cost,
            terminal_cost=terminal_cost,
            initial_state=initial,
            hard_dims=(0,),
            stage_tables=stage_tables,
        )


def build_stochastic_problem(
    params: BatteryParams,
    plan: PricingPlan,
    load_kw,
    model: GaussMarkovModel,
    e0_wh: float,
    e_points: int = 81,
    u_points: int = 17,
    m_points: int = 65,
    w_points: int = 9,
    w_span: float = 3.0,
    quad_nodes: int = 5,
    clamp_export: bool = False,
) -> StochasticBatteryProblem:
    """Assemble the gridded stochastic battery problem.

    The weather axes span ``+-w_span`` standard units with ``w_points``
    points per variable; the peak axis is uniform over the demand-term
    range implied by the load, the weather grid corners, and the command
    grid.  Runtime scales with ``w_points ** n_vars``, so multi-variable
    models want coarse weather grids.
    """
    if model.profile is None:
        raise ValueError("the model needs a normalisation profile to produce solar power")
    load = np.asarray(load_kw, dtype=float)
    e_axis = AxisGrid(np.linspace(params.e_min_wh, params.e_max_wh, e_points))
    w_axes = [AxisGrid(np.linspace(-w_span, w_span, w_points)) for _ in range(model.n_vars)]
    w_lo, w_hi = -w_span, w_span
    u_lo, u_hi = command_kw(params, params.u_min_wh), command_kw(params, params.u_max_wh)
    q_bounds = []
    for k in range(plan.steps):
        if not plan.on_peak(k):
            continue
        solar_lo = min(solar_from_w(model, w_lo, k), solar_from_w(model, w_hi, k))
        solar_hi = max(solar_from_w(model, w_lo, k), solar_from_w(model, w_hi, k))
        q_bounds.append((load[k] - solar_hi + u_lo, load[k] - solar_lo + u_hi))
    if q_bounds:
        d_lo = min(0.0, plan.p_d * min(b[0] for b in q_bounds))
        d_hi = max(0.0, plan.p_d * max(b[1] for b in q_bounds))
    else:
        d_lo, d_hi = 0.0, 1.0
    m_axis = AxisGrid(np.linspace(d_lo, d_hi, m_points) if d_hi > d_lo else [d_lo])
    quad = gauss_quadrature(model.n_vars, quad_nodes)
    return StochasticBatteryProblem(
        params=params,
        plan=plan,
        load_kw=load,
        model=model,
        e0_wh=e0_wh,
        clamp_export=clamp_export,
        quadrature=quad,
        e_axis=e_axis,
        m_axis=m_axis,
        w_axes=w_axes,
        u_points=u_points,
    )


def solve_stochastic(
    sbp: StochasticBatteryProblem, strict_bounds: bool = False
) -> tuple[ValueTable, PolicyTable, dict]:
    """Backward induction on the stochastic battery problem."""
    values, policy, info = stochastic_bellman(sbp.problem, sbp.quadrature, strict_bounds)
    info["value_at_start"] = values.value(0, sbp.problem.initial_id)
    return values, policy, info


@dataclass(frozen=True)
class SimulationOutcome:
    """Realised closed-loop performance of a policy over sampled days."""

    costs: np.ndarray  # (paths,)
    energy_costs: np.ndarray
    demand_charges: np.ndarray
    solar_kw: np.ndarray  # (paths, steps)
    u_wh: np.ndarray  # (paths, steps)
    e_wh: np.ndarray  # (paths, steps + 1)
    q_kw: np.ndarray  # (paths, steps)


def simulate_policy(
    sbp: StochasticBatteryProblem, policy: PolicyTable, n_paths: int, seed: int
) -> SimulationOutcome:
    """Roll the policy over freshly sampled weather, scoring true costs.

    Stored energy follows the gridded dynamics (the policy is defined on
    the grid and its commands stay feasible); weather is continuous and
    only projected for the policy lookup.  Costs are computed from the
    true realised grid power, so they are directly comparable with a
    perfect-foresight solve on the same sampled day.
    """
    params, plan, model = sbp.params, sbp.plan, sbp.model
    steps = plan.steps
    d = model.n_vars
    rng = np.random.default_rng(seed)
    e_axis, m_axis, w_axes = sbp.e_axis, sbp.m_axis, sbp.w_axes
    M = m_axis.size
    W = int(np.prod([ax.size for ax in w_axes]))
    upts = sbp.problem.input_grid.points[:, 0]
    costs = np.empty(n_paths)
    energy_costs = np.empty(n_paths)
    demand_charges = np.empty(n_paths)
    solar_all = np.empty((n_paths, steps))
    u_all = np.empty((n_paths, steps))
    e_all = np.empty((n_paths, steps + 1))
    q_all = np.empty((n_paths, steps))
    for p in range(n_paths):
        w = np.zeros(d)
        e_id = e_axis.locate_nearest(sbp.e0_wh)
        m_true = 0.0
        energy = 0.0
        peak = -np.inf
        e_all[p, 0] = e_axis.values[e_id]
        for t in range(steps):
            solar = solar_from_w(model, float(w[0]), t)
            m_lookup = 0.0 if t == 0 else m_true
            m_id = m_axis.locate_nearest(min(max(m_lookup, m_axis.values[0]), m_axis.values[-1]))
            w_id = 0
            for c, ax in enumerate(w_axes):
                w_id = w_id * ax.size + ax.locate_nearest(
                    min(max(w[c], ax.values[0]), ax.values[-1])
                )
            sid = (e_id * M + m_id) * W + w_id
            a = policy.input_id(t, sid)
            if a < 0:
                raise InfeasibleProblemError(f"policy undefined at stage {t}")
            u = float(upts[a])
            q = float(sbp.load_kw[t]) - solar + command_kw(params, u)
            billed = max(q, 0.0) if sbp.clamp_export else q
            energy += plan.price(t) * billed * params.dt_h
            dval = plan.p_d * q if plan.on_peak(t) else 0.0
            m_true = dval if t == 0 else max(m_true, dval)
            if plan.on_peak(t):
                peak = max(peak, q)
            e_next = battery_step(params, float(e_axis.values[e_id]), u)
            e_id = int(e_axis.project(np.array([e_next]))[0])
            solar_all[p, t] = solar
            u_all[p, t] = u
            q_all[p, t] = q
            e_all[p, t + 1] = e_axis.values[e_id]
            w = model.a @ w + model.b @ rng.standard_normal(d)
        peak = peak if np.isfinite(peak) else 0.0
        demand = plan.p_d * peak
        costs[p] = energy + demand
        energy_costs[p] = energy
        demand_charges[p] = demand
    return SimulationOutcome(costs, energy_costs, demand_charges, solar_all, u_all, e_all, q_all)
