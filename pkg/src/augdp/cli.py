"""Command-line front end.

Subcommands
-----------
solve                  schedule a day from a config and a load/solar CSV
solve-stochastic       stochastic schedule driven by a fitted solar model
fit-solar              fit the solar model from a series and a profile
sample-solar           sample a seeded synthetic solar day from a model
verify-counterexample  run the bundled running-max instance end to end
oracle-check           randomized augmented-vs-enumeration equivalence

Exit codes: 0 success, 1 validation error (bad flags, bad files),
2 infeasibility or numerical failure.  Any config key can be overridden
with ``--set key=value`` (precedence: command line > file > default).
``--threads`` caps the BLAS thread pools; results do not depend on it.
Output is plain text; set NO_COLOR to suppress the PASS/FAIL colouring.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

__all__ = ["main", "build_parser"]


def _apply_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _paint(text: str, color: str) -> str:
    if os.environ.get("NO_COLOR") or not sys.stdout.isatty():
        return text
    codes = {"green": "32", "red": "31"}
    return f"\x1b[{codes[color]}m{text}\x1b[0m"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; flag errors are validation
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ValueError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _load_config(args):
    from . import dataio

    with open(args.config) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise dataio.ConfigError(f"{args.config}: config must be a JSON object")
    for item in args.set or []:
        key, value = _parse_override(item)
        raw[key] = value
    return dataio.parse_config(raw)


def _settings(cfg) -> dict:
    return {
        "e_points": cfg.e_points,
        "u_points": cfg.u_points,
        "m_points": cfg.m_points,
        "w_points": cfg.w_points,
        "w_span": cfg.w_span,
        "quad_nodes": cfg.quad_nodes,
        "seed": cfg.seed,
        "mode": cfg.mode,
        "clamp_export": cfg.clamp_export,
        "sim_paths": cfg.sim_paths,
    }


def cmd_solve(args) -> int:
    from . import battery, dataio

    cfg = _load_config(args)
    profile = dataio.load_day_profile(args.profile)
    bp = battery.build_problem(
        cfg.params, cfg.plan, profile, cfg.e0_wh, cfg.e_points, cfg.u_points, cfg.clamp_export
    )
    result = battery.solve_deterministic(bp, m_points=cfg.m_points)
    dataio.write_schedule(result, args.out_schedule)
    dataio.write_report(result, args.out_report, settings=_settings(cfg))
    print(
        f"total cost {result.total_cost:.6g} "
        f"(energy {result.energy_cost:.6g}, demand {result.demand_charge:.6g}); "
        f"on-peak peak {result.peak_on_peak_kw:.6g} kW"
    )
    return 0


def cmd_solve_stochastic(args) -> int:
    import numpy as np

    from . import battery, dataio, stochastic

    cfg = _load_config(args)
    ts = dataio.load_timeseries(args.profile)
    load = dataio._power_column(ts, "load", args.profile)
    model = dataio.load_model(args.model)
    sbp = stochastic.build_stochastic_problem(
        cfg.params,
        cfg.plan,
        load,
        model,
        cfg.e0_wh,
        e_points=cfg.e_points,
        u_points=cfg.u_points,
        m_points=cfg.m_points if cfg.m_points is not None else 65,
        w_points=cfg.w_points,
        w_span=cfg.w_span,
        quad_nodes=cfg.quad_nodes,
        clamp_export=cfg.clamp_export,
    )
    values, policy, info = stochastic.solve_stochastic(sbp, strict_bounds=cfg.strict_bounds)
    outcome = stochastic.simulate_policy(sbp, policy, cfg.sim_paths, cfg.seed)
    doc = {
        "value_at_start": info["value_at_start"],
        "mean_realized_cost": float(outcome.costs.mean()),
        "std_realized_cost": float(outcome.costs.std()),
        "min_realized_cost": float(outcome.costs.min()),
        "max_realized_cost": float(outcome.costs.max()),
        "mean_energy_cost": float(outcome.energy_costs.mean()),
        "mean_demand_charge": float(outcome.demand_charges.mean()),
        "clamped_successors": info["clamped_successors"],
        "settings": _settings(cfg),
    }
    dataio.write_json(doc, args.out_report)
    if args.out_schedule:
        plan, params = cfg.plan, cfg.params
        on_peak = np.array([plan.on_peak(k) for k in range(plan.steps)])
        q0 = outcome.q_kw[0]
        peak0 = float(q0[on_peak].max()) if on_peak.any() else 0.0
        first = battery.ScheduleResult(
            u_wh=outcome.u_wh[0],
            e_wh=outcome.e_wh[0],
            q_kw=q0,
            on_peak=on_peak,
            dt_h=params.dt_h,
            energy_cost=float(outcome.energy_costs[0]),
            demand_charge=float(outcome.demand_charges[0]),
            total_cost=float(outcome.costs[0]),
            peak_on_peak_kw=peak0,
        )
        dataio.write_schedule(first, args.out_schedule)
    print(
        f"expected cost at start {doc['value_at_start']:.6g}; "
        f"mean realized cost over {cfg.sim_paths} days {doc['mean_realized_cost']:.6g}"
    )
    return 0


def cmd_fit_solar(args) -> int:
    from . import dataio, stochastic

    ts = dataio.load_timeseries(args.data)
    profile = dataio.load_normalization_profile(args.profile)
    if profile.n_vars != len(ts.names):
        raise dataio.ParseError(
            f"data has {len(ts.names)} variables but the profile describes {profile.n_vars}"
        )
    model, lags = stochastic.fit_from_series(ts.data, profile, sigma_floor=args.sigma_floor)
    dataio.write_model(model, args.out, lags=lags)
    print(
        f"fitted {model.n_vars}-variable model: spectral radius {model.spectral_radius:.4f}, "
        f"cond(M0) {model.cond_m0:.3g}, ridge {'on' if model.ridge_used else 'off'}"
    )
    return 0


def cmd_sample_solar(args) -> int:
    from . import dataio, stochastic

    model = dataio.load_model(args.model)
    sample = stochastic.sample_solar_path(model, args.steps, args.seed)
    dataio.write_solar_path(sample, args.out)
    print(
        f"sampled {args.steps} steps (seed {args.seed}): "
        f"{sample.clamped_steps} clamped, {sample.night_steps} night steps"
    )
    return 0


def cmd_verify_counterexample(args) -> int:
    from itertools import product as iter_product

    from . import objectives
    from .augment import augment, solve_augmented
    from .dp import _successor_id, brute_force_solve, check_principle_of_optimality
    from .instances import counterexample_acc_axes, counterexample_problem

    problem = counterexample_problem(args.h)
    upts = problem.input_grid.points
    spts = problem.state_grid.points
    feasible = []
    for ids in iter_product(range(problem.input_grid.size), repeat=problem.horizon):
        sid = problem.initial_id
        states = [spts[sid]]
        ok = True
        for k, j in enumerate(ids):
            nid = _successor_id(problem, states[-1], upts[j], problem.t0 + k)
            if nid < 0:
                ok = False
                break
            sid = nid
            states.append(spts[sid])
        if ok:
            value = problem.objective.evaluate_sequence(
                states, [upts[j] for j in ids], problem.t0
            )
            feasible.append((tuple(float(upts[j][0]) for j in ids), value))
    print("feasible command sequences and objective values:")
    for seq, value in feasible:
        pretty = "(" + ", ".join(f"{v:g}" for v in seq) + ")"
        print(f"  {pretty:<18} {value:g}")
    best = brute_force_solve(problem)
    best_seq = tuple(float(v[0]) for v in best.inputs)
    print(
        "optimum: u = (" + ", ".join(f"{v:g}" for v in best_seq) + f"), "
        f"objective = {best.objective_value:g}"
    )
    violations = check_principle_of_optimality(problem)
    print(f"optimal-substructure violations: {len(violations)}")
    for v in violations:
        print(f"  stage {v.stage}: tail costs {v.tail_cost:g}, best tail costs {v.best_cost:g}")
    aug = augment(problem, acc_axes=counterexample_acc_axes(args.h))
    _values, _policy, _ptraj, recovered = solve_augmented(aug)
    print(f"augmented solve value: {recovered.objective_value:g}")
    ok = (
        len(feasible) == 8
        and len(violations) == 1
        and violations[0].stage == 2
        and recovered.objective_value == best.objective_value
    )
    print(_paint("PASS", "green") if ok else _paint("FAIL", "red"))
    return 0 if ok else 2


def cmd_oracle_check(args) -> int:
    import numpy as np

    from .augment import augment, solve_augmented
    from .dp import brute_force_solve
    from .instances import random_fs_instance

    rng = np.random.default_rng(args.seed)
    matches = 0
    for trial in range(args.trials):
        problem = random_fs_instance(rng)
        oracle = brute_force_solve(problem)
        aug = augment(problem, acc_step=1.0)
        _values, _policy, _ptraj, recovered = solve_augmented(aug)
        if recovered.objective_value == oracle.objective_value:
            matches += 1
        else:
            print(
                f"trial {trial}: augmented {recovered.objective_value!r} "
                f"!= oracle {oracle.objective_value!r}"
            )
    print(f"oracle-check: {matches}/{args.trials} exact matches")
    ok = matches == args.trials
    print(_paint("PASS", "green") if ok else _paint("FAIL", "red"))
    return 0 if ok else 2


def build_parser() -> _Parser:
    parser = _Parser(prog="augdp", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, help="cap BLAS thread pools (results unchanged)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="schedule one day deterministically")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--profile", required=True, help="CSV with load[kW] and solar[kW] columns")
    p.add_argument("--out-schedule", required=True, help="schedule CSV to write")
    p.add_argument("--out-report", required=True, help="cost report JSON to write")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("solve-stochastic", help="schedule against a fitted solar model")
    p.add_argument("--config", required=True)
    p.add_argument("--profile", required=True, help="CSV with a load[kW] column")
    p.add_argument("--model", required=True, help="fitted model JSON")
    p.add_argument("--out-report", required=True)
    p.add_argument("--out-schedule", help="optional CSV of the first simulated day")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_solve_stochastic)

    p = sub.add_parser("fit-solar", help="fit the solar model from data")
    p.add_argument("--data", required=True, help="CSV of raw variable series")
    p.add_argument("--profile", required=True, help="CSV with mu_*/sigma_* columns")
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--sigma-floor", type=float, default=None, help="zero-sigma fallback")
    p.set_defaults(func=cmd_fit_solar)

    p = sub.add_parser("sample-solar", help="sample a synthetic solar day")
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample_solar)

    p = sub.add_parser(
        "verify-counterexample", help="run the bundled running-max instance end to end"
    )
    p.add_argument("--h", type=float, default=1.0, help="step size of the instance")
    p.set_defaults(func=cmd_verify_counterexample)

    p = sub.add_parser("oracle-check", help="randomized augmented-vs-enumeration check")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        _apply_threads(args.threads)
    import numpy as np

    from .augment import AggregateRangeError
    from .dataio import ConfigError, ParseError
    from .dp import EnumerationCapError, InfeasibleProblemError
    from .stochastic import StochasticRangeError

    try:
        return args.func(args)
    except (ConfigError, ParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        InfeasibleProblemError,
        EnumerationCapError,
        AggregateRangeError,
        StochasticRangeError,
        np.linalg.LinAlgError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
