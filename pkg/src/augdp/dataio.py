"""File formats: CSV time series, JSON configs, models, and reports.

Formats are deliberately plain and diff-able:

* time series are CSV with a ``step`` column and one ``name[unit]``
  column per variable; steps must be contiguous from 0 and every cell
  must parse as a finite number.  Power columns accept kW or W (W is
  converted on load).
* run configuration is a flat JSON object with a strict schema: physical
  constants are required, only solver resolutions and run settings have
  defaults, and unknown keys are rejected.
* fitted models and run reports are JSON with a fixed key order.

Writers format floats with 17 significant digits (`%.17g`), which
round-trips IEEE doubles exactly, and never emit timestamps or other
run-varying content, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .battery import BatteryParams, DayProfile, PricingPlan, ScheduleResult
from .stochastic import GaussMarkovModel, NormalizationProfile, SolarPath

__all__ = [
    "ParseError",
    "ConfigError",
    "TimeSeries",
    "RunConfig",
    "load_timeseries",
    "write_timeseries",
    "day_profile",
    "load_day_profile",
    "load_normalization_profile",
    "load_config",
    "write_schedule",
    "write_report",
    "write_json",
    "write_model",
    "load_model",
    "write_solar_path",
]


class ParseError(ValueError):
    """A data file failed validation; the message names the spot."""


class ConfigError(ValueError):
    """A configuration file failed validation."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class TimeSeries:
    """Columnar numeric series indexed by contiguous steps from 0."""

    names: tuple[str, ...]
    units: tuple[str, ...]
    data: np.ndarray  # (steps, n_vars)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.data[:, self.names.index(name)]
        except ValueError as exc:
            raise ParseError(f"series has no column named {name!r}") from exc

    def unit(self, name: str) -> str:
        return self.units[self.names.index(name)]


def _split_header(cell: str) -> tuple[str, str]:
    cell = cell.strip()
    if not cell.endswith("]") or "[" not in cell:
        raise ParseError(f"column {cell!r} lacks a [unit] declaration")
    name, unit = cell[:-1].split("[", 1)
    if not name:
        raise ParseError(f"column {cell!r} has an empty name")
    return name, unit


def load_timeseries(path) -> TimeSeries:
    """Read and validate a CSV series; units are kept as declared."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = rows[0]
    if not header or header[0].strip() != "step":
        raise ParseError(f"{path}: first column must be 'step'")
    names, units = zip(*(_split_header(c) for c in header[1:])) if len(header) > 1 else ((), ())
    if not names:
        raise ParseError(f"{path}: no data columns")
    data = []
    for r, row in enumerate(rows[1:]):
        line_no = r + 2
        if len(row) != len(header):
            raise ParseError(f"{path}: row {line_no} has {len(row)} cells, expected {len(header)}")
        try:
            step = int(row[0])
            vals = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}: row {line_no} has a non-numeric cell") from exc
        if step != r:
            raise ParseError(f"{path}: row {line_no} has step {step}, expected {r}")
        if not all(np.isfinite(vals)):
            raise ParseError(f"{path}: row {line_no} has a non-finite value")
        data.append(vals)
    if not data:
        raise ParseError(f"{path}: no data rows")
    return TimeSeries(tuple(names), tuple(units), np.array(data))


def write_timeseries(ts: TimeSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + [f"{n}[{u}]" for n, u in zip(ts.names, ts.units)])
        for k in range(ts.data.shape[0]):
            writer.writerow([k] + [_fmt(v) for v in ts.data[k]])


_POWER_SCALE = {"kW": 1.0, "W": 1e-3}


def _power_column(ts: TimeSeries, name: str, path) -> np.ndarray:
    col = ts.column(name)
    unit = ts.unit(name)
    if unit not in _POWER_SCALE:
        raise ParseError(f"{path}: column {name!r} has unit {unit!r}, expected kW or W")
    return col * _POWER_SCALE[unit]


def day_profile(ts: TimeSeries, path="<series>") -> DayProfile:
    """Interpret a series with ``load`` and ``solar`` columns as one day."""
    return DayProfile(
        load_kw=_power_column(ts, "load", path), solar_kw=_power_column(ts, "solar", path)
    )


def load_day_profile(path) -> DayProfile:
    return day_profile(load_timeseries(path), path)


def load_normalization_profile(path) -> NormalizationProfile:
    """Read a per-step profile with ``mu_<var>`` / ``sigma_<var>`` columns.

    Variable order follows the mu columns; variable 0 is the solar one.
    """
    ts = load_timeseries(path)
    mu_names = [n for n in ts.names if n.startswith("mu_")]
    if not mu_names:
        raise ParseError(f"{path}: no mu_<var> columns")
    mu_cols, sigma_cols = [], []
    for n in mu_names:
        var = n[len("mu_") :]
        sig = f"sigma_{var}"
        if sig not in ts.names:
            raise ParseError(f"{path}: column {sig!r} missing for variable {var!r}")
        mu_cols.append(ts.column(n))
        sigma_cols.append(ts.column(sig))
    return NormalizationProfile(np.column_stack(mu_cols), np.column_stack(sigma_cols))


@dataclass(frozen=True)
class RunConfig:
    """Validated run settings; physical constants are never defaulted."""

    params: BatteryParams
    plan: PricingPlan
    e0_wh: float
    e_points: int = 81
    u_points: int = 17
    m_points: Optional[int] = None  # None = exact peak axis (deterministic solve)
    w_points: int = 9
    w_span: float = 3.0
    quad_nodes: int = 5
    seed: int = 0
    mode: str = "deterministic"
    clamp_export: bool = False
    strict_bounds: bool = False
    sim_paths: int = 200


_REQUIRED_KEYS = (
    "alpha",
    "eta",
    "u_min_wh",
    "u_max_wh",
    "e_min_wh",
    "e_max_wh",
    "dt_h",
    "p_on_per_kwh",
    "p_off_per_kwh",
    "p_d_per_kw",
    "t_on",
    "t_off",
    "steps_per_day",
    "e0_wh",
)

_OPTIONAL_KEYS = {
    "e_points": 81,
    "u_points": 17,
    "m_points": None,
    "w_points": 9,
    "w_span": 3.0,
    "quad_nodes": 5,
    "seed": 0,
    "mode": "deterministic",
    "clamp_export": False,
    "strict_bounds": False,
    "sim_paths": 200,
}


def parse_config(raw: dict) -> RunConfig:
    """Validate a flat key-value mapping into a :class:`RunConfig`."""
    unknown = set(raw) - set(_REQUIRED_KEYS) - set(_OPTIONAL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = [k for k in _REQUIRED_KEYS if k not in raw]
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")
    merged = dict(_OPTIONAL_KEYS)
    merged.update(raw)
    if merged["mode"] not in ("deterministic", "stochastic"):
        raise ConfigError(f"mode must be deterministic or stochastic, got {merged['mode']!r}")
    try:
        params = BatteryParams(
            alpha=float(merged["alpha"]),
            eta=float(merged["eta"]),
            u_min_wh=float(merged["u_min_wh"]),
            u_max_wh=float(merged["u_max_wh"]),
            e_min_wh=float(merged["e_min_wh"]),
            e_max_wh=float(merged["e_max_wh"]),
            dt_h=float(merged["dt_h"]),
        )
        plan = PricingPlan(
            p_on=float(merged["p_on_per_kwh"]),
            p_off=float(merged["p_off_per_kwh"]),
            p_d=float(merged["p_d_per_kw"]),
            t_on=int(merged["t_on"]),
            t_off=int(merged["t_off"]),
            steps=int(merged["steps_per_day"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    e0 = float(merged["e0_wh"])
    if not params.e_min_wh <= e0 <= params.e_max_wh:
        raise ConfigError("e0_wh outside the capacity bounds")
    return RunConfig(
        params=params,
        plan=plan,
        e0_wh=e0,
        e_points=int(merged["e_points"]),
        u_points=int(merged["u_points"]),
        m_points=None if merged["m_points"] is None else int(merged["m_points"]),
        w_points=int(merged["w_points"]),
        w_span=float(merged["w_span"]),
        quad_nodes=int(merged["quad_nodes"]),
        seed=int(merged["seed"]),
        mode=str(merged["mode"]),
        clamp_export=bool(merged["clamp_export"]),
        strict_bounds=bool(merged["strict_bounds"]),
        sim_paths=int(merged["sim_paths"]),
    )


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return parse_config(raw)


def write_schedule(result: ScheduleResult, path) -> None:
    """Schedule CSV: step, command and energy in grid units, peak flag."""
    if len(result.u_wh) == 0:
        raise ValueError("refusing to write an empty schedule")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "u_kW", "e_kWh", "q_kW", "on_peak"])
        u_kw, e_kwh = result.u_kw, result.e_kwh
        for k in range(len(result.u_wh)):
            writer.writerow(
                [k, _fmt(u_kw[k]), _fmt(e_kwh[k]), _fmt(result.q_kw[k]), int(result.on_peak[k])]
            )


def write_report(result: ScheduleResult, path, settings: Optional[dict] = None) -> None:
    """Cost summary as JSON with a fixed key order."""
    if len(result.u_wh) == 0:
        raise ValueError("refusing to report an empty schedule")
    if abs(result.total_cost - (result.energy_cost + result.demand_charge)) > 1e-9:
        raise ValueError("schedule result is inconsistent: total != energy + demand")
    doc = {
        "energy_cost": result.energy_cost,
        "demand_charge": result.demand_charge,
        "total_cost": result.total_cost,
        "peak_on_peak_kw": result.peak_on_peak_kw,
        "steps": len(result.u_wh),
        "settings": settings or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_json(doc: dict, path) -> None:
    """JSON writer used for all reports; key order is insertion order."""
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_model(model: GaussMarkovModel, path, lags=None, extras: Optional[dict] = None) -> None:
    """Persist a fitted model (matrices, profile, diagnostics) as JSON."""
    doc = {
        "n_vars": model.n_vars,
        "a": model.a.tolist(),
        "b": model.b.tolist(),
        "diagnostics": {
            "spectral_radius": model.spectral_radius,
            "cond_m0": model.cond_m0,
            "ridge_used": model.ridge_used,
            "clamped_mass": model.clamped_mass,
        },
    }
    if lags is not None:
        doc["m0"] = np.asarray(lags.m0).tolist()
        doc["m1"] = np.asarray(lags.m1).tolist()
    if model.profile is not None:
        doc["profile"] = {
            "mu": model.profile.mu.tolist(),
            "sigma": model.profile.sigma.tolist(),
        }
    if extras:
        doc["extras"] = extras
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_model(path) -> GaussMarkovModel:
    with open(path) as fh:
        doc = json.load(fh)
    profile = None
    if "profile" in doc:
        profile = NormalizationProfile(
            np.array(doc["profile"]["mu"]), np.array(doc["profile"]["sigma"])
        )
    diag = doc.get("diagnostics", {})
    return GaussMarkovModel(
        a=np.array(doc["a"]),
        b=np.array(doc["b"]),
        profile=profile,
        cond_m0=float(diag.get("cond_m0", float("nan"))),
        ridge_used=bool(diag.get("ridge_used", False)),
        clamped_mass=float(diag.get("clamped_mass", 0.0)),
    )


def write_solar_path(sample: SolarPath, path) -> None:
    """Sampled solar day as CSV (solar plus the normalised variables)."""
    d = sample.w.shape[1]
    names = ["solar"] + [f"w{i}" for i in range(d)]
    units = ["kW"] + ["1"] * d
    data = np.column_stack([sample.solar_kw, sample.w])
    write_timeseries(TimeSeries(tuple(names), tuple(units), data), path)
