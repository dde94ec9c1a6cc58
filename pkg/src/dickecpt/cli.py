"""Command-line front end: spectra, oracle validations, sweeps and reports.

Every command writes a CSV (``#`` comment header, then
``detuning,value[,stderr]`` or a sweep table), the fully resolved config as
``<out>.ini``, a JSON summary ``<out>.json`` and an SVG plot ``<out>.svg``,
and prints the summary as one JSON line on stdout.

Exit codes: 0 success, 1 computation error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    MetricError,
    fit_lorentzian,
    format_report,
    line_metrics,
    narrowing_report,
)
from .model import (
    DriveParams,
    LambdaSystem,
    MotionParams,
    Spectrum,
    VelocityModel,
    geometry_from_angle,
    to_angular,
)

COMMANDS = ("two-level", "cpt", "mc-validate", "dynamics-validate", "sweep", "report")
COMMAND_HELP = {
    "two-level": "two-level absorption spectrum for arbitrary collision rate",
    "cpt": "CPT dip versus Raman detuning",
    "mc-validate": "Monte Carlo two-level spectrum against the analytic one",
    "dynamics-validate": "density-matrix ensemble dip against the analytic CPT line shape",
    "sweep": "line metrics over a range of one parameter",
    "report": "narrowing parameters and width budget of a CPT resonance",
}
SWEEP_VARIABLES = ("theta", "gamma", "v_th", "omega2", "pressure-proxy")


class UsageError(Exception):
    """Bad command line or configuration (exit code 2)."""


@dataclass(frozen=True)
class Option:
    section: str
    kind: type | str
    default: object
    rate: bool = False
    help: str = ""


# key -> option; the same key is used in config files and (with hyphens) as a flag
OPTIONS: dict[str, Option] = {
    # run control
    "out": Option("run", str, None, help="output CSV path (plot/summary/config written alongside)"),
    "seed": Option("run", int, 12345, help="master seed for stochastic commands"),
    "threads": Option("run", int, None, help="worker threads (default: DICKE_CPT_THREADS or CPU count)"),
    "n": Option("run", int, None, help="number of trajectories"),
    "unit": Option("run", str, "angular", help="unit of all rates: angular (rad/s or dimensionless) or hz"),
    "method": Option("run", str, "general", help="CPT line shape: general, intermediate, collinear, full"),
    "target": Option("run", str, "cpt", help="sweep target: cpt or two-level"),
    "plot": Option("run", "bool", True, help="write an SVG plot"),
    "dump_trajectory": Option("run", str, None, help="also dump one trajectory / time series here"),
    "burn_in": Option("run", float, None, rate=False, help="dynamics burn-in time"),
    "window": Option("run", float, None, rate=False, help="dynamics averaging window"),
    # grid
    "grid": Option("grid", str, None, help="detuning grid min:max:points, or 'auto' for sweeps"),
    # two-level
    "gamma": Option("twolevel", float, 1.0, rate=True, help="homogeneous (natural) width Gamma"),
    "gamma_d": Option("geometry", float, None, rate=True, help="Doppler width |q1| v_th"),
    # motion
    "collision_rate": Option("motion", float, None, rate=True, help="velocity relaxation rate gamma"),
    "v_th": Option("motion", float, 1.0, help="per-axis RMS speed"),
    "model": Option("motion", str, "brownian", help="brownian or strong"),
    # Lambda system
    "gamma1": Option("system", float, None, rate=True, help="excited-state decay to |1>"),
    "gamma2": Option("system", float, 0.0, rate=True, help="excited-state decay to |2>"),
    "gamma_exchange": Option("system", float, 0.0, rate=True, help="ground population exchange"),
    "gamma21": Option("system", float, None, rate=True, help="ground coherence decay (pure dephasing)"),
    # drive
    "omega1": Option("drive", float, None, rate=True, help="probe Rabi frequency"),
    "omega2": Option("drive", float, None, rate=True, help="pump Rabi frequency"),
    "delta1": Option("drive", float, 0.0, rate=True, help="one-photon probe detuning"),
    # geometry
    "q1": Option("geometry", float, None, help="probe wave number (overrides gamma_d)"),
    "q2": Option("geometry", float, None, help="pump wave number (overrides gamma_d_res)"),
    "gamma_d_res": Option("geometry", float, None, rate=True,
                          help="residual Doppler width for collinear beams"),
    "theta": Option("geometry", float, 0.0, help="angle between the beams [rad]"),
    # sweep
    "variable": Option("sweep", str, None, help="sweep variable: " + ", ".join(SWEEP_VARIABLES)),
    "values": Option("sweep", str, None, help="comma list or min:max:points[:log]"),
    "mean_free_path": Option("report", float, None, help="report: Rb-like preset with this mean free path [m]"),
}

# command-specific defaults (dimensionless units)
COMMAND_DEFAULTS = {
    "two-level": {"gamma_d": 5.0, "collision_rate": 5.0, "grid": "-25:25:501"},
    "mc-validate": {"gamma_d": 5.0, "collision_rate": 5.0, "grid": "-25:25:101", "n": 10000},
    "cpt": {"gamma1": 300.0, "gamma21": 1.0, "gamma_d": 3e4, "gamma_d_res": 30.0,
            "collision_rate": 900.0, "omega1": 1e-3, "omega2": 1.0, "grid": "-10:10:201"},
    "dynamics-validate": {"gamma1": 100.0, "gamma21": 1.0, "gamma_d": 5000.0, "gamma_d_res": 20.0,
                          "collision_rate": 400.0, "omega1": 1e-3, "omega2": 1.0, "model": "strong",
                          "grid": "0:5:6", "n": 100, "burn_in": 5.0, "window": 10.0},
    "sweep": {"gamma1": 300.0, "gamma21": 1.0, "gamma_d": 3e4, "gamma_d_res": 30.0,
              "collision_rate": 900.0, "omega1": 1e-3, "omega2": 1.0, "grid": "auto"},
    "report": {},
}
SWEEP_TWO_LEVEL_DEFAULTS = {"gamma_d": 5.0, "collision_rate": 5.0, "grid": "auto"}


# ---------------------------------------------------------------------------
# configuration


def _coerce(key, raw):
    kind = OPTIONS[key].kind
    if raw is None:
        return None
    if kind == "bool":
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def read_config(path) -> dict:
    """Read a sectioned key = value file; unknown sections or keys are errors."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read(p)
    except configparser.Error as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None
    out = {}
    sections = {o.section for o in OPTIONS.values()}
    for sec in cp.sections():
        if sec not in sections:
            raise UsageError(f"{path}: unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in OPTIONS or OPTIONS[key].section != sec:
                raise UsageError(f"{path}: unknown key {key!r} in [{sec}]")
            out[key] = _coerce(key, raw)
    return out


def write_config(path, command, cfg) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for key, opt in OPTIONS.items():
        val = cfg.get(key)
        if val is None:
            continue
        if not cp.has_section(opt.section):
            cp.add_section(opt.section)
        cp.set(opt.section, key, repr(val) if isinstance(val, float) else str(val))
    with open(path, "w") as fh:
        fh.write(f"# resolved configuration for command {command}\n")
        cp.write(fh)


def resolve(command, file_cfg, flag_cfg) -> dict:
    cfg = {k: o.default for k, o in OPTIONS.items()}
    target = flag_cfg.get("target") or file_cfg.get("target")
    if command == "sweep" and target == "two-level":
        cfg.update(SWEEP_TWO_LEVEL_DEFAULTS)
    else:
        cfg.update(COMMAND_DEFAULTS.get(command, {}))
    cfg.update({k: v for k, v in file_cfg.items() if v is not None})
    cfg.update({k: v for k, v in flag_cfg.items() if v is not None})
    unit = str(cfg["unit"]).lower()
    if unit not in ("angular", "hz", "rad/s", "dimensionless"):
        raise UsageError(f"unknown unit {cfg['unit']!r}")
    try:
        cfg["model"] = VelocityModel.parse(cfg["model"]).value
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cfg["threads"] is not None and cfg["threads"] < 1:
        raise UsageError("threads must be >= 1")
    if cfg["n"] is not None and cfg["n"] < 2:
        raise UsageError("n must be >= 2")
    return cfg


def _rate(cfg, key):
    val = cfg.get(key)
    if val is None:
        return None
    return float(to_angular(val, cfg["unit"])) if OPTIONS[key].rate else float(val)


def parse_grid(spec, unit="angular"):
    """``min:max:points`` -> array (in angular units)."""
    try:
        lo, hi, pts = spec.split(":")
        lo, hi, pts = float(lo), float(hi), int(pts)
    except (AttributeError, ValueError):
        raise UsageError(f"grid must be min:max:points, got {spec!r}") from None
    if pts < 2:
        raise UsageError("grid needs at least 2 points")
    if not hi > lo:
        raise UsageError("grid max must exceed min")
    return to_angular(np.linspace(lo, hi, pts), unit)


def parse_values(spec):
    """Comma list, or ``min:max:points[:log]``."""
    if spec is None or not str(spec).strip():
        raise UsageError("sweep values are empty")
    s = str(spec).strip()
    try:
        if ":" in s:
            parts = s.split(":")
            lo, hi, pts = float(parts[0]), float(parts[1]), int(parts[2])
            log = len(parts) > 3 and parts[3] == "log"
            if pts < 1:
                raise ValueError
            return np.geomspace(lo, hi, pts) if log else np.linspace(lo, hi, pts)
        vals = np.array([float(v) for v in s.split(",") if v.strip()])
    except (ValueError, IndexError):
        raise UsageError(f"cannot parse sweep values {spec!r}") from None
    if vals.size == 0:
        raise UsageError("sweep values are empty")
    return vals


# ---------------------------------------------------------------------------
# parameter objects


def two_level_params(cfg):
    from .twolevel import TwoLevelParams

    gd = _rate(cfg, "gamma_d")
    if cfg.get("q1") is not None:
        gd = float(cfg["q1"]) * float(cfg["v_th"])
    if gd is None:
        raise UsageError("two-level runs need gamma_d or q1")
    try:
        return TwoLevelParams.from_widths(_rate(cfg, "gamma"), gd, _rate(cfg, "collision_rate"),
                                          model=cfg["model"], v_th=float(cfg["v_th"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cpt_params(cfg):
    from .cpt import CptParams

    v = float(cfg["v_th"])
    if v < 0:
        raise UsageError("v_th must be >= 0")
    vv = v if v > 0 else 1.0
    if cfg.get("q1") is not None:
        q1 = float(cfg["q1"])
    elif _rate(cfg, "gamma_d") is not None:
        q1 = _rate(cfg, "gamma_d") / vv
    else:
        raise UsageError("CPT runs need q1 or gamma_d")
    theta = float(cfg["theta"])
    if cfg.get("q2") is not None:
        q2 = float(cfg["q2"])
    elif theta == 0 and _rate(cfg, "gamma_d_res") is not None:
        q2 = q1 - _rate(cfg, "gamma_d_res") / vv
    else:
        q2 = q1
    for key in ("gamma1", "gamma21", "omega1", "omega2"):
        if cfg.get(key) is None:
            raise UsageError(f"CPT runs need {key}")
    try:
        system = LambdaSystem(Gamma1=_rate(cfg, "gamma1"), Gamma2=_rate(cfg, "gamma2"),
                              Gamma_exchange=_rate(cfg, "gamma_exchange"),
                              Gamma_ad=0.5 * max(_rate(cfg, "gamma21") - _rate(cfg, "gamma_exchange"), 0.0))
        drive = DriveParams(_rate(cfg, "omega1"), _rate(cfg, "omega2"), _rate(cfg, "delta1"))
        geom = geometry_from_angle(q1, q2, theta)
        motion = MotionParams(v, _rate(cfg, "collision_rate") or 0.0, cfg["model"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return CptParams(system, drive, geom, motion)


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    return f"{x:.17g}"


def _out_scale(cfg) -> float:
    return 1.0 / (2 * np.pi) if cfg["unit"] == "hz" else 1.0


def _in_unit(spec: Spectrum, cfg) -> Spectrum:
    """Detuning axis in the run's unit; values keep the angular normalization."""
    scale = _out_scale(cfg)
    if scale == 1.0:
        return spec
    return Spectrum(spec.detunings * scale, spec.values, stderr=spec.stderr, meta=spec.meta)


def write_spectrum_csv(path, spec: Spectrum, header_lines):
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        cols = "detuning,value,stderr" if spec.stderr is not None else "detuning,value"
        fh.write(cols + "\n")
        for i in range(len(spec)):
            row = [_fmt(spec.detunings[i]), _fmt(spec.values[i])]
            if spec.stderr is not None:
                row.append(_fmt(spec.stderr[i]))
            fh.write(",".join(row) + "\n")


def write_table_csv(path, columns, rows, header_lines):
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in r) + "\n")


def _plot(path, series, xlabel, ylabel, title):
    """Static SVG line chart; ``series`` is a list of (x, y, label, yerr)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "dickecpt"
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for x, y, label, yerr in series:
        if yerr is not None:
            ax.errorbar(x, y, yerr=yerr, fmt="o", ms=3, capsize=2, label=label)
        else:
            ax.plot(x, y, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if any(s[2] for s in series):
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _detuning_label(cfg, symbol):
    return f"{symbol} [Hz]" if cfg["unit"] == "hz" else f"{symbol} [rad/s or units of the reference rate]"


def _metrics_dict(spec, baseline=None):
    try:
        m = line_metrics(spec, baseline=baseline)
        return {"peak_position": m.peak_position, "peak_value": m.peak_value, "fwhm": m.fwhm,
                "is_dip": m.is_dip}
    except MetricError as exc:
        return {"metric_error": str(exc)}


def _paths(out):
    p = Path(out)
    return p, p.with_suffix(".json"), p.with_suffix(".svg"), p.with_suffix(".ini")


def _finish(command, cfg, summary, failed=0):
    out, js, svg, ini = _paths(cfg["out"])
    summary = {"command": command, "status": "partial" if failed else "ok", "out": str(out), **summary}
    write_config(ini, command, cfg)
    with open(js, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
    return summary


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o)}")


# ---------------------------------------------------------------------------
# commands


def cmd_two_level(cfg):
    from .twolevel import regime_classify, spectrum_general

    p = two_level_params(cfg)
    grid = parse_grid(cfg["grid"], cfg["unit"])
    spec = _in_unit(spectrum_general(p, grid), cfg)
    regime = regime_classify(p).value
    write_spectrum_csv(cfg["out"], spec, [f"source = {spec.source}",
                                          f"params = {json.dumps(p.snapshot())}",
                                          f"regime = {regime}"])
    if cfg["plot"]:
        _plot(_paths(cfg["out"])[2], [(spec.detunings, spec.values, None, None)],
              _detuning_label(cfg, "detuning"), "S", "two-level absorption")
    return {"regime": regime, "dicke_parameter": p.Gamma_D / p.motion.gamma if p.motion.gamma > 0 else None,
            "metrics": _metrics_dict(spec, baseline=0.0)}


def _cpt_spectrum(p, grid, method):
    from .cpt import cpt_dip_collinear, cpt_dip_general, cpt_dip_intermediate, full_probe_spectrum

    fns = {"general": cpt_dip_general, "intermediate": cpt_dip_intermediate,
           "collinear": cpt_dip_collinear}
    if method == "full":
        return full_probe_spectrum(p, grid), None
    if method not in fns:
        raise UsageError(f"unknown CPT method {method!r}")
    return fns[method](p, grid), 0.0


def cmd_cpt(cfg):
    p = cpt_params(cfg)
    grid = parse_grid(cfg["grid"], cfg["unit"])
    spec, base = _cpt_spectrum(p, grid, cfg["method"])
    spec = _in_unit(spec, cfg)
    write_spectrum_csv(cfg["out"], spec, [f"source = {spec.source}",
                                          f"params = {json.dumps(p.snapshot(), default=_json_default)}",
                                          f"flags = {json.dumps(p.flags())}"])
    if cfg["plot"]:
        _plot(_paths(cfg["out"])[2], [(spec.detunings, spec.values, cfg["method"], None)],
              _detuning_label(cfg, "Raman detuning"), "S", "CPT probe absorption")
    return {"method": cfg["method"], "predicted_hwhm": p.predicted_hwhm * _out_scale(cfg), "eta": p.eta,
            "flags": p.flags(), "metrics": _metrics_dict(spec, baseline=base)}


def cmd_mc_validate(cfg):
    from .montecarlo import mc_two_level_spectrum, sample_trajectory
    from .twolevel import spectrum_general

    p = two_level_params(cfg)
    grid = parse_grid(cfg["grid"], cfg["unit"])
    n = int(cfg["n"])
    mc = mc_two_level_spectrum(p, grid, n, int(cfg["seed"]), threads=cfg["threads"])
    ref = spectrum_general(p, grid)
    z = (mc.values - ref.values) / np.where(mc.stderr > 0, mc.stderr, np.inf)
    mc, ref = _in_unit(mc, cfg), _in_unit(ref, cfg)
    write_spectrum_csv(cfg["out"], mc, [f"source = {mc.source}",
                                        f"params = {json.dumps(p.snapshot())}",
                                        f"n = {n}", f"seed = {cfg['seed']}"])
    if cfg["dump_trajectory"]:
        duration = float(mc.meta["tau_max"])
        sample_trajectory(p.motion, duration, int(cfg["seed"])).to_csv(cfg["dump_trajectory"])
    if cfg["plot"]:
        _plot(_paths(cfg["out"])[2], [(ref.detunings, ref.values, "analytic", None),
                                      (mc.detunings, mc.values, f"Monte Carlo (n={n})", mc.stderr)],
              _detuning_label(cfg, "detuning"), "S", "Monte Carlo vs analytic spectrum")
    return {"n": n, "seed": int(cfg["seed"]), "max_abs_z": float(np.max(np.abs(z))),
            "fraction_within_3sigma": float(np.mean(np.abs(z) <= 3)),
            "metrics": _metrics_dict(mc, baseline=0.0),
            "reference_metrics": _metrics_dict(ref, baseline=0.0)}


def cmd_dynamics_validate(cfg):
    from .cpt import cpt_dip_general
    from .dynamics import ensemble_dip, integrate_density_matrix
    from .montecarlo import sample_trajectory

    p = cpt_params(cfg)
    grid = parse_grid(cfg["grid"], cfg["unit"])
    n = int(cfg["n"])
    dyn = ensemble_dip(p, grid, n, int(cfg["seed"]), burn_in=cfg["burn_in"], window=cfg["window"],
                       threads=cfg["threads"])
    ref = cpt_dip_general(p, grid)
    dyn, ref = _in_unit(dyn, cfg), _in_unit(ref, cfg)
    one_sided = grid[0] >= 0
    try:
        fit = fit_lorentzian(dyn, offset=0.0, center=0.0 if one_sided else None)
    except MetricError as exc:
        fit = {"fit_error": str(exc)}
    write_spectrum_csv(cfg["out"], dyn, [f"source = {dyn.source}",
                                         f"params = {json.dumps(p.snapshot(), default=_json_default)}",
                                         f"n = {n}", f"seed = {cfg['seed']}",
                                         "value = absorption minus the pump-free run"])
    if cfg["dump_trajectory"]:
        t_end = dyn.meta["burn_in"] + dyn.meta["window"]
        traj = sample_trajectory(p.motion, t_end, int(cfg["seed"]))
        integrate_density_matrix(p.system, p.drive, p.geom, traj, t_end).to_csv(cfg["dump_trajectory"])
    if cfg["plot"]:
        _plot(_paths(cfg["out"])[2], [(ref.detunings, ref.values, "analytic (general)", None),
                                      (dyn.detunings, dyn.values, f"density matrix (n={n})", dyn.stderr)],
              _detuning_label(cfg, "Raman detuning"), "S2", "density-matrix oracle")
    return {"n": n, "seed": int(cfg["seed"]), "predicted_hwhm": p.predicted_hwhm * _out_scale(cfg), "fit": fit,
            "depth": float(dyn.values[np.argmin(np.abs(grid))]),
            "reference_depth": float(ref.values[np.argmin(np.abs(grid))])}


def _swept_cfg(cfg, variable, value):
    c = dict(cfg)
    if variable == "theta":
        c["theta"] = float(value)
        c["gamma_d_res"] = None
    elif variable == "gamma":
        c["collision_rate"] = float(value)
    elif variable == "v_th":
        c["v_th"] = float(value)
        if c.get("q1") is None and c.get("gamma_d") is not None:
            # keep the wave-vectors fixed: gamma_d was defined at the base speed
            c["q1"] = _rate(cfg, "gamma_d") / float(cfg["v_th"])
            if c.get("gamma_d_res") is not None and c.get("q2") is None:
                c["q2"] = c["q1"] - _rate(cfg, "gamma_d_res") / float(cfg["v_th"])
    elif variable == "omega2":
        c["omega2"] = float(value)
    elif variable == "pressure-proxy":
        # buffer-gas pressure scales the collision rate and the optical width together
        c["collision_rate"] = float(cfg["collision_rate"]) * float(value)
        if cfg.get("gamma1") is not None:
            c["gamma1"] = float(cfg["gamma1"]) * float(value)
        c["gamma"] = float(cfg["gamma"]) * float(value)
    else:
        raise UsageError(f"unknown sweep variable {variable!r}; choose from {', '.join(SWEEP_VARIABLES)}")
    return c


def sweep(cfg):
    """Compute one spectrum per sweep value and tabulate its line metrics.

    Returns (columns, rows, spectra, n_failed).
    """
    from .twolevel import spectrum_general

    variable = cfg["variable"]
    if variable not in SWEEP_VARIABLES:
        raise UsageError(f"sweep variable must be one of {', '.join(SWEEP_VARIABLES)}")
    values = parse_values(cfg["values"])
    target = cfg["target"]
    if target not in ("cpt", "two-level"):
        raise UsageError("sweep target must be cpt or two-level")
    if target == "two-level" and variable in ("theta", "omega2"):
        raise UsageError(f"{variable} has no meaning for a two-level sweep")
    auto = cfg["grid"] in (None, "auto")
    columns = ["value", "peak_position", "peak_value", "fwhm", "hwhm", "predicted_hwhm",
               "excess_hwhm", "error"]
    rows, spectra, failed = [], [], 0
    for v in values:
        c = _swept_cfg(cfg, variable, v)
        try:
            if target == "cpt":
                p = cpt_params(c)
                w = p.predicted_hwhm
                grid = np.linspace(-10 * w, 10 * w, 801) if auto else parse_grid(cfg["grid"], cfg["unit"])
                spec, base = _cpt_spectrum(p, grid, cfg["method"])
                floor = p.system.Gamma21
            else:
                p = two_level_params(c)
                wd = max(p.Gamma + p.Gamma_D, 1e-300)
                grid = np.linspace(-6 * wd, 6 * wd, 1201) if auto else parse_grid(cfg["grid"], cfg["unit"])
                spec, base = spectrum_general(p, grid), 0.0
                w, floor = float("nan"), p.Gamma
            scale = _out_scale(cfg)
            spec, w, floor = _in_unit(spec, cfg), w * scale, floor * scale
            m = line_metrics(spec, baseline=base)
            rows.append([float(v), m.peak_position, m.peak_value, m.fwhm, m.hwhm, float(w),
                         m.hwhm - floor, ""])
            spectra.append((float(v), spec))
        except UsageError:
            raise
        except Exception as exc:  # noqa: BLE001 - recorded per row, sweep continues
            failed += 1
            nan = float("nan")
            rows.append([float(v), nan, nan, nan, nan, nan, nan, str(exc).replace(",", ";")])
    return columns, rows, spectra, failed


def loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def cmd_sweep(cfg):
    if cfg["variable"] is None:
        raise UsageError("sweep needs --variable")
    columns, rows, spectra, failed = sweep(cfg)
    write_table_csv(cfg["out"], columns, rows, [f"sweep variable = {cfg['variable']}",
                                                f"target = {cfg['target']}",
                                                f"method = {cfg['method']}"])
    vals = np.array([r[0] for r in rows])
    excess = np.array([r[6] for r in rows])
    slope = loglog_slope(vals, excess)
    if cfg["plot"] and spectra:
        _plot(_paths(cfg["out"])[2],
              [(s.detunings, s.values, f"{cfg['variable']} = {v:.4g}", None) for v, s in spectra],
              _detuning_label(cfg, "detuning"), "S", f"{cfg['target']} sweep over {cfg['variable']}")
    summary = {"variable": cfg["variable"], "points": len(rows), "failed": failed,
               "loglog_slope_excess_hwhm": slope,
               "fwhm": [r[3] for r in rows], "peak_value": [r[2] for r in rows]}
    return summary, failed


def cmd_report(cfg):
    from .cpt import rb_like_params

    if cfg.get("mean_free_path") is not None or cfg.get("gamma1") is None:
        p = rb_like_params(cfg.get("mean_free_path") or 1e-6, theta=float(cfg["theta"]))
    else:
        p = cpt_params(cfg)
    rep = narrowing_report(p)
    text = format_report(rep)
    Path(cfg["out"]).write_text(text)
    return {"report": rep}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dicke-cpt",
        description="Dicke-narrowed two-level and CPT line shapes, with stochastic and "
                    "density-matrix oracles.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, help=COMMAND_HELP[name], description=COMMAND_HELP[name],
                            argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="sectioned key = value config file; flags override it")
        for key, opt in OPTIONS.items():
            flag = "--" + key.replace("_", "-")
            if opt.kind == "bool":
                sp.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, help=opt.help)
            else:
                sp.add_argument(flag, dest=key, help=opt.help, metavar=key.upper())
    return parser


def _join_negative_values(argv):
    """Attach values that start with '-' (e.g. a grid ``-25:25:101``) to their flag."""
    flags = {"--" + k.replace("_", "-") for k, o in OPTIONS.items() if o.kind != "bool"}
    flags.add("--config")
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in flags and i + 1 < len(argv) and argv[i + 1].startswith("-") \
                and argv[i + 1] not in flags and not argv[i + 1].startswith("--"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def _default_out(command):
    return {"report": "report.txt"}.get(command, f"{command}.csv")


def run(argv=None) -> int:
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.command is None:
        parser.print_help()
        return 2
    command = ns.command
    try:
        flags = {k: _coerce(k, v) for k, v in vars(ns).items() if k in OPTIONS}
        file_cfg = read_config(ns.config) if getattr(ns, "config", None) else {}
        cfg = resolve(command, file_cfg, flags)
        if cfg["out"] is None:
            cfg["out"] = _default_out(command)
        Path(cfg["out"]).parent.mkdir(parents=True, exist_ok=True)
        handlers = {"two-level": cmd_two_level, "cpt": cmd_cpt, "mc-validate": cmd_mc_validate,
                    "dynamics-validate": cmd_dynamics_validate, "report": cmd_report}
        failed = 0
        if command == "sweep":
            summary, failed = cmd_sweep(cfg)
        else:
            summary = handlers[command](cfg)
        summary = _finish(command, cfg, summary, failed)
        print(json.dumps(summary, sort_keys=True, default=_json_default))
        return 1 if failed else 0
    except UsageError as exc:
        print(f"dicke-cpt: error: {exc}", file=sys.stderr)
        print(json.dumps({"command": command, "status": "error", "exit_code": 2, "error": str(exc)}))
        return 2
    except Exception as exc:  # noqa: BLE001 - mapped to exit code 1
        print(f"dicke-cpt: computation failed: {exc}", file=sys.stderr)
        print(json.dumps({"command": command, "status": "error", "exit_code": 1,
                          "error": f"{type(exc).__name__}: {exc}"}))
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
