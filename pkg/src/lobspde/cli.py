"""Command-line interface: simulate, profile-fit, estimate, vol-compare.

Every command reads an INI config (one section per command plus a shared
``[model]`` section), lets flags override it, and writes CSV and JSON into the
output directory.  ``--plot`` additionally renders PNG figures there.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
diagnostic failure.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import data_io, estimation, lob_model, price, sde_core, streams
from .sde_core import TimeGrid

log = logging.getLogger("lobspde")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
OUT_DIR_ENV = "LOBSPDE_OUT_DIR"

MODEL_DEFAULTS = {
    "nu_b": "1.0", "nu_a": "1.0", "sigma_b": "0.5", "sigma_a": "0.5", "rho_ab": "0.0",
    "theta": "0.01", "c_s": "0.5", "L": "1.0", "eta": "1.0", "gamma_b": "0.0",
    "gamma_a": "0.0", "vbar_b": "0.0", "vbar_a": "0.0", "scaling_exponent_a": "1.0",
}
SECTION_DEFAULTS = {
    "simulate": {"horizon": "10.0", "dt": "0.01", "paths": "1", "scheme": "exact",
                 "substeps": "1", "seed": "0", "s0": "0.0", "chunk": "2048"},
    "profile-fit": {"levels": "20", "window": "1800", "time_source": "column", "tick": "100",
                    "L_ticks": "1000", "nonlinear_scaling": "false"},
    "estimate": {"dt": "0.01", "levels": "2", "window": "1800", "time_source": "column",
                 "ticker": "", "date": ""},
    "vol-compare": {"dt": "0.01", "levels": "2", "window": "900", "time_source": "column",
                    "c_s": "0.5", "theta": "0.01"},
}


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def _write_json(path: Path, doc: dict) -> None:
    def clean(v):
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, (np.floating, float)):
            return float(v) if math.isfinite(v) else None
        if isinstance(v, np.integer):
            return int(v)
        if isinstance(v, np.bool_):
            return bool(v)
        return v
    path.write_text(json.dumps(clean(doc), indent=2, sort_keys=True) + "\n")


# --- configuration ---------------------------------------------------------

def load_config(path: Optional[str]) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    cfg.optionxform = str
    cfg.read_dict({"model": MODEL_DEFAULTS, **SECTION_DEFAULTS})
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            cfg.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
    return cfg


def _get(sec, key, kind=float):
    try:
        raw = sec[key]
    except KeyError:
        raise ConfigError(f"missing key {key!r} in [{sec.name}]") from None
    try:
        if kind is bool:
            return sec.getboolean(key)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r} is not a valid {kind.__name__}") from None


def model_from_config(cfg: configparser.ConfigParser) -> lob_model.ModelParams:
    m = cfg["model"]
    g = {k: _get(m, k) for k in MODEL_DEFAULTS}
    try:
        theta, L = g["theta"], g["L"]
        depth_factor = math.pi / (2 * L) * theta ** 2
        vbar = {}
        for tag in ("b", "a"):
            # a depth level (shares) overrides a raw source intensity
            if f"dbar_{tag}" in m:
                vbar[tag] = g[f"nu_{tag}"] * _get(m, f"dbar_{tag}") / depth_factor
            else:
                vbar[tag] = g[f"vbar_{tag}"]
        return lob_model.ModelParams.from_rates(
            g["nu_b"], g["nu_a"], g["sigma_b"], g["sigma_a"], g["rho_ab"], L=L, eta=g["eta"],
            gamma_b=g["gamma_b"], gamma_a=g["gamma_a"], theta=theta, c_s=g["c_s"],
            vbar_b=vbar["b"], vbar_a=vbar["a"], scaling_exponent_a=g["scaling_exponent_a"])
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid model parameters: {exc}") from None


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _override(sec, key, value) -> None:
    if value is not None:
        sec[key] = str(value).lower() if isinstance(value, bool) else str(value)


# --- simulate --------------------------------------------------------------

def cmd_simulate(args, cfg) -> int:
    sec = cfg["simulate"]
    for k in ("seed", "dt", "paths", "scheme"):
        _override(sec, k, getattr(args, k, None))
    p = model_from_config(cfg)
    horizon, dt = _get(sec, "horizon"), _get(sec, "dt")
    n_paths, seed = _get(sec, "paths", int), _get(sec, "seed", int)
    scheme, substeps = sec["scheme"], _get(sec, "substeps", int)
    chunk = _get(sec, "chunk", int)
    if scheme not in ("exact", "milstein"):
        raise ConfigError(f"unknown scheme {scheme!r}")
    if horizon <= 0 or dt <= 0 or n_paths < 1 or substeps < 1:
        raise ConfigError("horizon, dt, paths and substeps must be positive")
    n_steps = max(1, int(round(horizon / dt)))
    try:
        grid = TimeGrid(0.0, dt, n_steps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    mean_reverting = not p.homogeneous
    default_v = {"b": 1000.0, "a": 1000.0}
    if mean_reverting and p.nu_b > 0 and p.nu_a > 0:
        default_v = {"b": p.vbar_b / p.nu_b, "a": p.vbar_a / p.nu_a}
    try:
        v0_b = float(sec.get("v0_b", default_v["b"]))
        v0_a = float(sec.get("v0_a", default_v["a"]))
        init = lob_model.FactorState(v_a=v0_a, v_b=v0_b, s=_get(sec, "s0"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    def run(offset: int, size: int) -> lob_model.Trajectory:
        if mean_reverting:
            return lob_model.simulate_mean_reverting(p, init, grid, seed, size, offset,
                                                     scheme=scheme, substeps=substeps)
        return lob_model.simulate_two_factor(p, init, grid, seed, size, offset)

    def stats(offset: int, size: int):
        tr = run(offset, size)
        ds = np.diff(tr.s, axis=-1)
        return (float(np.sum(ds * ds)), float(np.sum(tr.v_b[:, -1])), float(np.sum(tr.v_a[:, -1])),
                tr.path(0) if offset == 0 else None)

    parts = streams.map_chunks(stats, n_paths, chunk)
    qv = sum(r[0] for r in parts)
    first = parts[0][3]
    out = _out_dir(args)
    first.to_csv(out / "trajectory.csv")
    ds = first.depth_series(p)
    data_io.write_depth_csv(out / "depth_series.csv", ds)
    imb = ds.d_b - ds.d_a
    x = imb - imb.mean()
    ac1 = float(x[1:] @ x[:-1] / (x @ x)) if x @ x > 0 else math.nan
    summary = {
        "seed": seed, "paths": n_paths, "dt": dt, "n_steps": n_steps,
        "regime": "mean-reverting" if mean_reverting else "two-factor", "scheme": scheme,
        "sigma_s_realized": math.sqrt(qv / (n_paths * grid.t_end)),
        "sigma_s_model": price.mid_vol(p),
        "mean_final_v_b": sum(r[1] for r in parts) / n_paths,
        "mean_final_v_a": sum(r[2] for r in parts) / n_paths,
        "imbalance_lag1_autocorrelation": ac1,
        "model": p.to_dict(),
    }
    _write_json(out / "summary.json", summary)
    if args.plot:
        from . import plotting

        plotting.plot_trajectory(out / "trajectory.png", grid.times, first.v_b, first.v_a, first.s)
    log.info("simulate: wrote %s", out)
    return EXIT_OK


# --- shared data loading ---------------------------------------------------

def _load_snapshots(sec, levels: int) -> list[data_io.RawSnapshot]:
    src = sec.get("input")
    if not src:
        raise ConfigError(f"[{sec.name}] needs an input file")
    if not Path(src).is_file():
        raise data_io.DataError(f"input file {src} not found")
    res = data_io.parse_orderbook_file(src, levels, time_source=sec["time_source"],
                                       message_path=sec.get("message"))
    for line, reason in res.skipped:
        log.warning("%s:%d skipped (%s)", src, line, reason)
    return res.snapshots


def _load_series(sec) -> estimation.DepthSeries:
    src = sec.get("input")
    if not src:
        raise ConfigError(f"[{sec.name}] needs an input file")
    if not Path(src).is_file():
        raise data_io.DataError(f"input file {src} not found")
    with open(src) as fh:
        head = fh.readline()
    if head.startswith("time_s"):
        return data_io.read_depth_csv(src)
    levels = _get(sec, "levels", int)
    # the file may hold more levels than enter the depth
    book_levels = _get(sec, "book_levels", int) if "book_levels" in sec else levels
    snaps = _load_snapshots(sec, book_levels)
    return data_io.resample(snaps, _get(sec, "dt"), levels)


# --- profile-fit -----------------------------------------------------------

def cmd_profile_fit(args, cfg) -> int:
    sec = cfg["profile-fit"]
    _override(sec, "levels", args.levels)
    _override(sec, "window", args.window)
    if args.nonlinear_scaling:
        sec["nonlinear_scaling"] = "true"
    levels, window = _get(sec, "levels", int), _get(sec, "window")
    tick, L = _get(sec, "tick", int), _get(sec, "L_ticks")
    nonlinear = _get(sec, "nonlinear_scaling", bool)
    snaps = _load_snapshots(sec, levels)
    t_first = snaps[0].timestamp
    n_win = int(math.floor((snaps[-1].timestamp - t_first) / window)) + 1
    rows, fits_all = [], None
    for w in range(n_win):
        lo, hi = t_first + w * window, t_first + (w + 1) * window
        try:
            prof = data_io.average_profile(snaps, (lo, hi), 1.0, levels, tick)
        except data_io.DataError:
            log.warning("profile window %d [%g, %g) is empty; skipped", w, lo, hi)
            continue
        row = [w, lo, prof.count]
        for side in ("bid", "ask"):
            try:
                ls = estimation.fit_profile_ls(prof.ticks, prof.side(side), L, nonlinear)
                pk = estimation.fit_profile_peak(prof.ticks, prof.side(side), L)
            except estimation.EstimationError as exc:
                log.warning("profile window %d, %s side: %s", w, side, exc)
                row += [math.nan, math.nan, math.nan, math.nan, "fit-failed"]
                continue
            row += [ls.gamma, ls.scaling_exponent_a, ls.volume_scale, pk.gamma,
                    "|".join(ls.flags + pk.flags)]
        rows.append(row)
    if not rows:
        raise data_io.DataError("no profile window holds any snapshot")
    out = _out_dir(args)
    header = ["window", "t0", "count"]
    for side in ("bid", "ask"):
        header += [f"gamma_{side}_ls", f"a_{side}", f"volume_{side}", f"gamma_{side}_peak",
                   f"flags_{side}"]
    _write_csv(out / "profile_gamma.csv", header, rows)
    prof = data_io.average_profile(snaps, None, 1.0, levels, tick)
    data_io.write_profile_csv(out / "profile_average.csv", prof)
    fits = {side: estimation.fit_profile_ls(prof.ticks, prof.side(side), L, nonlinear)
            for side in ("bid", "ask")}
    _write_json(out / "profile_fit.json", {
        side: {"gamma": f.gamma, "scaling_exponent_a": f.scaling_exponent_a,
               "volume_scale": f.volume_scale, "residual": f.residual, "flags": list(f.flags)}
        for side, f in fits.items()})
    if args.plot:
        from . import plotting

        curves = {f"{side} fit": (side, f.volume_scale * estimation.profile_shape(
            prof.ticks, f.gamma, f.scaling_exponent_a, L)) for side, f in fits.items()}
        plotting.plot_profile(out / "profile_fit.png", prof.ticks, prof.bid, prof.ask, curves)
        plotting.plot_series(out / "profile_gamma.png", [r[0] for r in rows],
                             {"gamma bid": [r[3] for r in rows], "gamma ask": [r[8] for r in rows]},
                             "window", "gamma [1/tick]")
    return EXIT_OK


# --- estimate --------------------------------------------------------------

def cmd_estimate(args, cfg) -> int:
    sec = cfg["estimate"]
    for k in ("dt", "window", "levels"):
        _override(sec, k, getattr(args, k, None))
    series = _load_series(sec)
    window = _get(sec, "window")
    ticker, date = sec["ticker"], sec["date"]
    whole = estimation.estimate_params(series)
    per = estimation.estimate_windows(series, window)
    header = ["ticker", "date", "window", "t0", "n"] + list(estimation.ParamEstimates.COLUMNS)
    rows = [[ticker, date, "all", series.grid.t0, len(series)] + whole.row()]
    for e in per:
        d = e.diagnostics
        rows.append([ticker, date, d["window"], d["t0"], d["n"]] + e.row())
    out = _out_dir(args)
    _write_csv(out / "estimates.csv", header, rows)
    _write_json(out / "estimates.json", {
        "ticker": ticker, "date": date, "units": "per second",
        "all": {k: getattr(whole, k) for k in estimation.ParamEstimates.COLUMNS},
        "diagnostics": whole.diagnostics})
    if args.plot:
        from . import plotting

        xs = [r[2] for r in rows[1:]]
        plotting.plot_series(out / "estimates_nu.png", xs,
                             {"nu bid": [e.nu_b for e in per], "nu ask": [e.nu_a for e in per]},
                             "window", "nu [1/s]")
        plotting.plot_depths(out / "depth_series.png", series.grid.times, series.d_b, series.d_a)
    return EXIT_OK


# --- vol-compare -----------------------------------------------------------

def cmd_vol_compare(args, cfg) -> int:
    sec = cfg["vol-compare"]
    for k in ("dt", "window", "levels"):
        _override(sec, k, getattr(args, k, None))
    series = _load_series(sec)
    triples = estimation.vol_compare(series, _get(sec, "c_s"), _get(sec, "theta"),
                                     _get(sec, "window"))
    out = _out_dir(args)
    _write_csv(out / "vol_compare.csv",
               ["window", "t0", "n", "sigma_rv", "sigma_rcg", "sigma_realized"],
               [[t.window, t.t0, t.n, t.sigma_rv, t.sigma_rcg, t.sigma_realized] for t in triples])
    if args.plot:
        from . import plotting

        plotting.plot_series(out / "vol_compare.png", [t.window for t in triples],
                             {"RV": [t.sigma_rv for t in triples],
                              "RCG": [t.sigma_rcg for t in triples],
                              "realized": [t.sigma_realized for t in triples]},
                             "window", "price volatility [1/sqrt(s)]")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "profile-fit": cmd_profile_fit,
            "estimate": cmd_estimate, "vol-compare": cmd_vol_compare}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [model] and per-command sections")
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    common.add_argument("--input", help="input file (overrides the section's 'input' key)")
    common.add_argument("--plot", action="store_true", help="also render PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="lobspde", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate factor paths",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    s.add_argument("--seed", type=int, help="master seed (default 0)")
    s.add_argument("--dt", type=float, help="time step in seconds (default 0.01)")
    s.add_argument("--paths", type=int, help="number of paths (default 1)")
    s.add_argument("--scheme", choices=["exact", "milstein"], help="factor scheme (default exact)")

    f = sub.add_parser("profile-fit", parents=[common], help="fit book shapes per window")
    f.add_argument("--levels", type=int, help="book levels per side (default 20)")
    f.add_argument("--window", type=float, help="window length in seconds (default 1800)")
    f.add_argument("--nonlinear-scaling", action="store_true",
                   help="also fit the power-scaling exponent")

    for name, helptext in (("estimate", "estimate depth-dynamics parameters"),
                           ("vol-compare", "compare price volatility estimators")):
        e = sub.add_parser(name, parents=[common], help=helptext)
        e.add_argument("--dt", type=float, help="resampling step in seconds (default 0.01)")
        default_window = SECTION_DEFAULTS[name]["window"]
        e.add_argument("--window", type=float,
                       help=f"window length in seconds (default {default_window})")
        e.add_argument("--levels", type=int, help="levels averaged into depth (default 2)")
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.input:
            cfg[args.command]["input"] = args.input
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (data_io.DataError, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (estimation.EstimationError, sde_core.NonErgodicError, FloatingPointError) as exc:
        log.error("numerical diagnostic failed: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
