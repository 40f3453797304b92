"""Batch command-line front-end.

Runs named experiments against a JSON config and writes their underlying
data (CSV/JSON/PGM) into an output directory together with a manifest that
reproduces the run byte-identically (`rerun`).

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure,
64 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (crosstalk_curve, efficiency_budget, powerlaw_fit,
                       tradeoff_curve, uniformity_stats)
from .array_synthesis import Tone, spot_position, synthesize_array
from .beam_optics import hg_suppression, stability_report
from .calibration import calibrate_and_verify, inject_aberrations
from .config import (RipaGeometry, LossModel, config_to_dict, derive_quantities,
                     load_config, paper_geometry, paper_losses, require_valid)
from .drive_compiler import compensate_envelope, tones_for_grid
from .errors import ConfigError, NumericalError, RipaError
from .focal_solver import (GridSpec, fit_gaussian_2d, fit_spot,
                           focal_field_direct, focal_field_numeric)
from .io_utils import (config_hash, write_csv, write_field_grid, write_json,
                       write_movie, write_trace_csv)
from .time_engine import (Channel, DriveProgram, Segment, extract_trajectories,
                          pd_filter, region_trace, rise_fall, simulate_movie,
                          static_program)

_SUBCOMMANDS = ("derive", "focal", "sweep", "grid", "crosstalk", "pulse",
                "move", "tradeoff", "budget", "calibrate", "stability",
                "rerun")

_DEFAULT_PARAMS: dict[str, dict] = {
    "derive": {},
    "focal": {"detuning": 0.0, "window_zones": 1.0, "array_points": 4096,
              "array_dx": 25e-6},
    "sweep": {"n_points": 41, "span_fsr2": 1.0},
    "grid": {"n": 11, "compensate": True},
    "crosstalk": {"sep_min": 1.0, "sep_max": 12.0, "n_points": 23,
                  "n_azimuth": 64, "tail_lo": 3.0, "tail_hi": 10.0},
    "pulse": {"duration": 1e-6, "dt": 0.5e-9, "f3db": 50e6,
              "region_half_width": 37.5e-6, "lead": 0.3e-6, "tail": 1.2e-6},
    "move": {"ramp_time": 200e-9, "pre_hold": 150e-9, "post_hold": 50e-9,
             "n_frames": 26, "resolution": 5e-6},
    "tradeoff": {"n": 100, "internal_loss": 0.01, "kappa_min": 1e-4,
                 "kappa_max": 0.2, "n_kappa": 25},
    "budget": {},
    "calibrate": {"model": "random-uniform", "amplitude": 3.141592653589793},
    "stability": {"hg_positions": 11},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit with EX_USAGE
        self.print_usage(sys.stderr)
        self.exit(64, f"{self.prog}: error: {message}\n")


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_overrides(geom, loss, params, overrides):
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        value = _parse_value(raw)
        if key.startswith("geometry."):
            field = key[len("geometry."):]
            try:
                geom = replace(geom, **{field: value})
            except TypeError as exc:
                raise ConfigError(f"unknown geometry field {field!r}") from exc
        elif key.startswith("loss."):
            field = key[len("loss."):]
            try:
                loss = replace(loss, **{field: value})
            except TypeError as exc:
                raise ConfigError(f"unknown loss field {field!r}") from exc
        else:
            name = key[len("params."):] if key.startswith("params.") else key
            if name not in params:
                raise ConfigError(f"unknown parameter {name!r}; valid: "
                                  f"{sorted(params)}")
            params[name] = value
    return geom, loss, params


def _spot_fit_near(geom, loss, detuning, window, n_grid=41):
    """Direct-evaluation Gaussian fit of one tone's first-zone spot."""
    arr = synthesize_array(Tone(detuning), geom, loss)
    x0, y0 = spot_position(detuning, geom)
    ax = x0 + np.linspace(-window, window, n_grid)
    ay = y0 + np.linspace(-window, window, n_grid)
    inten = np.abs(focal_field_direct(arr, geom, ax, ay)) ** 2
    return fit_gaussian_2d(ax, ay, inten)


def _run_derive(geom, loss, params, out, seed):
    dq = derive_quantities(geom)
    write_json(out / "derived.json", dq.to_dict())
    return {"fsr_1": dq.fsr_1}


def _run_focal(geom, loss, params, out, seed):
    arr = synthesize_array(Tone(params["detuning"]), geom, loss)
    spec = GridSpec(array_points=int(params["array_points"]),
                    array_dx=float(params["array_dx"]),
                    window_zones=float(params["window_zones"]))
    grid = focal_field_numeric(arr, geom, spec)
    write_field_grid(out / "spot", grid)
    fit = fit_spot(grid, window_center=spot_position(params["detuning"], geom),
                   window_radius=1.5 * derive_quantities(geom).spot_waist)
    write_json(out / "fit.json", {
        "center_x": fit.center[0], "center_y": fit.center[1],
        "w_x": fit.w_x, "w_y": fit.w_y, "peak": fit.peak,
        "residual": fit.residual})
    return {"w_y": fit.w_y}


def _run_sweep(geom, loss, params, out, seed):
    dq = derive_quantities(geom)
    span = params["span_fsr2"] * dq.fsr_2
    detunings = np.linspace(-span / 2, span / 2, int(params["n_points"]))
    rows = []
    for dv in detunings:
        fit = _spot_fit_near(geom, loss, dv, window=1.2 * dq.spot_waist)
        rows.append((dv, fit.center[0], fit.center[1], fit.peak))
    write_csv(out / "sweep.csv", ["detuning_hz", "x_m", "y_m", "peak"], rows)
    return {"n": len(rows)}


def _run_grid(geom, loss, params, out, seed):
    n = int(params["n"])
    tones = tones_for_grid(n, geom)
    if params["compensate"]:
        tones = compensate_envelope(tones, geom)
    dq = derive_quantities(geom)
    fits = []
    rows = []
    for k, tone in enumerate(tones):
        i, j = divmod(k, n)
        fit = _spot_fit_near(geom, loss, tone.detuning,
                             window=0.45 * dq.bz_extent / n)
        amp2 = tone.amplitude ** 2
        fits.append(replace(fit, peak=fit.peak))
        rows.append((i, j, tone.detuning, fit.center[0], fit.center[1],
                     fit.w_x, fit.w_y, fit.peak))
    write_csv(out / "grid_fits.csv",
              ["i", "j", "detuning_hz", "x_m", "y_m", "w_x_m", "w_y_m",
               "peak"], rows)
    sig_i, sig_wx, sig_wy = uniformity_stats(fits)
    write_json(out / "uniformity.json", {
        "sigma_intensity": sig_i, "sigma_w_x": sig_wx, "sigma_w_y": sig_wy,
        "n_spots": len(fits)})
    # long-exposure image: incoherent sum of the per-tone intensities
    axis = np.linspace(-dq.bz_extent / 2, dq.bz_extent / 2, 257)
    img = np.zeros((axis.size, axis.size))
    for tone in tones:
        arr = synthesize_array(tone, geom, loss)
        img += np.abs(focal_field_direct(arr, geom, axis, axis)) ** 2
    from .focal_solver import FieldGrid
    write_field_grid(out / "image", FieldGrid(np.sqrt(img), axis[1] - axis[0],
                                              axis[1] - axis[0],
                                              (axis[0], axis[0])))
    return {"sigma_intensity": sig_i}


def _run_crosstalk(geom, loss, params, out, seed):
    seps = np.linspace(params["sep_min"], params["sep_max"],
                       int(params["n_points"]))
    curve = crosstalk_curve(geom, loss, seps,
                            n_azimuth=int(params["n_azimuth"]))
    write_csv(out / "crosstalk.csv", ["separation", "value"],
              list(zip(curve.separations, curve.values)))
    result = {"n_points": int(curve.separations.size)}
    lo, hi = params["tail_lo"], params["tail_hi"]
    if np.sum((curve.separations >= lo) & (curve.separations <= hi)) >= 5:
        fit = powerlaw_fit(curve, (lo, hi))
        write_json(out / "powerlaw.json", {
            "exponent": fit.exponent, "residual": fit.residual,
            "tail_lo": lo, "tail_hi": hi, "n_points": fit.n_points})
        result["exponent"] = fit.exponent
    return result


def _pulse_program(duration):
    return DriveProgram([Channel([Segment(0.0, duration, "hold", 1.0, 0.0)])])


def _run_pulse(geom, loss, params, out, seed):
    duration, dt = params["duration"], params["dt"]
    span = (-params["lead"], params["tail"])
    trace = region_trace(_pulse_program(duration), geom, loss, (0.0, 0.0),
                         params["region_half_width"], dt, span)
    filtered = pd_filter(trace, params["f3db"])
    write_trace_csv(out / "pulse_raw.csv", trace)
    write_trace_csv(out / "pulse_filtered.csv", filtered)
    rise, fall = rise_fall(filtered)
    write_json(out / "rise_fall.json", {
        "rise_ns": rise * 1e9, "fall_ns": fall * 1e9,
        "f3db_hz": params["f3db"], "duration_s": duration})
    return {"rise_ns": rise * 1e9, "fall_ns": fall * 1e9}


def _move_program(geom, params):
    dq = derive_quantities(geom)
    pre, ramp, post = params["pre_hold"], params["ramp_time"], params["post_hold"]
    quarter = dq.fsr_2 / 4.0
    row2 = 3.0 * dq.fsr_2
    ch1 = Channel([
        Segment(0.0, pre, "hold", 1.0, -quarter),
        Segment(pre, ramp, "linear-frequency-ramp", 1.0, -quarter,
                detuning_end=quarter),
        Segment(pre + ramp, post, "hold", 1.0, quarter),
    ])
    ch2 = Channel([
        Segment(0.0, pre, "hold", 1.0, row2 + quarter),
        Segment(pre, ramp, "linear-frequency-ramp", 1.0, row2 + quarter,
                detuning_end=row2 - quarter),
        Segment(pre + ramp, post, "hold", 1.0, row2 - quarter),
    ])
    return DriveProgram([ch1, ch2])


def _run_move(geom, loss, params, out, seed):
    prog = _move_program(geom, params)
    pre, ramp = params["pre_hold"], params["ramp_time"]
    times = np.linspace(pre, pre + ramp, int(params["n_frames"]))
    movie = simulate_movie(prog, geom, loss, times,
                           resolution=params["resolution"])
    write_movie(out / "frames", movie, dt_meta=float(times[1] - times[0]))
    dq = derive_quantities(geom)
    paths = extract_trajectories(movie, min_separation=2 * dq.spot_waist)
    rows = []
    for pid, path in enumerate(paths):
        for k in range(path.t.size):
            rows.append((pid, path.t[k], path.x[k], path.y[k],
                         path.confidence[k], int(path.flagged[k])))
    write_csv(out / "trajectories.csv",
              ["path", "t_s", "x_m", "y_m", "confidence", "flagged"], rows)
    return {"n_paths": len(paths)}


def _run_tradeoff(geom, loss, params, out, seed):
    kappas = np.geomspace(params["kappa_min"], params["kappa_max"],
                          int(params["n_kappa"]))
    curve = tradeoff_curve(int(params["n"]), params["internal_loss"], kappas,
                           bz_extent=geom.bz_extent)
    write_csv(out / "tradeoff.csv", ["kappa", "eta", "rw"],
              list(zip(curve.kappa, curve.efficiency, curve.broadening)))
    write_json(out / "tradeoff_meta.json", {
        "n": curve.n, "internal_loss": curve.internal_loss,
        "operating_points": [{"kappa": loss.kappa_1, "stage": "first"},
                             {"kappa": loss.kappa_2, "stage": "second"}]})
    return {"max_eta": float(curve.efficiency.max())}


def _run_budget(geom, loss, params, out, seed):
    budget = efficiency_budget(loss, geom)
    write_json(out / "budget.json", budget.to_dict())
    return {"eta_total": budget.eta_total}


def _run_calibrate(geom, loss, params, out, seed):
    aberr = inject_aberrations(geom, params["model"], seed,
                               params["amplitude"])
    result = calibrate_and_verify(geom, aberr)
    mask = result.mask.per_beam_correction
    write_csv(out / "mask.csv", [f"j{j}" for j in range(geom.n_rows)],
              [tuple(mask[i, :]) for i in range(geom.n_cols)])
    cfg = config_to_dict(geom, loss)
    write_json(out / "mask_meta.json", {
        "reference_index": list(result.mask.reference_index),
        "geometry_hash": config_hash(cfg["geometry"]),
        "model": params["model"], "seed": seed})
    write_json(out / "strehl.json", {
        "strehl_before": result.strehl_before,
        "strehl_after": result.strehl_after})
    return {"strehl_after": result.strehl_after}


def _run_stability(geom, loss, params, out, seed):
    report = stability_report(geom)
    if report["stable"]:
        stats = hg_suppression(geom, loss,
                               n_positions=int(params["hg_positions"]))
        report["hg_suppression"] = {"min": stats.s_min, "mean": stats.s_mean,
                                    "max": stats.s_max}
    write_json(out / "stability.json", report)
    return {"stable": report["stable"]}


_RUNNERS = {
    "derive": _run_derive, "focal": _run_focal, "sweep": _run_sweep,
    "grid": _run_grid, "crosstalk": _run_crosstalk, "pulse": _run_pulse,
    "move": _run_move, "tradeoff": _run_tradeoff, "budget": _run_budget,
    "calibrate": _run_calibrate, "stability": _run_stability,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="ripa-sim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="JSON config (defaults to the reference device)")
    common.add_argument("--out", type=Path, required=True,
                        help="output directory for artifacts")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY=VALUE",
                        help="override geometry.*, loss.* or a parameter")
    for name in _RUNNERS:
        sub.add_parser(name, parents=[common])
    rerun = sub.add_parser("rerun")
    rerun.add_argument("manifest", type=Path)
    rerun.add_argument("--out", type=Path, required=True)
    return parser


def _execute(subcommand: str, geom, loss, params, out: Path, seed: int,
             overrides) -> dict:
    require_valid(geom, loss)
    out.mkdir(parents=True, exist_ok=True)
    cfg = config_to_dict(geom, loss)
    manifest = {
        "subcommand": subcommand,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "parameters": params,
        "seed": seed,
        "overrides": list(overrides),
        "tool_version": __version__,
    }
    write_json(out / "manifest.json", manifest)
    summary = _RUNNERS[subcommand](geom, loss, params, out, seed)
    print(json.dumps({"subcommand": subcommand, **summary}, sort_keys=True))
    return summary


def run(args) -> int:
    if args.subcommand == "rerun":
        with open(args.manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
        geom = RipaGeometry(**manifest["config"]["geometry"])
        loss = LossModel(**manifest["config"]["loss"])
        _execute(manifest["subcommand"], geom, loss, manifest["parameters"],
                 args.out, manifest["seed"], manifest["overrides"])
        return 0
    if args.config is not None:
        geom, loss = load_config(args.config)
    else:
        geom, loss = paper_geometry(), paper_losses()
    params = dict(_DEFAULT_PARAMS[args.subcommand])
    geom, loss, params = _apply_overrides(geom, loss, params, args.overrides)
    _execute(args.subcommand, geom, loss, params, args.out, args.seed,
             args.overrides)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, RipaError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
