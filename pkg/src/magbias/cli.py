"""Command-line entry point: ``magbias <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .attitude import NavTrack, attitudes_from_imu, dead_reckon, heading_rmse, track_error
from .ekf import FilterConfig, FilterDivergence, compensate, run_filter
from .ellipsoid import fit_ellipsoid, sphere_coverage_metric
from .logio import (
    DataError,
    RunConfig,
    emit_result,
    file_digest,
    filter_config_to_dict,
    load_run_config,
    parse_log,
    parse_truth,
    read_result,
    save_run_config,
    write_log,
    write_rows,
    write_truth,
)
from .observability import gramian_along_trace
from .simulate import PRESETS, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
TRACE_PERIOD = 1.0

log = logging.getLogger("magbias")


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _filter_config(args) -> tuple[FilterConfig, dict]:
    rc = load_run_config(args.config) if args.config else RunConfig(FilterConfig())
    cfg = rc.filter
    if getattr(args, "field_mag_sq", None) is not None:
        cfg.field_mag_sq = float(args.field_mag_sq)
    return cfg, filter_config_to_dict(cfg)


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _compensated(imu, result):
    if result.m_b is None or not np.all(np.isfinite(result.m_b)) or not np.all(np.isfinite(result.t_p)):
        raise DataError("calibration record has no usable estimates")
    try:
        return compensate(imu.mag, imu.gyro, result)
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from None


# ---------------------------------------------------------------- commands

def cmd_simulate(args) -> int:
    kw = {"rng_seed": args.seed}
    if args.duration is not None:
        kw["duration"] = args.duration
    if args.speed:
        kw["speed"] = args.speed
        kw["sigma_v"] = args.sigma_v
    spec = PRESETS[args.preset](**kw)
    imu, truth = generate(spec)
    out = _outdir(args.out)
    write_log(imu, out / "imu.csv")
    write_truth(truth, out / "truth.csv")
    cfg = FilterConfig(field_mag_sq=spec.field_mag_sq, declination=spec.heading_offset)
    save_run_config(RunConfig(cfg, preset=args.preset, log="imu.csv", rng_seed=args.seed), out / "config.json")
    print(f"wrote {len(imu)} samples to {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg, echo = _filter_config(args)
    imu = parse_log(args.log)
    try:
        result, trace = run_filter(imu, cfg)
    except FilterDivergence as exc:
        raise NumericalFailure(str(exc)) from None
    out = _outdir(args.out)
    emit_result(result, out / "result.json", config=echo, input_digest=file_digest(args.log))
    step = 1 if args.full_trace else max(1, int(round(TRACE_PERIOD / cfg.tau)))
    sel = slice(None, None, step)
    names = ["mt_x", "mt_y", "mt_z", "mb_x", "mb_y", "mb_z", "a", "b", "c", "d", "e", "f", "wb_x", "wb_y", "wb_z"]
    write_rows(
        out / "trace.csv",
        ["t"] + names + [f"var_{n}" for n in names],
        [trace.times[sel], trace.states[sel], trace.sigma_diag[sel]],
    )
    status = "converged" if result.converged else "not converged"
    print(f"{status}; m_b={np.round(result.m_b, 5).tolist()} w_b={np.round(result.w_b, 6).tolist()}")
    return EXIT_OK


def cmd_batch_fit(args) -> int:
    cfg, echo = _filter_config(args)
    imu = parse_log(args.log)
    try:
        fit = fit_ellipsoid(imu.mag, cfg.field_mag_sq)
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from None
    result = fit.to_result()
    result.diagnostics["coverage"] = sphere_coverage_metric(imu.mag)
    out = _outdir(args.out)
    emit_result(result, out / "result.json", config=echo, input_digest=file_digest(args.log))
    if not fit.valid:
        print(f"warning: ellipsoid fit invalid: {fit.reason}", file=sys.stderr)
    else:
        print(f"valid fit; m_b={np.round(fit.m_b_hat, 5).tolist()} cond={fit.condition_number:.3g}")
    return EXIT_OK


def _attitudes(args):
    cfg, _ = _filter_config(args)
    imu = parse_log(args.log)
    result = read_result(args.calib)
    m_t, _ = _compensated(imu, result)
    try:
        att = attitudes_from_imu(m_t, imu.accel, cfg.declination)
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from None
    return cfg, imu, att


def cmd_heading(args) -> int:
    _, imu, att = _attitudes(args)
    out = _outdir(args.out)
    write_rows(out / "attitude.csv", ["t", "roll", "pitch", "heading"], [imu.t, att])
    summary = {"samples": len(imu)}
    if args.truth:
        truth = parse_truth(args.truth)
        if len(truth.t) != len(imu.t) or not np.allclose(truth.t, imu.t, rtol=0, atol=1e-9):
            raise DataError(f"{args.truth}: truth times do not match the log")
        keep = imu.t - imu.t[0] >= args.skip
        summary["heading_rmse_deg"] = heading_rmse(att[keep, 2], truth.attitude[keep, 2])
        summary["skip_s"] = args.skip
        print(f"heading RMSE {summary['heading_rmse_deg']:.4f} deg")
    with open(out / "heading_summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return EXIT_OK


def cmd_navtrack(args) -> int:
    _, imu, att = _attitudes(args)
    if imu.velocity is None or imu.gps is None:
        raise DataError(f"{args.log}: navtrack needs vx,vy,vz and gps_x,gps_y columns")
    ok_v = np.all(np.isfinite(imu.velocity), axis=1)
    if ok_v.sum() < 2:
        raise DataError(f"{args.log}: fewer than two velocity readings")
    ok_g = np.all(np.isfinite(imu.gps), axis=1)
    if not ok_g.any():
        raise DataError(f"{args.log}: no GPS fixes")
    t = imu.t[ok_v]
    p0 = [np.interp(t[0], imu.t[ok_g], imu.gps[ok_g, i]) for i in range(2)] + [0.0]
    track = dead_reckon(imu.velocity[ok_v], att[ok_v], np.eye(3), p0, t)
    _, err = track_error(track, NavTrack(imu.t[ok_g], imu.gps[ok_g]))
    out = _outdir(args.out)
    write_rows(out / "track.csv", ["t", "x", "y", "z"], [track.times, track.positions])
    summary = {"terminal_error_m": float(err[-1]), "max_error_m": float(err.max()), "samples": int(len(t))}
    with open(out / "navtrack_summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"terminal error {err[-1]:.3f} m")
    return EXIT_OK


def cmd_observability(args) -> int:
    cfg, _ = _filter_config(args)
    imu = parse_log(args.log)
    try:
        _, trace = run_filter(imu, cfg)
        g = gramian_along_trace(imu, cfg, trace, max(1, int(args.stride)))
    except FilterDivergence as exc:
        raise NumericalFailure(str(exc)) from None
    record = {"rank": g.rank, "singular_values": g.singular_values.tolist(), "full_rank": g.rank == 15}
    text = json.dumps(record, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="magbias", description="Magnetometer and gyro bias calibration tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="write a synthetic IMU log, truth and config")
    s.add_argument("--preset", choices=sorted(PRESETS), required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float)
    s.add_argument("--speed", type=float, default=0.0, help="forward speed in m/s; adds DVL and GPS columns")
    s.add_argument("--sigma-v", type=float, default=0.01)
    s.set_defaults(func=cmd_simulate)

    def common(sp, config_required=False):
        sp.add_argument("--log", required=True)
        sp.add_argument("--config", required=config_required)
        sp.add_argument("--field-mag-sq", type=float, help="override the config's squared field magnitude")

    s = sub.add_parser("calibrate", help="run the bias filter over a log")
    common(s)
    s.add_argument("--out", required=True)
    s.add_argument("--full-trace", action="store_true", help="write every filter tick, not 1 Hz")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("batch-fit", help="magnetometer-only ellipsoid fit")
    common(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_batch_fit)

    s = sub.add_parser("heading", help="per-sample attitude from a calibration")
    common(s)
    s.add_argument("--calib", required=True)
    s.add_argument("--truth")
    s.add_argument("--skip", type=float, default=0.0, help="seconds excluded from the RMSE")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_heading)

    s = sub.add_parser("navtrack", help="dead-reckoned track and error against GPS")
    common(s)
    s.add_argument("--calib", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_navtrack)

    s = sub.add_parser("observability", help="Gramian rank along the estimated trajectory")
    common(s, config_required=True)
    s.add_argument("--stride", type=int, default=1, help="use every n-th filter tick")
    s.add_argument("--out")
    s.set_defaults(func=cmd_observability)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
