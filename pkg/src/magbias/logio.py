"""CSV logs, JSON run configs and result records.

Units are fixed at the file boundary: seconds, gauss, rad/s, m/s^2, metres.
Floats are written with ``repr`` so a write/parse/write cycle is bit-exact.
Empty cells in optional columns mean "no reading" and parse to NaN.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .ekf import CalibrationResult, FilterConfig
from .samples import ImuLog

REQUIRED_COLUMNS = ("t", "mx", "my", "mz", "wx", "wy", "wz", "ax", "ay", "az")
VELOCITY_COLUMNS = ("vx", "vy", "vz")
GPS_COLUMNS = ("gps_x", "gps_y")
TRUTH_COLUMNS = ("t", "roll", "pitch", "heading")
RESULT_FORMAT = "magbias-result/1"


class DataError(ValueError):
    """Malformed input file. The message names the file and line."""


def _fmt(x: float) -> str:
    return "" if math.isnan(x) else repr(float(x))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_table(path, required, optional_groups) -> tuple[list[str], np.ndarray]:
    """Parse a headed numeric CSV. Optional-group columns may be blank (NaN)."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        allowed = set(required).union(*optional_groups) if optional_groups else set(required)
        unknown = [h for h in header if h not in allowed]
        missing = [h for h in required if h not in header]
        if unknown or missing or len(set(header)) != len(header):
            raise DataError(
                f"{path}:1: bad header (missing {missing}, unknown {unknown}, got {header})"
            )
        for group in optional_groups:
            present = [c for c in group if c in header]
            if present and len(present) != len(group):
                raise DataError(f"{path}:1: bad header: partial column group {present} of {list(group)}")
        optional = set().union(*optional_groups) if optional_groups else set()
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            vals = []
            for name, cell in zip(header, row):
                cell = cell.strip()
                if cell == "":
                    if name not in optional:
                        raise DataError(f"{path}:{line}: column {name!r} is empty")
                    vals.append(math.nan)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{line}: column {name!r}: not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{line}: column {name!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append((line, vals))
    if not rows:
        raise DataError(f"{path}: no data rows")
    data = np.array([v for _, v in rows])
    t = data[:, header.index("t")]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if len(bad):
        i = int(bad[0]) + 1
        raise DataError(
            f"{path}:{rows[i][0]}: non-monotonic t (row {i + 1}: {t[i]!r} after {t[i - 1]!r})"
        )
    return header, data


def parse_log(path) -> ImuLog:
    """Read an IMU CSV log; DVL and GPS channels are returned when present."""
    header, data = _read_table(path, REQUIRED_COLUMNS, (VELOCITY_COLUMNS, GPS_COLUMNS))

    def cols(names):
        return data[:, [header.index(c) for c in names]]

    velocity = cols(VELOCITY_COLUMNS) if VELOCITY_COLUMNS[0] in header else None
    gps = cols(GPS_COLUMNS) if GPS_COLUMNS[0] in header else None
    return ImuLog(
        cols(("t",))[:, 0],
        cols(("mx", "my", "mz")),
        cols(("wx", "wy", "wz")),
        cols(("ax", "ay", "az")),
        velocity=velocity,
        gps=gps,
    )


def _write_table(path, header, columns) -> None:
    data = np.column_stack(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([_fmt(x) for x in row])


def write_log(log: ImuLog, path) -> None:
    header = list(REQUIRED_COLUMNS)
    columns = [log.t, log.mag, log.gyro, log.accel]
    if log.velocity is not None:
        header += VELOCITY_COLUMNS
        columns.append(log.velocity)
    if log.gps is not None:
        header += GPS_COLUMNS
        columns.append(log.gps)
    _write_table(path, header, columns)


@dataclass
class TruthTrack:
    t: np.ndarray
    attitude: np.ndarray  # (N, 3) roll, pitch, heading in rad
    position: Optional[np.ndarray] = None  # (N, 2) world x, y in m


def write_truth(truth, path) -> None:
    """Write ground truth (a simulator ``GroundTruth`` or :class:`TruthTrack`)."""
    header = list(TRUTH_COLUMNS)
    columns = [truth.t, truth.attitude]
    if truth.position is not None:
        header += ["x", "y"]
        columns.append(np.asarray(truth.position)[:, :2])
    _write_table(path, header, columns)


def parse_truth(path) -> TruthTrack:
    header, data = _read_table(path, TRUTH_COLUMNS, (("x", "y"),))
    idx = [header.index(c) for c in TRUTH_COLUMNS]
    pos = data[:, [header.index("x"), header.index("y")]] if "x" in header else None
    return TruthTrack(data[:, idx[0]], data[:, idx[1:]], pos)


def write_rows(path, header, columns) -> None:
    """Plain numeric CSV (traces, attitude tables, tracks)."""
    _write_table(path, list(header), columns)


# ---------------------------------------------------------------- run config

@dataclass
class RunConfig:
    """Filter settings plus run bookkeeping, stored as one flat JSON object."""

    filter: FilterConfig
    preset: Optional[str] = None
    log: Optional[str] = None
    out: Optional[str] = None
    rng_seed: Optional[int] = None


_RUN_KEYS = ("preset", "log", "out", "rng_seed")
_MATRIX_KEYS = ("Q", "R", "Sigma0")


def _matrix_to_json(M: np.ndarray):
    M = np.asarray(M, dtype=float)
    if np.array_equal(M, np.diag(np.diag(M))):
        return np.diag(M).tolist()
    return M.tolist()


def filter_config_to_dict(cfg: FilterConfig) -> dict:
    out = {}
    for f in fields(FilterConfig):
        v = getattr(cfg, f.name)
        if f.name in _MATRIX_KEYS:
            v = _matrix_to_json(v)
        elif isinstance(v, np.ndarray):
            v = v.tolist()
        out[f.name] = v
    return out


def run_config_to_dict(rc: RunConfig) -> dict:
    d = filter_config_to_dict(rc.filter)
    for k in _RUN_KEYS:
        d[k] = getattr(rc, k)
    return d


def run_config_from_dict(d: dict, source: str = "config") -> RunConfig:
    if not isinstance(d, dict):
        raise DataError(f"{source}: top level must be a JSON object")
    filter_keys = {f.name for f in fields(FilterConfig)}
    unknown = sorted(set(d) - filter_keys - set(_RUN_KEYS))
    if unknown:
        raise DataError(f"{source}: unknown keys {unknown}")
    fkw = {k: v for k, v in d.items() if k in filter_keys and v is not None}
    try:
        cfg = FilterConfig(**fkw)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{source}: {exc}") from None
    seed = d.get("rng_seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise DataError(f"{source}: rng_seed must be an integer")
    return RunConfig(cfg, d.get("preset"), d.get("log"), d.get("out"), seed)


def load_run_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return run_config_from_dict(d, str(path))


def save_run_config(rc: RunConfig, path) -> None:
    _dump_json(run_config_to_dict(rc), path)


# ---------------------------------------------------------------- results

def _clean(x):
    """JSON-safe copy: arrays to lists, non-finite floats to null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def _dump_json(obj, path) -> None:
    text = json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False)
    with open(path, "w") as fh:
        fh.write(text + "\n")


def result_to_dict(result: CalibrationResult, config: Optional[dict] = None, input_digest: Optional[str] = None) -> dict:
    sigma_diag = None if result.Sigma_final is None else np.diag(result.Sigma_final)
    return {
        "format": RESULT_FORMAT,
        "version": __version__,
        "method": result.method,
        "m_b": result.m_b,
        "t_p": result.t_p,
        "w_b": result.w_b,
        "sigma_diag": sigma_diag,
        "converged": result.converged,
        "convergence_time": result.convergence_time,
        "diagnostics": result.diagnostics,
        "config": config,
        "input_sha256": input_digest,
    }


def emit_result(result: CalibrationResult, path, config: Optional[dict] = None, input_digest: Optional[str] = None) -> None:
    """Write a result record. Output depends only on its inputs (no timestamps)."""
    _dump_json(result_to_dict(result, config, input_digest), path)


def _vec(x, n):
    if x is None:
        return None
    return np.array([math.nan if v is None else float(v) for v in x]).reshape(n)


def read_result(path) -> CalibrationResult:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(d, dict) or d.get("format") != RESULT_FORMAT:
        raise DataError(f"{path}: not a {RESULT_FORMAT} record")
    try:
        sd = d.get("sigma_diag")
        return CalibrationResult(
            m_b=_vec(d["m_b"], 3),
            t_p=_vec(d["t_p"], 6),
            w_b=_vec(d.get("w_b"), 3),
            Sigma_final=None if sd is None else np.diag(_vec(sd, 15)),
            converged=bool(d.get("converged", False)),
            convergence_time=d.get("convergence_time"),
            method=d.get("method", "ekf"),
            diagnostics=d.get("diagnostics") or {},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed result record: {exc}") from None
