"""On-disk formats: scenario text, field tables, checkpoints, reports.

Text formats share one sectioned grammar::

    # comment
    [section]
    scalar_key = value
    block_key:
      row
      row

Block rows are indented by exactly two spaces and run until the first
unindented line.  Scalar keys match the field names of the in-memory
types.  Unknown sections or keys are hard errors that name the offending
line.  Floats are written with ``repr`` so every value survives a
write/read round trip bit-for-bit.

Checkpoints are binary: a magic string, a JSON header (architecture,
normalization box, seed, weight manifest), then the Fourier matrix and the
flat weight vector as little-endian float64.

The evaluation report JSON nests all wall-clock figures under a single
``"timing"`` key; everything outside ``"timing"`` is a pure function of
the seeds and inputs.  All writers go through a temp-file-plus-rename so
readers never observe a half-written file.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .evaluation import BenchmarkReport, EvalReport, error_histogram
from .geometry import (
    BoundaryConditions,
    ChannelGeometry,
    RiverScenario,
    TimeSeries,
)
from .solver import FlowField
from .surrogate import FourierEncoder, NormalizationBox, SurrogateModel, _manifest
from .training import HistoryRow

__all__ = [
    "FormatError",
    "ScenarioFormatError",
    "FieldFormatError",
    "CheckpointFormatError",
    "serialize_scenario",
    "parse_scenario",
    "write_scenario",
    "read_scenario",
    "scenario_hash",
    "write_field",
    "read_field",
    "save_checkpoint",
    "load_checkpoint",
    "write_history",
    "read_history",
    "report_to_dict",
    "write_report",
    "write_benchmark",
    "atomic_write_text",
    "atomic_write_bytes",
]


class FormatError(ValueError):
    """Base for structured file-format violations."""


class ScenarioFormatError(FormatError):
    pass


class FieldFormatError(FormatError):
    pass


class CheckpointFormatError(FormatError):
    pass


# --------------------------------------------------------------------------
# atomic writes
# --------------------------------------------------------------------------


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# sectioned text grammar
# --------------------------------------------------------------------------


def _parse_sections(text: str, error_cls):
    """Parse the shared grammar into {section: {key: (lineno, value)}};
    block values are lists of row strings, scalars are strings."""
    sections: dict[str, dict] = {}
    current: str | None = None
    block: list | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        if block is not None:
            if raw.startswith("  "):
                block.append(raw[2:].strip())
                continue
            block = None
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise error_cls(f"line {lineno}: malformed section header {raw!r}")
            name = line[1:-1].strip()
            if name in sections:
                raise error_cls(f"line {lineno}: duplicate section [{name}]")
            sections[name] = {}
            current = name
            continue
        if current is None:
            raise error_cls(f"line {lineno}: content before any [section]")
        if line.endswith(":") and "=" not in line:
            key = line[:-1].strip()
            if key in sections[current]:
                raise error_cls(f"line {lineno}: duplicate key {key!r} in [{current}]")
            block = []
            sections[current][key] = (lineno, block)
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            key = key.strip()
            if key in sections[current]:
                raise error_cls(f"line {lineno}: duplicate key {key!r} in [{current}]")
            sections[current][key] = (lineno, value.strip())
            continue
        raise error_cls(f"line {lineno}: cannot parse {raw!r}")
    return sections


def _take(section: dict, section_name: str, key: str, error_cls):
    if key not in section:
        raise error_cls(f"[{section_name}] is missing required key {key!r}")
    _, value = section.pop(key)
    return value


def _take_float(section, section_name, key, error_cls) -> float:
    value = _take(section, section_name, key, error_cls)
    if isinstance(value, list):
        raise error_cls(f"[{section_name}] {key}: expected a scalar, found a block")
    try:
        return float(value)
    except ValueError as err:
        raise error_cls(f"[{section_name}] {key}: not a number: {value!r}") from err


def _take_str(section, section_name, key, error_cls) -> str:
    value = _take(section, section_name, key, error_cls)
    if isinstance(value, list):
        raise error_cls(f"[{section_name}] {key}: expected a scalar, found a block")
    return value


def _take_rows(section, section_name, key, error_cls) -> list[str]:
    value = _take(section, section_name, key, error_cls)
    if not isinstance(value, list):
        raise error_cls(f"[{section_name}] {key}: expected an indented block")
    return value


def _reject_unknown(sections: dict, expected: set[str], error_cls, kind: str):
    for name, body in sections.items():
        if name not in expected:
            lineno = min(ln for ln, _ in body.values()) if body else 0
            raise error_cls(f"unknown {kind} section [{name}]")
    for name in expected:
        if name not in sections:
            raise error_cls(f"missing required section [{name}]")


def _reject_leftover(section: dict, section_name: str, error_cls):
    if section:
        key = next(iter(section))
        lineno = section[key][0]
        raise error_cls(f"line {lineno}: unknown key {key!r} in [{section_name}]")


def _parse_series_rows(rows, section_name, key, error_cls) -> TimeSeries:
    ts, vs = [], []
    for i, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) != 2:
            raise error_cls(f"[{section_name}] {key} row {i + 1}: expected 't,value', got {row!r}")
        try:
            ts.append(float(parts[0]))
            vs.append(float(parts[1]))
        except ValueError as err:
            raise error_cls(f"[{section_name}] {key} row {i + 1}: not numeric: {row!r}") from err
    try:
        return TimeSeries(np.array(ts), np.array(vs))
    except ValueError as err:
        raise error_cls(f"[{section_name}] {key}: {err}") from err


def _series_rows(series: TimeSeries) -> list[str]:
    return [f"{t!r},{v!r}" for t, v in zip(series.t_hours.tolist(), series.values.tolist())]


# --------------------------------------------------------------------------
# scenario format
# --------------------------------------------------------------------------


def serialize_scenario(scenario: RiverScenario) -> str:
    g, b = scenario.geometry, scenario.boundaries
    lines = ["# stagecast scenario v1", "[geometry]"]
    for name in ("length_miles", "width_ft", "bed_slope", "manning_n", "bed_elevation_upstream_ft"):
        lines.append(f"{name} = {getattr(g, name)!r}")
    lines += ["", "[boundaries]"]
    lines.append(f"initial_depth_ft = {b.initial_depth_ft!r}")
    lines.append(f"initial_velocity_fps = {b.initial_velocity_fps!r}")
    lines.append("upstream_discharge_cfs:")
    lines += [f"  {row}" for row in _series_rows(b.upstream_discharge_cfs)]
    lines.append("downstream_stage_ft:")
    lines += [f"  {row}" for row in _series_rows(b.downstream_stage_ft)]
    lines += ["", "[stations]", "positions_miles:"]
    lines += [f"  {x!r}" for x in scenario.station_positions_miles]
    lines += ["", "[run]"]
    lines.append(f"t_total_hours = {scenario.t_total_hours!r}")
    lines.append(f"output_dt_hours = {scenario.output_dt_hours!r}")
    return "\n".join(lines) + "\n"


def parse_scenario(text: str) -> RiverScenario:
    err = ScenarioFormatError
    sections = _parse_sections(text, err)
    _reject_unknown(sections, {"geometry", "boundaries", "stations", "run"}, err, "scenario")

    sec = sections["geometry"]
    geometry = ChannelGeometry(
        length_miles=_take_float(sec, "geometry", "length_miles", err),
        width_ft=_take_float(sec, "geometry", "width_ft", err),
        bed_slope=_take_float(sec, "geometry", "bed_slope", err),
        manning_n=_take_float(sec, "geometry", "manning_n", err),
        bed_elevation_upstream_ft=_take_float(sec, "geometry", "bed_elevation_upstream_ft", err),
    )
    _reject_leftover(sec, "geometry", err)

    sec = sections["boundaries"]
    boundaries = BoundaryConditions(
        initial_depth_ft=_take_float(sec, "boundaries", "initial_depth_ft", err),
        initial_velocity_fps=_take_float(sec, "boundaries", "initial_velocity_fps", err),
        upstream_discharge_cfs=_parse_series_rows(
            _take_rows(sec, "boundaries", "upstream_discharge_cfs", err),
            "boundaries",
            "upstream_discharge_cfs",
            err,
        ),
        downstream_stage_ft=_parse_series_rows(
            _take_rows(sec, "boundaries", "downstream_stage_ft", err),
            "boundaries",
            "downstream_stage_ft",
            err,
        ),
    )
    _reject_leftover(sec, "boundaries", err)

    sec = sections["stations"]
    rows = _take_rows(sec, "stations", "positions_miles", err)
    _reject_leftover(sec, "stations", err)
    try:
        stations = tuple(float(r) for r in rows)
    except ValueError as exc:
        raise err(f"[stations] positions_miles: non-numeric row") from exc

    sec = sections["run"]
    t_total = _take_float(sec, "run", "t_total_hours", err)
    output_dt = _take_float(sec, "run", "output_dt_hours", err)
    _reject_leftover(sec, "run", err)

    try:
        return RiverScenario(
            geometry=geometry,
            boundaries=boundaries,
            station_positions_miles=stations,
            t_total_hours=t_total,
            output_dt_hours=output_dt,
        )
    except ValueError as exc:
        raise err(f"scenario is internally inconsistent: {exc}") from exc


def write_scenario(scenario: RiverScenario, path) -> None:
    atomic_write_text(path, serialize_scenario(scenario))


def read_scenario(path) -> RiverScenario:
    return parse_scenario(Path(path).read_text())


def scenario_hash(scenario: RiverScenario) -> str:
    """Content digest of the canonical serialization (platform-stable)."""
    return hashlib.sha256(serialize_scenario(scenario).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# field format
# --------------------------------------------------------------------------


def write_field(field: FlowField, scenario_digest: str, path) -> None:
    n_t, n_x = field.h.shape
    lines = ["# stagecast field v1", "[field]"]
    lines.append(f"n_stations = {n_x}")
    lines.append(f"n_times = {n_t}")
    lines.append("units = x:miles,t:hours,h:ft,u:ft/s")
    lines.append(f"scenario_hash = {scenario_digest}")
    lines.append(f"wall_clock_seconds = {float(field.wall_clock_seconds)!r}")
    lines.append("x_miles:")
    lines += [f"  {v!r}" for v in field.x_miles.tolist()]
    lines.append("t_hours:")
    lines += [f"  {v!r}" for v in field.t_hours.tolist()]
    lines += ["", "[data]", "t_x_h_u:"]
    h, u = field.h, field.u
    t_list, x_list = field.t_hours.tolist(), field.x_miles.tolist()
    for j, t in enumerate(t_list):
        hj, uj = h[j].tolist(), u[j].tolist()
        for k, x in enumerate(x_list):
            lines.append(f"  {t!r},{x!r},{hj[k]!r},{uj[k]!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_field(path) -> tuple[FlowField, str]:
    err = FieldFormatError
    sections = _parse_sections(Path(path).read_text(), err)
    _reject_unknown(sections, {"field", "data"}, err, "field")

    sec = sections["field"]
    n_x = int(_take_float(sec, "field", "n_stations", err))
    n_t = int(_take_float(sec, "field", "n_times", err))
    units = _take_str(sec, "field", "units", err)
    if units != "x:miles,t:hours,h:ft,u:ft/s":
        raise err(f"unsupported unit system {units!r}")
    digest = _take_str(sec, "field", "scenario_hash", err)
    wall = _take_float(sec, "field", "wall_clock_seconds", err)
    x = np.array([float(r) for r in _take_rows(sec, "field", "x_miles", err)])
    t = np.array([float(r) for r in _take_rows(sec, "field", "t_hours", err)])
    _reject_leftover(sec, "field", err)
    if x.size != n_x:
        raise err(f"x_miles has {x.size} rows, header says {n_x}")
    if t.size != n_t:
        raise err(f"t_hours has {t.size} rows, header says {n_t}")

    sec = sections["data"]
    rows = _take_rows(sec, "data", "t_x_h_u", err)
    _reject_leftover(sec, "data", err)
    if len(rows) != n_t * n_x:
        raise err(f"[data] has {len(rows)} rows, expected n_times*n_stations = {n_t * n_x}")
    table = np.empty((len(rows), 4))
    for i, row in enumerate(rows):
        parts = row.split(",")
        if len(parts) != 4:
            raise err(f"[data] row {i + 1}: expected 4 columns, got {row!r}")
        try:
            table[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise err(f"[data] row {i + 1}: not numeric: {row!r}") from exc
    tt = table[:, 0].reshape(n_t, n_x)
    xx = table[:, 1].reshape(n_t, n_x)
    if not np.array_equal(tt, np.broadcast_to(t[:, None], (n_t, n_x))):
        raise err("[data] time column disagrees with the t_hours grid")
    if not np.array_equal(xx, np.broadcast_to(x[None, :], (n_t, n_x))):
        raise err("[data] station column disagrees with the x_miles grid")
    field = FlowField(
        x_miles=x,
        t_hours=t,
        h=table[:, 2].reshape(n_t, n_x),
        u=table[:, 3].reshape(n_t, n_x),
        wall_clock_seconds=wall,
    )
    return field, digest


# --------------------------------------------------------------------------
# checkpoint format
# --------------------------------------------------------------------------

_CKPT_MAGIC = b"STAGECASTCKPT\x00"


def save_checkpoint(model: SurrogateModel, path, scenario_digest: str | None = None) -> None:
    header = {
        "format_version": 1,
        "use_fourier": model.uses_fourier,
        "m": model.encoder.m if model.uses_fourier else None,
        "sigma": model.encoder.sigma if model.uses_fourier else None,
        "width": model.width,
        "n_blocks": model.n_blocks,
        "activation": model.activation,
        "seed": model.seed,
        "norm": [
            model.norm.x_min_miles,
            model.norm.x_max_miles,
            model.norm.t_min_hours,
            model.norm.t_max_hours,
        ],
        "scenario_hash": scenario_digest,
        "manifest": [[name, list(shape)] for name, shape in model.manifest],
        "n_weights": int(model.weights.size),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b""
    if model.uses_fourier:
        payload += np.ascontiguousarray(model.encoder.b_matrix).astype("<f8").tobytes()
    payload += model.weights.astype("<f8").tobytes()
    atomic_write_bytes(path, _CKPT_MAGIC + struct.pack("<I", len(blob)) + blob + payload)


def load_checkpoint(path) -> tuple[SurrogateModel, str | None]:
    raw = Path(path).read_bytes()
    if not raw.startswith(_CKPT_MAGIC):
        raise CheckpointFormatError(f"{path}: not a stagecast checkpoint (bad magic)")
    offset = len(_CKPT_MAGIC)
    if len(raw) < offset + 4:
        raise CheckpointFormatError(f"{path}: truncated header length")
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: corrupt JSON header") from exc
    offset += header_len
    if header.get("format_version") != 1:
        raise CheckpointFormatError(f"{path}: unsupported format version {header.get('format_version')}")

    try:
        use_fourier = header["use_fourier"]
        manifest = tuple((name, tuple(shape)) for name, shape in header["manifest"])
        in_dim = 2 * header["m"] if use_fourier else 2
        declared = _manifest(in_dim, header["width"], header["n_blocks"])
        n_weights = header["n_weights"]
        activation = str(header["activation"])
        seed = int(header["seed"])
        norm = NormalizationBox(*[float(v) for v in header["norm"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"{path}: invalid header field: {exc}") from exc
    if manifest != declared:
        raise CheckpointFormatError(f"{path}: manifest disagrees with declared architecture")
    expected = sum(int(np.prod(shape)) for _, shape in manifest)
    if n_weights != expected:
        raise CheckpointFormatError(f"{path}: weight count {n_weights} != manifest total {expected}")

    body = raw[offset:]
    encoder = None
    if use_fourier:
        m = header["m"]
        need = m * 2 * 8
        if len(body) < need:
            raise CheckpointFormatError(f"{path}: truncated Fourier matrix")
        b = np.frombuffer(body[:need], dtype="<f8").astype(np.float64).reshape(m, 2)
        encoder = FourierEncoder(b, float(header["sigma"]))
        body = body[need:]
    if len(body) != n_weights * 8:
        raise CheckpointFormatError(
            f"{path}: weight payload is {len(body)} bytes, expected {n_weights * 8}"
        )
    weights = np.frombuffer(body, dtype="<f8").astype(np.float64)

    model = SurrogateModel(
        encoder=encoder,
        weights=weights,
        manifest=manifest,
        width=int(header["width"]),
        n_blocks=int(header["n_blocks"]),
        activation=activation,
        norm=norm,
        seed=seed,
    )
    return model, header.get("scenario_hash")


# --------------------------------------------------------------------------
# loss history and reports
# --------------------------------------------------------------------------

_HISTORY_HEADER = "iteration,data_loss,physics_loss,total_loss,lr"


def write_history(history, path) -> None:
    lines = [_HISTORY_HEADER]
    for row in history:
        lines.append(
            f"{row.iteration},{row.data_loss!r},{row.physics_loss!r},{row.total_loss!r},{row.lr!r}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_history(path) -> list[HistoryRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _HISTORY_HEADER:
        raise FormatError(f"{path}: missing history header {_HISTORY_HEADER!r}")
    out = []
    for i, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != 5:
            raise FormatError(f"{path} line {i}: expected 5 columns")
        out.append(
            HistoryRow(
                int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]), float(parts[4])
            )
        )
    return out


def report_to_dict(report: EvalReport) -> dict:
    """JSON-ready report; wall-clock figures live under the 'timing' key."""
    return {
        "datum": report.datum,
        "n_stations": report.n_stations,
        "n_times": report.n_times,
        "station_miles": report.station_miles.tolist(),
        "per_station_mrae": report.per_station_mrae.tolist(),
        "overall_stage_mrae": report.overall_stage_mrae,
        "overall_velocity_mrae": report.overall_velocity_mrae,
        "max_stage_abs_error_ft": report.max_stage_abs_error_ft,
        "mean_physics_residual": report.mean_physics_residual,
        "collocation_seed": report.collocation_seed,
        "n_collocation": report.n_collocation,
        "timing": {
            "solver_seconds": report.solver_seconds,
            "surrogate_seconds": report.surrogate_seconds,
            "speedup": report.speedup,
        },
    }


def write_report(report: EvalReport, out_dir) -> None:
    """Write report.json, per_station.csv, and error_histogram.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "report.json", json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")

    lines = ["station_miles,stage_mrae"]
    for x, e in zip(report.station_miles.tolist(), report.per_station_mrae.tolist()):
        lines.append(f"{x!r},{e!r}")
    atomic_write_text(out / "per_station.csv", "\n".join(lines) + "\n")

    edges, counts = error_histogram(report.per_station_mrae)
    lines = ["bin_left,bin_right,count"]
    for i, c in enumerate(counts.tolist()):
        lines.append(f"{edges[i]!r},{edges[i + 1]!r},{c}")
    atomic_write_text(out / "error_histogram.csv", "\n".join(lines) + "\n")


def write_benchmark(result: BenchmarkReport, path) -> None:
    payload = {
        "n_cells": result.n_cells,
        "n_points": result.n_points,
        "repetitions": result.repetitions,
        "timing": {
            "solver_seconds": result.solver_seconds,
            "surrogate_seconds": result.surrogate_seconds,
            "solver_median": result.solver_median,
            "surrogate_median": result.surrogate_median,
            "speedup": result.speedup,
        },
    }
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
