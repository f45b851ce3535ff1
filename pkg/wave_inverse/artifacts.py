"""CSV/JSON exchange files for every pipeline stage."""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from .convexify import DescentTrace, PotentialProfile
from .errors import IngestionError
from .grid_core import GridFn1D, GridFn2D, UniformGrid1D, UniformGrid2D
from .preprocess import DerivedData, ExperimentalTrace
from .recover_c import DielectricProfile
from .wave_forward import BoundaryData, TimeSeries

FLOAT_FORMAT = "%.17g"


def _read_frame(source: object, path: Path, **options: object) -> pd.DataFrame:
    try:
        return pd.read_csv(source, float_precision="round_trip", **options)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as error:
        raise IngestionError(f"{path}: {error}") from error


def _header(line: str, path: Path) -> dict[str, str]:
    if not line.startswith("#"):
        raise IngestionError(f"{path}: expected a '# key=value,...' header line")
    fields: dict[str, str] = {}
    for item in line.lstrip("#").strip().split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise IngestionError(f"{path}: malformed header entry {item!r}")
        fields[key.strip()] = value.strip()
    return fields


def _grid(fields: Mapping[str, str], suffix: str, path: Path) -> UniformGrid1D:
    try:
        return UniformGrid1D(
            start=float(fields[f"start_{suffix}"]),
            step=float(fields[f"step_{suffix}"]),
            count=int(fields[f"count_{suffix}"]),
        )
    except (KeyError, ValueError, ValidationError) as error:
        raise IngestionError(f"{path}: invalid {suffix} grid header ({error})") from error


def write_grid_fn(path: Path, f: GridFn1D | GridFn2D) -> Path:
    grids = [f.grid] if isinstance(f, GridFn1D) else [f.grid.xgrid, f.grid.tgrid]
    header = ",".join(
        f"start_{suffix}={float(grid.start)!r},step_{suffix}={float(grid.step)!r},count_{suffix}={int(grid.count)}"
        for grid, suffix in zip(grids, ("x", "t"))
    )
    values = f.values[:, None] if f.values.ndim == 1 else f.values
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write(f"# {header}\n")
        pd.DataFrame(values).to_csv(handle, header=False, index=False, float_format=FLOAT_FORMAT)
    return path


def read_grid_fn(path: Path) -> GridFn1D | GridFn2D:
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        fields = _header(handle.readline(), path)
        frame = _read_frame(handle, path, header=None)
    values = frame.to_numpy(dtype=float)
    try:
        if "count_t" in fields:
            grid = UniformGrid2D(xgrid=_grid(fields, "x", path), tgrid=_grid(fields, "t", path))
            return GridFn2D(grid=grid, values=values)
        return GridFn1D(grid=_grid(fields, "x", path), values=values[:, 0])
    except ValidationError as error:
        raise IngestionError(f"{path}: {error}") from error


def _read_columns(path: Path, columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    frame = _read_frame(path, path)
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise IngestionError(f"{path}: missing column(s) {', '.join(missing)}")
    if len(frame) < 2:
        raise IngestionError(f"{path}: need at least two rows")
    frame = frame[list(columns)].apply(pd.to_numeric, errors="coerce")
    if frame.isna().any().any():
        raise IngestionError(f"{path}: non-numeric entries")
    return frame


def _uniform(path: Path, nodes: np.ndarray) -> UniformGrid1D:
    steps = np.diff(nodes)
    step = float(steps.mean())
    if step <= 0 or np.max(np.abs(steps - step)) > 1e-6 * step:
        raise IngestionError(f"{path}: first column is not a uniform increasing grid")
    return UniformGrid1D(start=float(nodes[0]), step=step, count=nodes.size)


def _write_columns(path: Path, columns: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    pd.DataFrame(dict(columns)).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def write_boundary_data(path: Path, data: BoundaryData) -> Path:
    return _write_columns(path, {"t": data.times, "g0": data.g0.samples, "g1": data.g1.samples})


def read_boundary_data(path: Path) -> BoundaryData:
    frame = _read_columns(path, ("t", "g0", "g1"))
    grid = _uniform(path, frame["t"].to_numpy())
    return BoundaryData(
        g0=TimeSeries.on_grid(grid, frame["g0"].to_numpy()),
        g1=TimeSeries.on_grid(grid, frame["g1"].to_numpy()),
    )


def write_derived(path: Path, derived: DerivedData) -> Path:
    return _write_columns(path, {"t": derived.tgrid.nodes, "s0": derived.s0, "s1": derived.s1})


def read_derived(path: Path) -> DerivedData:
    frame = _read_columns(path, ("t", "s0", "s1"))
    grid = _uniform(path, frame["t"].to_numpy())
    return DerivedData(tgrid=grid, s0=frame["s0"].to_numpy(), s1=frame["s1"].to_numpy())


def write_potential(path: Path, r: PotentialProfile) -> Path:
    return _write_columns(path, {"x": r.grid.nodes, "r": r.values})


def read_potential(path: Path) -> PotentialProfile:
    frame = _read_columns(path, ("x", "r"))
    grid = _uniform(path, frame["x"].to_numpy())
    return PotentialProfile(grid=grid, values=frame["r"].to_numpy())


def write_dielectric(path: Path, c: DielectricProfile) -> Path:
    return _write_columns(path, {"y": c.grid.nodes, "c": c.values})


def read_dielectric(path: Path) -> DielectricProfile:
    frame = _read_columns(path, ("y", "c"))
    grid = _uniform(path, frame["y"].to_numpy())
    try:
        return DielectricProfile(grid=grid, values=frame["c"].to_numpy())
    except ValidationError as error:
        raise IngestionError(f"{path}: {error}") from error


def write_trace(path: Path, trace: DescentTrace) -> Path:
    return _write_columns(
        path,
        {
            "iter": np.asarray(trace.iterations, dtype=int),
            "K": np.asarray(trace.k_values),
            "gradnorm": np.asarray(trace.grad_norms),
            "step": np.asarray(trace.steps),
        },
    )


def read_experimental(path: Path) -> ExperimentalTrace:
    """Header ``# dt_ns=..,scale=..,background_lo=..,background_hi=..,polarity=..`` then one sample per line."""
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        fields = _header(handle.readline(), path)
        frame = _read_frame(handle, path, header=None)
    samples = frame.iloc[:, 0].to_numpy(dtype=float) if len(frame.columns) else np.empty(0)
    if samples.size == 0:
        raise IngestionError(f"{path}: no samples")
    try:
        return ExperimentalTrace(
            samples=samples,
            dt_ns=float(fields.get("dt_ns", 0.133)),
            scale=float(fields.get("scale", 1e-7)),
            background=(float(fields.get("background_lo", 1.0)), float(fields.get("background_hi", 1.0))),
            polarity=fields.get("polarity", "negative"),
        )
    except (ValueError, ValidationError) as error:
        raise IngestionError(f"{path}: {error}") from error


def write_experimental(path: Path, trace: ExperimentalTrace) -> Path:
    lo, hi = trace.background
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write(
            f"# dt_ns={float(trace.dt_ns)!r},scale={float(trace.scale)!r},background_lo={float(lo)!r},"
            f"background_hi={float(hi)!r},polarity={trace.polarity}\n"
        )
        pd.DataFrame({"sample": trace.samples}).to_csv(handle, header=False, index=False, float_format=FLOAT_FORMAT)
    return path


def write_json(path: Path, payload: BaseModel | Mapping[str, object]) -> Path:
    path = Path(path)
    if isinstance(payload, BaseModel):
        path.write_text(payload.model_dump_json(indent=2), encoding="utf-8")
    else:
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path
