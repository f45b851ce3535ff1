"""Forward problem c(y) u_tt = u_yy, boundary data extraction and the travel-time transform."""

from __future__ import annotations

import logging
import math
from typing import Literal

import numpy as np
from pydantic import field_validator, model_validator
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator

from .convexify import PotentialProfile
from .errors import ConfigurationError
from .grid_core import (
    ArrayModel,
    GridFn1D,
    GridFn2D,
    UniformGrid1D,
    UniformGrid2D,
    as_finite_array,
    cubic_spline_resample,
)
from .models import DielectricModel, ForwardConfig

logger = logging.getLogger(__name__)

AUX_COUNT = 8001


class TimeSeries(ArrayModel):
    t0: float = 0.0
    dt: float
    samples: np.ndarray

    @field_validator("samples", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return as_finite_array(value, "samples", 1)

    @field_validator("dt")
    @classmethod
    def _positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("dt must be positive")
        return value

    @classmethod
    def on_grid(cls, grid: UniformGrid1D, samples: np.ndarray) -> TimeSeries:
        return cls(t0=grid.start, dt=grid.step, samples=samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def grid(self) -> UniformGrid1D:
        return UniformGrid1D(start=self.t0, step=self.dt, count=self.samples.size)

    def evaluate(self, t: np.ndarray | float) -> np.ndarray:
        """Linear interpolation, zero outside the sampled window."""
        return np.interp(t, self.times, self.samples, left=0.0, right=0.0)

    def with_samples(self, samples: np.ndarray) -> TimeSeries:
        return TimeSeries(t0=self.t0, dt=self.dt, samples=samples)


class BoundaryData(ArrayModel):
    g0: TimeSeries
    g1: TimeSeries

    @model_validator(mode="after")
    def _shared_sampling(self) -> BoundaryData:
        if (self.g0.t0, self.g0.dt, self.g0.samples.size) != (self.g1.t0, self.g1.dt, self.g1.samples.size):
            raise ValueError("g0 and g1 must share their sampling")
        return self

    @property
    def dt(self) -> float:
        return self.g0.dt

    @property
    def duration(self) -> float:
        return self.g0.dt * (self.g0.samples.size - 1)

    @property
    def times(self) -> np.ndarray:
        return self.g0.times


class WaveField(GridFn2D):
    """u(y, t) with the y axis on rows; ``grid.xgrid`` holds the y nodes."""

    @property
    def ygrid(self) -> UniformGrid1D:
        return self.grid.xgrid


def _required_time_steps(duration: float, hy: float, cmax: float) -> int:
    return math.ceil(duration * math.sqrt(cmax) / hy)


def source_sharpness(cfg: ForwardConfig) -> float:
    """Sharpness of exp(-s y^2) after widening the source to at least ``source_min_cells`` steps of h_y."""
    floor = cfg.source_min_cells * cfg.ygrid.step
    if floor <= 0:
        return cfg.source_sharpness
    return min(cfg.source_sharpness, 1.0 / (2.0 * floor**2))


def solve_forward(model: DielectricModel, cfg: ForwardConfig) -> WaveField:
    """Explicit leapfrog with first-order absorbing ends u_y +- sqrt(c) u_t = 0."""
    ygrid, tgrid = cfg.ygrid, cfg.tgrid
    hy, ht = ygrid.step, tgrid.step
    y = ygrid.nodes
    c = model.evaluate(y)
    cmax = float(c.max())
    if ht * math.sqrt(cmax) > hy * (1.0 + 1e-12):
        raise ConfigurationError(
            f"CFL condition violated: h_t*sqrt(max c) = {ht * math.sqrt(cmax):.6g} exceeds "
            f"h_y = {hy:.6g}; need n_t >= {_required_time_steps(cfg.duration, hy, cmax)}"
        )

    source = np.exp(-source_sharpness(cfg) * y**2)
    source /= source.sum() * hy
    coef = (ht / hy) ** 2 / c
    left = ht / (hy * math.sqrt(c[0]))
    right = ht / (hy * math.sqrt(c[-1]))

    # time-major while stepping
    u = np.zeros((tgrid.count, ygrid.count))
    lap = np.zeros_like(source)
    lap[1:-1] = source[:-2] - 2.0 * source[1:-1] + source[2:]
    u[1] = ht * source + (ht**3 / 6.0) * lap / (hy**2 * c)
    u[1, 0] = 0.0
    u[1, -1] = 0.0

    for n in range(1, tgrid.count - 1):
        cur, prv, nxt = u[n], u[n - 1], u[n + 1]
        nxt[1:-1] = 2.0 * cur[1:-1] - prv[1:-1] + coef[1:-1] * (cur[:-2] - 2.0 * cur[1:-1] + cur[2:])
        nxt[0] = cur[0] + left * (cur[1] - cur[0])
        nxt[-1] = cur[-1] - right * (cur[-1] - cur[-2])

    logger.debug("forward solve: %d x %d nodes, courant %.4f", ygrid.count, tgrid.count, ht * math.sqrt(cmax) / hy)
    return WaveField(grid=UniformGrid2D(xgrid=ygrid, tgrid=tgrid), values=u.T)


def _origin_index(ygrid: UniformGrid1D) -> int:
    index = int(round(-ygrid.start / ygrid.step))
    if not 0 < index < ygrid.count - 2 or abs(ygrid.start + index * ygrid.step) > 1e-9 * ygrid.step:
        raise ConfigurationError("y = 0 is not an interior node of the forward grid")
    return index


def extract_boundary_data(
    field: WaveField, stencil: Literal["central", "one_sided"] = "central"
) -> BoundaryData:
    """g0 = u(0, t) and g1 = u_y(0, t) from the field.

    The default g1 stencil is the second-order central difference across y = 0, which the absorbing
    setup keeps smooth; ``one_sided`` is the second-order forward difference into the slab.
    """
    ygrid = field.ygrid
    i0 = _origin_index(ygrid)
    u = field.values
    h = ygrid.step
    g0 = u[i0]
    if stencil == "central":
        g1 = (u[i0 + 1] - u[i0 - 1]) / (2.0 * h)
    else:
        g1 = (-3.0 * u[i0] + 4.0 * u[i0 + 1] - u[i0 + 2]) / (2.0 * h)
    tgrid = field.grid.tgrid
    return BoundaryData(g0=TimeSeries.on_grid(tgrid, g0), g1=TimeSeries.on_grid(tgrid, g1))


def subtract_incident(data: BoundaryData, reference: BoundaryData) -> BoundaryData:
    """Scattered part of the data: the same-configuration run with c = 1 removed."""
    return BoundaryData(
        g0=data.g0.with_samples(data.g0.samples - reference.g0.samples),
        g1=data.g1.with_samples(data.g1.samples - reference.g1.samples),
    )


def reference_run(cfg: ForwardConfig) -> BoundaryData:
    background = DielectricModel(kind="constant", level=1.0, cbar=2.0)
    return extract_boundary_data(solve_forward(background, cfg), cfg.boundary_stencil)


def absorbing_residual(
    field: WaveField, side: Literal["left", "right"], c_boundary: float = 1.0
) -> float:
    """max_t |u_y +- sqrt(c) u_t| at one boundary node, relative to max |u_t| there.

    Measured with second-order one-sided y and central t differences, so the
    first-order boundary discretization shows up as an O(h) residual.
    """
    u = field.values
    hy, ht = field.grid.hx, field.grid.ht
    if side == "left":
        u_y = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * hy)
        sign = -1.0
        edge = u[0]
    else:
        u_y = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * hy)
        sign = 1.0
        edge = u[-1]
    u_t = (edge[2:] - edge[:-2]) / (2.0 * ht)
    scale = np.max(np.abs(u_t)) if u_t.size else 0.0
    if scale == 0.0:
        return 0.0
    residual = u_y[1:-1] + sign * math.sqrt(c_boundary) * u_t
    return float(np.max(np.abs(residual)) / scale)


def discrete_energy(field: WaveField, c: np.ndarray | None = None) -> np.ndarray:
    """sum(c u_t^2 + u_y^2) h_y per interior time level, u_t centred in time."""
    u = field.values
    hy, ht = field.grid.hx, field.grid.ht
    weight = np.ones(u.shape[0]) if c is None else np.asarray(c, dtype=float)
    u_t = (u[:, 2:] - u[:, :-2]) / (2.0 * ht)
    u_y = np.diff(u[:, 1:-1], axis=0) / hy
    return (np.sum(weight[:, None] * u_t**2, axis=0) + np.sum(u_y**2, axis=0)) * hy


def travel_time_map(model: DielectricModel, ygrid: UniformGrid1D) -> GridFn1D:
    if abs(ygrid.start) > 1e-12:
        raise ConfigurationError("travel-time map needs a y grid starting at 0")
    speed = np.sqrt(model.evaluate(ygrid.nodes))
    return GridFn1D(grid=ygrid, values=cumulative_simpson(speed, dx=ygrid.step, initial=0.0))


def invert_travel_time(xmap: GridFn1D) -> PchipInterpolator:
    """Monotone cubic y(x) from a sampled x(y)."""
    return PchipInterpolator(xmap.values, xmap.nodes, extrapolate=False)


def _potential_in_y(model: DielectricModel, count: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ygrid = UniformGrid1D.spanning(0.0, 1.0, count)
    y = ygrid.nodes
    c = model.evaluate(y)
    root = np.sqrt(c)
    s = c**-0.25
    s_x = np.gradient(s, ygrid.step, edge_order=2) / root
    s_xx = np.gradient(s_x, ygrid.step, edge_order=2) / root
    r = s_xx / s - 2.0 * (s_x / s) ** 2
    x = cumulative_simpson(root, dx=ygrid.step, initial=0.0)
    return y, x, r


def true_potential(
    model: DielectricModel, xgrid: UniformGrid1D, refined_count: int = 450, aux_count: int = AUX_COUNT
) -> PotentialProfile:
    """Ground-truth r(x) = S''/S - 2 (S'/S)^2 with S = c^(-1/4)(y(x)); zero beyond x(1)."""
    y, x, r_of_y = _potential_in_y(model, aux_count)
    y_of_x = PchipInterpolator(x, y, extrapolate=False)
    b = float(x[-1])

    def evaluate(points: np.ndarray) -> np.ndarray:
        out = np.zeros_like(points)
        inside = (points >= 0.0) & (points <= b)
        out[inside] = np.interp(y_of_x(points[inside]), y, r_of_y)
        return out

    refined = UniformGrid1D.spanning(xgrid.start, xgrid.stop, refined_count)
    return PotentialProfile(
        grid=xgrid,
        values=evaluate(xgrid.nodes),
        refined=GridFn1D(grid=refined, values=evaluate(refined.nodes)),
    )


def cell_averaged_potential(
    model: DielectricModel, xgrid: UniformGrid1D, refined_count: int = 450, aux_count: int = AUX_COUNT
) -> PotentialProfile:
    """Mean of r* over each cell [x_i, x_i + h_x], the quantity 4 (q[i+1, 0] - q[i, 0]) / h_x estimates.

    Laid out like ``extract_r``: the value of cell i sits on node i and the last node carries 0.
    """
    _, x, r_of_y = _potential_in_y(model, aux_count)
    antiderivative = cumulative_simpson(r_of_y, x=x, initial=0.0)
    at_nodes = np.interp(xgrid.nodes, x, antiderivative)
    values = np.zeros(xgrid.count)
    values[:-1] = np.diff(at_nodes) / xgrid.step
    coarse = GridFn1D(grid=xgrid, values=values)
    refined = cubic_spline_resample(coarse, UniformGrid1D.spanning(xgrid.start, xgrid.stop, refined_count))
    return PotentialProfile(grid=xgrid, values=values, refined=refined)


def interface_depth(model: DielectricModel, aux_count: int = AUX_COUNT) -> float:
    """b = x(1), the travel time to the bottom of the medium."""
    _, x, _ = _potential_in_y(model, aux_count)
    return float(x[-1])
