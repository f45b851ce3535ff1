"""Uniform grids, grid functions, finite-difference stencils and spline resampling.

Point stencils take 1-based indices so that ``node(i) = start + (i - 1) * step``;
the vectorised helpers at the bottom operate on plain numpy arrays.
"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.interpolate import CubicSpline

from .errors import DomainError, GridIndexError


class ArrayModel(BaseModel):
    """Base for containers that carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def as_finite_array(value: object, name: str, ndim: int) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} contains non-finite entries")
    array.setflags(write=False)
    return array


class UniformGrid1D(BaseModel):
    model_config = ConfigDict(frozen=True)

    start: float = 0.0
    step: float = Field(gt=0)
    count: int = Field(ge=2)

    @classmethod
    def spanning(cls, start: float, stop: float, count: int) -> UniformGrid1D:
        return cls(start=start, step=(stop - start) / (count - 1), count=count)

    @property
    def stop(self) -> float:
        return self.start + (self.count - 1) * self.step

    @property
    def nodes(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    def node(self, i: int) -> float:
        if not 1 <= i <= self.count:
            raise GridIndexError(f"node index {i} outside 1..{self.count}")
        return self.start + (i - 1) * self.step

    def covers(self, other: UniformGrid1D) -> bool:
        slack = 1e-9 * max(1.0, abs(self.start), abs(self.stop))
        return other.start >= self.start - slack and other.stop <= self.stop + slack


class UniformGrid2D(BaseModel):
    model_config = ConfigDict(frozen=True)

    xgrid: UniformGrid1D
    tgrid: UniformGrid1D

    @property
    def hx(self) -> float:
        return self.xgrid.step

    @property
    def ht(self) -> float:
        return self.tgrid.step

    @property
    def n_x(self) -> int:
        return self.xgrid.count - 1

    @property
    def n_t(self) -> int:
        return self.tgrid.count - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.xgrid.count, self.tgrid.count

    @property
    def cell(self) -> float:
        return self.hx * self.ht


class GridFn1D(ArrayModel):
    grid: UniformGrid1D
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return as_finite_array(value, "values", 1)

    @model_validator(mode="after")
    def _shape_matches(self) -> GridFn1D:
        if self.values.shape != (self.grid.count,):
            raise ValueError(f"values length {self.values.shape[0]} != grid count {self.grid.count}")
        return self

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes


class GridFn2D(ArrayModel):
    grid: UniformGrid2D
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return as_finite_array(value, "values", 2)

    @model_validator(mode="after")
    def _shape_matches(self) -> GridFn2D:
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        return self


def _check(index: int, low: int, high: int, axis: str) -> None:
    if not low <= index <= high:
        raise GridIndexError(f"{axis} index {index} outside {low}..{high}")


def _at(f: GridFn2D, i: int, j: int) -> float:
    return float(f.values[i - 1, j - 1])


def dx_forward(f: GridFn2D, i: int, j: int) -> float:
    g = f.grid
    _check(i, 1, g.n_x, "x")
    _check(j, 1, g.n_t + 1, "t")
    return (_at(f, i + 1, j) - _at(f, i, j)) / g.hx


def dt_forward(f: GridFn2D, i: int, j: int) -> float:
    g = f.grid
    _check(i, 1, g.n_x + 1, "x")
    _check(j, 1, g.n_t, "t")
    return (_at(f, i, j + 1) - _at(f, i, j)) / g.ht


def dxx_central(f: GridFn2D, i: int, j: int) -> float:
    g = f.grid
    _check(i, 2, g.n_x, "x")
    _check(j, 1, g.n_t + 1, "t")
    return (_at(f, i - 1, j) - 2.0 * _at(f, i, j) + _at(f, i + 1, j)) / g.hx**2


def dtt_central(f: GridFn2D, i: int, j: int) -> float:
    g = f.grid
    _check(i, 1, g.n_x + 1, "x")
    _check(j, 2, g.n_t, "t")
    return (_at(f, i, j - 1) - 2.0 * _at(f, i, j) + _at(f, i, j + 1)) / g.ht**2


def dxt_forward(f: GridFn2D, i: int, j: int) -> float:
    g = f.grid
    _check(i, 1, g.n_x, "x")
    _check(j, 1, g.n_t, "t")
    mixed = (_at(f, i + 1, j + 1) - _at(f, i + 1, j)) - (_at(f, i, j + 1) - _at(f, i, j))
    return mixed / (g.hx * g.ht)


def discrete_l2(f: GridFn2D) -> float:
    return float(np.sum(f.values**2) * f.grid.cell)


def first_difference_sums(f: GridFn2D) -> tuple[float, float]:
    """x and t first-difference sums over i <= N_x, j <= N_t."""
    g = f.grid
    dx = forward_difference(f.values, g.hx, axis=0)[:, :-1]
    dt = forward_difference(f.values, g.ht, axis=1)[:-1, :]
    return float(np.sum(dx**2) * g.cell), float(np.sum(dt**2) * g.cell)


def second_difference_sums(f: GridFn2D) -> tuple[float, float]:
    """x and t second-difference sums over the interior 2..N_x, 2..N_t."""
    g = f.grid
    dxx = central_second_difference(f.values, g.hx, axis=0)[:, 1:-1]
    dtt = central_second_difference(f.values, g.ht, axis=1)[1:-1, :]
    return float(np.sum(dxx**2) * g.cell), float(np.sum(dtt**2) * g.cell)


def discrete_h2_seminorms(f: GridFn2D) -> float:
    return sum(first_difference_sums(f)) + sum(second_difference_sums(f))


def cubic_spline_resample(f: GridFn1D, target: UniformGrid1D) -> GridFn1D:
    if not f.grid.covers(target):
        raise DomainError(
            f"target [{target.start}, {target.stop}] outside source [{f.grid.start}, {f.grid.stop}]"
        )
    if target == f.grid:
        return f
    spline = CubicSpline(f.nodes, f.values, bc_type="natural")
    points = np.clip(target.nodes, f.grid.start, f.grid.stop)
    return GridFn1D(grid=target, values=spline(points))


def forward_difference(values: np.ndarray, step: float, axis: int = 0) -> np.ndarray:
    return np.diff(values, axis=axis) / step


def central_second_difference(values: np.ndarray, step: float, axis: int = 0) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = (v[:-2] - 2.0 * v[1:-1] + v[2:]) / step**2
    return np.moveaxis(out, 0, axis)
