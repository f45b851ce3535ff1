"""Shared builders for the inversion tests."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from wave_inverse.convexify import QField
from wave_inverse.grid_core import GridFn1D, GridFn2D, UniformGrid1D, UniformGrid2D
from wave_inverse.models import DielectricModel, InversionDomain
from wave_inverse.preprocess import DerivedData
from wave_inverse.wave_forward import TimeSeries

TEST1_MODEL = DielectricModel(kind="single_gaussian", amplitude=0.2, widths=[0.075], centers=[0.5])
TEST2_MODEL = DielectricModel(kind="double_gaussian", amplitude=0.2, widths=[0.1, 0.075], centers=[0.3, 0.7])


def constant_model(level: float = 1.0, cbar: float = 2.0) -> DielectricModel:
    return DielectricModel(kind="constant", level=level, cbar=cbar)


def grid_2d(n_x: int = 100, n_t: int = 100, hx: float = 0.01, ht: float = 0.02) -> UniformGrid2D:
    return UniformGrid2D(
        xgrid=UniformGrid1D(start=0.0, step=hx, count=n_x + 1),
        tgrid=UniformGrid1D(start=0.0, step=ht, count=n_t + 1),
    )


def sample_2d(grid: UniformGrid2D, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> GridFn2D:
    x, t = np.meshgrid(grid.xgrid.nodes, grid.tgrid.nodes, indexing="ij")
    return GridFn2D(grid=grid, values=f(x, t) + np.zeros_like(x))


def sample_1d(grid: UniformGrid1D, f: Callable[[np.ndarray], np.ndarray]) -> GridFn1D:
    return GridFn1D(grid=grid, values=f(grid.nodes) + np.zeros(grid.count))


def small_domain(n: int = 16, cbar: float = 1.2) -> InversionDomain:
    return InversionDomain(cbar=cbar, n_x=n, n_t=n)


def random_qfield(
    rng: np.random.Generator, n: int = 16, amplitude: float = 0.1, cbar: float = 1.2, zero_data: bool = False
) -> QField:
    grid = small_domain(n, cbar).grid
    count = grid.tgrid.count
    s0 = np.zeros(count) if zero_data else amplitude * rng.standard_normal(count)
    s1 = np.zeros(count) if zero_data else amplitude * rng.standard_normal(count)
    return QField.pinned(grid, amplitude * rng.standard_normal(grid.shape), s0, s1)


def gaussian_series(
    amplitude: float = 0.3, width: float = 50.0, center: float = 1.0, sign: int = -1, dt: float = 0.01, count: int = 201
) -> TimeSeries:
    t = dt * np.arange(count)
    return TimeSeries(dt=dt, samples=sign * amplitude * np.exp(-width * (t - center) ** 2))


def sampled_derived(
    domain: InversionDomain, s0: Callable[[np.ndarray], np.ndarray], s1: Callable[[np.ndarray], np.ndarray]
) -> DerivedData:
    tgrid = domain.data_tgrid
    t = tgrid.nodes
    return DerivedData(tgrid=tgrid, s0=s0(t) + np.zeros_like(t), s1=s1(t) + np.zeros_like(t))
