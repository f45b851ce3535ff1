"""Stage 1: Carleman-weighted functional K, its gradient, gradient descent and r(x) extraction.

Arrays are indexed ``values[I, J]`` with ``I = i - 1`` along x and ``J = j - 1``
along t. The pinned rows are I = 0, 1 (Dirichlet data s0 and the Neumann
data s1 at x = 0) and I = N_x - 1, N_x (zero Neumann at x = a).
"""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.integrate import simpson

from .errors import DivergenceError, GridIndexError
from .grid_core import (
    ArrayModel,
    GridFn1D,
    GridFn2D,
    UniformGrid1D,
    UniformGrid2D,
    as_finite_array,
    central_second_difference,
    cubic_spline_resample,
    dx_forward,
    dxt_forward,
    dxx_central,
    forward_difference,
)
from .models import CarlemanParams, DescentSummary, InversionDomain, StoppingRule

if TYPE_CHECKING:
    from .preprocess import DerivedData

logger = logging.getLogger(__name__)

REFINED_COUNT = 450
BoundaryFill = Literal["extrapolate", "exact"]


class PotentialProfile(ArrayModel):
    grid: UniformGrid1D
    values: np.ndarray
    refined: GridFn1D | None = None

    @field_validator("values", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return as_finite_array(value, "values", 1)

    @model_validator(mode="after")
    def _shape_matches(self) -> PotentialProfile:
        if self.values.shape != (self.grid.count,):
            raise ValueError("potential values do not match the grid")
        return self

    def as_grid_fn(self) -> GridFn1D:
        return GridFn1D(grid=self.grid, values=self.values)

    def refined_profile(self, count: int = REFINED_COUNT) -> GridFn1D:
        if self.refined is not None and self.refined.grid.count == count:
            return self.refined
        target = UniformGrid1D.spanning(self.grid.start, self.grid.stop, count)
        return cubic_spline_resample(self.as_grid_fn(), target)


class QField(ArrayModel):
    field: GridFn2D
    s0: np.ndarray
    s1: np.ndarray

    @field_validator("s0", "s1", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return as_finite_array(value, "boundary data", 1)

    @model_validator(mode="after")
    def _pinned(self) -> QField:
        v, hx = self.field.values, self.field.grid.hx
        if self.s0.shape != (v.shape[1],) or self.s1.shape != (v.shape[1],):
            raise ValueError("s0/s1 must be sampled on the t nodes")
        tol = 1e-9 * (1.0 + float(np.max(np.abs(v))))
        if (
            np.max(np.abs(v[0] - self.s0)) > tol
            or np.max(np.abs(v[1] - v[0] - hx * self.s1)) > tol
            or np.max(np.abs(v[-1] - v[-2])) > tol
        ):
            raise ValueError("q violates the pinned boundary rows")
        return self

    @classmethod
    def pinned(cls, grid: UniformGrid2D, values: np.ndarray, s0: np.ndarray, s1: np.ndarray) -> QField:
        v = np.array(values, dtype=float)
        v[0] = s0
        v[1] = v[0] + grid.hx * np.asarray(s1, dtype=float)
        v[-1] = v[-2]
        return cls(field=GridFn2D(grid=grid, values=v), s0=s0, s1=s1)

    def with_values(self, values: np.ndarray) -> QField:
        return QField.pinned(self.grid, values, self.s0, self.s1)

    @property
    def grid(self) -> UniformGrid2D:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def cwf(x: np.ndarray | float, t: np.ndarray | float, p: CarlemanParams) -> np.ndarray:
    return np.exp(-2.0 * p.lambda_ * (np.asarray(x) + p.alpha * np.asarray(t)))


def operator_M(q: QField, i: int, j: int) -> float:
    g = q.grid
    if not (2 <= i <= g.n_x and 1 <= j <= g.n_t):
        raise GridIndexError(f"M is defined for 2 <= i <= {g.n_x}, 1 <= j <= {g.n_t}; got ({i}, {j})")
    f = q.field
    nonlocal_slope = dx_forward(f, i, 1)
    return dxx_central(f, i, j) - 2.0 * dxt_forward(f, i, j) + 4.0 * nonlocal_slope * float(f.values[i - 1, j - 1])


def _m_block(v: np.ndarray, hx: float, ht: float) -> np.ndarray:
    """M on I = 1..N_x-1, J = 0..N_t-1."""
    dxx = (v[:-2, :-1] - 2.0 * v[1:-1, :-1] + v[2:, :-1]) / hx**2
    dxt = ((v[2:, 1:] - v[2:, :-1]) - (v[1:-1, 1:] - v[1:-1, :-1])) / (hx * ht)
    slope = (v[2:, 0] - v[1:-1, 0]) / hx
    return dxx - 2.0 * dxt + 4.0 * slope[:, None] * v[1:-1, :-1]


def _weight_block(grid: UniformGrid2D, p: CarlemanParams) -> np.ndarray:
    x, t = grid.xgrid.nodes, grid.tgrid.nodes
    return cwf(x[1:-1, None], t[None, :-1], p)


def _penalty(v: np.ndarray, hx: float, ht: float) -> float:
    dx = forward_difference(v, hx, axis=0)[:, :-1]
    dt = forward_difference(v, ht, axis=1)[:-1, :]
    dxx = central_second_difference(v, hx, axis=0)[:, 1:-1]
    dtt = central_second_difference(v, ht, axis=1)[1:-1, :]
    return float(np.sum(v**2) + np.sum(dx**2) + np.sum(dt**2) + np.sum(dxx**2) + np.sum(dtt**2))


def functional_K(q: QField, p: CarlemanParams) -> float:
    g = q.grid
    v = q.values
    m = _m_block(v, g.hx, g.ht)
    weighted = float(np.sum(m**2 * _weight_block(g, p)))
    return (weighted + p.gamma * _penalty(v, g.hx, g.ht)) * g.cell


def _exact_gradient(v: np.ndarray, grid: UniformGrid2D, p: CarlemanParams) -> np.ndarray:
    hx, ht = grid.hx, grid.ht
    w = _m_block(v, hx, ht) * _weight_block(grid, p)
    grad = np.zeros_like(v)

    grad[:-2, :-1] += w / hx**2
    grad[1:-1, :-1] -= 2.0 * w / hx**2
    grad[2:, :-1] += w / hx**2

    mixed = -2.0 * w / (hx * ht)
    grad[2:, 1:] += mixed
    grad[2:, :-1] -= mixed
    grad[1:-1, 1:] -= mixed
    grad[1:-1, :-1] += mixed

    # nonlocal term: direct factor plus the t = 0 row it couples to
    slope = (v[2:, 0] - v[1:-1, 0]) / hx
    grad[1:-1, :-1] += 4.0 * slope[:, None] * w
    row = 4.0 / hx * np.sum(w * v[1:-1, :-1], axis=1)
    grad[2:, 0] += row
    grad[1:-1, 0] -= row
    grad *= 2.0

    pen = v.copy()
    dx = forward_difference(v, hx, axis=0)[:, :-1] / hx
    pen[1:, :-1] += dx
    pen[:-1, :-1] -= dx
    dt = forward_difference(v, ht, axis=1)[:-1, :] / ht
    pen[:-1, 1:] += dt
    pen[:-1, :-1] -= dt
    sxx = central_second_difference(v, hx, axis=0)[:, 1:-1] / hx**2
    pen[:-2, 1:-1] += sxx
    pen[1:-1, 1:-1] -= 2.0 * sxx
    pen[2:, 1:-1] += sxx
    stt = central_second_difference(v, ht, axis=1)[1:-1, :] / ht**2
    pen[1:-1, :-2] += stt
    pen[1:-1, 1:-1] -= 2.0 * stt
    pen[1:-1, 2:] += stt

    return (grad + 2.0 * p.gamma * pen) * grid.cell


def _extrapolate_edges(grad: np.ndarray, axis: int) -> None:
    g = np.moveaxis(grad, axis, 0)
    g[1] = 2.5 * g[2] - 2.0 * g[3] + 0.5 * g[4]
    g[0] = 2.5 * g[1] - 2.0 * g[2] + 0.5 * g[3]
    g[-2] = 2.5 * g[-3] - 2.0 * g[-4] + 0.5 * g[-5]
    g[-1] = 2.5 * g[-2] - 2.0 * g[-3] + 0.5 * g[-4]


def project_pinned(grad: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto directions that keep the pinned rows valid."""
    out = grad.copy()
    out[:2] = 0.0
    mean = 0.5 * (out[-1] + out[-2])
    out[-2] = mean
    out[-1] = mean
    return out


def gradient_K(q: QField, p: CarlemanParams, boundary_fill: BoundaryFill = "extrapolate") -> GridFn2D:
    grad = _exact_gradient(q.values, q.grid, p)
    if boundary_fill == "extrapolate":
        _extrapolate_edges(grad, axis=0)
        _extrapolate_edges(grad, axis=1)
    return GridFn2D(grid=q.grid, values=project_pinned(grad))


def initial_guess(derived: DerivedData, domain: InversionDomain, quadrature_points: int = 65) -> QField:
    """q0(x, t) = s0(t) + 1/2 * integral of s1 over [t, t + 2x], Simpson per node."""
    grid = domain.grid
    x, t = grid.xgrid.nodes, grid.tgrid.nodes
    u = np.linspace(0.0, 1.0, quadrature_points)
    tau = t[None, :, None] + 2.0 * x[:, None, None] * u[None, None, :]
    integral = 2.0 * x[:, None] * simpson(derived.s1_at(tau), x=u, axis=-1)
    s0 = derived.s0_at(t)
    return QField.pinned(grid, s0[None, :] + 0.5 * integral, s0, derived.s1_at(t))


class DescentTrace(BaseModel):
    iterations: list[int] = Field(default_factory=list)
    k_values: list[float] = Field(default_factory=list)
    grad_norms: list[float] = Field(default_factory=list)
    steps: list[float] = Field(default_factory=list)
    q_norms: list[float] = Field(default_factory=list)
    stopped_by: str = "running"
    fill_switched_at: int | None = None

    def record(self, iteration: int, k: float, grad_norm: float, step: float, q_norm: float) -> None:
        self.iterations.append(iteration)
        self.k_values.append(k)
        self.grad_norms.append(grad_norm)
        self.steps.append(step)
        self.q_norms.append(q_norm)

    def summary(self) -> DescentSummary:
        return DescentSummary(
            iterations=self.iterations[-1] if self.iterations else 0,
            k_initial=self.k_values[0],
            k_final=self.k_values[-1],
            grad_initial=self.grad_norms[0],
            grad_final=self.grad_norms[-1],
            final_step=self.steps[-1],
            stopped_by=self.stopped_by,
            fill_switched_at=self.fill_switched_at,
        )


def gdm_minimize(
    q0: QField, p: CarlemanParams, caps: StoppingRule | None = None, step: float | None = None
) -> tuple[QField, DescentTrace]:
    """Steepest descent with step halving.

    With the extrapolated boundary fill the projected direction is not always a descent direction.
    When halving runs the step below ``min_step`` the descent switches to the exact gradient once and
    retries the iteration from the step it started with; a second underflow raises DivergenceError.
    """
    caps = caps or StoppingRule()
    step = caps.initial_step if step is None else step
    if step <= 0:
        raise ValueError("step must be positive")
    ttilde = q0.grid.tgrid.stop
    if p.gamma < p.gamma_bound(ttilde):
        logger.warning(
            "gamma=%g is below the convexity bound 2*exp(-lambda*alpha*T)=%.4g", p.gamma, p.gamma_bound(ttilde)
        )

    def norm(values: np.ndarray) -> float:
        return float(np.max(np.abs(values)))

    fill = caps.boundary_fill
    trace = DescentTrace()
    q = q0
    k = functional_K(q, p)
    grad = gradient_K(q, p, fill).values
    k_limit = caps.k_ratio * k
    grad_limit = caps.grad_ratio * norm(grad)
    trace.record(0, k, norm(grad), step, norm(q.values))

    if k <= k_limit and norm(grad) <= grad_limit:
        trace.stopped_by = "thresholds"
        return q, trace

    for iteration in range(1, caps.max_iterations + 1):
        if norm(grad) == 0.0:
            trace.stopped_by = "stationary"
            break
        start_step = step
        while True:
            candidate = q.with_values(q.values - step * grad)
            k_candidate = functional_K(candidate, p)
            if k_candidate < k:
                break
            step *= 0.5
            if step >= caps.min_step:
                continue
            if fill == "extrapolate":
                logger.warning(
                    "step fell below %g at iteration %d with the extrapolated fill; switching to the exact gradient",
                    caps.min_step,
                    iteration,
                )
                fill = "exact"
                trace.fill_switched_at = iteration
                grad = gradient_K(q, p, fill).values
                step = start_step
                continue
            trace.stopped_by = "step_underflow"
            raise DivergenceError(
                f"step fell below {caps.min_step:g} at iteration {iteration} (K={k:.6g})", trace=trace
            )
        q, k = candidate, k_candidate
        grad = gradient_K(q, p, fill).values
        trace.record(iteration, k, norm(grad), step, norm(q.values))
        if k <= k_limit and norm(grad) <= grad_limit:
            trace.stopped_by = "thresholds"
            break
    else:
        trace.stopped_by = "iteration_cap"

    logger.info(
        "descent stopped by %s after %d iterations: K %.4g -> %.4g",
        trace.stopped_by,
        trace.iterations[-1],
        trace.k_values[0],
        trace.k_values[-1],
    )
    return q, trace


def extract_r(q: QField, refined_count: int = REFINED_COUNT) -> PotentialProfile:
    """r(x_i) = 4 (q[i+1, 1] - q[i, 1]) / h_x for i = 1..N_x, with r(a) = 0 appended."""
    xgrid = q.grid.xgrid
    column = q.values[:, 0]
    r = np.zeros(xgrid.count)
    r[:-1] = 4.0 * np.diff(column) / xgrid.step
    coarse = GridFn1D(grid=xgrid, values=r)
    refined = cubic_spline_resample(coarse, UniformGrid1D.spanning(xgrid.start, xgrid.stop, refined_count))
    return PotentialProfile(grid=xgrid, values=r, refined=refined)
