"""Stage 2: recover c(y) from r(x) by Runge-Kutta on r <= 0 and weighted least squares on r > 0."""

from __future__ import annotations

import logging
from collections.abc import Callable
from typing import Literal

import numpy as np
from pydantic import BaseModel, field_validator
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares

from .convexify import PotentialProfile
from .errors import DomainError, InversionError, PhysicalBreakdownError
from .grid_core import ArrayModel, GridFn1D, UniformGrid1D, as_finite_array
from .models import RecoveryConfig

logger = logging.getLogger(__name__)

Equation = Literal["consistent", "printed"]
WLS_MAX_EVALUATIONS = 200


class Segment(BaseModel):
    kind: Literal["neg", "pos"]
    start_index: int
    stop_index: int
    start: float
    stop: float

    @property
    def length(self) -> float:
        return self.stop - self.start


class IntervalPartition(BaseModel):
    segments: list[Segment]

    @property
    def neg_intervals(self) -> list[tuple[float, float]]:
        return [(s.start, s.stop) for s in self.segments if s.kind == "neg"]

    @property
    def pos_intervals(self) -> list[tuple[float, float]]:
        return [(s.start, s.stop) for s in self.segments if s.kind == "pos"]


class PtildeSegment(ArrayModel):
    x: np.ndarray
    p: np.ndarray
    dp: np.ndarray
    method: Literal["rk4", "wls"]
    rho: float | None = None
    residual: float = 0.0
    left_residual_initial: float | None = None
    left_residual_final: float | None = None

    @field_validator("x", "p", "dp", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return as_finite_array(value, "segment", 1)


class PtildeProfile(ArrayModel):
    """p(x) = c(y(x))^(-1/2) and its derivative on the refined grid nodes actually reached."""

    x: np.ndarray
    p: np.ndarray
    dp: np.ndarray

    @field_validator("x", "p", "dp", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return as_finite_array(value, "profile", 1)


class IntervalRecord(BaseModel):
    kind: Literal["neg", "pos"]
    start: float
    stop: float
    method: Literal["rk4", "wls"]
    rho: float | None = None
    residual: float = 0.0


class DielectricProfile(ArrayModel):
    grid: UniformGrid1D
    values: np.ndarray
    provenance: list[IntervalRecord] = []
    ptilde: PtildeProfile | None = None
    x_stop: float | None = None

    @field_validator("values", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        array = as_finite_array(value, "c values", 1)
        if np.any(array <= 0):
            raise ValueError("c must be positive")
        return array


def rho_star(l: float) -> float:  # noqa: E741
    if l <= 0:
        raise DomainError(f"interval length must be positive, got {l}")
    return (2.1457 / l + 2.1081 / l + 14.40) / 2.0


def segment_intervals(r: PotentialProfile | GridFn1D, threshold: float = 0.02, min_nodes: int = 3) -> IntervalPartition:
    profile = r.refined_profile() if isinstance(r, PotentialProfile) else r
    values, x = profile.values, profile.nodes
    peak = float(np.max(np.abs(values)))
    positive = values > threshold * peak if peak > 0 else np.zeros(values.size, dtype=bool)

    runs = _runs(positive)
    while len(runs) > 1:
        shortest = min(range(len(runs)), key=lambda k: runs[k][2] - runs[k][1])
        label, lo, hi = runs[shortest]
        if hi - lo + 1 >= min_nodes:
            break
        positive[lo : hi + 1] = not label
        runs = _runs(positive)

    segments = []
    for k, (label, lo, _) in enumerate(runs):
        stop = runs[k + 1][1] if k + 1 < len(runs) else values.size - 1
        segments.append(
            Segment(kind="pos" if label else "neg", start_index=lo, stop_index=stop, start=x[lo], stop=x[stop])
        )
    return IntervalPartition(segments=segments)


def _runs(mask: np.ndarray) -> list[tuple[bool, int, int]]:
    edges = np.flatnonzero(np.diff(mask.astype(np.int8))) + 1
    starts = np.concatenate([[0], edges])
    stops = np.concatenate([edges - 1, [mask.size - 1]])
    return [(bool(mask[lo]), int(lo), int(hi)) for lo, hi in zip(starts, stops)]


def second_derivative(p: float, dp: float, r: float, equation: Equation = "consistent") -> float:
    """p'' from the recovery ODE."""
    if equation == "consistent":
        return 2.0 * p * r + 1.5 * dp**2 / p
    return 2.0 * (r + 0.25 * dp**2) / p


def _spline(profile: GridFn1D) -> Callable[[float], float]:
    spline = CubicSpline(profile.nodes, profile.values, bc_type="natural")
    return lambda x: float(spline(x))


def rk_advance(
    r: PotentialProfile | GridFn1D,
    interval: Segment,
    init: tuple[float, float],
    equation: Equation = "consistent",
    substeps: int = 1,
) -> PtildeSegment:
    """Classical RK4 for (p, p') across one interval on the refined step (optionally subdivided)."""
    profile = r.refined_profile() if isinstance(r, PotentialProfile) else r
    r_at = _spline(profile)
    x_nodes = profile.nodes[interval.start_index : interval.stop_index + 1]
    h = profile.grid.step / substeps

    def rhs(x: float, state: np.ndarray) -> np.ndarray:
        p, dp = state
        if not p > 0:
            raise PhysicalBreakdownError(f"p reached {p:.4g} at x = {x:.5f}", x=x)
        return np.array([dp, second_derivative(p, dp, r_at(x), equation)])

    state = np.array(init, dtype=float)
    if not state[0] > 0:
        raise PhysicalBreakdownError(f"initial p = {state[0]:.4g} is not positive", x=float(x_nodes[0]))
    out = np.empty((x_nodes.size, 2))
    out[0] = state
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, x_nodes.size):
            x = x_nodes[k - 1]
            for _ in range(substeps):
                k1 = h * rhs(x, state)
                k2 = h * rhs(x + h / 2, state + k1 / 2)
                k3 = h * rhs(x + h / 2, state + k2 / 2)
                k4 = h * rhs(x + h, state + k3)
                state = state + (k1 + 2 * k2 + 2 * k3 + k4) / 6
                x += h
            if not np.all(np.isfinite(state)):
                raise PhysicalBreakdownError(f"p left the finite range at x = {x_nodes[k]:.5f}", x=float(x_nodes[k]))
            if state[0] <= 0:
                raise PhysicalBreakdownError(
                    f"p reached {state[0]:.4g} <= 0 at x = {x_nodes[k]:.5f}", x=float(x_nodes[k])
                )
            out[k] = state
    return PtildeSegment(x=x_nodes, p=out[:, 0], dp=out[:, 1], method="rk4")


def _ode_residual(p: np.ndarray, d1: np.ndarray, d2: np.ndarray, r: np.ndarray, equation: Equation) -> np.ndarray:
    if equation == "consistent":
        return d2 / (2.0 * p) - 0.75 * d1**2 / p**2 - r
    return 0.5 * d2 * p - 0.25 * d1**2 - r


def _ode_partials(p: np.ndarray, d1: np.ndarray, d2: np.ndarray, equation: Equation) -> tuple[np.ndarray, ...]:
    """Partial derivatives of the residual with respect to (p, p', p'')."""
    if equation == "consistent":
        return -d2 / (2.0 * p**2) + 1.5 * d1**2 / p**3, -1.5 * d1 / p**2, 1.0 / (2.0 * p)
    return 0.5 * d2, -0.5 * d1, 0.5 * p


def wls_fit(
    r: PotentialProfile | GridFn1D,
    interval: Segment,
    init: tuple[float, float, float],
    rho: float,
    equation: Equation = "consistent",
) -> PtildeSegment:
    """Minimize sum w_k R_k^2 h, w_k = exp(-2 rho (x_k - b1)), with p, p', p'' pinned at b1."""
    profile = r.refined_profile() if isinstance(r, PotentialProfile) else r
    lo, hi = interval.start_index, interval.stop_index
    x = profile.nodes[lo : hi + 1]
    r_nodes = profile.values[lo : hi + 1]
    h = profile.grid.step
    n = x.size - 1
    p0, dp0, ddp0 = init
    d = x - x[0]
    length = d[-1]
    cubic = (1.0 - p0 - dp0 * length - 0.5 * ddp0 * length**2) / length**3
    guess = p0 + dp0 * d + 0.5 * ddp0 * d**2 + cubic * d**3
    head = p0 + dp0 * d[:3] + 0.5 * ddp0 * d[:3] ** 2
    if n < 3:
        p = np.where(np.arange(n + 1) < 3, head[: n + 1], guess)
        return PtildeSegment(x=x, p=p, dp=np.gradient(p, h), method="wls", rho=rho)

    # rows k = 1..n: central stencils inside, second-order backward at the right end
    rows = np.arange(1, n + 1)
    idx = np.column_stack([rows - 1, rows, np.minimum(rows + 1, n)])
    w2 = np.tile([1.0, -2.0, 1.0], (n, 1)) / h**2
    w1 = np.tile([-1.0, 0.0, 1.0], (n, 1)) / (2.0 * h)
    idx[-1] = [n - 2, n - 1, n]
    w1[-1] = np.array([1.0, -4.0, 3.0]) / (2.0 * h)
    centre = np.append(rows[:-1], n)
    root_weight = np.sqrt(np.exp(-2.0 * rho * d[rows]) * h)

    def full(unknowns: np.ndarray) -> np.ndarray:
        return np.concatenate([head, unknowns])

    def pieces(unknowns: np.ndarray) -> tuple[np.ndarray, ...]:
        p = full(unknowns)
        return p, p[centre], np.sum(w1 * p[idx], axis=1), np.sum(w2 * p[idx], axis=1)

    def residual(unknowns: np.ndarray) -> np.ndarray:
        _, pc, d1, d2 = pieces(unknowns)
        return root_weight * _ode_residual(pc, d1, d2, r_nodes[rows], equation)

    def jacobian(unknowns: np.ndarray) -> np.ndarray:
        _, pc, d1, d2 = pieces(unknowns)
        dp_, dd1, dd2 = _ode_partials(pc, d1, d2, equation)
        jac = np.zeros((n, n + 1))
        np.add.at(jac, (np.arange(n)[:, None], idx), dd1[:, None] * w1 + dd2[:, None] * w2)
        jac[np.arange(n), centre] += dp_
        return root_weight[:, None] * jac[:, 3:]

    start = guess[3:]
    initial = residual(start)
    result = least_squares(residual, start, jac=jacobian, method="lm", xtol=1e-12, max_nfev=WLS_MAX_EVALUATIONS)
    if result.status == 0:
        logger.warning(
            "WLS on [%.4f, %.4f] hit %d evaluations; keeping best iterate (residual %.3e)",
            x[0],
            x[-1],
            WLS_MAX_EVALUATIONS,
            float(np.linalg.norm(result.fun)),
        )
    p = full(result.x)
    if not np.all(np.isfinite(p)):
        raise PhysicalBreakdownError(f"WLS left the finite range on [{x[0]:.5f}, {x[-1]:.5f}]", x=float(x[0]))
    if np.any(p <= 0):
        k = int(np.argmax(p <= 0))
        raise PhysicalBreakdownError(f"WLS produced p <= 0 at x = {x[k]:.5f}", x=float(x[k]))
    dp = np.gradient(p, h, edge_order=2)
    # row 3 is centred on the first free node; rows 1 and 2 lean on the pinned head
    left_initial = abs(float(initial[2] / root_weight[2]))
    left_final = abs(float(result.fun[2] / root_weight[2]))
    if left_final > left_initial:
        logger.warning(
            "WLS on [%.4f, %.4f] raised the left residual from %.3e to %.3e", x[0], x[-1], left_initial, left_final
        )
    return PtildeSegment(
        x=x,
        p=p,
        dp=dp,
        method="wls",
        rho=rho,
        residual=float(np.linalg.norm(result.fun)),
        left_residual_initial=left_initial,
        left_residual_final=left_final,
    )


def integrate_depth(ptilde: PtildeProfile, depth: float = 1.0) -> tuple[np.ndarray, float]:
    """y(x) = integral of p from 0; returns y on the profile nodes and the first x with y >= depth."""
    y = cumulative_simpson(ptilde.p, x=ptilde.x, initial=0.0)
    reached = np.flatnonzero(y >= depth)
    if reached.size == 0:
        return y, float(ptilde.x[-1])
    k = int(reached[0])
    if k == 0:
        return y, float(ptilde.x[0])
    fraction = (depth - y[k - 1]) / (y[k] - y[k - 1])
    return y, float(ptilde.x[k - 1] + fraction * (ptilde.x[k] - ptilde.x[k - 1]))


def run_algorithm2(r: PotentialProfile, config: RecoveryConfig | None = None) -> DielectricProfile:
    config = config or RecoveryConfig()
    profile = r.refined_profile(config.refined_count)
    partition = segment_intervals(profile, config.threshold, config.min_nodes)
    xs, ps, dps = [np.array([0.0])], [np.array([1.0])], [np.array([0.0])]
    records: list[IntervalRecord] = []
    p, dp, ddp = 1.0, 0.0, 0.0

    for number, segment in enumerate(partition.segments):
        try:
            if segment.kind == "neg":
                part = rk_advance(profile, segment, (p, dp), config.equation)
            else:
                rho = config.rho_override if config.rho_override is not None else rho_star(segment.length)
                part = wls_fit(profile, segment, (p, dp, ddp), rho, config.equation)
        except InversionError as error:
            error.add_note(f"interval {number} ({segment.kind}) on [{segment.start:.5f}, {segment.stop:.5f}]")
            raise
        records.append(
            IntervalRecord(
                kind=segment.kind,
                start=segment.start,
                stop=segment.stop,
                method=part.method,
                rho=part.rho,
                residual=part.residual,
            )
        )
        xs.append(part.x[1:])
        ps.append(part.p[1:])
        dps.append(part.dp[1:])
        p, dp = float(part.p[-1]), float(part.dp[-1])
        ddp = second_derivative(p, dp, float(profile.values[segment.stop_index]), config.equation)
        depth = cumulative_simpson(np.concatenate(ps), x=np.concatenate(xs), initial=0.0)
        if depth[-1] >= 1.0:
            break

    ptilde = PtildeProfile(x=np.concatenate(xs), p=np.concatenate(ps), dp=np.concatenate(dps))
    y, x_stop = integrate_depth(ptilde)
    if y[-1] < 1.0:
        logger.warning("recovery reached x = %.4f at depth y = %.4f < 1; filling c = 1 below", x_stop, y[-1])
    ygrid = UniformGrid1D.spanning(0.0, 1.0, config.depth_count)
    c = np.interp(ygrid.nodes, y, ptilde.p**-2, right=1.0)
    return DielectricProfile(grid=ygrid, values=c, provenance=records, ptilde=ptilde, x_stop=x_stop)


def relative_l2(computed: np.ndarray, exact: np.ndarray) -> float:
    computed, exact = np.asarray(computed, dtype=float), np.asarray(exact, dtype=float)
    if computed.shape != exact.shape:
        raise DomainError(f"shape mismatch {computed.shape} vs {exact.shape}")
    scale = float(np.linalg.norm(exact))
    if scale == 0.0:
        raise DomainError("relative error against an all-zero reference")
    return float(np.linalg.norm(computed - exact) / scale)


def estimate_epsilon(
    c: DielectricProfile, background: tuple[float, float], mode: Literal["max", "min"] = "max"
) -> tuple[float, float]:
    lo, hi = background
    if lo > hi:
        raise DomainError(f"background interval is reversed: {background}")
    extreme = float(np.max(c.values) if mode == "max" else np.min(c.values))
    return extreme * lo, extreme * hi
