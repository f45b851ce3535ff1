"""Boundary-trace preprocessing: noise, polarity truncation, envelope fitting and s0/s1."""

from __future__ import annotations

import logging
from typing import Literal, NamedTuple

import numpy as np
from pydantic import field_validator, model_validator
from scipy.optimize import least_squares

from .errors import FitError, IngestionError, NoSignalError
from .grid_core import ArrayModel, UniformGrid1D, as_finite_array
from .models import EnvelopeParams
from .wave_forward import BoundaryData, TimeSeries

logger = logging.getLogger(__name__)

Polarity = Literal["negative", "positive"]
EXPECTED_SAMPLES = 80
TIME_FACTOR = 0.19e9
TIME_WINDOW = 2.0


class Truncation(NamedTuple):
    series: TimeSeries
    no_signal: bool


def add_multiplicative_noise(ts: TimeSeries, level: float, seed: int) -> TimeSeries:
    if level < 0:
        raise ValueError(f"noise level must be non-negative, got {level}")
    if level == 0:
        return ts
    eta = np.random.default_rng(seed).uniform(-1.0, 1.0, ts.samples.size)
    return ts.with_samples(ts.samples * (1.0 + level * eta))


def truncate_and_select(ts: TimeSeries, polarity: Polarity = "negative", ratio: float = 0.1) -> Truncation:
    samples = ts.samples
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    signed = -samples if polarity == "negative" else samples
    keep = (signed > 0) & (np.abs(samples) >= ratio * peak)
    kept = np.where(keep, samples, 0.0)
    return Truncation(ts.with_samples(kept), not keep.any())


def _initial_guess(t: np.ndarray, magnitude: np.ndarray) -> np.ndarray:
    peak = int(np.argmax(magnitude))
    # contiguous support run around the peak
    lo = peak
    while lo > 0 and magnitude[lo - 1] > 0:
        lo -= 1
    hi = peak
    while hi < magnitude.size - 1 and magnitude[hi + 1] > 0:
        hi += 1
    run_t, run_m = t[lo : hi + 1], magnitude[lo : hi + 1]
    center = float(np.sum(run_t * run_m) / np.sum(run_m))
    variance = float(np.sum(run_m * (run_t - center) ** 2) / np.sum(run_m))
    if variance <= 0.0:
        spacing = float(t[1] - t[0]) if t.size > 1 else 1.0
        variance = spacing**2
    return np.array([magnitude[peak], 1.0 / (2.0 * variance), t[peak]])


def fit_envelope(
    ts: TimeSeries, polarity: Polarity = "negative", max_evaluations: int = 400, min_width_steps: float = 2.0
) -> EnvelopeParams:
    """Weighted Gaussian fit over the nonzero support, weights |sample| / max|sample|.

    Fits whose standard deviation 1/sqrt(2k) is below ``min_width_steps`` sampling steps resolve
    grid-scale noise rather than a pulse and raise FitError.
    """
    support = ts.samples != 0.0
    if np.count_nonzero(support) < 3:
        raise FitError(f"envelope fit needs at least 3 support points, got {np.count_nonzero(support)}")
    sign = -1 if polarity == "negative" else 1
    t = ts.times[support]
    data = ts.samples[support]
    magnitude = np.abs(data)
    root_weight = np.sqrt(magnitude / magnitude.max())

    def residual(theta: np.ndarray) -> np.ndarray:
        amplitude, width, center = theta
        return root_weight * (sign * amplitude * np.exp(-width * (t - center) ** 2) - data)

    def jacobian(theta: np.ndarray) -> np.ndarray:
        amplitude, width, center = theta
        shift = t - center
        base = sign * np.exp(-width * shift**2)
        return root_weight[:, None] * np.column_stack(
            [base, -amplitude * shift**2 * base, 2.0 * amplitude * width * shift * base]
        )

    full_guess = np.zeros(ts.samples.size)
    full_guess[support] = magnitude
    theta0 = _initial_guess(ts.times, full_guess)
    result = least_squares(
        residual, theta0, jac=jacobian, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_evaluations
    )
    amplitude, width, center = result.x
    cost = float(np.sum(result.fun**2))
    if result.status <= 0:
        raise FitError(f"envelope fit did not converge ({result.message}); weighted residual {cost:.3e}")
    if amplitude < 0 or width <= 0:
        raise FitError(f"envelope fit left the admissible region: amplitude={amplitude:.4g}, width={width:.4g}")
    sigma = 1.0 / np.sqrt(2.0 * width)
    if sigma < min_width_steps * ts.dt:
        raise FitError(
            f"envelope fit is narrower than {min_width_steps:g} sampling steps: sigma={sigma:.4g}, dt={ts.dt:.4g}"
        )
    logger.debug("envelope fit: A=%.6g k=%.6g m=%.6g residual=%.3e", amplitude, width, center, cost)
    return EnvelopeParams(amplitude=amplitude, width=width, center=center, sign=sign)


class DerivedData(ArrayModel):
    """s0 = g0', s1 = g0'' + g1' in closed form (when envelopes are known) and sampled."""

    tgrid: UniformGrid1D
    s0: np.ndarray
    s1: np.ndarray
    env0: EnvelopeParams | None = None
    env1: EnvelopeParams | None = None
    g1_source: Literal["envelope", "absorbing", "samples"] = "samples"

    @field_validator("s0", "s1", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return as_finite_array(value, "derived samples", 1)

    @model_validator(mode="after")
    def _lengths(self) -> DerivedData:
        if self.s0.shape != (self.tgrid.count,) or self.s1.shape != (self.tgrid.count,):
            raise ValueError("s0/s1 samples must match the time grid")
        return self

    def s0_at(self, t: np.ndarray | float) -> np.ndarray:
        if self.env0 is not None:
            return self.env0.first_derivative(t)
        return np.interp(t, self.tgrid.nodes, self.s0, left=0.0, right=0.0)

    def s1_at(self, t: np.ndarray | float) -> np.ndarray:
        if self.g1_source == "envelope":
            return self.env0.second_derivative(t) + self.env1.first_derivative(t)
        if self.g1_source == "absorbing":
            return 2.0 * self.env0.second_derivative(t)
        return np.interp(t, self.tgrid.nodes, self.s1, left=0.0, right=0.0)


def derive_s0_s1(env0: EnvelopeParams, env1: EnvelopeParams, tgrid: UniformGrid1D) -> DerivedData:
    t = tgrid.nodes
    return DerivedData(
        tgrid=tgrid,
        s0=env0.first_derivative(t),
        s1=env0.second_derivative(t) + env1.first_derivative(t),
        env0=env0,
        env1=env1,
        g1_source="envelope",
    )


def derive_absorbing(env0: EnvelopeParams, tgrid: UniformGrid1D) -> DerivedData:
    """g1 = g0' from the absorbing condition at the antenna, hence s1 = 2 g0''."""
    t = tgrid.nodes
    return DerivedData(
        tgrid=tgrid,
        s0=env0.first_derivative(t),
        s1=2.0 * env0.second_derivative(t),
        env0=env0,
        g1_source="absorbing",
    )


def envelopes_from_boundary(
    data: BoundaryData, polarity: Polarity = "negative", ratio: float = 0.1, fit_g1: bool = True
) -> tuple[EnvelopeParams, EnvelopeParams | None]:
    """Envelopes of g0 and g1; g1 is None when it is not fitted or cannot be, and g1 = g0' applies."""
    g0 = truncate_and_select(data.g0, polarity, ratio)
    if g0.no_signal:
        raise NoSignalError(f"g0 has no {polarity} signal above {ratio:g} of its peak")
    env0 = fit_envelope(g0.series, polarity)
    if not fit_g1:
        return env0, None
    g1 = truncate_and_select(data.g1, polarity, ratio)
    if g1.no_signal:
        logger.warning("g1 has no %s signal; using the absorbing relation g1 = g0'", polarity)
        return env0, None
    try:
        return env0, fit_envelope(g1.series, polarity)
    except FitError as error:
        logger.warning("g1 envelope fit failed (%s); using the absorbing relation g1 = g0'", error)
        return env0, None


class ExperimentalTrace(ArrayModel):
    samples: np.ndarray
    dt_ns: float = 0.133
    scale: float = 1e-7
    background: tuple[float, float] = (1.0, 1.0)
    polarity: Polarity = "negative"

    @field_validator("samples", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return as_finite_array(value, "samples", 1)

    @field_validator("dt_ns")
    @classmethod
    def _positive(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("dt_ns must be positive")
        return value

    @model_validator(mode="after")
    def _expected_length(self) -> ExperimentalTrace:
        if self.samples.size != EXPECTED_SAMPLES:
            logger.warning("experimental trace has %d samples, expected %d", self.samples.size, EXPECTED_SAMPLES)
        return self


def ingest_experimental(trace: ExperimentalTrace, tgrid: UniformGrid1D | None = None) -> BoundaryData:
    """Scale and retime a radar trace to t' = 0.19e9 * t on [0, 2]; g1 = g0' of the fitted envelope."""
    if trace.samples.size == 0:
        raise IngestionError("experimental trace is empty")
    step = TIME_FACTOR * trace.dt_ns * 1e-9
    times = step * np.arange(trace.samples.size)
    keep = times <= TIME_WINDOW + 1e-12
    times, values = times[keep], trace.scale * trace.samples[keep]
    if times.size < 2:
        raise IngestionError("experimental trace has fewer than two samples inside the time window")
    if tgrid is None:
        tgrid = UniformGrid1D(start=0.0, step=step, count=times.size)
    g0 = TimeSeries.on_grid(tgrid, np.interp(tgrid.nodes, times, values, left=0.0, right=0.0))
    if not np.any(g0.samples):
        logger.warning("experimental trace is identically zero")
        return BoundaryData(g0=g0, g1=g0)
    truncated = truncate_and_select(g0, trace.polarity)
    try:
        if truncated.no_signal:
            raise NoSignalError(f"experimental trace has no {trace.polarity} signal")
        envelope = fit_envelope(truncated.series, trace.polarity)
    except (NoSignalError, FitError) as error:
        logger.warning("no envelope for g1 (%s); differentiating the samples instead", error)
        return BoundaryData(g0=g0, g1=g0.with_samples(np.gradient(g0.samples, tgrid.step)))
    return BoundaryData(g0=g0, g1=g0.with_samples(envelope.first_derivative(tgrid.nodes)))
