"""Configuration and data contracts for the inversion pipeline."""

from __future__ import annotations

import math
import os
from collections.abc import Mapping
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigurationError
from .grid_core import GridFn1D, UniformGrid1D, UniformGrid2D

FWHM_FACTOR = 2.0 * math.sqrt(2.0 * math.log(2.0))
ENV_PREFIX = "WAVE_INVERSE_"

# env suffix -> dotted config paths (by alias)
ENV_OVERRIDES: dict[str, tuple[str, ...]] = {
    "LAMBDA": ("carleman.lambda",),
    "ALPHA": ("carleman.alpha",),
    "GAMMA": ("carleman.gamma",),
    "CBAR": ("domain.cbar", "model.cbar"),
    "SEED": ("noise.seed",),
    "NOISE_LEVEL": ("noise.level",),
    "RHO": ("recovery.rho_override",),
    "MAX_ITERATIONS": ("stopping.max_iterations",),
    "OUTPUT_DIR": ("output_dir",),
}


class TabulatedProfile(BaseModel):
    start: float = 0.0
    step: float = Field(gt=0)
    values: list[float] = Field(min_length=2)

    def as_grid_fn(self) -> GridFn1D:
        grid = UniformGrid1D(start=self.start, step=self.step, count=len(self.values))
        return GridFn1D(grid=grid, values=self.values)


class DielectricModel(BaseModel):
    """Dielectric constant c(y); equals 1 outside (0, 1) except for the constant kind."""

    kind: Literal["constant", "single_gaussian", "double_gaussian", "tabulated"] = "single_gaussian"
    amplitude: float = Field(0.2, ge=0.0, lt=1.0)
    widths: list[float] = Field(default_factory=lambda: [0.075])
    centers: list[float] = Field(default_factory=lambda: [0.5])
    cbar: float = 2.0
    level: float = 1.0
    width_convention: Literal["fwhm", "printed"] = "fwhm"
    tabulated: TabulatedProfile | None = None

    @field_validator("cbar")
    @classmethod
    def _cbar_above_one(cls, value: float) -> float:
        if value <= 1.0:
            raise ValueError(f"cbar must be > 1 so that c(y) in [1, cbar] is satisfiable, got {value}")
        return value

    @model_validator(mode="after")
    def _within_bounds(self) -> DielectricModel:
        expected = {"single_gaussian": 1, "double_gaussian": 2}.get(self.kind)
        if expected is not None:
            if len(self.widths) != expected or len(self.centers) != expected:
                raise ValueError(f"{self.kind} needs {expected} width(s) and center(s)")
            if any(w <= 0 for w in self.widths):
                raise ValueError("widths must be positive")
        if self.kind == "tabulated" and self.tabulated is None:
            raise ValueError("tabulated kind needs a tabulated profile")
        sampled = self.evaluate(np.linspace(-0.1, 1.1, 2401))
        if not np.all(np.isfinite(sampled)) or sampled.min() < 1.0 - 1e-12 or sampled.max() > self.cbar + 1e-12:
            raise ValueError(
                f"c(y) must stay in [1, cbar={self.cbar}], got range "
                f"[{np.nanmin(sampled):.6g}, {np.nanmax(sampled):.6g}]"
            )
        return self

    def sigma(self, width: float) -> float:
        if self.width_convention == "fwhm":
            return width / FWHM_FACTOR
        return width * FWHM_FACTOR

    def evaluate(self, y: np.ndarray | float) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "constant":
            return np.full_like(y, self.level)
        c = np.ones_like(y)
        inside = (y > 0.0) & (y < 1.0)
        if self.kind == "tabulated":
            table = self.tabulated.as_grid_fn()
            c[inside] = np.interp(y[inside], table.nodes, table.values)
            return c
        bump = np.zeros_like(y)
        for width, center in zip(self.widths, self.centers):
            sigma = self.sigma(width)
            bump += np.exp(-((y - center) ** 2) / (2.0 * sigma**2))
        with np.errstate(divide="ignore"):
            c[inside] = (1.0 - self.amplitude * bump[inside]) ** -2
        return c


class ForwardConfig(BaseModel):
    y_half: float = Field(1.1, gt=0)
    duration: float = Field(2.0, gt=0)
    n_y: int = Field(1600, ge=4)
    n_t: int = Field(3200, ge=2)
    source_sharpness: float = Field(1e6, gt=0)
    source_min_cells: float = Field(6.0, ge=0)
    boundary_stencil: Literal["central", "one_sided"] = "central"

    @field_validator("n_y")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("n_y must be even so that y = 0 is a grid node")
        return value

    @property
    def ygrid(self) -> UniformGrid1D:
        return UniformGrid1D.spanning(-self.y_half, self.y_half, self.n_y + 1)

    @property
    def tgrid(self) -> UniformGrid1D:
        return UniformGrid1D.spanning(0.0, self.duration, self.n_t + 1)


class CarlemanParams(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lambda_: float = Field(2.0, alias="lambda", ge=1.0)
    alpha: float = Field(0.5, gt=0.0, le=0.5)
    gamma: float = Field(1e-6, gt=0.0, lt=1.0)

    def gamma_bound(self, ttilde: float) -> float:
        return 2.0 * math.exp(-self.lambda_ * self.alpha * ttilde)


class InversionDomain(BaseModel):
    cbar: float = Field(2.0, gt=1.0)
    n_x: int = Field(100, ge=6)
    n_t: int = Field(100, ge=6)
    a_factor: float = Field(1.1, ge=1.0)

    @property
    def a(self) -> float:
        return self.a_factor * math.sqrt(self.cbar)

    @property
    def ttilde(self) -> float:
        return 2.0 * self.a

    @property
    def grid(self) -> UniformGrid2D:
        return UniformGrid2D(
            xgrid=UniformGrid1D(start=0.0, step=self.a / self.n_x, count=self.n_x + 1),
            tgrid=UniformGrid1D(start=0.0, step=self.ttilde / self.n_t, count=self.n_t + 1),
        )

    @property
    def data_tgrid(self) -> UniformGrid1D:
        """Time grid of exported s0/s1 samples: covers [0, T + 2a] on the inversion step."""
        return UniformGrid1D(start=0.0, step=self.ttilde / self.n_t, count=2 * self.n_t + 1)


class StoppingRule(BaseModel):
    max_iterations: int = Field(5000, ge=0)
    k_ratio: float = Field(1e-2, ge=0.0)
    grad_ratio: float = Field(1e-2, ge=0.0)
    initial_step: float = Field(0.1, gt=0.0)
    min_step: float = Field(1e-12, gt=0.0)
    boundary_fill: Literal["extrapolate", "exact"] = "extrapolate"


class NoiseConfig(BaseModel):
    level: float = Field(0.05, ge=0.0)
    seed: int = 0


class PreprocessConfig(BaseModel):
    polarity: Literal["negative", "positive"] = "negative"
    truncation_ratio: float = Field(0.1, ge=0.0, lt=1.0)
    g1_mode: Literal["envelope", "absorbing"] = "absorbing"
    subtract_incident: bool = True


class RecoveryConfig(BaseModel):
    rho_override: float | None = Field(None, ge=0.0)
    background: tuple[float, float] = (1.0, 1.0)
    polarity_mode: Literal["max", "min"] = "max"
    threshold: float = Field(0.02, ge=0.0, lt=1.0)
    min_nodes: int = Field(3, ge=1)
    refined_count: int = Field(450, ge=4)
    depth_count: int = Field(201, ge=2)
    equation: Literal["consistent", "printed"] = "consistent"

    @field_validator("background")
    @classmethod
    def _ordered(cls, value: tuple[float, float]) -> tuple[float, float]:
        lo, hi = value
        if lo <= 0 or lo > hi:
            raise ValueError(f"background interval must satisfy 0 < lo <= hi, got {value}")
        return value


class PipelineConfig(BaseModel):
    model: DielectricModel = Field(default_factory=DielectricModel)
    forward: ForwardConfig = Field(default_factory=ForwardConfig)
    carleman: CarlemanParams = Field(default_factory=CarlemanParams)
    domain: InversionDomain = Field(default_factory=InversionDomain)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    preprocess: PreprocessConfig = Field(default_factory=PreprocessConfig)
    stopping: StoppingRule = Field(default_factory=StoppingRule)
    recovery: RecoveryConfig = Field(default_factory=RecoveryConfig)
    output_dir: str = "output/wave_inverse"


class EnvelopeParams(BaseModel):
    """Signed Gaussian envelope sign * amplitude * exp(-width * (t - center)**2)."""

    amplitude: float = Field(ge=0.0)
    width: float = Field(gt=0.0)
    center: float
    sign: Literal[-1, 1] = -1

    @classmethod
    def zero(cls) -> EnvelopeParams:
        return cls(amplitude=0.0, width=1.0, center=0.0)

    def value(self, t: np.ndarray | float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.sign * self.amplitude * np.exp(-self.width * (t - self.center) ** 2)

    def first_derivative(self, t: np.ndarray | float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return -2.0 * self.width * (t - self.center) * self.value(t)

    def second_derivative(self, t: np.ndarray | float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        shift = t - self.center
        return (4.0 * self.width**2 * shift**2 - 2.0 * self.width) * self.value(t)


class DescentSummary(BaseModel):
    iterations: int
    k_initial: float
    k_final: float
    grad_initial: float
    grad_final: float
    final_step: float
    stopped_by: str
    fill_switched_at: int | None = None


class RunReport(BaseModel):
    timings: dict[str, float] = Field(default_factory=dict)
    descent: DescentSummary | None = None
    relative_error: float | None = None
    c_relative_error: float | None = None
    max_c: float | None = None
    min_c: float | None = None
    epsilon_interval: tuple[float, float] | None = None


def with_overrides(config: PipelineConfig, overrides: Mapping[str, object]) -> PipelineConfig:
    """Return a re-validated copy with dotted-path overrides applied; None values are skipped."""
    data = config.model_dump(by_alias=True)
    for path, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = path.split(".")
        node = data
        for key in parents:
            node = node[key]
        node[leaf] = value
    return PipelineConfig.model_validate(data)


def env_overrides(environ: Mapping[str, str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for suffix, paths in ENV_OVERRIDES.items():
        value = environ.get(ENV_PREFIX + suffix)
        if value:
            overrides.update({path: value for path in paths})
    return overrides


def load_pipeline_config(path: Path | None = None, environ: Mapping[str, str] | None = None) -> PipelineConfig:
    if path is None:
        config = PipelineConfig()
    else:
        try:
            config = PipelineConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as error:
            raise ConfigurationError(f"config file not found: {path}") from error
    return with_overrides(config, env_overrides(os.environ if environ is None else environ))
