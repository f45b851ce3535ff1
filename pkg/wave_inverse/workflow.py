"""Stage orchestration: simulate, preprocess, invert, recover and the end-to-end runs."""

from __future__ import annotations

import logging
import time
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import NamedTuple

from opentelemetry import trace as otel_trace

from . import artifacts
from .convexify import DescentTrace, PotentialProfile, extract_r, gdm_minimize, initial_guess
from .errors import DivergenceError
from .models import EnvelopeParams, PipelineConfig, RunReport
from .preprocess import (
    DerivedData,
    ExperimentalTrace,
    add_multiplicative_noise,
    derive_absorbing,
    derive_s0_s1,
    envelopes_from_boundary,
    ingest_experimental,
)
from .recover_c import DielectricProfile, estimate_epsilon, relative_l2, run_algorithm2
from .wave_forward import (
    BoundaryData,
    WaveField,
    cell_averaged_potential,
    extract_boundary_data,
    interface_depth,
    reference_run,
    solve_forward,
    subtract_incident,
)

logger = logging.getLogger(__name__)
tracer = otel_trace.get_tracer(__name__)


class Simulation(NamedTuple):
    field: WaveField
    raw: BoundaryData
    scattered: BoundaryData


class Inversion(NamedTuple):
    r: PotentialProfile
    trace: DescentTrace


class InversionWorkflow:
    """Runs the two-stage inversion and writes every intermediate product under ``work_dir``."""

    def __init__(self, config: PipelineConfig | None = None, work_dir: Path | None = None) -> None:
        self.config = config or PipelineConfig()
        self.work_dir = Path(work_dir or self.config.output_dir)
        self.work_dir.mkdir(parents=True, exist_ok=True)
        self.report = RunReport()

    @contextmanager
    def _stage(self, name: str, **attributes: object) -> Iterator[otel_trace.Span]:
        started = time.perf_counter()
        with tracer.start_as_current_span(f"wave_inverse.{name}") as span:
            for key, value in attributes.items():
                span.set_attribute(key, value)
            try:
                yield span
            finally:
                elapsed = time.perf_counter() - started
                self.report.timings[name] = self.report.timings.get(name, 0.0) + elapsed
                logger.info("%s finished in %.2fs", name, elapsed)

    def simulate(self, write_field: bool = False) -> Simulation:
        cfg = self.config
        with self._stage("simulate", n_y=cfg.forward.n_y, n_t=cfg.forward.n_t, kind=cfg.model.kind):
            field = solve_forward(cfg.model, cfg.forward)
            raw = extract_boundary_data(field, cfg.forward.boundary_stencil)
            scattered = subtract_incident(raw, reference_run(cfg.forward)) if cfg.preprocess.subtract_incident else raw
            if cfg.noise.level > 0:
                scattered = BoundaryData(
                    g0=add_multiplicative_noise(scattered.g0, cfg.noise.level, cfg.noise.seed),
                    g1=add_multiplicative_noise(scattered.g1, cfg.noise.level, cfg.noise.seed + 1),
                )
            artifacts.write_boundary_data(self.work_dir / "g.csv", raw)
            artifacts.write_boundary_data(self.work_dir / "g_scattered.csv", scattered)
            if write_field:
                artifacts.write_grid_fn(self.work_dir / "field.csv", field)
        return Simulation(field, raw, scattered)

    def preprocess(self, data: BoundaryData, polarity: str | None = None, g1_mode: str | None = None) -> DerivedData:
        cfg = self.config.preprocess
        polarity = polarity or cfg.polarity
        g1_mode = g1_mode or cfg.g1_mode
        with self._stage("preprocess", polarity=polarity, g1_mode=g1_mode) as span:
            env0, env1 = envelopes_from_boundary(data, polarity, cfg.truncation_ratio, fit_g1=g1_mode == "envelope")
            tgrid = self.config.domain.data_tgrid
            derived = derive_absorbing(env0, tgrid) if env1 is None else derive_s0_s1(env0, env1, tgrid)
            span.set_attribute("g1_source", derived.g1_source)
            artifacts.write_derived(self.work_dir / "s.csv", derived)
            artifacts.write_json(self.work_dir / "envelopes.json", _envelopes(env0, env1, derived.g1_source))
        return derived

    def invert(self, derived: DerivedData) -> Inversion:
        cfg = self.config
        with self._stage("invert", n_x=cfg.domain.n_x, n_t=cfg.domain.n_t, **{"lambda": cfg.carleman.lambda_}) as span:
            q0 = initial_guess(derived, cfg.domain)
            try:
                q, trace = gdm_minimize(q0, cfg.carleman, cfg.stopping)
            except DivergenceError as error:
                if error.trace is not None:
                    artifacts.write_trace(self.work_dir / "trace.csv", error.trace)
                raise
            r = extract_r(q, cfg.recovery.refined_count)
            span.set_attribute("iterations", trace.iterations[-1])
            artifacts.write_potential(self.work_dir / "r.csv", r)
            artifacts.write_trace(self.work_dir / "trace.csv", trace)
        self.report.descent = trace.summary()
        return Inversion(r, trace)

    def recover(self, r: PotentialProfile, background: tuple[float, float] | None = None) -> DielectricProfile:
        cfg = self.config.recovery
        background = background or cfg.background
        with self._stage("recover", equation=cfg.equation):
            c = run_algorithm2(r, cfg)
            epsilon = estimate_epsilon(c, background, cfg.polarity_mode)
            artifacts.write_dielectric(self.work_dir / "c.csv", c)
            summary = {
                "max_c": float(c.values.max()),
                "min_c": float(c.values.min()),
                "epsilon_interval": list(epsilon),
                "x_stop": c.x_stop,
                "intervals": [record.model_dump() for record in c.provenance],
                "residuals": [record.residual for record in c.provenance if record.method == "wls"],
            }
            artifacts.write_json(self.work_dir / "summary.json", summary)
        self.report.max_c = summary["max_c"]
        self.report.min_c = summary["min_c"]
        self.report.epsilon_interval = epsilon
        return c

    def run_pipeline(self) -> RunReport:
        """Simulated data end to end, with errors against the configured ground truth."""
        model = self.config.model
        simulation = self.simulate()
        derived = self.preprocess(simulation.scattered)
        inversion = self.invert(derived)
        # r is a cell average of the potential, so it is scored against the cell average of r*
        exact = cell_averaged_potential(model, inversion.r.grid, self.config.recovery.refined_count)
        artifacts.write_potential(self.work_dir / "r_true.csv", exact)
        inside = inversion.r.grid.nodes <= interface_depth(model)
        self.report.relative_error = relative_l2(inversion.r.values[inside], exact.values[inside])
        c = self.recover(inversion.r)
        self.report.c_relative_error = relative_l2(c.values, model.evaluate(c.grid.nodes))
        logger.info(
            "relative error: r %.4f, c %.4f", self.report.relative_error, self.report.c_relative_error
        )
        artifacts.write_json(self.work_dir / "report.json", self.report)
        return self.report

    def run_experimental(self, trace: ExperimentalTrace) -> RunReport:
        with self._stage("experimental", samples=int(trace.samples.size), polarity=trace.polarity):
            data = ingest_experimental(trace)
        derived = self.preprocess(data, polarity=trace.polarity, g1_mode="absorbing")
        inversion = self.invert(derived)
        self.recover(inversion.r, background=trace.background)
        lo, hi = self.report.epsilon_interval
        artifacts.write_json(
            self.work_dir / "epsilon.json",
            {
                "epsilon_interval": [lo, hi],
                "mode": self.config.recovery.polarity_mode,
                "background": list(trace.background),
                "max_c": self.report.max_c,
                "min_c": self.report.min_c,
            },
        )
        return self.report


def _envelopes(env0: EnvelopeParams, env1: EnvelopeParams | None, g1_source: str) -> dict[str, object]:
    return {"g0": env0.model_dump(), "g1": env1.model_dump() if env1 is not None else None, "g1_source": g1_source}


def summarize(report: RunReport) -> dict[str, object]:
    data = report.model_dump(exclude_none=True)
    data["timings"] = {key: round(value, 3) for key, value in report.timings.items()}
    if report.epsilon_interval is not None:
        data["epsilon_interval"] = [round(v, 6) for v in report.epsilon_interval]
    return data
