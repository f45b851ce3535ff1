"""Quick invariant checks behind the ``selftest`` command."""

from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np
from pydantic import BaseModel

from .convexify import QField, functional_K, gradient_K
from .grid_core import UniformGrid1D
from .models import CarlemanParams, DielectricModel, ForwardConfig, InversionDomain, RecoveryConfig
from .recover_c import DielectricProfile, estimate_epsilon, relative_l2, rho_star, run_algorithm2
from .wave_forward import absorbing_residual, solve_forward, true_potential

logger = logging.getLogger(__name__)

# (max c_comp, background, mode, expected interval)
EPSILON_TABLE = (
    (4.12, (3.0, 5.0), "max", (12.36, 20.60)),
    (0.26, (3.0, 5.0), "min", (0.78, 1.30)),
    (6.27, (1.0, 1.0), "max", (6.27, 6.27)),
    (3.21, (1.0, 1.0), "max", (3.21, 3.21)),
    (5.39, (3.0, 5.0), "max", (16.17, 26.95)),
)


class Check(BaseModel):
    name: str
    passed: bool
    value: float
    limit: float


class SelftestReport(BaseModel):
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def small_field(rng: np.random.Generator, n: int = 16, amplitude: float = 0.1, cbar: float = 1.2) -> QField:
    grid = InversionDomain(cbar=cbar, n_x=n, n_t=n).grid
    values = amplitude * rng.standard_normal(grid.shape)
    s0 = amplitude * rng.standard_normal(grid.tgrid.count)
    s1 = amplitude * rng.standard_normal(grid.tgrid.count)
    return QField.pinned(grid, values, s0, s1)


def check_rho_schedule() -> Check:
    value = rho_star(0.1)
    return Check(name="rho_schedule", passed=abs(value - 28.469) < 1e-9, value=value, limit=28.469)


def check_epsilon_rule() -> Check:
    worst = 0.0
    grid = UniformGrid1D.spanning(0.0, 1.0, 2)
    for extreme, background, mode, expected in EPSILON_TABLE:
        profile = DielectricProfile(grid=grid, values=[extreme, extreme])
        got = estimate_epsilon(profile, background, mode)
        worst = max(worst, float(np.max(np.abs(np.subtract(got, expected)))))
    return Check(name="epsilon_rule", passed=worst < 1e-9, value=worst, limit=1e-9)


def check_gradient(seed: int = 0, samples: int = 20) -> Check:
    rng = np.random.default_rng(seed)
    p = CarlemanParams()
    q = small_field(rng)
    grad = gradient_K(q, p, boundary_fill="exact").values
    scale = float(np.max(np.abs(grad)))
    worst = 0.0
    rows, cols = q.values.shape
    for _ in range(samples):
        i, j = int(rng.integers(2, rows - 2)), int(rng.integers(0, cols))
        eps = 1e-6 * (1.0 + abs(q.values[i, j]))
        plus, minus = q.values.copy(), q.values.copy()
        plus[i, j] += eps
        minus[i, j] -= eps
        fd = (functional_K(q.with_values(plus), p) - functional_K(q.with_values(minus), p)) / (2.0 * eps)
        worst = max(worst, abs(fd - grad[i, j]) / (abs(grad[i, j]) + 1e-2 * scale))
    return Check(name="gradient_oracle", passed=worst < 1e-5, value=worst, limit=1e-5)


def check_bregman(seed: int = 0, pairs: int = 10) -> Check:
    rng = np.random.default_rng(seed)
    p = CarlemanParams()
    worst = np.inf
    for _ in range(pairs):
        q1 = small_field(rng, amplitude=1e-3)
        q2 = q1.with_values(q1.values + 1e-3 * rng.standard_normal(q1.values.shape))
        delta = q2.values - q1.values
        k1, k2 = functional_K(q1, p), functional_K(q2, p)
        gap = k2 - k1 - float(np.sum(gradient_K(q1, p, boundary_fill="exact").values * delta))
        bound = 0.5 * p.gamma * float(np.sum(delta**2)) * q1.grid.cell
        worst = min(worst, gap - bound + 1e-12 * (abs(k1) + abs(k2)))
    return Check(name="bregman_gap", passed=worst >= 0.0, value=worst, limit=0.0)


def check_plateau() -> Check:
    cfg = ForwardConfig()
    field = solve_forward(DielectricModel(kind="constant", level=1.0), cfg)
    t = field.grid.tgrid.nodes
    origin = cfg.n_y // 2
    window = (t >= 0.1) & (t <= 1.9)
    deviation = float(np.max(np.abs(field.values[origin, window] - 0.5)))
    return Check(name="forward_plateau", passed=deviation <= 1e-2, value=deviation, limit=1e-2)


def check_absorbing() -> Check:
    field = solve_forward(DielectricModel(kind="constant", level=1.0), ForwardConfig(source_sharpness=1e3))
    residual = max(absorbing_residual(field, "left"), absorbing_residual(field, "right"))
    return Check(name="absorbing_residual", passed=residual <= 0.05, value=residual, limit=0.05)


def check_stage2_roundtrip() -> Check:
    model = DielectricModel()
    xgrid = InversionDomain().grid.xgrid
    c = run_algorithm2(true_potential(model, xgrid), RecoveryConfig())
    error = relative_l2(c.values, model.evaluate(c.grid.nodes))
    return Check(name="stage2_roundtrip", passed=error <= 0.05, value=error, limit=0.05)


CHECKS: tuple[Callable[[], Check], ...] = (
    check_rho_schedule,
    check_epsilon_rule,
    check_gradient,
    check_bregman,
    check_plateau,
    check_absorbing,
    check_stage2_roundtrip,
)


def run_selftest() -> SelftestReport:
    checks = []
    for check in CHECKS:
        result = check()
        status = "ok" if result.passed else "FAILED"
        logger.info("%s: %s (%.3g vs %.3g)", result.name, status, result.value, result.limit)
        checks.append(result)
    return SelftestReport(checks=checks)
