"""Offline tests for interval segmentation, the RK4/WLS recovery of c(y) and the epsilon rule."""

import numpy as np
import pytest

from tests.wave_inverse.helpers import TEST1_MODEL, sample_1d
from wave_inverse.convexify import PotentialProfile
from wave_inverse.errors import DomainError, PhysicalBreakdownError
from wave_inverse.grid_core import GridFn1D, UniformGrid1D
from wave_inverse.models import InversionDomain, RecoveryConfig
from wave_inverse.recover_c import (
    DielectricProfile,
    PtildeProfile,
    PtildeSegment,
    Segment,
    estimate_epsilon,
    integrate_depth,
    relative_l2,
    rho_star,
    rk_advance,
    run_algorithm2,
    segment_intervals,
    wls_fit,
)
from wave_inverse.wave_forward import true_potential


def whole(profile: GridFn1D, kind: str = "neg") -> Segment:
    grid = profile.grid
    return Segment(kind=kind, start_index=0, stop_index=grid.count - 1, start=grid.start, stop=grid.stop)


def test_rho_schedule_matches_tabulated_lengths() -> None:
    assert rho_star(0.1) == pytest.approx(28.469, abs=1e-3)
    assert rho_star(0.073) == pytest.approx(36.336, abs=1e-3)
    assert rho_star(0.5) > rho_star(1.0) > 1.0


@pytest.mark.parametrize("length", [0.0, -0.1])
def test_rho_schedule_rejects_empty_intervals(length: float) -> None:
    with pytest.raises(DomainError):
        rho_star(length)


def test_segmentation_of_zero_and_of_a_lone_spike_is_one_negative_interval() -> None:
    grid = UniformGrid1D.spanning(0.0, 1.0, 101)
    spike = np.zeros(101)
    spike[50] = 1.0

    for values in (np.zeros(101), spike):
        partition = segment_intervals(GridFn1D(grid=grid, values=values))
        assert [s.kind for s in partition.segments] == ["neg"]
        assert partition.neg_intervals == [(0.0, pytest.approx(1.0))]


def test_segmentation_shares_boundary_nodes_between_neighbours() -> None:
    grid = UniformGrid1D.spanning(0.0, 1.0, 101)
    values = np.full(101, -0.5)
    values[30:40] = 1.0
    values[40:] = -0.2

    segments = segment_intervals(GridFn1D(grid=grid, values=values)).segments

    assert [s.kind for s in segments] == ["neg", "pos", "neg"]
    assert [(s.start_index, s.stop_index) for s in segments] == [(0, 30), (30, 40), (40, 100)]
    assert segments[1].length == pytest.approx(0.1)


def test_rk_advance_keeps_p_constant_for_zero_potential() -> None:
    profile = sample_1d(UniformGrid1D.spanning(0.0, 1.0, 101), lambda x: 0.0 * x)

    part = rk_advance(profile, whole(profile), (1.0, 0.0))

    np.testing.assert_allclose(part.p, 1.0)
    np.testing.assert_allclose(part.dp, 0.0)
    assert part.method == "rk4"


@pytest.mark.parametrize(
    ("equation", "closed_form"),
    [
        ("consistent", lambda x, m: (1.0 - m * x / 2) ** -2),
        ("printed", lambda x, m: (1.0 + m * x / 2) ** 2),
    ],
)
def test_rk_advance_follows_the_closed_form_with_zero_potential(equation, closed_form) -> None:
    profile = sample_1d(UniformGrid1D.spanning(0.0, 1.0, 101), lambda x: 0.0 * x)

    part = rk_advance(profile, whole(profile), (1.0, 0.2), equation)

    np.testing.assert_allclose(part.p, closed_form(part.x, 0.2), rtol=1e-8)


def test_rk_advance_stops_when_p_leaves_the_positive_axis() -> None:
    profile = sample_1d(UniformGrid1D.spanning(0.0, 1.0, 101), lambda x: -10.0 + 0.0 * x)

    with pytest.raises(PhysicalBreakdownError) as caught:
        rk_advance(profile, whole(profile), (1.0, 0.0), "printed")

    assert 0.0 < caught.value.x < 1.0


def test_wls_fit_recovers_a_manufactured_profile() -> None:
    grid = UniformGrid1D.spanning(0.0, 0.1, 41)
    x = grid.nodes
    p = 1.0 - 0.5 * x**2 + x**3
    dp = -x + 3 * x**2
    ddp = -1.0 + 6 * x
    profile = GridFn1D(grid=grid, values=ddp / (2 * p) - 0.75 * dp**2 / p**2)

    part = wls_fit(profile, whole(profile, "pos"), (1.0, 0.0, -1.0), rho_star(0.1))

    assert part.method == "wls"
    assert part.rho == pytest.approx(28.469, abs=1e-3)
    np.testing.assert_allclose(part.p, p, atol=1e-4)
    assert part.left_residual_final < part.left_residual_initial


def test_wls_left_residual_is_measured_where_the_fit_is_free() -> None:
    grid = UniformGrid1D.spanning(0.0, 0.1, 41)
    profile = GridFn1D(grid=grid, values=np.full(41, 0.3))

    part = wls_fit(profile, whole(profile, "pos"), (1.0, 0.0, 0.0), rho_star(0.1))

    assert part.left_residual_initial == pytest.approx(0.3, rel=1e-2)
    assert part.left_residual_final < 0.1 * part.left_residual_initial


def test_rk_advance_reports_blow_up_of_the_consistent_equation() -> None:
    profile = sample_1d(UniformGrid1D.spanning(0.0, 1.0, 101), lambda x: 0.0 * x)

    with pytest.raises(PhysicalBreakdownError, match="finite range|p reached") as caught:
        rk_advance(profile, Segment(kind="neg", start_index=0, stop_index=100, start=0.0, stop=1.0), (1.0, 5.0))

    assert 0.35 < caught.value.x < 1.0


def test_ptilde_segment_rejects_non_finite_samples() -> None:
    with pytest.raises(ValueError):
        PtildeSegment(x=[0.0, 0.1], p=[1.0, np.nan], dp=[0.0, 0.0], method="rk4")


def test_depth_integration_of_unit_and_half_profiles() -> None:
    x = np.linspace(0.0, 1.5, 151)

    y, x_stop = integrate_depth(PtildeProfile(x=x, p=np.ones(151), dp=np.zeros(151)))
    half, half_stop = integrate_depth(PtildeProfile(x=x, p=np.full(151, 0.5), dp=np.zeros(151)))

    np.testing.assert_allclose(y, x, atol=1e-12)
    assert x_stop == pytest.approx(1.0, abs=1e-9)
    assert half[-1] == pytest.approx(0.75)
    assert half_stop == 1.5


def test_zero_potential_recovers_the_homogeneous_medium() -> None:
    xgrid = InversionDomain().grid.xgrid
    r = PotentialProfile(grid=xgrid, values=np.zeros(xgrid.count))

    c = run_algorithm2(r)

    assert c.grid.count == 201
    np.testing.assert_allclose(c.values, 1.0, atol=1e-10)
    assert [record.method for record in c.provenance] == ["rk4"]
    assert c.x_stop == pytest.approx(1.0, abs=1e-6)


def test_exact_potential_of_the_test_model_recovers_c() -> None:
    r = true_potential(TEST1_MODEL, InversionDomain().grid.xgrid)

    c = run_algorithm2(r, RecoveryConfig())

    assert relative_l2(c.values, TEST1_MODEL.evaluate(c.grid.nodes)) <= 0.05
    assert [record.method for record in c.provenance] == ["rk4", "wls", "rk4"]
    assert np.all(np.diff(c.ptilde.x) > 0)
    assert np.all(c.values > 0)


def test_unweighted_least_squares_recovers_c_less_accurately_than_the_length_schedule() -> None:
    r = true_potential(TEST1_MODEL, InversionDomain().grid.xgrid)
    exact = TEST1_MODEL.evaluate

    scheduled = run_algorithm2(r, RecoveryConfig())
    flat = run_algorithm2(r, RecoveryConfig(rho_override=0.0))

    assert flat.provenance[1].rho == 0.0
    assert relative_l2(flat.values, exact(flat.grid.nodes)) > relative_l2(scheduled.values, exact(scheduled.grid.nodes))


def test_breakdown_carries_the_interval_that_failed() -> None:
    xgrid = InversionDomain().grid.xgrid
    r = PotentialProfile(grid=xgrid, values=np.full(xgrid.count, -10.0))

    with pytest.raises(PhysicalBreakdownError) as caught:
        run_algorithm2(r, RecoveryConfig(equation="printed"))

    assert any("interval 0 (neg)" in note for note in caught.value.__notes__)


@pytest.mark.parametrize(
    ("extreme", "background", "mode", "expected"),
    [
        (4.12, (3.0, 5.0), "max", (12.36, 20.60)),
        (0.26, (3.0, 5.0), "min", (0.78, 1.30)),
        (6.27, (1.0, 1.0), "max", (6.27, 6.27)),
        (3.21, (1.0, 1.0), "max", (3.21, 3.21)),
        (5.39, (3.0, 5.0), "max", (16.17, 26.95)),
    ],
)
def test_epsilon_interval_scales_the_extreme_of_c(extreme, background, mode, expected) -> None:
    grid = UniformGrid1D.spanning(0.0, 1.0, 3)
    values = [1.0, extreme, 1.0] if mode == "max" else [1.0, extreme, 2.0]

    got = estimate_epsilon(DielectricProfile(grid=grid, values=values), background, mode)

    assert got == pytest.approx(expected)


def test_epsilon_rejects_a_reversed_background() -> None:
    profile = DielectricProfile(grid=UniformGrid1D.spanning(0.0, 1.0, 2), values=[1.0, 2.0])

    with pytest.raises(DomainError):
        estimate_epsilon(profile, (5.0, 3.0))


def test_epsilon_interval_widens_with_the_background() -> None:
    profile = DielectricProfile(grid=UniformGrid1D.spanning(0.0, 1.0, 2), values=[1.0, 2.0])

    narrow = estimate_epsilon(profile, (3.0, 5.0))
    wide = estimate_epsilon(profile, (2.0, 6.0))

    assert wide[0] < narrow[0] < narrow[1] < wide[1]


def test_dielectric_profile_must_stay_positive() -> None:
    with pytest.raises(ValueError):
        DielectricProfile(grid=UniformGrid1D.spanning(0.0, 1.0, 2), values=[1.0, 0.0])


def test_relative_l2_error() -> None:
    assert relative_l2([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert relative_l2([0.0, 0.0], [3.0, 4.0]) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        relative_l2([1.0], [0.0])
    with pytest.raises(DomainError):
        relative_l2([1.0, 2.0], [1.0])
