"""Offline tests for the forward solver, boundary data and the travel-time transform."""

import numpy as np
import pytest
from pydantic import ValidationError

from tests.wave_inverse.helpers import TEST1_MODEL, constant_model
from wave_inverse.errors import ConfigurationError
from wave_inverse.grid_core import UniformGrid1D, UniformGrid2D
from wave_inverse.models import DielectricModel, ForwardConfig, InversionDomain
from wave_inverse.recover_c import segment_intervals
from wave_inverse.wave_forward import (
    WaveField,
    absorbing_residual,
    cell_averaged_potential,
    discrete_energy,
    extract_boundary_data,
    interface_depth,
    invert_travel_time,
    reference_run,
    solve_forward,
    source_sharpness,
    subtract_incident,
    travel_time_map,
    true_potential,
)


def test_cfl_violation_names_the_required_time_steps() -> None:
    with pytest.raises(ConfigurationError, match="n_t >= 1455"):
        solve_forward(constant_model(), ForwardConfig(n_t=1000))


def test_odd_space_steps_are_rejected_because_y0_must_be_a_node() -> None:
    with pytest.raises(ValidationError):
        ForwardConfig(n_y=1601)


def test_homogeneous_medium_gives_the_half_plateau_at_the_source() -> None:
    cfg = ForwardConfig()
    field = solve_forward(constant_model(), cfg)
    t = field.grid.tgrid.nodes
    window = (t >= 0.1) & (t <= 1.9)

    assert np.all(field.values[:, 0] == 0.0)
    assert np.max(np.abs(field.values[cfg.n_y // 2, window] - 0.5)) <= 1e-2


def test_source_is_widened_to_a_few_grid_steps() -> None:
    default = ForwardConfig()
    sigma = 1.0 / np.sqrt(2.0 * source_sharpness(default))

    assert sigma == pytest.approx(6.0 * default.ygrid.step)
    assert source_sharpness(ForwardConfig(source_sharpness=1e3)) == 1e3
    assert source_sharpness(ForwardConfig(source_min_cells=0.0)) == 1e6


def test_homogeneous_medium_has_symmetric_zero_g1() -> None:
    data = extract_boundary_data(solve_forward(constant_model(), ForwardConfig()))

    assert data.g0.samples[0] == data.g1.samples[0] == 0.0
    assert np.max(np.abs(data.g1.samples)) <= 1e-8
    assert data.duration == pytest.approx(2.0)


def test_zero_field_gives_zero_boundary_data_and_zero_residual() -> None:
    ygrid = UniformGrid1D.spanning(-1.0, 1.0, 21)
    grid = UniformGrid2D(xgrid=ygrid, tgrid=UniformGrid1D.spanning(0.0, 1.0, 11))
    field = WaveField(grid=grid, values=np.zeros((21, 11)))

    data = extract_boundary_data(field, "one_sided")

    assert not np.any(data.g0.samples) and not np.any(data.g1.samples)
    assert absorbing_residual(field, "left") == 0.0


def test_boundary_extraction_needs_y0_on_the_grid() -> None:
    ygrid = UniformGrid1D(start=-1.05, step=0.1, count=21)
    grid = UniformGrid2D(xgrid=ygrid, tgrid=UniformGrid1D.spanning(0.0, 1.0, 5))
    field = WaveField(grid=grid, values=np.zeros((21, 5)))

    with pytest.raises(ConfigurationError):
        extract_boundary_data(field)


def test_absorbing_residual_is_small_and_shrinks_under_refinement() -> None:
    coarse = solve_forward(constant_model(), ForwardConfig(n_y=800, n_t=1600, source_sharpness=1e3))
    fine = solve_forward(constant_model(), ForwardConfig(source_sharpness=1e3))
    coarse_residual = max(absorbing_residual(coarse, side) for side in ("left", "right"))
    fine_residual = max(absorbing_residual(fine, side) for side in ("left", "right"))

    assert fine_residual <= 0.05
    assert coarse_residual / fine_residual >= 1.5


def test_energy_does_not_grow_once_the_source_has_spread() -> None:
    field = solve_forward(constant_model(), ForwardConfig(source_sharpness=1e3))
    energy = discrete_energy(field)
    t = field.grid.tgrid.nodes[1:-1]
    after = energy[t >= 0.2]

    assert np.all(np.diff(after) <= 0.01 * after[0])
    assert after[-1] < 0.05 * after[0]


def test_scattered_data_of_a_homogeneous_medium_vanishes() -> None:
    cfg = ForwardConfig(n_y=400, n_t=800)
    data = extract_boundary_data(solve_forward(constant_model(), cfg))

    scattered = subtract_incident(data, reference_run(cfg))

    assert np.max(np.abs(scattered.g0.samples)) == 0.0


def test_buried_bump_produces_a_delayed_negative_reflection() -> None:
    cfg = ForwardConfig()
    data = subtract_incident(extract_boundary_data(solve_forward(TEST1_MODEL, cfg)), reference_run(cfg))
    t = data.times

    assert np.max(np.abs(data.g0.samples[t < 0.3])) < 1e-6
    assert data.g0.samples.min() < -1e-3
    assert t[np.argmin(data.g0.samples)] > 0.5


@pytest.mark.slow
def test_reflection_amplitude_is_stable_under_grid_doubling() -> None:
    def reflection(cfg: ForwardConfig) -> float:
        data = extract_boundary_data(solve_forward(TEST1_MODEL, cfg))
        return float(subtract_incident(data, reference_run(cfg)).g0.samples.min())

    coarse = reflection(ForwardConfig())
    fine = reflection(ForwardConfig(n_y=3200, n_t=6400, source_min_cells=12.0))

    assert abs(coarse - fine) <= 0.05 * abs(fine)


@pytest.mark.parametrize(("level", "slope"), [(1.0, 1.0), (4.0, 2.0)])
def test_travel_time_of_a_constant_medium_is_linear(level: float, slope: float) -> None:
    ygrid = UniformGrid1D.spanning(0.0, 1.0, 101)

    xmap = travel_time_map(constant_model(level, cbar=5.0), ygrid)

    np.testing.assert_allclose(xmap.values, slope * ygrid.nodes, atol=1e-12)


def test_travel_time_of_test_model_is_monotone_and_bounded() -> None:
    xmap = travel_time_map(TEST1_MODEL, UniformGrid1D.spanning(0.0, 1.0, 2001))
    y_of_x = invert_travel_time(xmap)

    assert np.all(np.diff(xmap.values) > 0)
    assert 1.0 < xmap.values[-1] < 1.1 * np.sqrt(TEST1_MODEL.cbar)
    assert interface_depth(TEST1_MODEL) == pytest.approx(xmap.values[-1], rel=1e-6)
    np.testing.assert_allclose(y_of_x(xmap.values[::50]), xmap.nodes[::50], atol=1e-8)


def test_travel_time_needs_a_grid_starting_at_zero() -> None:
    with pytest.raises(ConfigurationError):
        travel_time_map(TEST1_MODEL, UniformGrid1D.spanning(0.1, 1.0, 11))


def test_constant_medium_has_zero_potential() -> None:
    r = true_potential(constant_model(1.5), InversionDomain().grid.xgrid)

    assert not np.any(r.values)
    assert not np.any(r.refined.values)


def test_test_model_potential_has_one_short_positive_interval() -> None:
    r = true_potential(TEST1_MODEL, InversionDomain().grid.xgrid)

    partition = segment_intervals(r)

    assert [segment.kind for segment in partition.segments] == ["neg", "pos", "neg"]
    (start, stop), = partition.pos_intervals
    assert stop - start == pytest.approx(0.073, abs=0.01)
    assert np.all(r.refined.values[r.refined.nodes > interface_depth(TEST1_MODEL)] == 0.0)


def test_potential_peak_is_converged_in_the_auxiliary_grid() -> None:
    xgrid = InversionDomain().grid.xgrid
    base = true_potential(TEST1_MODEL, xgrid)
    finer = true_potential(TEST1_MODEL, xgrid, aux_count=32001)

    peak, finer_peak = np.max(np.abs(base.refined.values)), np.max(np.abs(finer.refined.values))

    assert abs(peak - finer_peak) <= 0.02 * finer_peak


def test_cell_averages_of_the_potential_sit_at_the_cell_midpoints() -> None:
    xgrid = InversionDomain(n_x=400, n_t=10).grid.xgrid
    midpoints = UniformGrid1D(start=xgrid.start + xgrid.step / 2, step=xgrid.step, count=xgrid.count - 1)

    averaged = cell_averaged_potential(TEST1_MODEL, xgrid)
    pointwise = true_potential(TEST1_MODEL, midpoints)

    assert averaged.values[-1] == 0.0
    assert np.linalg.norm(averaged.values[:-1] - pointwise.values) <= 0.02 * np.linalg.norm(pointwise.values)
    assert averaged.refined.grid.count == 450
    assert not np.any(cell_averaged_potential(constant_model(1.5), xgrid).values)


def test_width_convention_printed_widens_the_gaussian() -> None:
    fwhm = DielectricModel(widths=[0.075])
    printed = DielectricModel(widths=[0.075], width_convention="printed")

    # half maximum of the bump sits at center +- w/2 under the fwhm reading
    bump = 1.0 - fwhm.evaluate(np.array([0.5, 0.5 + 0.0375])) ** -0.5
    assert bump[1] == pytest.approx(0.5 * bump[0])
    assert printed.sigma(0.075) > fwhm.sigma(0.075)
