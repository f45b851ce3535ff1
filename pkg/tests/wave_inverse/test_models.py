"""Offline tests for configuration contracts, env overrides and load precedence."""

import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from tests.wave_inverse.helpers import TEST2_MODEL
from wave_inverse.errors import ConfigurationError
from wave_inverse.models import (
    CarlemanParams,
    DielectricModel,
    EnvelopeParams,
    InversionDomain,
    PipelineConfig,
    RecoveryConfig,
    TabulatedProfile,
    env_overrides,
    load_pipeline_config,
    with_overrides,
)


@pytest.mark.parametrize("cbar", [1.0, 0.5])
def test_cbar_at_or_below_one_is_rejected(cbar: float) -> None:
    with pytest.raises(ValidationError, match="cbar must be > 1"):
        DielectricModel(cbar=cbar)
    with pytest.raises(ValidationError):
        InversionDomain(cbar=cbar)


def test_model_must_stay_inside_the_admissible_band() -> None:
    with pytest.raises(ValidationError, match="must stay in"):
        DielectricModel(amplitude=0.5, cbar=2.0)
    with pytest.raises(ValidationError, match="2 width"):
        DielectricModel(kind="double_gaussian", widths=[0.1], centers=[0.3])
    with pytest.raises(ValidationError):
        DielectricModel(kind="tabulated")


def test_gaussian_models_peak_at_their_centers_and_are_one_outside() -> None:
    y = np.array([-0.2, 0.3, 0.7, 1.2])

    c = TEST2_MODEL.evaluate(y)

    assert c[0] == c[-1] == 1.0
    assert c[1] == pytest.approx(1.0 / 0.8**2, rel=1e-2)
    assert c[2] == pytest.approx(1.0 / 0.8**2, rel=1e-2)


def test_tabulated_model_interpolates_inside_the_slab() -> None:
    table = TabulatedProfile(start=0.0, step=0.5, values=[1.0, 1.8, 1.0])
    model = DielectricModel(kind="tabulated", tabulated=table)

    assert model.evaluate(np.array([0.25, 0.5, 1.5])).tolist() == pytest.approx([1.4, 1.8, 1.0])


def test_inversion_domain_geometry() -> None:
    domain = InversionDomain(cbar=4.0, n_x=10, n_t=20)

    assert domain.a == pytest.approx(2.2)
    assert domain.ttilde == pytest.approx(4.4)
    assert domain.grid.shape == (11, 21)
    assert domain.data_tgrid.stop == pytest.approx(2 * domain.ttilde)


def test_carleman_parameters_accept_the_lambda_alias_and_expose_the_gamma_bound() -> None:
    params = CarlemanParams.model_validate({"lambda": 3.0})

    assert params.lambda_ == 3.0
    assert params.gamma_bound(2.0) == pytest.approx(2.0 * math.exp(-3.0))
    with pytest.raises(ValidationError):
        CarlemanParams(alpha=0.6)


def test_envelope_derivatives_match_finite_differences() -> None:
    envelope = EnvelopeParams(amplitude=0.3, width=40.0, center=1.0)
    t = np.linspace(0.5, 1.5, 11)
    h = 1e-5

    slope = (envelope.value(t + h) - envelope.value(t - h)) / (2 * h)
    curvature = (envelope.first_derivative(t + h) - envelope.first_derivative(t - h)) / (2 * h)

    np.testing.assert_allclose(envelope.first_derivative(t), slope, atol=1e-6)
    np.testing.assert_allclose(envelope.second_derivative(t), curvature, atol=1e-4)
    assert not np.any(EnvelopeParams.zero().value(t))


def test_recovery_background_must_be_ordered_and_positive() -> None:
    assert RecoveryConfig(background=(3.0, 5.0)).background == (3.0, 5.0)
    with pytest.raises(ValidationError):
        RecoveryConfig(background=(5.0, 3.0))
    with pytest.raises(ValidationError):
        RecoveryConfig(background=(0.0, 1.0))


def test_env_overrides_map_prefixed_names_onto_config_paths() -> None:
    overrides = env_overrides({"WAVE_INVERSE_CBAR": "3", "WAVE_INVERSE_SEED": "9", "OTHER_CBAR": "7"})

    assert overrides == {"domain.cbar": "3", "model.cbar": "3", "noise.seed": "9"}


def test_with_overrides_skips_none_and_revalidates() -> None:
    config = with_overrides(PipelineConfig(), {"carleman.lambda": 4.0, "noise.seed": None})

    assert config.carleman.lambda_ == 4.0
    assert config.noise.seed == 0
    with pytest.raises(ValidationError):
        with_overrides(PipelineConfig(), {"domain.cbar": 0.9})


def test_load_precedence_is_defaults_then_file_then_env_then_flags(tmp_path) -> None:
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"carleman": {"gamma": 1e-5, "lambda": 3.0}, "noise": {"seed": 4}}), encoding="utf-8")

    from_file = load_pipeline_config(path, environ={})
    from_env = load_pipeline_config(path, environ={"WAVE_INVERSE_GAMMA": "1e-4"})
    from_flags = with_overrides(from_env, {"carleman.gamma": 1e-3})

    assert (from_file.carleman.gamma, from_file.carleman.lambda_, from_file.noise.seed) == (1e-5, 3.0, 4)
    assert from_file.carleman.alpha == 0.5
    assert from_env.carleman.gamma == 1e-4
    assert from_env.carleman.lambda_ == 3.0
    assert from_flags.carleman.gamma == 1e-3


def test_env_cbar_is_validated_like_any_other_value() -> None:
    assert load_pipeline_config(environ={"WAVE_INVERSE_CBAR": "3.0"}).domain.cbar == 3.0
    with pytest.raises(ValidationError, match="cbar must be > 1"):
        load_pipeline_config(environ={"WAVE_INVERSE_CBAR": "0.5"})


def test_missing_config_file_is_a_configuration_error(tmp_path) -> None:
    with pytest.raises(ConfigurationError, match="not found"):
        load_pipeline_config(tmp_path / "missing.json", environ={})
