import numpy as np
import pytest

from shared.encoding import (
    EncodingError,
    coefficient_scale,
    decode,
    encode,
    get_family,
    in_training_band,
    list_families,
    load_ranges,
    ood_sweep_values,
    sample_parameters,
    training_families,
)
from shared.models import EquationCoeffs, PdeFamilyName


def test_encode_places_parameters_in_basis_slots():
    c = encode(PdeFamilyName.KDV, {"b": -1.5, "epsilon": -10.0, "zeta": -4.0})
    np.testing.assert_array_equal(c.to_array(), [0, 0, 0, -1.5, 0, -10.0, -4.0])


def test_fisher_rate_fills_two_slots_with_opposite_signs():
    c = encode("fisher", {"r": 0.02, "nu": 1.0})
    assert c.c0 == pytest.approx(0.02)
    assert c.c1 == pytest.approx(-0.02)
    assert c.c4 == pytest.approx(1.0)


def test_decode_inverts_encode_for_every_family():
    for spec in list_families():
        params = {p: spec.ranges[p].midpoint for p in spec.parameters}
        assert decode(spec, encode(spec, params)) == pytest.approx(params)


def test_encode_rejects_missing_and_extra_parameters():
    with pytest.raises(EncodingError):
        encode("burgers", {"b": -1.0})
    with pytest.raises(EncodingError):
        encode("burgers", {"b": -1.0, "nu": 1.0, "zeta": 2.0})


def test_encode_rejects_non_finite_values():
    with pytest.raises(EncodingError) as exc:
        encode("advection_diffusion", {"c": float("nan"), "nu": 1.0})
    assert exc.value.parameter == "c"


def test_unknown_family_is_an_encoding_error():
    with pytest.raises(EncodingError):
        get_family("navier_stokes")


def test_decode_rejects_stray_slots():
    with pytest.raises(EncodingError):
        decode("burgers", [0, 0, 1.0, -1.0, 1.0, 0, 0])


def test_coefficients_reject_nan():
    with pytest.raises(ValueError):
        EquationCoeffs(c3=float("inf"))


def test_burgers_is_held_out_of_training_families():
    names = [f.name for f in training_families()]
    assert PdeFamilyName.BURGERS not in names
    assert len(names) == 4


def test_sample_parameters_is_a_deterministic_cartesian_grid():
    grid = sample_parameters("kdv", None, 2)
    assert len(grid) == 8
    assert grid == sample_parameters("kdv", np.random.default_rng(5), 2)
    assert {g["b"] for g in grid} == {-2.0, -1.0}


def test_single_point_axis_uses_midpoint():
    (params,) = sample_parameters("advection_diffusion", None, 1)
    assert params == {"c": 0.0, "nu": 5.0}


def test_sample_parameters_rejects_zero_points():
    with pytest.raises(EncodingError):
        sample_parameters("kdv", None, 0)


def test_ood_sweep_values_span_the_requested_range():
    values = ood_sweep_values("burgers", "nu", 0.1, 4.0, 5)
    assert values[0] == pytest.approx(0.1)
    assert values[-1] == pytest.approx(4.0)
    assert len(values) == 5
    with pytest.raises(EncodingError):
        ood_sweep_values("burgers", "nu", 1.0, 2.0, 1)
    with pytest.raises(EncodingError):
        ood_sweep_values("burgers", "kappa", 1.0, 2.0, 3)


def test_in_training_band_is_inclusive():
    assert in_training_band("burgers", "nu", 0.5)
    assert in_training_band("burgers", "nu", 2.0)
    assert not in_training_band("burgers", "nu", 2.5)


def test_coefficient_scale_uses_training_ranges_only():
    scale = coefficient_scale()
    assert scale.shape == (7,)
    assert scale[4] == pytest.approx(8.0)
    assert scale[6] == pytest.approx(27.0)
    assert np.all(scale > 0)


def test_load_ranges_overrides_registry(tmp_path):
    path = tmp_path / "ranges.conf"
    path.write_text("# narrower band\nkdv.b = -1.5,-1.0\n")
    (updated,) = load_ranges(path)
    assert updated.ranges["b"].low == -1.5
    assert get_family("kdv").ranges["epsilon"].low == -20.0


def test_load_ranges_rejects_malformed_lines(tmp_path):
    path = tmp_path / "ranges.conf"
    path.write_text("kdv.b = -1.5\n")
    with pytest.raises(EncodingError):
        load_ranges(path)
    path.write_text("kdv.kappa = 1,2\n")
    with pytest.raises(EncodingError):
        load_ranges(path)
