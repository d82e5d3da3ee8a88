import numpy as np
import pytest

from datagen.corpus import (
    CorpusConfig,
    CorpusNotFoundError,
    HoldOutViolationError,
    build_corpus,
    corpus_splits,
    load_corpus,
    read_manifest,
    validation_indices,
    write_corpus,
)
from datagen.generator import GenerationError, check_mean_drift, generate_set, mean_drift, set_seed
from datagen.initial_conditions import InitialConditionError, InitialConditionSpec, make_initial_condition
from datagen.storage import TrajectoryFormatError, decode_set, encode_set, load_set, save_set
from shared.models import PdeFamilyName, Split
from solver.spectral import StepperConfig

FAST = StepperConfig(dt=0.01, substeps=2)
ADV = {"c": 1.0, "nu": 2.0}


def small_config(**overrides) -> CorpusConfig:
    values = dict(
        families=(PdeFamilyName.ADVECTION_DIFFUSION,),
        split=Split.TRAIN,
        grid_points_per_axis=1,
        n_samples=4,
        n_steps=3,
        max_mode=3,
        val_stride=2,
    )
    values.update(overrides)
    return CorpusConfig(**values)


def test_initial_condition_is_normalised_and_band_limited(grid32):
    u = make_initial_condition(InitialConditionSpec(max_mode=3, seed=7), grid32)
    assert np.max(np.abs(u)) == pytest.approx(1.0)
    spectrum = np.abs(np.fft.rfft(u))
    assert np.all(spectrum[4:] < 1e-12)


def test_initial_condition_is_seeded(grid32):
    a = make_initial_condition(InitialConditionSpec(seed=3, max_mode=3), grid32)
    b = make_initial_condition(InitialConditionSpec(seed=3, max_mode=3), grid32)
    c = make_initial_condition(InitialConditionSpec(seed=4, max_mode=3), grid32)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_initial_condition_without_mean(grid32):
    u = make_initial_condition(InitialConditionSpec(seed=1, max_mode=3, include_mean=False), grid32)
    assert abs(u.mean()) < 1e-12


def test_initial_condition_rejects_aliasing_modes(grid32):
    with pytest.raises(InitialConditionError):
        make_initial_condition(InitialConditionSpec(max_mode=11), grid32)


def test_set_seed_separates_splits_and_tuples():
    base = set_seed(0, PdeFamilyName.KDV, 0, Split.TRAIN)
    assert base == set_seed(0, PdeFamilyName.KDV, 0, Split.TRAIN)
    assert base != set_seed(0, PdeFamilyName.KDV, 0, Split.TEST)
    assert base != set_seed(0, PdeFamilyName.KDV, 1, Split.TRAIN)
    assert base != set_seed(1, PdeFamilyName.KDV, 0, Split.TRAIN)


def test_generate_set_shapes_and_determinism(grid32):
    a = generate_set("advection_diffusion", ADV, 3, 5, grid32, FAST, seed=11, max_mode=3)
    b = generate_set("advection_diffusion", ADV, 3, 5, grid32, FAST, seed=11, max_mode=3)
    assert a.states.shape == (3, 6, 32)
    assert a.states.dtype == np.float32
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.seeds, b.seeds)
    assert a.coefficients.c2 == 1.0
    assert np.max(np.abs(a.states[:, 0])) == pytest.approx(1.0, abs=1e-6)


def test_test_split_draws_different_initial_conditions(grid32):
    train = generate_set("advection_diffusion", ADV, 2, 1, grid32, FAST, seed=5, max_mode=3)
    test = generate_set("advection_diffusion", ADV, 2, 1, grid32, FAST, seed=5, split=Split.TEST, max_mode=3)
    assert not set(train.seeds.tolist()) & set(test.seeds.tolist())


def test_conservative_set_is_generated_without_drift(grid32, caplog):
    with caplog.at_level("WARNING", logger="datagen.generator"):
        traj = generate_set("kdv", {"b": -1.5, "epsilon": -13.5, "zeta": -6.0}, 3, 4, grid32, FAST, seed=2, max_mode=3)
    assert traj.coefficients.conserves_mean
    assert mean_drift(traj.states) < 1e-6
    assert "Mean drift" not in caplog.text


def test_mean_drift_is_reported(caplog):
    states = np.zeros((2, 3, 8))
    states[1, 2] += 1e-3
    assert mean_drift(states) == pytest.approx(1e-3)
    with caplog.at_level("WARNING", logger="datagen.generator"):
        drift = check_mean_drift(states, PdeFamilyName.BURGERS, {"b": -1.5, "nu": 1.0})
    assert drift == pytest.approx(1e-3)
    assert "Mean drift" in caplog.text and "burgers" in caplog.text
    assert mean_drift(np.zeros((0, 3, 8))) == 0.0


def test_persistent_blow_up_raises_generation_error(grid32):
    with np.errstate(all="ignore"):
        with pytest.raises(GenerationError) as exc:
            generate_set(
                "advection_diffusion", {"c": 0.0, "nu": -1e6}, 2, 2, grid32,
                StepperConfig(dt=1.0, substeps=1), max_mode=3, max_attempts=2,
            )
    assert exc.value.family == "advection_diffusion"


def test_trajectory_file_round_trip(tmp_path, grid32):
    traj = generate_set("kdv", {"b": -1.5, "epsilon": -10.0, "zeta": -5.0}, 2, 2, grid32, FAST, seed=3, max_mode=3)
    path = save_set(traj, tmp_path / "a.traj")
    loaded = load_set(path, expected_n=32)
    np.testing.assert_array_equal(loaded.states, traj.states)
    np.testing.assert_array_equal(loaded.seeds, traj.seeds)
    assert loaded.family == PdeFamilyName.KDV
    assert loaded.params == pytest.approx(traj.params)


def test_corrupted_trajectory_is_rejected(grid32):
    traj = generate_set("advection_diffusion", ADV, 1, 1, grid32, FAST, max_mode=3)
    data = bytearray(encode_set(traj))
    data[-10] ^= 0xFF
    with pytest.raises(TrajectoryFormatError, match="checksum"):
        decode_set(bytes(data))
    with pytest.raises(TrajectoryFormatError, match="length"):
        decode_set(bytes(data[:-5]))
    with pytest.raises(TrajectoryFormatError, match="grid size"):
        decode_set(encode_set(traj), expected_n=64)


def test_missing_trajectory_file(tmp_path):
    with pytest.raises(TrajectoryFormatError):
        load_set(tmp_path / "missing.traj")


def test_validation_indices_take_every_stride_th_sample():
    assert validation_indices(50, 10) == [9, 19, 29, 39, 49]
    assert validation_indices(5, 1) == []


def test_held_out_family_cannot_enter_training():
    config = small_config(families=(PdeFamilyName.BURGERS,))
    with pytest.raises(HoldOutViolationError) as exc:
        build_corpus(config, seed=0)
    assert exc.value.family == "burgers"
    assert exc.value.split == "train"


def test_corpus_write_and_load(tmp_path, grid32):
    config = small_config()
    sets = build_corpus(config, 0, grid32, FAST)
    manifest = write_corpus(sets, tmp_path, config, 0, grid32, FAST)
    assert len(manifest.entries) == 1
    assert manifest.entries[0].val_indices == [1, 3]
    assert manifest.grid.n == 32

    loaded_manifest, loaded = load_corpus(tmp_path)
    assert loaded_manifest == read_manifest(tmp_path / "manifest.json")
    np.testing.assert_array_equal(loaded[0].states, sets[0].states)

    train, val = corpus_splits(loaded, loaded_manifest.val_stride)
    assert train[0].n_samples == 2
    assert val[0].n_samples == 2
    assert val[0].split == Split.VAL
    assert not set(train[0].seeds.tolist()) & set(val[0].seeds.tolist())


def test_corpus_is_reproducible(grid32):
    a = build_corpus(small_config(), 3, grid32, FAST)
    b = build_corpus(small_config(), 3, grid32, FAST)
    np.testing.assert_array_equal(a[0].states, b[0].states)


def test_test_split_may_include_the_held_out_family(grid32):
    config = small_config(families=(PdeFamilyName.BURGERS,), split=Split.TEST, n_samples=2)
    (traj,) = build_corpus(config, 0, grid32, FAST)
    assert traj.family == PdeFamilyName.BURGERS
    assert traj.split == Split.TEST


def test_missing_corpus(tmp_path):
    with pytest.raises(CorpusNotFoundError):
        read_manifest(tmp_path)


def test_corpus_rejects_a_swapped_trajectory_file(tmp_path, grid32):
    config = small_config()
    sets = build_corpus(config, 0, grid32, FAST)
    manifest = write_corpus(sets, tmp_path, config, 0, grid32, FAST)
    other = build_corpus(config, 1, grid32, FAST)[0]
    save_set(other, tmp_path / manifest.entries[0].file)
    with pytest.raises(TrajectoryFormatError, match="digest mismatch"):
        load_corpus(tmp_path)
