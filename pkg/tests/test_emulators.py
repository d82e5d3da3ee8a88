import numpy as np
import pytest

from autodiff.optim import AdamState, adam_step
from autodiff.params import CheckpointError, ParameterStore, save_checkpoint
from emulators.base import EmulatorNumericsError, ModelConfig
from emulators.factory import create_emulator, load_emulator, save_emulator
from emulators.features import model_features
from emulators.learned_correction import LearnedCorrection
from shared.models import Activation, Architecture, ScalePreset
from solver.spectral import Grid1D, StepperConfig, get_stepper
from training.losses import data_loss

C_NONZERO = np.array([0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7])
# KdV-like tuple with every slot switched on
C_ALL_SLOTS = np.array([0.02, -0.02, 0.5, -1.5, -0.5, -10.0, -5.0])


def tiny(arch: Architecture, n: int = 32, **overrides) -> ModelConfig:
    values = dict(channels=8, blocks=1, cond_hidden=8, levels=2, dt=0.01)
    values.update(overrides)
    return ModelConfig.from_preset(arch, ScalePreset.DESK, n, **values)


def test_presets_follow_the_size_table():
    paper = ModelConfig.from_preset("m4", "paper")
    assert (paper.channels, paper.blocks, paper.activation) == (160, 14, Activation.GELU)
    assert paper.modes == 32
    assert ModelConfig.from_preset(Architecture.PI_FNO_UNET, "paper").levels == 4
    assert ModelConfig.from_preset(Architecture.PINO, "desk").input_channels == 3


def test_model_config_rejects_unknown_fields():
    with pytest.raises(ValueError):
        ModelConfig.from_preset("m1", "desk", 32, depth=3)


@pytest.mark.parametrize("arch", [Architecture.PI_FNO_UNET, Architecture.LSC_FNO, Architecture.PINO])
def test_residual_models_are_identity_at_init(arch, smooth_u):
    model = create_emulator(tiny(arch))
    u = np.stack([smooth_u, -smooth_u])
    np.testing.assert_allclose(model.predict(u, C_NONZERO), u, atol=1e-6)


def test_learned_correction_starts_at_the_coarse_step(grid32, smooth_u):
    model = create_emulator(tiny(Architecture.LC))
    assert isinstance(model, LearnedCorrection)
    c = np.array([0, 0, 0.5, -1.0, 0.05, 0, 0])
    coarse = get_stepper(grid32, StepperConfig(dt=0.01, substeps=1, dealias=False)).step(smooth_u, c)
    np.testing.assert_allclose(model.predict(smooth_u, c), coarse, atol=1e-5)
    np.testing.assert_allclose(model.predict(smooth_u, np.zeros(7)), smooth_u, atol=1e-6)


@pytest.mark.parametrize("arch", list(Architecture))
def test_predict_accepts_single_and_batched_states(arch, smooth_u):
    model = create_emulator(tiny(arch))
    single = model.predict(smooth_u, C_NONZERO)
    batched = model.predict(np.stack([smooth_u] * 3), np.stack([C_NONZERO] * 3))
    assert single.shape == (32,)
    assert batched.shape == (3, 32)
    assert single.dtype == np.float64


@pytest.mark.parametrize("arch", list(Architecture))
def test_one_optimizer_step_moves_the_output(arch, smooth_u):
    model = create_emulator(tiny(arch))
    u0 = np.stack([smooth_u, 0.5 * smooth_u]).astype(np.float32)
    target = (0.9 * u0)[:, None, :]
    c = np.stack([C_NONZERO, C_NONZERO])
    before = model.predict(u0, c)

    loss = data_loss(model, u0, target, c)
    loss.backward()
    adam_step(model.store, AdamState(), lr=1e-2)

    assert np.max(np.abs(model.predict(u0, c) - before)) > 1e-6


def test_same_seed_gives_same_weights():
    a = create_emulator(tiny(Architecture.LSC_FNO, seed=4))
    b = create_emulator(tiny(Architecture.LSC_FNO, seed=4))
    for (name, pa), (_, pb) in zip(a.store.items(), b.store.items()):
        np.testing.assert_array_equal(pa.data, pb.data, err_msg=name)


@pytest.mark.parametrize("arch", [Architecture.PI_FNO_UNET, Architecture.LSC_FNO])
def test_downsampling_models_need_divisible_grids(arch):
    with pytest.raises(ValueError):
        create_emulator(tiny(arch, n=34, levels=3))


def test_grid_must_match_config():
    with pytest.raises(ValueError):
        create_emulator(tiny(Architecture.PINO), Grid1D(n=64))


def test_strict_forward_rejects_non_finite_states(smooth_u):
    model = create_emulator(tiny(Architecture.PINO))
    u = smooth_u.copy()[None]
    u[0, 3] = np.nan
    with pytest.raises(EmulatorNumericsError) as exc:
        model.forward(u, C_NONZERO, strict=True)
    assert exc.value.architecture == "pino"


def test_checkpoint_round_trip_restores_predictions(tmp_path, smooth_u):
    model = create_emulator(tiny(Architecture.LSC_FNO))
    for _, p in model.store.items():
        p.data = p.data + np.float32(0.01)
    model.store.step = 12
    path = save_emulator(model, tmp_path / "m.ckpt", {"corpus": "runs/corpus"}, {"adam.m/x": np.ones(2)})

    loaded, metadata, extras = load_emulator(path)
    assert loaded.config == model.config
    assert loaded.store.step == 12
    assert metadata["corpus"] == "runs/corpus"
    assert list(extras) == ["adam.m/x"]
    np.testing.assert_array_equal(loaded.predict(smooth_u, C_NONZERO), model.predict(smooth_u, C_NONZERO))


def test_checkpoint_with_unknown_architecture(tmp_path):
    model = create_emulator(tiny(Architecture.PINO))
    path = save_checkpoint(tmp_path / "m.ckpt", model.store, {"architecture": "transformer"})
    with pytest.raises(CheckpointError):
        load_emulator(path)


def test_checkpoint_with_missing_parameters(tmp_path):
    model = create_emulator(tiny(Architecture.PINO))
    partial = ParameterStore()
    for name, p in list(model.store.items())[:-1]:
        partial.add(name, p.data)
    path = save_checkpoint(tmp_path / "partial.ckpt", partial, model.metadata())
    with pytest.raises(CheckpointError):
        load_emulator(path)


def test_final_projection_starts_at_zero(grid32):
    model = create_emulator(tiny(Architecture.PINO), grid32)
    assert model.store.init_spec("project.weight") == "zeros"
    assert not np.any(model.store["project.weight"].data)
    trained_init = create_emulator(tiny(Architecture.PINO, zero_final_layer=False), grid32)
    assert trained_init.store.init_spec("project.weight").startswith("normal")


def test_latent_encoder_reads_the_raw_state(smooth_u):
    assert ModelConfig.from_preset(Architecture.LSC_FNO, ScalePreset.PAPER).input_channels == 1
    model = create_emulator(tiny(Architecture.LSC_FNO))
    assert model.encoder[0].weight.shape == (4, 1, 3)
    assert model.predict(smooth_u, C_NONZERO).shape == (32,)


def test_state_channel_of_the_features_is_the_raw_state(grid32, smooth_u):
    features = model_features(smooth_u, grid32)
    np.testing.assert_array_equal(features[0], smooth_u.astype(np.float32))


@pytest.mark.parametrize("arch", list(Architecture))
def test_desk_models_on_the_full_grid(arch):
    grid = Grid1D(n=160)
    x = grid.x
    u = np.stack([np.sin(2 * np.pi * x), 0.5 * np.cos(4 * np.pi * x) + 0.2])
    c = np.stack([C_ALL_SLOTS, C_ALL_SLOTS])
    model = create_emulator(ModelConfig.from_preset(arch, ScalePreset.DESK, 160), grid)

    start = model.predict(u, c)
    if arch == Architecture.LC:
        np.testing.assert_allclose(start, model.coarse_stepper.step(u, c), atol=1e-5)
    else:
        np.testing.assert_allclose(start, u, atol=1e-6)

    loss = data_loss(model, u.astype(np.float32), (0.9 * u)[:, None, :].astype(np.float32), c)
    loss.backward()
    adam_step(model.store, AdamState(), lr=1e-2)

    trained = model.predict(u, c)
    for slot in range(7):
        bumped = c.copy()
        bumped[:, slot] *= 1.1
        change = np.max(np.abs(model.predict(u, bumped) - trained))
        assert change > 0, f"slot {slot} does not reach the output"
