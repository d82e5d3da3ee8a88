import numpy as np
import pandas as pd
import pytest

from autodiff.params import read_checkpoint
from autodiff.tensor import Tensor
from datagen.corpus import CorpusConfig, HoldOutViolationError, build_corpus, corpus_splits, split_validation
from datagen.generator import generate_set
from emulators.base import ModelConfig
from emulators.factory import create_emulator
from evaluation.baselines import PersistenceBaseline
from evaluation.protocols import evaluate_params, midpoint_params
from shared.models import Architecture, PdeFamilyName, ScalePreset, Split
from solver.spectral import Grid1D, StepperConfig
from training.losses import data_loss, pde_residual_loss, pde_residual_tensor, total_loss
from training.schedules import PinoSchedule
from training.trainer import (
    BEST_NAME,
    CURVE_COLUMNS,
    CURVE_NAME,
    LAST_GOOD_NAME,
    LAST_NAME,
    BatchSampler,
    TrainConfig,
    Trainer,
    TrainingDivergenceError,
    validation_nrmse,
)

GRID = Grid1D(n=32)
FAST = StepperConfig(dt=0.01, substeps=2)


@pytest.fixture(scope="module")
def corpus():
    traj = generate_set("advection_diffusion", {"c": 1.0, "nu": 2.0}, 6, 6, GRID, FAST, seed=1, max_mode=3)
    train, val = split_validation(traj, 3)
    return [train], [val]


def tiny_model(arch: Architecture = Architecture.PINO):
    config = ModelConfig.from_preset(arch, ScalePreset.DESK, 32, channels=8, blocks=1, cond_hidden=8, levels=2, dt=0.01)
    return create_emulator(config, GRID)


def tiny_config(**overrides) -> TrainConfig:
    values = dict(steps=4, batch_size=4, val_every=2, log_every=2, val_time_stride=2)
    values.update(overrides)
    return TrainConfig.for_architecture(Architecture.PINO, ScalePreset.DESK, **values)


# ━━━ schedules & losses ━━━

def test_pino_schedule_ramps_then_holds():
    schedule = PinoSchedule(max_weight=3e-3, total_steps=100, ramp_fraction=0.5)
    assert schedule(0) == 0.0
    assert schedule(25) == pytest.approx(1.5e-3)
    assert schedule(50) == pytest.approx(3e-3)
    assert schedule(99) == pytest.approx(3e-3)
    assert PinoSchedule(0.0, 100)(60) == 0.0
    with pytest.raises(ValueError):
        PinoSchedule(1.0, 100, ramp_fraction=1.5)


def test_train_config_presets():
    pino = TrainConfig.for_architecture(Architecture.PINO, ScalePreset.PAPER)
    assert (pino.steps, pino.batch_size, pino.unroll, pino.pino_max_weight) == (100_000, 64, 5, 3e-3)
    lc = TrainConfig.for_architecture(Architecture.LC, ScalePreset.DESK)
    assert (lc.unroll, lc.pino_max_weight, lc.peak_lr) == (1, 0.0, 5e-4)
    with pytest.raises(ValueError):
        TrainConfig(Architecture.LC, unroll=0)


def test_pde_residual_vanishes_on_the_exact_solution():
    nu, dt = 0.01, 0.01
    x = GRID.x
    k = 2 * np.pi
    u0 = np.sin(k * x)[None]
    u1 = u0 * np.exp(-nu * k ** 2 * dt)
    c = np.array([0, 0, 0, 0, nu, 0, 0])
    assert pde_residual_loss(u0, u1, c, GRID, dt) < 1e-5
    assert pde_residual_loss(u0, u0, c, GRID, dt) > 0.1


def test_differentiable_residual_matches_the_numpy_residual(smooth_u):
    c = np.array([[0.1, -0.1, 0.5, -1.0, 0.05, -0.001, -1e-5]])
    u0 = smooth_u[None]
    u1 = 0.98 * u0
    value = pde_residual_loss(u0, u1, c, GRID, 0.01)
    tensor = pde_residual_tensor(u0, Tensor(u1.astype(np.float32)), c, GRID, 0.01)
    assert float(tensor.data) == pytest.approx(value, rel=1e-3)


def test_float_residual_does_not_carry_gradient(smooth_u):
    model = tiny_model()
    u0 = smooth_u[None].astype(np.float32)
    data = data_loss(model, u0, (0.9 * u0)[:, None], np.ones((1, 7)) * 0.1)
    terms = total_loss(data, 0.5, 0.1)
    assert float(terms.total.data) == pytest.approx(terms.data + 0.05, rel=1e-5)
    assert terms.pde == 0.5


# ━━━ batching ━━━

def test_batch_sampler_returns_consecutive_windows(corpus):
    train, _ = corpus
    sampler = BatchSampler(train, unroll=2)
    u, targets, c = sampler.sample(np.random.default_rng(0), 5)
    assert u.shape == (5, 32)
    assert targets.shape == (5, 2, 32)
    assert c.shape == (5, 7)
    states = train[0].states
    for row in range(5):
        hits = [(s, t) for s in range(states.shape[0]) for t in range(states.shape[1] - 2) if np.array_equal(states[s, t], u[row])]
        s, t = hits[0]
        np.testing.assert_array_equal(targets[row], states[s, t + 1:t + 3])


def test_batch_sampler_rejects_too_short_trajectories(corpus):
    train, _ = corpus
    with pytest.raises(ValueError):
        BatchSampler(train, unroll=7)


def test_validation_nrmse_of_an_identity_model(corpus):
    _, val = corpus
    model = tiny_model()
    value = validation_nrmse(model, val, time_stride=1)
    assert np.isfinite(value) and value > 0


# ━━━ trainer ━━━

def test_trainer_refuses_held_out_and_test_data(tmp_path, corpus):
    train, val = corpus
    burgers = generate_set("burgers", {"b": -1.5, "nu": 1.0}, 2, 2, GRID, FAST, max_mode=3, split=Split.TEST)
    with pytest.raises(HoldOutViolationError):
        Trainer(tiny_model(), train + [burgers], val, tiny_config(), tmp_path)
    test_set = generate_set("kdv", {"b": -1.5, "epsilon": -10.0, "zeta": -5.0}, 2, 2, GRID, FAST, max_mode=3, split=Split.TEST)
    with pytest.raises(HoldOutViolationError):
        Trainer(tiny_model(), train + [test_set], val, tiny_config(), tmp_path)


def test_training_writes_checkpoints_and_curve(tmp_path, corpus):
    train, val = corpus
    result = Trainer(tiny_model(), train, val, tiny_config(pino_max_weight=1e-3), tmp_path).run()
    assert result.final_step == 4
    assert result.steps_run == 4
    for name in (BEST_NAME, LAST_NAME, CURVE_NAME):
        assert (tmp_path / name).exists()
    curve = pd.read_csv(tmp_path / CURVE_NAME)
    assert list(curve.columns) == CURVE_COLUMNS
    assert curve["step"].tolist() == [0, 1, 2, 3]
    assert curve["lambda"].iloc[0] == 0.0
    assert curve["lambda"].iloc[-1] > 0.0
    assert curve["val_nrmse"].notna().sum() == 2
    step, metadata, _ = read_checkpoint(tmp_path / LAST_NAME)
    assert step == 4
    assert metadata["architecture"] == "pino"


def test_training_is_reproducible(tmp_path, corpus):
    train, val = corpus
    Trainer(tiny_model(), train, val, tiny_config(), tmp_path / "a").run()
    Trainer(tiny_model(), train, val, tiny_config(), tmp_path / "b").run()
    _, _, a = read_checkpoint(tmp_path / "a" / LAST_NAME)
    _, _, b = read_checkpoint(tmp_path / "b" / LAST_NAME)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name], err_msg=name)


def test_resumed_run_matches_an_uninterrupted_run(tmp_path, corpus):
    train, val = corpus
    Trainer(tiny_model(), train, val, tiny_config(), tmp_path / "full").run()

    split_dir = tmp_path / "split"
    first = Trainer(tiny_model(), train, val, tiny_config(), split_dir).run(stop_at=2)
    assert first.final_step == 2
    resumed = Trainer(tiny_model(), train, val, tiny_config(), split_dir, resume_from=split_dir / LAST_NAME).run()
    assert resumed.steps_run == 2

    _, _, full = read_checkpoint(tmp_path / "full" / LAST_NAME)
    _, _, again = read_checkpoint(split_dir / LAST_NAME)
    for name in full:
        np.testing.assert_array_equal(full[name], again[name], err_msg=name)
    assert pd.read_csv(split_dir / CURVE_NAME)["step"].tolist() == [0, 1, 2, 3]


def test_divergence_restores_the_last_good_parameters(tmp_path, corpus):
    train, val = corpus
    model = tiny_model()
    initial = model.store.state()
    with pytest.raises(TrainingDivergenceError) as exc:
        Trainer(model, train, val, tiny_config(divergence_threshold=1e-12), tmp_path).run()
    assert exc.value.step == 0
    _, _, arrays = read_checkpoint(tmp_path / LAST_GOOD_NAME)
    for name, value in initial.items():
        np.testing.assert_array_equal(arrays[name], value)


@pytest.mark.slow
def test_training_reduces_the_data_loss(tmp_path, corpus):
    train, val = corpus
    config = tiny_config(steps=200, batch_size=8, peak_lr=2e-3, val_every=50, log_every=50)
    result = Trainer(tiny_model(), train, val, config, tmp_path).run()
    losses = np.array([p.data_loss for p in result.curve])
    assert losses[-20:].mean() < losses[:20].mean()
    assert np.isfinite(result.best_val_nrmse)


# Desk-scale training signal on Advection-Diffusion
DESK_STEPS = 2000
DESK_MAE_FRACTION = 0.1
DESK_ROLLOUT_STEP = 10


@pytest.mark.slow
def test_desk_learned_correction_on_advection_diffusion(tmp_path):
    grid = Grid1D(n=160)
    family = PdeFamilyName.ADVECTION_DIFFUSION
    config = CorpusConfig(families=(family,), grid_points_per_axis=2, n_samples=20, n_steps=10, val_stride=5)
    train, val = corpus_splits(build_corpus(config, 0, grid), config.val_stride)

    model = create_emulator(ModelConfig.from_preset(Architecture.LC, ScalePreset.DESK, 160), grid)
    train_config = TrainConfig.for_architecture(Architecture.LC, ScalePreset.DESK, steps=DESK_STEPS)
    result = Trainer(model, train, val, train_config, tmp_path).run()
    assert result.final_step == DESK_STEPS

    persistence_mae, model_mae = [], []
    for traj in train:
        states = traj.states.astype(np.float64)
        inputs, targets = states[:, :-1].reshape(-1, grid.n), states[:, 1:].reshape(-1, grid.n)
        persistence_mae.append(np.mean(np.abs(targets - inputs)))
        model_mae.append(np.mean(np.abs(model.predict(inputs, traj.coefficients.to_array()) - targets)))
    assert np.mean(model_mae) < DESK_MAE_FRACTION * np.mean(persistence_mae)

    params = midpoint_params(family)
    learned = evaluate_params(model, family, params, "id", grid, n_ic=5, n_steps=DESK_ROLLOUT_STEP)
    baseline = evaluate_params(PersistenceBaseline(), family, params, "id", grid, n_ic=5, n_steps=DESK_ROLLOUT_STEP)
    assert learned.mean[-1] < baseline.mean[-1]
