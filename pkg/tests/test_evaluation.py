import numpy as np
import pytest

from datagen.corpus import CorpusConfig, build_corpus, corpus_splits, write_corpus
from evaluation.baselines import CoarseStepperBaseline, PersistenceBaseline, ReferenceOracle
from evaluation.metrics import GMEAN_FLOOR, gmean_nrmse, nrmse, nrmse_series, stability_horizon
from evaluation.protocols import (
    ContaminationError,
    RolloutReport,
    check_contamination,
    coefficient_sweep,
    default_ood_params,
    evaluate_heldout_burgers,
    evaluate_id_ood,
    evaluate_params,
    midpoint_params,
)
from evaluation.reports import emit_report, emit_summary, emit_sweep, read_report
from evaluation.rollout import rollout, rollout_parallel
from shared.config import apply_overrides
from shared.encoding import in_training_band
from emulators.base import ModelConfig
from emulators.factory import create_emulator
from shared.models import Architecture, PdeFamilyName, ScalePreset, Split
from solver.spectral import Grid1D, StepperConfig
from training.trainer import TrainConfig, Trainer


@pytest.fixture
def small_solver():
    """Short, cheap reference steps for protocol tests."""
    apply_overrides({
        "solver.grid_points": "32",
        "solver.dt": "0.01",
        "solver.reference_substeps": "4",
        "data.max_mode": "3",
        "data.grid_points_per_axis": "1",
    })
    return Grid1D(n=32)


class Doubling:
    name = "doubling"

    def predict(self, u, c):
        return 2.0 * np.asarray(u, dtype=np.float64)


# ━━━ metrics ━━━

def test_nrmse_identities():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 16))
    assert nrmse(x, x) == 0.0
    assert nrmse(2 * x, x) == pytest.approx(1.0)
    assert nrmse(np.zeros_like(x), x) == pytest.approx(1.0)


def test_nrmse_is_nan_for_zero_truth():
    assert np.isnan(nrmse(np.ones((1, 8)), np.zeros((1, 8))))


def test_nrmse_series_mean_and_stderr():
    truth = np.ones((2, 3, 4))
    pred = truth.copy()
    pred[0] *= 1.5
    pred[1] *= 1.1
    mean, stderr = nrmse_series(pred, truth)
    np.testing.assert_allclose(mean, [0.3, 0.3, 0.3])
    np.testing.assert_allclose(stderr, [0.2, 0.2, 0.2])


def test_gmean_of_constant_series_and_clamping():
    value, clamped = gmean_nrmse(np.full(150, 0.37))
    assert value == pytest.approx(0.37)
    assert not clamped
    value, clamped = gmean_nrmse(np.array([0.0, 1.0]))
    assert clamped
    assert value == pytest.approx(np.sqrt(GMEAN_FLOOR))


def test_gmean_uses_only_the_first_hundred_steps():
    series = np.concatenate([np.full(100, 0.1), np.full(100, 10.0)])
    assert gmean_nrmse(series)[0] == pytest.approx(0.1)


def test_stability_horizon():
    assert stability_horizon(np.array([0.1, 0.5, 1.2, 0.3])) == 3
    assert stability_horizon(np.array([0.1, np.nan])) == 2
    assert stability_horizon(np.array([0.1, 0.2])) == 0


# ━━━ rollouts ━━━

def test_persistence_rollout_repeats_the_initial_state(grid32, smooth_u):
    result = rollout(PersistenceBaseline(), smooth_u, np.zeros(7), 4)
    assert result.states.shape == (1, 4, 32)
    np.testing.assert_array_equal(result.states[0, -1], smooth_u)
    assert not result.truncated.any()


def test_rollout_truncates_non_finite_rows():
    u0 = np.array([[1e308] * 8, [1.0] * 8])
    with np.errstate(over="ignore"):
        result = rollout(Doubling(), u0, np.zeros(7), 3)
    assert result.lengths.tolist() == [0, 3]
    assert np.all(np.isnan(result.states[0]))
    np.testing.assert_array_equal(result.states[1, -1], np.full(8, 8.0))


def test_rollout_requires_a_step():
    with pytest.raises(ValueError):
        rollout(PersistenceBaseline(), np.ones(8), np.zeros(7), 0)


def test_parallel_rollout_matches_serial(grid32, smooth_u):
    oracle = ReferenceOracle(grid32, StepperConfig(dt=0.01, substeps=2))
    u0 = np.stack([smooth_u, 0.5 * smooth_u, -smooth_u])
    c = np.array([0, 0, 1.0, -1.0, 0.1, 0, 0])
    serial = rollout(oracle, u0, c, 5)
    parallel = rollout_parallel(oracle, u0, c, 5, max_workers=2, chunk=1)
    np.testing.assert_allclose(parallel.states, serial.states, atol=1e-14)


def test_blown_up_solver_rows_are_truncated(grid32, smooth_u):
    oracle = ReferenceOracle(grid32, StepperConfig(dt=1.0, substeps=1))
    c = np.array([[0, 0, 0, 0, -1e6, 0, 0], [0, 0, 0, 0, 0.01, 0, 0]])
    with np.errstate(all="ignore"):
        result = rollout(oracle, np.stack([smooth_u, smooth_u]), c, 2)
    assert result.lengths.tolist() == [0, 2]


# ━━━ protocols ━━━

def test_oracle_closes_on_fresh_truth(small_solver):
    oracle = ReferenceOracle(small_solver)
    id_report, ood_report = evaluate_id_ood(
        oracle, PdeFamilyName.KDV, midpoint_params("kdv"), default_ood_params("kdv"),
        small_solver, n_ic=3, n_steps=5,
    )
    assert id_report.label == "id"
    assert ood_report.label == "ood"
    assert id_report.n_steps == 5
    assert np.nanmax(id_report.mean) < 1e-5
    assert id_report.stability_horizon == 0


def test_default_ood_tuple_leaves_the_band():
    params = default_ood_params(PdeFamilyName.ADVECTION_DIFFUSION)
    assert params["c"] == pytest.approx(8.0)
    assert not in_training_band("advection_diffusion", "c", params["c"])
    assert params["nu"] == pytest.approx(5.0)


def test_persistence_is_worse_than_the_oracle(small_solver):
    id_params, ood_params = {"r": 0.03, "nu": 2.0}, {"r": 0.07, "nu": 2.0}
    oracle, _ = evaluate_id_ood(ReferenceOracle(small_solver), "fisher", id_params, ood_params, small_solver, 2, 4)
    persistence, _ = evaluate_id_ood(PersistenceBaseline(), "fisher", id_params, ood_params, small_solver, 2, 4)
    assert persistence.gmean > oracle.gmean
    assert persistence.seeds == oracle.seeds


def _test_manifest(tmp_path, grid):
    config = CorpusConfig(
        families=(PdeFamilyName.BURGERS,), split=Split.TEST, grid_points_per_axis=1,
        n_samples=2, n_steps=2, max_mode=3,
    )
    stepper = StepperConfig(dt=0.01, substeps=2)
    return write_corpus(build_corpus(config, 0, grid, stepper), tmp_path, config, 0, grid, stepper)


def test_contamination_check(tmp_path, small_solver):
    with pytest.raises(ContaminationError):
        check_contamination(None)
    manifest = _test_manifest(tmp_path, small_solver)
    check_contamination(manifest)
    leaked = manifest.model_copy(
        update={"entries": [e.model_copy(update={"split": Split.TRAIN}) for e in manifest.entries]}
    )
    with pytest.raises(ContaminationError):
        check_contamination(leaked)


def test_heldout_protocol_requires_a_manifest(small_solver):
    with pytest.raises(ContaminationError):
        evaluate_heldout_burgers(ReferenceOracle(small_solver), None, small_solver, n_ic=2, n_steps=2)


def test_heldout_protocol_reports_baselines_on_the_same_ics(small_solver):
    result = evaluate_heldout_burgers(
        ReferenceOracle(small_solver), None, small_solver, n_ic=2, n_steps=3, verify=False,
    )
    assert len(result.model) == len(result.persistence) == len(result.coarse) == 1
    assert result.model[0].family == PdeFamilyName.BURGERS
    assert result.model[0].seeds == result.persistence[0].seeds
    assert np.nanmax(result.model[0].mean) < 1e-5
    assert {r.model for r in result.all_reports()} == {"oracle", "persistence", "coarse"}


def test_coefficient_sweep_flags_the_training_band(small_solver):
    rows = coefficient_sweep(
        CoarseStepperBaseline(small_solver), "burgers", "nu", [0.25, 1.0, 3.0], small_solver, n_ic=3, n_steps=4,
    )
    assert [r.in_training_band for r in rows] == [False, True, False]
    assert all(np.isfinite(r.gmean) and r.stderr >= 0 for r in rows)


# ━━━ reports ━━━

def _report(steps: int) -> RolloutReport:
    mean = np.linspace(0.01, 0.5, steps)
    return RolloutReport(
        model="lc", family=PdeFamilyName.KDV, label="id", params={"b": -1.5}, coefficients=[0.0] * 7,
        mean=mean, stderr=mean / 10, gmean=float(gmean_nrmse(mean)[0]) if steps else float("nan"),
        gmean_clamped=False, stability_horizon=0, n_ic=3, train_horizon=50,
    )


def test_report_csv_flags_steps_beyond_the_training_horizon(tmp_path):
    path = emit_report(_report(60), tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "step,mean_nrmse,stderr,beyond_train_horizon"
    assert lines[50].endswith(",0")
    assert lines[51].endswith(",1")
    mean, stderr = read_report(path)
    np.testing.assert_allclose(mean, _report(60).mean, rtol=1e-8)


def test_zero_step_report_is_header_only(tmp_path):
    path = emit_report(_report(0), tmp_path / "r.csv")
    assert path.read_text() == "step,mean_nrmse,stderr,beyond_train_horizon\n"


def test_reports_are_byte_identical_across_writes(tmp_path):
    a = emit_summary([_report(10)], tmp_path / "a.csv").read_bytes()
    b = emit_summary([_report(10)], tmp_path / "b.csv").read_bytes()
    assert a == b


def test_sweep_csv(tmp_path):
    from evaluation.protocols import SweepRow

    path = emit_sweep([SweepRow(0.5, 0.1, 0.01, True), SweepRow(3.0, 0.4, 0.02, False)], tmp_path / "s.csv")
    assert path.read_text().splitlines() == [
        "coefficient,gmean,stderr,in_training_band",
        "0.5,0.1,0.01,1",
        "3,0.4,0.02,0",
    ]


# ━━━ default convention and trained models ━━━

@pytest.mark.slow
@pytest.mark.parametrize("family", list(PdeFamilyName))
def test_oracle_closes_over_long_default_rollouts(family):
    grid = Grid1D.from_settings()
    report = evaluate_params(ReferenceOracle(grid), family, midpoint_params(family), "oracle", grid, n_ic=5, n_steps=200)
    assert report.n_steps == 200
    assert np.all(report.mean < 1e-5)


@pytest.mark.slow
def test_four_family_model_beats_persistence_on_burgers_zero_shot(tmp_path):
    grid = Grid1D(n=160)
    config = CorpusConfig(grid_points_per_axis=1, n_samples=10, n_steps=10, val_stride=5)
    sets = build_corpus(config, 0, grid)
    manifest = write_corpus(sets, tmp_path / "corpus", config, 0, grid, StepperConfig.reference())
    assert PdeFamilyName.BURGERS not in manifest.families([Split.TRAIN, Split.VAL])
    train, val = corpus_splits(sets, config.val_stride)

    model = create_emulator(ModelConfig.from_preset(Architecture.LC, ScalePreset.DESK, 160), grid)
    train_config = TrainConfig.for_architecture(Architecture.LC, ScalePreset.DESK, steps=300, val_every=100)
    Trainer(model, train, val, train_config, tmp_path / "run").run()

    result = evaluate_heldout_burgers(model, manifest, grid, n_ic=5, n_steps=50)
    assert result.model
    for learned, persistence in zip(result.model, result.persistence):
        assert learned.n_steps == 50
        assert np.all(np.isfinite(learned.mean))
        assert learned.mean[19] < persistence.mean[19]
