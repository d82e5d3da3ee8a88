import json

import pandas as pd
import pytest

from cli.main import (
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERICS,
    EXIT_OK,
    EXIT_OTHER,
    EXIT_POLICY,
    build_parser,
    exit_code_for,
    main,
)
from cli.run_config import RUN_MANIFEST_NAME, ConfigError
from cli.selfcheck import check_models
from datagen.corpus import MANIFEST_NAME, HoldOutViolationError, read_manifest
from evaluation.protocols import ContaminationError
from solver.spectral import SolverBlowUpError
from training.trainer import BEST_NAME, CURVE_NAME

SMALL = [
    "--set", "solver.grid_points=32",
    "--set", "solver.dt=0.01",
    "--set", "solver.reference_substeps=4",
    "--set", "data.max_mode=3",
    "--set", "data.grid_points_per_axis=1",
    "--set", "data.train_samples=4",
    "--set", "data.train_steps=3",
    "--set", "data.val_stride=2",
    "--set", "eval.n_ic=2",
    "--set", "eval.steps=3",
]


def error_record(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if '"error_class"' in line]
    assert lines, "no JSON error line on stderr"
    return json.loads(lines[-1])


def test_parser_knows_every_subcommand():
    parser = build_parser()
    args = parser.parse_args(["train", "--arch", "m3", "--corpus", "c", "--set", "train.steps=5"])
    assert args.command == "train"
    assert args.set == ["train.steps=5"]
    args = parser.parse_args(["sweep", "--oracle", "--pde", "kdv", "--sweep-param", "zeta", "--sweep-range", "-12,-1"])
    assert args.sweep_count == 9
    with pytest.raises(SystemExit):
        parser.parse_args(["train"])


def test_no_command_prints_help(capsys):
    assert main([]) == EXIT_OTHER
    assert "generate" in capsys.readouterr().out


@pytest.mark.parametrize(
    "error, code",
    [
        (HoldOutViolationError("no", "burgers", "train"), EXIT_POLICY),
        (ContaminationError("seen"), EXIT_POLICY),
        (SolverBlowUpError("nan", step=1, substep=0), EXIT_NUMERICS),
        (FileNotFoundError("x"), EXIT_IO),
        (ConfigError("bad"), EXIT_CONFIG),
        (ValueError("bad"), EXIT_CONFIG),
        (RuntimeError("other"), EXIT_OTHER),
    ],
)
def test_exit_code_mapping(error, code):
    assert exit_code_for(error) == code


def test_bad_override_is_a_config_error(tmp_path, capsys):
    code = main(["generate", "--out", str(tmp_path), "--set", "bogus.key=1"])
    assert code == EXIT_CONFIG
    assert error_record(capsys)["error_class"] == "ConfigError"


def test_training_on_burgers_is_refused(tmp_path, capsys):
    code = main(["generate", "--families", "burgers", "--split", "train", "--out", str(tmp_path)] + SMALL)
    assert code == EXIT_POLICY
    assert error_record(capsys)["error_class"] == "HoldOutViolationError"
    assert not (tmp_path / MANIFEST_NAME).exists()


def test_missing_checkpoint_is_an_io_error(tmp_path, capsys):
    code = main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt"), "--out", str(tmp_path)] + SMALL)
    assert code == EXIT_IO
    assert error_record(capsys)["error_class"] == "CheckpointError"


def test_selfcheck_metrics_suite_passes():
    assert main(["selfcheck", "--suites", "metrics"]) == EXIT_OK


def test_model_checks_cover_both_grids(capsys):
    assert check_models() == []
    out = capsys.readouterr().out
    assert "n=32" in out and "n=160" in out


def test_oracle_closes_on_fresh_truth(tmp_path):
    out = tmp_path / "oracle"
    code = main(["eval", "--oracle", "--pde", "advection_diffusion", "--out", str(out)] + SMALL)
    assert code == EXIT_OK
    summary = pd.read_csv(out / "summary.csv")
    assert len(summary) > 0
    assert (out / RUN_MANIFEST_NAME).exists()
    assert any((out / "reports").iterdir())


def run_pipeline(root, train_steps=3):
    corpus = root / "corpus"
    assert main(["generate", "--families", "advection_diffusion", "--out", str(corpus)] + SMALL) == EXIT_OK
    manifest = read_manifest(corpus)
    assert len(manifest.entries) == 1
    assert (corpus / RUN_MANIFEST_NAME).exists()

    run = root / "train"
    code = main(
        ["train", "--arch", "m4", "--corpus", str(corpus), "--out", str(run)]
        + SMALL
        + ["--set", f"train.steps={train_steps}", "--set", "train.batch_size=2", "--set", "train.val_every=1"]
        + ["--set", "model.channels=8", "--set", "model.blocks=1", "--set", "model.cond_hidden=8"]
    )
    assert code == EXIT_OK
    assert (run / BEST_NAME).exists()
    assert len(pd.read_csv(run / CURVE_NAME)) == train_steps
    resolved = json.loads((run / RUN_MANIFEST_NAME).read_text())["resolved_config"]
    assert resolved["train.steps"] == str(train_steps)

    evaluated = root / "eval"
    code = main(
        ["eval", "--checkpoint", str(run / BEST_NAME), "--pde", "advection_diffusion", "--out", str(evaluated)] + SMALL
    )
    assert code == EXIT_OK
    assert (evaluated / "summary.csv").exists()
    return run, evaluated


@pytest.mark.slow
def test_generate_train_eval_pipeline(tmp_path):
    run_pipeline(tmp_path)


@pytest.mark.slow
def test_pipeline_is_byte_reproducible(tmp_path):
    first = run_pipeline(tmp_path / "a", train_steps=500)
    second = run_pipeline(tmp_path / "b", train_steps=500)
    for a_dir, b_dir in zip(first, second):
        names = sorted(p.relative_to(a_dir) for p in a_dir.rglob("*.csv"))
        assert names
        assert names == sorted(p.relative_to(b_dir) for p in b_dir.rglob("*.csv"))
        for name in names:
            assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes(), str(name)
