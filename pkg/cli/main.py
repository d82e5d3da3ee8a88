"""
Emulator Pipeline CLI
Corpus generation, training, evaluation, coefficient sweeps and self-checks.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from autodiff.params import CheckpointError
from cli.run_config import ConfigError, RunConfig, coerce_fields, write_run_manifest
from cli.selfcheck import run_selfcheck
from datagen.corpus import (
    MANIFEST_NAME,
    CorpusConfig,
    CorpusNotFoundError,
    HoldOutViolationError,
    build_corpus,
    corpus_splits,
    load_corpus,
    read_manifest,
    write_corpus,
)
from datagen.generator import GenerationError
from datagen.storage import TrajectoryFormatError
from emulators.base import EmulatorModel, EmulatorNumericsError, ModelConfig
from emulators.factory import create_emulator, load_emulator
from evaluation.baselines import Predictor, ReferenceOracle
from evaluation.protocols import (
    DEFAULT_IC,
    DEFAULT_STEPS,
    SWEEP_STEPS,
    ContaminationError,
    RolloutReport,
    coefficient_sweep,
    default_ood_params,
    evaluate_heldout_burgers,
    evaluate_id_ood,
    midpoint_params,
)
from evaluation.reports import emit_report, emit_summary, emit_sweep, report_filename
from shared.config import get_settings
from shared.encoding import EncodingError, get_family, list_families, load_ranges, ood_sweep_values, training_families
from shared.log_setup import configure_logging
from shared.models import Architecture, CorpusManifest, PdeFamilyName, Split
from solver.spectral import Grid1D, SolverBlowUpError, SpectralError, StepperConfig
from training.trainer import CURVE_NAME, TrainConfig, Trainer, TrainingDivergenceError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_POLICY = 5
EXIT_NUMERICS = 6
EXIT_CHECK = 7

# Order matters: specific classes before their bases.
EXIT_CODES: Tuple[Tuple[Tuple[type, ...], int], ...] = (
    ((HoldOutViolationError, ContaminationError), EXIT_POLICY),
    ((SolverBlowUpError, GenerationError, TrainingDivergenceError, EmulatorNumericsError), EXIT_NUMERICS),
    ((CheckpointError, TrajectoryFormatError, CorpusNotFoundError, FileNotFoundError, OSError), EXIT_IO),
    ((EncodingError, ConfigError, SpectralError, ValidationError, ValueError), EXIT_CONFIG),
)


def exit_code_for(error: BaseException) -> int:
    for classes, code in EXIT_CODES:
        if isinstance(error, classes):
            return code
    return EXIT_OTHER


def report_error(error: BaseException) -> int:
    """Log the error and print the one-line JSON record on stderr."""
    code = exit_code_for(error)
    logger.error(f"{type(error).__name__}: {error}")
    print(json.dumps({"error_class": type(error).__name__, "message": str(error)}), file=sys.stderr)
    return code


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Helpers
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def prepare(args: argparse.Namespace, subcommand: str) -> RunConfig:
    """Resolve the run config, push settings overrides and set up logging."""
    run = RunConfig.resolve(
        subcommand,
        config_path=args.config,
        seed=args.seed,
        preset=args.preset,
        out_dir=args.out,
        overrides=args.set,
    )
    run.apply_settings()
    configure_logging()
    ranges_file = get_settings().data.ranges_file
    if ranges_file:
        load_ranges(ranges_file)
    return run


def parse_families(raw: Optional[str]) -> Optional[List[PdeFamilyName]]:
    if not raw:
        return None
    return [get_family(name.strip()).name for name in raw.split(",") if name.strip()]


def load_predictor(args: argparse.Namespace) -> Tuple[Predictor, Grid1D, Dict]:
    """The reference oracle or a checkpointed emulator, with its grid and metadata."""
    if args.oracle:
        grid = Grid1D.from_settings()
        return ReferenceOracle(grid), grid, {}
    if not args.checkpoint:
        raise ConfigError("either --checkpoint or --oracle is required")
    model, metadata, _ = load_emulator(args.checkpoint)
    return model, model.grid, metadata


def training_manifest(args: argparse.Namespace, metadata: Dict) -> Optional[CorpusManifest]:
    corpus = args.corpus or metadata.get("corpus")
    return read_manifest(corpus) if corpus else None


def eval_options(run: RunConfig, default_steps: int) -> Tuple[int, int]:
    section = run.section("eval")
    try:
        return int(section.get("n_ic", DEFAULT_IC)), int(section.get("steps", default_steps))
    except ValueError as e:
        raise ConfigError(str(e), "eval")


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Subcommands
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def cmd_generate(args: argparse.Namespace) -> int:
    """Generate a corpus split and its manifest."""
    run = prepare(args, "generate")
    split = Split(args.split)
    families = parse_families(args.families)
    if families is None and split == Split.TEST:
        families = [f.name for f in list_families()]
    config = CorpusConfig.from_settings(split, families)
    grid = Grid1D.from_settings()
    stepper = StepperConfig.reference()

    sets = build_corpus(config, run.seed, grid, stepper)
    manifest = write_corpus(sets, run.out_path, config, run.seed, grid, stepper)
    outputs = [run.out_path / e.file for e in manifest.entries] + [run.out_path / MANIFEST_NAME]
    write_run_manifest(run, [args.config] if args.config else [], outputs)
    print(f"Generated {len(manifest.entries)} {split.value} sets in {run.out_path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Train one architecture on a generated corpus."""
    run = prepare(args, "train")
    if not args.corpus:
        raise ConfigError("--corpus is required")
    manifest, sets = load_corpus(args.corpus, (Split.TRAIN,))
    train_sets, val_sets = corpus_splits(sets, manifest.val_stride)

    architecture = Architecture.from_flag(args.arch)
    grid = Grid1D(n=manifest.grid.n, length=manifest.grid.length)
    solver = get_settings().solver
    model_values = dict(
        seed=run.seed,
        domain_length=grid.length,
        dt=manifest.grid.dt,
        convention=manifest.grid.convention,
        coarse_substeps=solver.coarse_substeps,
        coarse_dealias=solver.dealias_coarse,
    )
    model_values.update(run.section("model"))
    model_config = ModelConfig.from_preset(architecture, run.preset, grid.n, **model_values)
    train_config = TrainConfig.for_architecture(
        architecture,
        run.preset,
        seed=run.seed,
        **coerce_fields(TrainConfig, run.section("train"), "train"),
    )

    model: EmulatorModel = create_emulator(model_config, grid)
    trainer = Trainer(
        model,
        train_sets,
        val_sets,
        train_config,
        run.out_path,
        resume_from=args.resume,
        extra_metadata={"corpus": str(Path(args.corpus))},
    )
    result = trainer.run()
    write_run_manifest(
        run,
        [args.corpus] + ([args.config] if args.config else []),
        [result.best_checkpoint, result.checkpoint, run.out_path / CURVE_NAME],
    )
    print(
        f"Trained {architecture.value} to step {result.final_step}; "
        f"best val nRMSE {result.best_val_nrmse:.4e} at step {result.best_step}"
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Rollout reports for ID/OOD tuples or the zero-shot held-out family."""
    run = prepare(args, "eval")
    predictor, grid, metadata = load_predictor(args)
    n_ic, n_steps = eval_options(run, DEFAULT_STEPS)
    families = parse_families(args.pde) or [f.name for f in training_families()]

    reports: List[RolloutReport] = []
    for family in families:
        if get_family(family).held_out:
            result = evaluate_heldout_burgers(
                predictor,
                training_manifest(args, metadata),
                grid,
                n_ic=n_ic,
                n_steps=n_steps,
                seed=run.seed,
                verify=not args.oracle,
            )
            reports.extend(result.all_reports())
        else:
            reports.extend(
                evaluate_id_ood(
                    predictor, family, midpoint_params(family), default_ood_params(family), grid,
                    n_ic=n_ic, n_steps=n_steps, seed=run.seed,
                )
            )

    outputs = []
    for index, report in enumerate(reports):
        outputs.append(emit_report(report, run.out_path / "reports" / report_filename(report, index)))
    outputs.append(emit_summary(reports, run.out_path / "summary.csv"))
    inputs = [p for p in (args.checkpoint, args.config) if p]
    write_run_manifest(run, inputs, outputs)

    if args.oracle:
        worst = max((float(r.mean.max()) for r in reports if r.model == predictor.name and r.n_steps), default=0.0)
        print(f"Oracle closure: worst nRMSE {worst:.3e}")
        if not worst < 1e-5:
            logger.error(f"Oracle closure failed: worst nRMSE {worst:.3e}")
            return EXIT_CHECK
    print(f"Wrote {len(reports)} reports to {run.out_path}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """GMean nRMSE while one parameter sweeps a range."""
    run = prepare(args, "sweep")
    predictor, grid, _ = load_predictor(args)
    n_ic, n_steps = eval_options(run, SWEEP_STEPS)
    if not args.pde or not args.sweep_param or not args.sweep_range:
        raise ConfigError("--pde, --sweep-param and --sweep-range are required")
    family = get_family(args.pde).name
    try:
        low, high = (float(v) for v in args.sweep_range.split(","))
    except ValueError:
        raise ConfigError(f"expected low,high, got '{args.sweep_range}'", "--sweep-range")

    if args.sweep_count == 1:
        values = [low]
    else:
        values = ood_sweep_values(family, args.sweep_param, low, high, args.sweep_count)
    rows = coefficient_sweep(predictor, family, args.sweep_param, values, grid, n_ic=n_ic, n_steps=n_steps, seed=run.seed)

    path = emit_sweep(rows, run.out_path / f"sweep_{family.value}_{args.sweep_param}.csv")
    write_run_manifest(run, [p for p in (args.checkpoint, args.config) if p], [path])
    print(f"Wrote {len(rows)} sweep rows to {path}")
    return EXIT_OK


def cmd_selfcheck(args: argparse.Namespace) -> int:
    configure_logging()
    report = run_selfcheck(args.suites.split(",") if args.suites else None)
    return EXIT_OK if report.passed else EXIT_CHECK


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Entry Point
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Equation-conditioned PDE emulator pipeline",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Plain-text run config (key = value)")
    common.add_argument("--seed", type=int, default=None, help="Run seed")
    common.add_argument("--preset", choices=["paper", "desk"], default=None, help="Scale preset")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config key")

    model_flags = argparse.ArgumentParser(add_help=False)
    model_flags.add_argument("--checkpoint", help="Emulator checkpoint")
    model_flags.add_argument("--oracle", action="store_true", help="Evaluate the reference stepper")
    model_flags.add_argument("--corpus", help="Training corpus (for the contamination check)")

    subparsers = parser.add_subparsers(dest="command", help="Commands")

    gen = subparsers.add_parser("generate", parents=[common], help="Generate a corpus")
    gen.add_argument("--families", help="Comma-separated families (default: training families; all for test)")
    gen.add_argument("--split", default="train", choices=[s.value for s in Split])
    gen.set_defaults(func=cmd_generate)

    tr = subparsers.add_parser("train", parents=[common], help="Train an emulator")
    tr.add_argument("--arch", required=True, help="m1..m4 or architecture name")
    tr.add_argument("--corpus", help="Corpus directory")
    tr.add_argument("--resume", help="Checkpoint to resume from")
    tr.set_defaults(func=cmd_train)

    ev = subparsers.add_parser("eval", parents=[common, model_flags], help="Rollout evaluation")
    ev.add_argument("--pde", help="Family (comma-separated); burgers runs the zero-shot protocol")
    ev.set_defaults(func=cmd_eval)

    sw = subparsers.add_parser("sweep", parents=[common, model_flags], help="Coefficient sweep")
    sw.add_argument("--pde", help="Family")
    sw.add_argument("--sweep-param", help="Parameter to sweep")
    sw.add_argument("--sweep-range", help="low,high")
    sw.add_argument("--sweep-count", type=int, default=9, help="Number of values")
    sw.set_defaults(func=cmd_sweep)

    sc = subparsers.add_parser("selfcheck", help="Run self-check suites")
    sc.add_argument("--suites", help="Comma-separated subset of solver,gradients,metrics,models")
    sc.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_OTHER

    try:
        return args.func(args)
    except Exception as e:
        return report_error(e)


if __name__ == "__main__":
    sys.exit(main())
