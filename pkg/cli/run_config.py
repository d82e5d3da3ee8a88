"""
Run configuration: plain-text config files, ``--set`` overrides and run manifests.

Config files are dotenv-format ``key = value`` lines with dotted keys:

    solver.reference_substeps = 64
    data.train_samples = 20
    train.steps = 2000
    model.channels = 32
    eval.n_ic = 30

``solver.``/``data.``/``runtime.``/``logging.`` keys go to the settings tree;
``train.``, ``model.`` and ``eval.`` keys are consumed by the subcommands.
Precedence: config file < command-line flags < ``--set``.
"""

import dataclasses
import hashlib
import json
import logging
import platform
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
import pydantic
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field

from shared import __version__
from shared.config import apply_overrides, settings_env_key
from shared.models import RunManifest, ScalePreset

logger = logging.getLogger(__name__)

RUN_MANIFEST_NAME = "run_manifest.json"
CONSUMER_SECTIONS = ("run", "train", "model", "eval")


class ConfigError(ValueError):
    """Malformed or unknown configuration key/value."""

    def __init__(self, message: str, key: str = "") -> None:
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


def load_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """
    Raises:
        FileNotFoundError: missing file
        ConfigError: a key without a section
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values: Dict[str, str] = {}
    for key, value in dotenv_values(path).items():
        key = key.strip()
        _check_key(key)
        values[key] = "" if value is None else value.strip()
    return values


def parse_set(items: Optional[Sequence[str]]) -> Dict[str, str]:
    """``["train.steps=500", ...]`` -> {"train.steps": "500"}."""
    values: Dict[str, str] = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got '{item}'")
        key = key.strip()
        _check_key(key)
        values[key] = value.strip()
    return values


def _check_key(key: str) -> None:
    section, _, field = key.partition(".")
    if not field:
        raise ConfigError("keys must be dotted (section.field)", key)
    if section not in CONSUMER_SECTIONS and settings_env_key(key) is None:
        raise ConfigError(f"unknown section '{section}'", key)


def coerce_fields(cls: Any, values: Mapping[str, str], section: str) -> Dict[str, Any]:
    """Convert string values to the types of a dataclass's defaults."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    out: Dict[str, Any] = {}
    for name, raw in values.items():
        if name not in fields:
            raise ConfigError(f"unknown field for {cls.__name__}", f"{section}.{name}")
        default = fields[name].default
        try:
            if isinstance(default, bool):
                out[name] = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                out[name] = int(raw)
            elif isinstance(default, float):
                out[name] = float(raw)
            else:
                out[name] = raw
        except ValueError:
            raise ConfigError(f"cannot parse '{raw}'", f"{section}.{name}")
    return out


class RunConfig(BaseModel):
    """Fully resolved configuration of one CLI invocation."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    subcommand: str
    config_path: Optional[str] = None
    seed: int = 0
    preset: ScalePreset = ScalePreset.DESK
    out_dir: str = "runs"
    values: Dict[str, str] = Field(default_factory=dict)

    @classmethod
    def resolve(
        cls,
        subcommand: str,
        config_path: Optional[str] = None,
        seed: Optional[int] = None,
        preset: Optional[str] = None,
        out_dir: Optional[str] = None,
        flag_values: Optional[Mapping[str, str]] = None,
        overrides: Optional[Sequence[str]] = None,
    ) -> "RunConfig":
        values: Dict[str, str] = load_config_file(config_path) if config_path else {}
        values.update({k: v for k, v in (flag_values or {}).items() if v is not None})
        values.update(parse_set(overrides))

        seed_value = seed if seed is not None else int(values.pop("run.seed", 0) or 0)
        preset_value = ScalePreset(preset or values.pop("run.preset", ScalePreset.DESK.value))
        out_value = out_dir or values.pop("run.out", "runs")
        return cls(
            subcommand=subcommand,
            config_path=config_path,
            seed=seed_value,
            preset=preset_value,
            out_dir=out_value,
            values=dict(sorted(values.items())),
        )

    def section(self, name: str) -> Dict[str, str]:
        """Values under ``name.`` with the prefix stripped."""
        prefix = f"{name}."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def apply_settings(self) -> None:
        """Push settings-tree keys into the environment and reload settings."""
        apply_overrides({k: v for k, v in self.values.items() if settings_env_key(k) is not None})

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    def resolved(self) -> Dict[str, str]:
        resolved = dict(self.values)
        resolved.update({"run.seed": str(self.seed), "run.preset": self.preset.value})
        return dict(sorted(resolved.items()))


# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
# Run Manifest
# ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━

def content_hash(paths: Iterable[Union[str, Path]]) -> str:
    """sha256 over the bytes of every input file, in sorted path order."""
    digest = hashlib.sha256()
    files: List[Path] = []
    for p in paths:
        p = Path(p)
        files.extend(sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p])
    for f in sorted(files):
        if f.exists():
            digest.update(f.name.encode())
            digest.update(f.read_bytes())
    return digest.hexdigest()


def versions() -> Dict[str, str]:
    return {
        "emulator": __version__,
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
        "python": platform.python_version(),
    }


def write_run_manifest(
    run: RunConfig,
    inputs: Iterable[Union[str, Path]],
    outputs: Iterable[Union[str, Path]],
) -> Path:
    """Write ``run_manifest.json`` into the run's output directory."""
    out = run.out_path
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        subcommand=run.subcommand,
        seed=run.seed,
        preset=run.preset,
        resolved_config=run.resolved(),
        input_hash=content_hash(inputs),
        versions=versions(),
        outputs=sorted(str(Path(o).relative_to(out)) if Path(o).is_relative_to(out) else str(o) for o in outputs),
    )
    path = out / RUN_MANIFEST_NAME
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    logger.info(f"Run manifest written: {path}")
    return path
