"""Uzawa-type solvers for stationary mean field games on the periodic grid.

Fields are NumPy arrays of shape (d, d) indexed ``[i, j]`` at the node
``(i h, j h)`` with ``h = 1 / d``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from . import _core
from ._core import (
    ConfigParseError,
    ConfigValidationError,
    ExperimentConfig,
    MaxIterationsExceeded,
    SolverError,
    apply_elliptic,
    apply_hjb,
    error_bound,
    f0_preset,
    grad_numerical_hamiltonian,
    numerical_hamiltonian,
    presets,
    solve,
    solve_fp_adjoint,
    uzawa_affine,
)

__all__ = [
    "ConfigParseError",
    "ConfigValidationError",
    "ExperimentConfig",
    "MaxIterationsExceeded",
    "SolverError",
    "apply_elliptic",
    "apply_hjb",
    "config_from_mapping",
    "error_bound",
    "f0_preset",
    "grad_numerical_hamiltonian",
    "load_preset",
    "numerical_hamiltonian",
    "presets",
    "run_experiment",
    "solve",
    "solve_fp_adjoint",
    "uzawa_affine",
]


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_from_mapping(values: Mapping[str, Any]) -> ExperimentConfig:
    """Builds a config from the same keys a config file accepts."""
    text = "\n".join(f"{key} = {_format_value(value)}" for key, value in values.items())
    return ExperimentConfig.parse(text + "\n")


def load_preset(name: str, **overrides: Any) -> ExperimentConfig:
    """A shipped preset, optionally with some keys replaced."""
    for preset in presets():
        if preset["name"] == name.removesuffix(".cfg"):
            if not overrides:
                return ExperimentConfig.parse(preset["text"])
            lines = []
            for line in preset["text"].splitlines():
                key = line.split("#", 1)[0].split("=", 1)[0].strip()
                if key not in overrides:
                    lines.append(line)
            lines += [f"{key} = {_format_value(value)}" for key, value in overrides.items()]
            return ExperimentConfig.parse("\n".join(lines) + "\n")
    raise KeyError(f"unknown preset {name!r}")


def run_experiment(config: ExperimentConfig, output_dir: str | Path | None = None) -> dict:
    """Runs a config and writes its artifacts; returns the parsed report.json."""
    out = None if output_dir is None else Path(output_dir)
    return json.loads(_core._run_experiment(config, out))
