"""Experiment configuration: JSON schema, validation and default resolution.

Every CLI run validates its config against the schema, fills defaults (and
any randomly drawn field parameters) into a fully explicit dictionary, and
echoes that dictionary as resolved-config.json so reruns are bit-exact.
"""
from __future__ import annotations

import copy
import json
from typing import Optional

import numpy as np
from jsonschema import Draft202012Validator

from .errors import ConfigError, ValidationError
from .moments import MomentSpec
from .propagation import GateDistance, ObservableExpectation, TimeGrid, TransitionProbability
from .system import (
    Chromosome,
    ControlField,
    DipoleElement,
    FieldBounds,
    ModeAmplitude,
    ParameterDistribution,
    QuantumSystem,
    UncertainParameter,
    example_system,
)

_DIST_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["gaussian", "uniform", "point"]},
        "mean": {"type": "number"},
        "sigma": {"type": "number"},
        "lower": {"type": "number"},
        "upper": {"type": "number"},
        "relative": {"type": "boolean"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_TARGET_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["dipole", "amplitude"]},
        "i": {"type": "integer", "minimum": 0},
        "j": {"type": "integer", "minimum": 0},
        "k": {"type": "integer", "minimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "system": {
            "oneOf": [
                {"type": "string"},
                {
                    "type": "object",
                    "properties": {
                        "energies": {"type": "array", "items": {"type": "number"}},
                        "dipole": {
                            "type": "array",
                            "items": {"type": "array", "items": {"type": "number"}},
                        },
                    },
                    "required": ["energies", "dipole"],
                    "additionalProperties": False,
                },
            ]
        },
        "field": {
            "type": "object",
            "properties": {
                "n_modes": {"type": "integer", "minimum": 1},
                "fixed_amplitude": {"type": "number", "minimum": 0},
                "duration": {"type": "number", "exclusiveMinimum": 0},
                "frequencies": {"type": "array", "items": {"type": "number"}},
                "phases": {"type": "array", "items": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        "bounds": {
            "type": "object",
            "properties": {
                "amp_min": {"type": "number"},
                "amp_max": {"type": "number"},
                "omega_min": {"type": "number"},
                "omega_max": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "objective": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["transition"]},
                "initial": {"type": "integer", "minimum": 0},
                "final": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {"n_steps": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "uncertainty": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"target": _TARGET_SCHEMA, "distribution": _DIST_SCHEMA},
                "required": ["target", "distribution"],
                "additionalProperties": False,
            },
        },
        "encoding": {
            "type": "object",
            "properties": {
                "max_total_order": {"type": "integer", "minimum": 1},
                "n_samples": {"type": ["integer", "null"], "minimum": 4},
                "retention_tol": {"type": "number", "exclusiveMinimum": 0},
                "radius": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "alias_tol": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "optimizer": {
            "type": "object",
            "properties": {
                "population_size": {"type": "integer", "minimum": 4},
                "generations": {"type": "integer", "minimum": 1},
                "crossover_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "mutation_prob": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                "tournament_size": {"type": "integer", "minimum": 2},
                "elitism_count": {"type": "integer", "minimum": 0},
                "sbx_eta": {"type": "number", "exclusiveMinimum": 0},
                "poly_eta": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "mc": {
            "type": "object",
            "properties": {
                "n_samples": {"type": "integer", "minimum": 2},
                "base_steps": {"type": "integer", "minimum": 10},
            },
            "additionalProperties": False,
        },
        "moments": {
            "type": "object",
            "properties": {
                "halfwidth": {"type": "number", "exclusiveMinimum": 0},
                "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "n_bins": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "landscape": {
            "type": "object",
            "properties": {
                "axis1": {"$ref": "#/$defs/axis"},
                "axis2": {"$ref": "#/$defs/axis"},
            },
            "additionalProperties": False,
        },
        "dyson": {
            "type": "object",
            "properties": {"order": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
    },
    "additionalProperties": False,
    "$defs": {
        "axis": {
            "type": "object",
            "properties": {
                "gene": {"type": "integer", "minimum": 0},
                "range": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "n": {"type": "integer", "minimum": 1},
            },
            "required": ["gene", "range", "n"],
            "additionalProperties": False,
        }
    },
}

_validator = Draft202012Validator(SCHEMA)

DEFAULTS = {
    "system": "paper5",
    "field": {"n_modes": 7, "fixed_amplitude": 0.15, "duration": 40.0},
    "bounds": {"amp_min": 0.0, "amp_max": 1.0, "omega_min": 0.05, "omega_max": 4.0},
    "objective": {"kind": "transition", "initial": 0, "final": 3},
    "uncertainty": None,  # derived from the objective when absent
    "encoding": {
        "max_total_order": 10,
        "n_samples": None,
        "retention_tol": 1e-4,
        "radius": 1.0,
        "alias_tol": 0.05,
    },
    "optimizer": {
        "population_size": 60,
        "generations": 300,
        "crossover_prob": 0.9,
        "mutation_prob": None,
        "tournament_size": 3,
        "elitism_count": 2,
        "sbx_eta": 10.0,
        "poly_eta": 20.0,
    },
    "mc": {"n_samples": 10000, "base_steps": 250},
    "moments": {"halfwidth": 0.02, "confidence": 0.95, "n_bins": 12},
    "dyson": {"order": 12},
    "seed": 0,
}

PRECISION_DT = {"fast": 0.02, "strict": 0.01}


def validate_config(raw: dict) -> None:
    errors = sorted(_validator.iter_errors(raw), key=lambda e: e.json_path)
    if errors:
        msgs = "; ".join(f"{e.json_path}: {e.message}" for e in errors[:5])
        raise ConfigError(f"config failed schema validation: {msgs}")


def resolve_config(raw: Optional[dict], seed: Optional[int] = None,
                   precision: str = "strict") -> dict:
    """Merge defaults, draw any unspecified field parameters, echo everything."""
    raw = copy.deepcopy(raw) if raw else {}
    validate_config(raw)
    if precision not in PRECISION_DT:
        raise ConfigError(f"unknown precision preset {precision!r}")
    cfg: dict = {}
    for key, default in DEFAULTS.items():
        val = raw.get(key, None)
        if isinstance(default, dict):
            merged = dict(default)
            merged.update(val or {})
            cfg[key] = merged
        else:
            cfg[key] = val if val is not None else copy.deepcopy(default)
    if seed is not None:
        cfg["seed"] = int(seed)
    if "landscape" in raw:
        cfg["landscape"] = raw["landscape"]

    cfg["precision"] = precision
    duration = cfg["field"]["duration"]
    if "grid" in raw and "n_steps" in raw["grid"]:
        cfg["grid"] = {"n_steps": raw["grid"]["n_steps"]}
    else:
        cfg["grid"] = {"n_steps": max(1, int(round(duration / PRECISION_DT[precision])))}

    # freeze any unspecified field parameters so the echo reproduces the run
    n_modes = cfg["field"]["n_modes"]
    bounds = cfg["bounds"]
    rng = np.random.default_rng(np.random.SeedSequence((cfg["seed"], 0xF1E1D)))
    if "frequencies" not in cfg["field"] or cfg["field"].get("frequencies") is None:
        cfg["field"]["frequencies"] = rng.uniform(
            bounds["omega_min"], bounds["omega_max"], n_modes
        ).tolist()
    if "phases" not in cfg["field"] or cfg["field"].get("phases") is None:
        cfg["field"]["phases"] = rng.uniform(0.0, 2 * np.pi, n_modes).tolist()
    if len(cfg["field"]["frequencies"]) != n_modes or len(cfg["field"]["phases"]) != n_modes:
        raise ConfigError("field frequencies/phases length must equal n_modes")

    if cfg["uncertainty"] is None:
        cfg["uncertainty"] = _default_uncertainty(cfg)
    return cfg


def _default_uncertainty(cfg: dict) -> list:
    """Gaussian 5% relative uncertainty on the couplings into the target state."""
    system = build_system(cfg)
    final = cfg["objective"]["final"]
    out = []
    for i in range(system.dimension):
        if i != final and system.dipole[min(i, final), max(i, final)] != 0:
            out.append(
                {
                    "target": {"kind": "dipole", "i": min(i, final), "j": max(i, final)},
                    "distribution": {
                        "kind": "gaussian",
                        "mean": 1.0,
                        "sigma": 0.05,
                        "relative": True,
                    },
                }
            )
    return out


def build_system(cfg: dict) -> QuantumSystem:
    s = cfg["system"]
    if isinstance(s, str):
        return example_system(s)
    return QuantumSystem(s["energies"], s["dipole"])


def build_bounds(cfg: dict) -> FieldBounds:
    return FieldBounds(**cfg["bounds"])


def build_chromosome(cfg: dict) -> Chromosome:
    f = cfg["field"]
    return Chromosome(
        np.asarray(f["frequencies"], dtype=float),
        np.asarray(f["phases"], dtype=float),
        f["fixed_amplitude"],
    )


def build_field(cfg: dict) -> ControlField:
    return build_chromosome(cfg).to_field(cfg["field"]["duration"])


def build_grid(cfg: dict) -> TimeGrid:
    return TimeGrid(cfg["grid"]["n_steps"], cfg["field"]["duration"])


def build_objective(cfg: dict) -> TransitionProbability:
    o = cfg["objective"]
    return TransitionProbability(o["initial"], o["final"])


def _build_distribution(d: dict) -> ParameterDistribution:
    kind = d["kind"]
    rel = d.get("relative", True)
    if kind == "gaussian":
        return ParameterDistribution.gaussian(d.get("mean", 1.0), d["sigma"], rel)
    if kind == "uniform":
        return ParameterDistribution.uniform(d["lower"], d["upper"], rel)
    return ParameterDistribution.point(d.get("mean", 1.0), rel)


def build_uncertain_parameters(cfg: dict) -> list[UncertainParameter]:
    out = []
    for entry in cfg["uncertainty"]:
        t = entry["target"]
        if t["kind"] == "dipole":
            target = DipoleElement(t["i"], t["j"])
        else:
            target = ModeAmplitude(t["k"])
        out.append(UncertainParameter(target, _build_distribution(entry["distribution"])))
    return out


def build_moment_spec(cfg: dict) -> MomentSpec:
    return MomentSpec(tuple(build_uncertain_parameters(cfg)))
