"""JSON problem documents: schema, validation and construction of run objects."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError, ViscowellError
from .model import SHAPES, HistoryProfile, SourceSpec, SpatialGrid, make_kernel
from .sim import Problem, SolverConfig

_num = {"type": "number"}
_pair_list = {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "source", "history", "solver"],
    "properties": {
        "description": {"type": "string"},
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lengths", "n"],
            "properties": {
                "lengths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1, "maxItems": 2},
                "n": {"type": "array", "items": {"type": "integer", "minimum": 3}, "minItems": 1, "maxItems": 2},
                "unit": {"enum": ["1", "pi"]},
            },
        },
        "kernel": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["family", "terms"],
                    "properties": {"family": {"const": "exponential_sum"}, "terms": _pair_list},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["family", "amplitude", "exponent"],
                    "properties": {"family": {"const": "power_law"}, "amplitude": _num, "exponent": _num},
                },
            ]
        },
        "source": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["positive"],
                    "properties": {"positive": _pair_list, "negative": _pair_list},
                },
            ]
        },
        "history": {
            "type": "object",
            "additionalProperties": False,
            "required": ["shape"],
            "properties": {
                "kind": {"enum": ["constant", "separable"]},
                "shape": {"enum": sorted(SHAPES)},
                "amplitude": _num,
                "target_energy": _num,
                "branch": {"enum": ["inner", "outer"]},
                "mode": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "array", "items": {"type": "integer", "minimum": 1}}]},
                "velocity_amplitude": _num,
                "profile": {"enum": ["exp", "cos"]},
                "rate": _num,
            },
        },
        "damping_m": {"oneOf": [{"type": "null"}, {"type": "number", "minimum": 1}]},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dt", "t_end"],
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "memory_backend": {"enum": ["prony", "quadrature"]},
                "blowup_threshold": {"type": "number", "exclusiveMinimum": 0},
                "energy_floor": {"type": "number", "minimum": 0},
                "sample_every": {"type": "integer", "minimum": 1},
            },
        },
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma_override": {"oneOf": [{"type": "null"}, {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}]},
                "estimate_depth": {"type": "boolean"},
                "n_starts": {"type": "integer", "minimum": 1},
                "fit_model": {"enum": [None, "exponential", "power"]},
                "fit_window": {"oneOf": [{"type": "null"}, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]},
                "refine_check": {"type": "boolean"},
                "envelope": {"type": "boolean"},
            },
        },
    },
}

DIAGNOSTIC_DEFAULTS = {
    "gamma_override": None,
    "estimate_depth": True,
    "n_starts": 8,
    "fit_model": None,
    "fit_window": None,
    "refine_check": False,
    "envelope": False,
}


@dataclass
class ExperimentConfig:
    """A validated problem document together with the objects built from it."""

    document: dict
    problem: Problem
    solver: SolverConfig
    diagnostics: dict = field(default_factory=dict)
    preset: str | None = None


def validate_document(doc) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from None


def read_document(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def build_grid(domain: dict) -> SpatialGrid:
    unit = math.pi if domain.get("unit") == "pi" else 1.0
    lengths = [unit * L for L in domain["lengths"]]
    if len(lengths) != len(domain["n"]):
        raise ConfigError("domain.lengths and domain.n must have the same length")
    return SpatialGrid(tuple(lengths), tuple(domain["n"]))


def build_source(doc) -> SourceSpec | None:
    if doc is None:
        return None
    return SourceSpec(tuple(map(tuple, doc["positive"])), tuple(map(tuple, doc.get("negative", []))))


def _history(grid, hist: dict, amplitude: float) -> HistoryProfile:
    shape = SHAPES[hist["shape"]]
    kwargs = {"mode": hist["mode"]} if "mode" in hist and hist["shape"] == "sine" else {}
    u0 = shape(grid, amplitude, **kwargs)
    v_amp = hist.get("velocity_amplitude", 0.0)
    v0 = shape(grid, v_amp, **kwargs) if v_amp else grid.zeros()
    return HistoryProfile(
        hist.get("kind", "constant"), u0, v0, profile=hist.get("profile", "exp"), rate=float(hist.get("rate", 0.0))
    )


def amplitude_for_energy(doc: dict, target: float, branch: str = "outer") -> float:
    """Amplitude ``c`` of the history shape with initial energy ``E(0) = target``.

    ``c -> E(0)`` rises from 0 to a maximum and then falls; ``inner``
    selects the root below the maximiser, ``outer`` the one above it. Both
    are found by bisection on the discrete energy.
    """
    from .diag import initial_energies

    grid = build_grid(doc["domain"])
    kernel = make_kernel(doc["kernel"]) if doc.get("kernel") else None
    source = build_source(doc["source"])
    hist = doc["history"]

    def energy(c):
        h = _history(grid, hist, c)
        return initial_energies(Problem(grid, h, kernel, source, doc.get("damping_m"))).E0

    # bracket the maximiser by doubling, then locate it on a grid
    hi = 1.0
    while energy(2 * hi) > energy(hi):
        hi *= 2.0
        if hi > 1e6:
            raise ConfigError("initial energy does not turn over; no outer branch")
    cs = np.linspace(0.0, 4.0 * hi, 4001)
    es = np.array([energy(c) for c in cs])
    k = int(np.argmax(es))
    if target >= es[k]:
        raise ConfigError(f"target energy {target} exceeds the maximum {es[k]:.6g} along this profile")
    if branch == "inner":
        lo, up = 0.0, cs[k]
        f = lambda c: energy(c) - target  # increasing
    else:
        lo, up = cs[k], cs[-1]
        while energy(up) > target:
            up *= 2.0
        f = lambda c: target - energy(c)  # increasing
    if f(lo) > 0:
        raise ConfigError("target energy not bracketed on the requested branch")
    for _ in range(200):
        mid = 0.5 * (lo + up)
        if f(mid) <= 0:
            lo = mid
        else:
            up = mid
        if up - lo <= 1e-14 * max(1.0, up):
            break
    return 0.5 * (lo + up)


def resolve_amplitude(doc: dict) -> float:
    hist = doc["history"]
    if "target_energy" in hist:
        return amplitude_for_energy(doc, float(hist["target_energy"]), hist.get("branch", "outer"))
    return float(hist.get("amplitude", 0.0))


def build_experiment(doc: dict, preset: str | None = None) -> ExperimentConfig:
    """Validate ``doc`` and construct the problem, solver settings and diagnostics options."""
    validate_document(doc)
    doc = copy.deepcopy(doc)
    try:
        grid = build_grid(doc["domain"])
        kernel = make_kernel(doc["kernel"]) if doc.get("kernel") else None
        source = build_source(doc["source"])
        amplitude = resolve_amplitude(doc)
        history = _history(grid, doc["history"], amplitude)
        problem = Problem(grid, history, kernel, source, doc.get("damping_m"))
        solver = SolverConfig(**doc["solver"])
        solver.check_cfl(grid, problem.k0)
    except ConfigError:
        raise
    except (ViscowellError, ValueError, TypeError) as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    diag = dict(DIAGNOSTIC_DEFAULTS)
    diag.update(doc.get("diagnostics", {}))
    diag["amplitude"] = amplitude
    return ExperimentConfig(doc, problem, solver, diag, preset)
