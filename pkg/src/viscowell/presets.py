"""Named, versioned experiment documents.

Each preset is a complete problem document (see :mod:`viscowell.config`).
Bump ``PRESETS_VERSION`` whenever a preset changes in a way that alters
its results.
"""

from __future__ import annotations

import copy

from .errors import ConfigError

PRESETS_VERSION = 1

EXP_KERNEL = {"family": "exponential_sum", "terms": [[1.0, 1.0]]}
CUBIC = {"positive": [[1.0, 3.0]], "negative": []}
UNIT_PI = {"lengths": [1.0], "unit": "pi"}


def _doc(n, kernel, source, history, m, solver, diagnostics=None, description=""):
    doc = {
        "description": description,
        "domain": dict(UNIT_PI, n=[n]),
        "kernel": kernel,
        "source": source,
        "history": history,
        "damping_m": m,
        "solver": solver,
    }
    if diagnostics:
        doc["diagnostics"] = diagnostics
    return doc


_PRESETS = {
    "single-cubic": _doc(
        400, EXP_KERNEL, CUBIC, {"shape": "sine", "amplitude": 0.1}, 1.0,
        {"dt": 1e-3, "t_end": 1.0, "sample_every": 10},
        {"gamma_override": [1.0]},
        "f = u^3 on [0, pi], mu = exp(-s); embedding constant fixed to 1 for closed-form well constants",
    ),
    "single-cubic-grid": _doc(
        400, EXP_KERNEL, CUBIC, {"shape": "sine", "amplitude": 0.1}, 1.0,
        {"dt": 1e-3, "t_end": 1.0, "sample_every": 10},
        None,
        "f = u^3 on [0, pi], mu = exp(-s); embedding constant estimated on the grid",
    ),
    "sink-added": _doc(
        400, EXP_KERNEL, {"positive": [[1.0, 3.0]], "negative": [[1.0, 2.0]]},
        {"shape": "sine", "amplitude": 0.1}, 1.0,
        {"dt": 1e-3, "t_end": 1.0, "sample_every": 10},
        None,
        "f = u^3 - |u| u: one sink exponent below p_1",
    ),
    "zero": _doc(
        63, EXP_KERNEL, CUBIC, {"shape": "sine", "amplitude": 0.0}, 1.0,
        {"dt": 0.01, "t_end": 1.0},
        None,
        "zero data stays zero",
    ),
    "decay-m1-expkernel": _doc(
        100, EXP_KERNEL, CUBIC, {"shape": "sine", "amplitude": 0.1}, 1.0,
        {"dt": 1e-3, "t_end": 10.0, "sample_every": 10},
        {"fit_model": "exponential", "refine_check": True, "envelope": True},
        "small data, linear damping, exponential kernel: exponential energy decay",
    ),
    "decay-m3": _doc(
        63, EXP_KERNEL, CUBIC, {"shape": "sine", "amplitude": 0.1}, 3.0,
        {"dt": 0.01, "t_end": 200.0, "sample_every": 20},
        {"fit_model": "power"},
        "small data, cubic damping, exponential kernel",
    ),
    "decay-powerlaw": _doc(
        63, {"family": "power_law", "amplitude": 1.0, "exponent": 2.0}, CUBIC,
        {"shape": "sine", "amplitude": 0.1}, 1.0,
        {"dt": 0.01, "t_end": 100.0, "sample_every": 10, "memory_backend": "quadrature"},
        {"fit_model": "power"},
        "small data, linear damping, power-law kernel (1 + s)^-2",
    ),
    "blowup-negE": _doc(
        100, EXP_KERNEL, CUBIC, {"shape": "sine", "amplitude": 2.0}, 1.0,
        {"dt": 1e-3, "t_end": 10.0, "sample_every": 10},
        None,
        "amplitude-2 sine: negative initial energy",
    ),
    "blowup-posE": _doc(
        100, EXP_KERNEL, CUBIC, {"shape": "sine", "target_energy": 0.24, "branch": "outer"}, 1.0,
        {"dt": 1e-3, "t_end": 20.0, "sample_every": 10},
        None,
        "positive initial energy below the blow-up threshold M, quadratic energy above y0",
    ),
    "sink-dominant": _doc(
        63, EXP_KERNEL, {"positive": [[1.0, 2.0]], "negative": [[1.0, 3.0]]},
        {"shape": "sine", "amplitude": 1.0}, 1.0,
        {"dt": 0.01, "t_end": 50.0, "sample_every": 10},
        None,
        "largest sink exponent above the largest source exponent",
    ),
    "well-invariance": _doc(
        63, EXP_KERNEL, CUBIC, {"shape": "sine", "amplitude": 0.8}, 1.0,
        {"dt": 0.01, "t_end": 20.0, "sample_every": 5},
        None,
        "data inside the stable part of the well, close to its edge",
    ),
    "sweep-single-cubic": _doc(
        63, EXP_KERNEL, CUBIC, {"shape": "sine", "amplitude": 1.0}, 1.0,
        {"dt": 0.01, "t_end": 30.0, "sample_every": 10},
        None,
        "base point for amplitude sweeps across the stable/unstable split of the well",
    ),
}

#: default sweep axis per preset
DEFAULT_AXES = {"sweep-single-cubic": ["amplitude=lin:0.2:2.4:16"]}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def get_preset(name: str) -> dict:
    try:
        return copy.deepcopy(_PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}") from None
