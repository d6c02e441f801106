"""Experiment drivers shared by the command line and the test-suite.

Every function here returns plain dicts with a fixed key order so that
reports serialise deterministically.
"""

from __future__ import annotations

import copy
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diag
from .config import ExperimentConfig, build_experiment
from .errors import ConfigError, InsufficientDecay, NotInBlowupRegime, ViscowellError
from .model import validate_assumptions
from .sobolev import estimate_gamma
from .sim import StopReason, dump_checkpoint, run
from .well import WellConstants, compute_constants

log = logging.getLogger(__name__)

_CONSTANTS_CACHE: dict = {}


def constants_for(exp: ExperimentConfig, estimate_depth: bool | None = None) -> WellConstants:
    """Well constants for the experiment's grid and source, cached per process."""
    p = exp.problem
    if p.source is None:
        raise ConfigError("well constants need a source")
    opts = exp.diagnostics
    depth = opts["estimate_depth"] if estimate_depth is None else estimate_depth
    override = tuple(opts["gamma_override"]) if opts.get("gamma_override") else None
    key = (p.grid, p.source, p.k0, override, depth, opts["n_starts"])
    if key not in _CONSTANTS_CACHE:
        _CONSTANTS_CACHE[key] = compute_constants(
            p.grid, p.source, p.kernel, gamma_override=override, estimate_depth=depth, n_starts=opts["n_starts"]
        )
    return _CONSTANTS_CACHE[key]


def constants_report(exp: ExperimentConfig, embedding_ps=()) -> dict:
    c = constants_for(exp)
    report = c.to_dict()
    if embedding_ps:
        report["embedding"] = []
        for p in embedding_ps:
            est = estimate_gamma(exp.problem.grid, float(p), n_starts=exp.diagnostics["n_starts"])
            report["embedding"].append(est.to_dict())
    return report


def classify_experiment(exp: ExperimentConfig, strict: bool = False):
    constants = constants_for(exp)
    energies = diag.initial_energies(exp.problem, constants)
    prediction = diag.classify_regime(exp.problem, constants, energies, strict=strict)
    return prediction, constants, energies


def classify_report(exp: ExperimentConfig, strict: bool = False) -> dict:
    prediction, constants, energies = classify_experiment(exp, strict)
    out = prediction.to_dict()
    out["initial"] = energies.to_dict()
    out["constants"] = constants.to_dict()
    return out


def observed_outcome(stop: str) -> str:
    return "blowup" if stop in (StopReason.BLOWUP.value, StopReason.NONFINITE.value) else "bounded"


def blowup_report(exp: ExperimentConfig, trace: diag.EnergyTrace) -> dict | None:
    p = exp.problem
    if p.source is None or p.damping_m is None:
        return None
    n_ok = diag.resolved_length(trace)
    head = diag.truncated(trace, n_ok)
    E0 = float(trace.total_energy[0])
    M = None
    mode = "negative-energy"
    if E0 >= 0:
        M = constants_for(exp, estimate_depth=False).M_threshold
        mode = "below-M"
    out = {"mode": mode, "resolved_samples": n_ok, "alpha": None, "eps": None, "Y_increasing": None}
    try:
        bf = diag.blowup_functional(head, p.source, p.damping_m, M=M)
    except NotInBlowupRegime as exc:
        out["note"] = str(exc)
        det = diag.detect_blowup(head)
    else:
        out.update(alpha=bf.alpha, eps=bf.eps, Y_increasing=bool(np.all(np.diff(bf.Y) > 0)))
        det = diag.detect_blowup(head, bf.alpha, bf.Y)
    out.update(det.to_dict())
    out["blew_up"] = True
    return out


def simulate_experiment(exp: ExperimentConfig, out_dir: str | Path | None = None, strict: bool = False):
    """Run the experiment; returns ``(summary, trace, final_state)``."""
    p, cfg, opts = exp.problem, exp.solver, exp.diagnostics
    validate_assumptions(p.source, p.damping_m, p.kernel, strict=strict)
    trace, state, stop = run(p, cfg)
    res, order = diag.energy_identity_residual(trace)
    if opts["refine_check"] and stop is StopReason.COMPLETED:
        from dataclasses import replace

        fine, _, _ = run(p, replace(cfg, dt=cfg.dt / 2, sample_every=cfg.sample_every * 2))
        res, order = diag.energy_identity_residual(trace, fine)
    quad_max = float(np.max(trace.quad_energy))
    summary = {
        "preset": exp.preset,
        "stop": stop.value,
        "observed": observed_outcome(stop.value),
        "t_final": float(state.t),
        "steps": int(state.step_index),
        "samples": len(trace),
        "E0": float(trace.total_energy[0]),
        "quad_energy0": float(trace.quad_energy[0]),
        "max_residual": res,
        "relative_residual": res / quad_max if quad_max > 0 else 0.0,
        "residual_order": order,
        "sup_quad_energy": quad_max,
        "fit": None,
        "envelope": None,
        "blowup": None,
    }
    if stop is StopReason.COMPLETED and opts["fit_model"]:
        try:
            window = tuple(opts["fit_window"]) if opts["fit_window"] else None
            fit = diag.fit_decay(trace, opts["fit_model"], window, floor=cfg.energy_floor)
            summary["fit"] = fit.to_dict()
        except InsufficientDecay as exc:
            summary["fit"] = {"error": str(exc)}
    if stop is StopReason.COMPLETED and opts["envelope"] and p.damping_m is not None:
        try:
            summary["envelope"] = diag.check_decay_envelope(trace, p.damping_m).to_dict()
        except InsufficientDecay as exc:
            summary["envelope"] = {"error": str(exc)}
    if summary["observed"] == "blowup":
        summary["blowup"] = blowup_report(exp, trace)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        trace.to_csv(out / "trace.csv")
        dump_checkpoint(state, out / "final.ckpt", cfg.dt)
        write_json(out / "summary.json", summary)
    return summary, trace, state


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

AXES = ("amplitude", "m", "p1", "E0")


def parse_axis(spec: str) -> tuple[str, list[float]]:
    """``name=lin:a:b:n``, ``name=list:v1,v2,...`` or ``name=value``."""
    if "=" not in spec:
        raise ConfigError(f"axis {spec!r} is not of the form name=values")
    name, values = spec.split("=", 1)
    name = name.strip()
    if name not in AXES:
        raise ConfigError(f"unknown sweep axis {name!r}; choose from {', '.join(AXES)}")
    try:
        if values.startswith("lin:"):
            a, b, n = values[4:].split(":")
            pts = list(np.linspace(float(a), float(b), int(n)))
        elif values.startswith("list:"):
            pts = [float(v) for v in values[5:].split(",") if v.strip()]
        else:
            pts = [float(values)] if values.strip() else []
    except ValueError:
        raise ConfigError(f"cannot parse axis values {values!r}") from None
    if not pts:
        raise ConfigError(f"axis {name!r} is empty")
    return name, [float(v) for v in pts]


def apply_axes(doc: dict, point: dict) -> dict:
    doc = copy.deepcopy(doc)
    for name, value in point.items():
        if name == "amplitude":
            doc["history"].pop("target_energy", None)
            doc["history"]["amplitude"] = value
        elif name == "m":
            doc["damping_m"] = value
        elif name == "p1":
            doc["source"]["positive"][0][1] = value
        elif name == "E0":
            doc["history"].pop("amplitude", None)
            doc["history"]["target_energy"] = value
    return doc


def _predicted(prediction) -> str:
    b, g = prediction.predicts_blowup, prediction.predicts_global
    if b and g:
        return "conflict"
    return "blowup" if b else "global" if g else "none"


def run_point(args) -> dict:
    index, doc, point, preset, strict = args
    row = {"index": index, "axes": point}
    try:
        exp = build_experiment(apply_axes(doc, point), preset)
        prediction, constants, energies = classify_experiment(exp, strict)
        summary, _, _ = simulate_experiment(exp, strict=strict)
        predicted = _predicted(prediction)
        observed = summary["observed"]
        if predicted == "none":
            match = "n/a"
        elif predicted == "conflict":
            match = "no"
        else:
            match = "yes" if (predicted == "blowup") == (observed == "blowup") else "no"
        row.update(
            amplitude=exp.diagnostics["amplitude"],
            classify=dict(prediction.to_dict(), initial=energies.to_dict()),
            simulate=summary,
            predicted=predicted,
            observed=observed,
            match=match,
            error=None,
        )
    except (ViscowellError, ArithmeticError, ValueError) as exc:
        row.update(amplitude=None, classify=None, simulate=None, predicted="error", observed="error", match="n/a",
                   error=f"{type(exc).__name__}: {exc}")
    return row


SWEEP_COLUMNS = ("index", "resolved_amplitude", "E0", "membership", "verdicts", "predicted", "observed", "match", "stop", "t_final", "error")


def sweep(doc: dict, axes: list[tuple[str, list[float]]], out_dir: str | Path, jobs: int | None = None,
          preset: str | None = None, strict: bool = False) -> list[dict]:
    """Run the Cartesian product of ``axes``; write per-point JSON and ``sweep.csv``."""
    names = [n for n, _ in axes]
    if len(set(names)) != len(names):
        raise ConfigError("each sweep axis may appear once")
    points = [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in axes))]
    tasks = [(i, doc, pt, preset, strict) for i, pt in enumerate(points)]
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_point, tasks))
    else:
        rows = [run_point(t) for t in tasks]
    out = Path(out_dir)
    (out / "points").mkdir(parents=True, exist_ok=True)
    for row in rows:
        write_json(out / "points" / f"point_{row['index']:04d}.json", row)
    import csv

    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(SWEEP_COLUMNS[:1]) + names + list(SWEEP_COLUMNS[1:]))
        for row in rows:
            sim = row["simulate"] or {}
            cls = row["classify"] or {}
            w.writerow(
                [row["index"]]
                + [repr(row["axes"][n]) for n in names]
                + [
                    "" if row["amplitude"] is None else repr(float(row["amplitude"])),
                    "" if not cls else repr(cls["initial"]["E0"]),
                    (cls.get("initial") or {}).get("membership", ""),
                    ";".join(cls.get("verdicts", [])),
                    row["predicted"],
                    row["observed"],
                    row["match"],
                    sim.get("stop", ""),
                    "" if not sim else repr(sim["t_final"]),
                    row["error"] or "",
                ]
            )
    return rows
