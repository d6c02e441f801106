"""``viscowell`` command line.

Exit codes: 0 success (a blow-up is a successful run), 2 configuration
error, 3 runtime error. ``VISCOWELL_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import runner
from .config import build_experiment, read_document
from .diag import EnergyTrace, fit_decay
from .errors import AssumptionViolated, ConfigError, ViscowellError
from .presets import DEFAULT_AXES, get_preset, preset_names

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _load(args) -> tuple[dict, str | None]:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        return read_document(args.config), None
    if args.preset:
        return get_preset(args.preset), args.preset
    raise ConfigError("one of --config or --preset is required")


def _experiment(args):
    doc, preset = _load(args)
    if getattr(args, "gamma_override", None):
        try:
            gammas = [float(x) for x in args.gamma_override.split(",")]
        except ValueError:
            raise ConfigError(f"--gamma-override expects comma-separated numbers, got {args.gamma_override!r}") from None
        doc.setdefault("diagnostics", {})["gamma_override"] = gammas
    return build_experiment(doc, preset)


def _emit(obj, out: str | None, name: str) -> None:
    text = runner.dumps(obj) + "\n"
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text)
    sys.stdout.write(text)


def cmd_constants(args) -> int:
    exp = _experiment(args)
    _emit(runner.constants_report(exp, args.embedding_p or ()), args.out, "constants.json")
    return EXIT_OK


def cmd_simulate(args) -> int:
    exp = _experiment(args)
    out = args.out or "viscowell_out"
    summary, _, _ = runner.simulate_experiment(exp, out, strict=args.strict)
    sys.stdout.write(runner.dumps(summary) + "\n")
    return EXIT_OK


def cmd_classify(args) -> int:
    exp = _experiment(args)
    _emit(runner.classify_report(exp, strict=args.strict), args.out, "classify.json")
    return EXIT_OK


def cmd_fit(args) -> int:
    if args.trace:
        trace = EnergyTrace.from_csv(args.trace)
    else:
        exp = _experiment(args)
        _, trace, _ = runner.simulate_experiment(exp, strict=args.strict)
    window = tuple(args.window) if args.window else None
    fit = fit_decay(trace, args.model, window)
    _emit(fit.to_dict(), args.out, "fit.json")
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc, preset = _load(args)
    specs = args.axis if args.axis is not None else DEFAULT_AXES.get(preset or "", [])
    if not specs:
        raise ConfigError("no sweep axis given (use --axis name=lin:a:b:n)")
    axes = [runner.parse_axis(s) for s in specs]
    out = args.out or "viscowell_sweep"
    rows = runner.sweep(doc, axes, out, jobs=args.jobs, preset=preset, strict=args.strict)
    counts = {}
    for r in rows:
        counts[r["match"]] = counts.get(r["match"], 0) + 1
    sys.stdout.write(runner.dumps({"points": len(rows), "match": counts, "csv": str(Path(out) / "sweep.csv")}) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viscowell", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="JSON problem document")
        p.add_argument("--preset", metavar="NAME", help=f"built-in preset ({', '.join(preset_names())})")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--strict", action="store_true", help="enforce the exponent caps of the 3D theory")
        p.add_argument("--jobs", type=int, default=None, metavar="N", help="parallel workers (sweep only)")
        p.add_argument("--gamma-override", metavar="G1,G2,...", help="use these embedding constants")

    p = sub.add_parser("constants", help="potential-well constants as JSON")
    common(p)
    p.add_argument("--embedding-p", type=float, action="append", metavar="P",
                   help="also report the embedding constant for exponent P (repeatable)")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("simulate", help="run a simulation; writes trace.csv, final.ckpt, summary.json")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("classify", help="predicted regime with the full clause transcript")
    common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("fit", help="fit energy decay of a trace CSV or of a fresh run")
    common(p)
    p.add_argument("--trace", metavar="CSV")
    p.add_argument("--model", choices=["exponential", "power"], default="exponential")
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="parameter sweep: predicted verdict vs observed outcome")
    common(p)
    p.add_argument("--axis", action="append", metavar="NAME=SPEC",
                   help="amplitude|m|p1|E0 = lin:a:b:n | list:v1,v2 | value (repeatable)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("VISCOWELL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, AssumptionViolated) as exc:
        print(f"viscowell: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ViscowellError, ArithmeticError, OSError, ValueError) as exc:
        print(f"viscowell: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
