"""Command-line entry point: ``gridcascade <command> <case> ...``.

``<case>`` is a built-in name (``five-node``, ``ieee118``), a native JSON
grid file or an IEEE CDF file.  Node ids on the command line are the
case's external labels.  Failures print ``{"error": <category>, ...}`` to
stderr and exit with status 1; usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .cases import load_case, serialize_grid
from .cdf import branch_count, parse_ieee_cdf
from .dynamics import ControlConfig, SimConfig, simulate_cascade
from .errors import GridError
from .grid import remove_line
from .spectral import critical_gain

log = logging.getLogger("gridcascade")


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.replace("-", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a line as i,j; got {text!r}") from None
    return a, b


def _gains(text: str) -> list[float]:
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("gain step must be positive")
        count = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return [lo + i * step for i in range(count)]
    return [float(x) for x in text.split(",") if x.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("case", help="built-in name, native .json grid file, or IEEE CDF file")
    p.add_argument("--sidecar", help="per-node parameter CSV keyed by external bus number")
    p.add_argument("--h", type=float, default=1e-3, help="integration step [s] (default 1e-3)")
    p.add_argument("--tmax", type=float, default=500.0, help="simulation horizon [s] (default 500)")
    p.add_argument("--alpha", type=float, help="override the case's overload threshold")
    p.add_argument("--pinned", help="comma-separated pinned node ids; 'gens' adds every generator")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--output", "-o", help="output file (default stdout)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridcascade", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="label every line safe / static / dynamic-only")
    _common(p)

    p = sub.add_parser("sweep", help="n_c as a function of the control gain")
    _common(p)
    p.add_argument("--fault", type=_pair, action="append", required=True)
    p.add_argument("--mode", choices=("off", "full", "pin"), default="full")
    p.add_argument("--gains", type=_gains, help="list a,b,c or range lo:hi:step (default: grid up to 1.1 k_c)")

    p = sub.add_parser("critical-gain", help="analytic critical gain per fault line")
    _common(p)
    p.add_argument("--fault", type=_pair, action="append")

    p = sub.add_parser("simulate", help="one dynamic cascade run")
    _common(p)
    p.add_argument("--fault", type=_pair, required=True)
    p.add_argument("--kc", type=float, default=0.0)
    p.add_argument("--mode", choices=("off", "full", "pin"))
    p.add_argument("--trace", help="write a trajectory CSV here")
    p.add_argument("--trace-every", type=int, default=10, help="trajectory sampling stride in steps")

    p = sub.add_parser("parse-cdf", help="read an IEEE CDF file and summarize or convert it")
    p.add_argument("file")
    p.add_argument("--coupling", choices=("reactance", "susceptance"), default="reactance")
    p.add_argument("--balance", choices=("slack", "proportional", "none"), default="slack")
    p.add_argument("--output", "-o", help="write the case as a native JSON grid file")
    return parser


def _pinned(case, text):
    if not text:
        return frozenset()
    out = set()
    for tok in text.split(","):
        tok = tok.strip()
        if tok in ("gens", "generators"):
            out |= case.topology.generators
        elif tok:
            out.add(case.index(int(tok)))
    return frozenset(out)


def _write(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _load(args):
    case = load_case(args.case, sidecar=args.sidecar)
    if args.alpha is not None:
        case = case.replace(alpha=args.alpha)
    sim = SimConfig(step=args.h, horizon=args.tmax, alpha=case.alpha)
    return case, sim


def _default_gains(case, fault):
    params = harness.uniform_linear_params(case)
    return harness.default_gain_grid(critical_gain(remove_line(case.topology, fault), params))


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "parse-cdf":
        text = Path(args.file).read_text()
        case = parse_ieee_cdf(text, coupling=args.coupling, balance=args.balance)
        if args.output:
            Path(args.output).write_text(serialize_grid(case))
        summary = {
            "name": case.name,
            "nodes": case.node_count,
            "machines": len(case.topology.generators),
            "branch_records": branch_count(text),
            "lines": case.topology.line_count,
            "net_power": case.params.imbalance(),
            "notes": list(case.notes),
        }
        sys.stdout.write(json.dumps(summary, indent=1) + "\n")
        return 0

    case, sim = _load(args)
    pinned = _pinned(case, args.pinned)
    if args.command == "classify":
        table = harness.classify_all_lines(case, sim, workers=args.workers)
        _write(args, harness.render(table, args.format, case))
    elif args.command == "critical-gain":
        faults = None if not args.fault else [case.line(*f) for f in args.fault]
        rows = harness.critical_gain_table(case, faults)
        _write(args, harness.render(rows, args.format, case))
    elif args.command == "sweep":
        curves = []
        for f in args.fault:
            fault = case.line(*f)
            gains = args.gains if args.gains is not None else _default_gains(case, fault)
            curves.append(harness.gain_sweep(case, fault, gains, args.mode, pinned=pinned, sim=sim,
                                             workers=args.workers))
        _write(args, harness.render(curves, args.format, case))
    elif args.command == "simulate":
        mode = args.mode or ("pin" if pinned else ("full" if args.kc > 0 else "off"))
        control = harness.control_config(mode, args.kc, pinned)
        report = simulate_cascade(case.topology, case.params, case.line(*args.fault), sim, control,
                                  trace_every=args.trace_every if args.trace else None)
        _write(args, harness.render(report, args.format, case))
        if args.trace:
            Path(args.trace).write_text(harness.trajectory_csv(report, case))
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except (GridError, ValueError, OSError) as exc:
        category = getattr(exc, "category", "invalid-input" if isinstance(exc, ValueError) else "io-error")
        sys.stderr.write(json.dumps({"error": category, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
