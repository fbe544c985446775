"""Batch experiments: line classification, gain sweeps, critical-gain
tables, pinning runs and report emission."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .cases import GridCase
from .dynamics import ControlConfig, SimConfig, simulate_cascade
from .equilibrium import solve_equilibrium, static_cascade
from .errors import DisconnectedError, GridError, NonUniformParametersError
from .grid import Line, as_line, is_connected, remove_line
from .results import CascadeReport
from .spectral import LinearModelParams, critical_gain

log = logging.getLogger(__name__)

SAFE, STATIC, DYNAMIC_ONLY, ERROR = "safe", "static-failure", "dynamic-only-failure", "error"
LABELS = (SAFE, STATIC, DYNAMIC_ONLY)
REPORT_SCHEMA = "gridcascade-report/1"


@dataclass
class LineClass:
    line: Line
    label: str
    static_n_c: Optional[int]
    dynamic_n_c: Optional[int]
    error: Optional[str] = None


@dataclass
class ClassificationTable:
    entries: list[LineClass]

    def lines_with(self, label: str) -> list[Line]:
        return [e.line for e in self.entries if e.label == label]

    def counts(self) -> dict[str, int]:
        out = {lab: 0 for lab in LABELS + (ERROR,)}
        for e in self.entries:
            out[e.label] += 1
        return out


@dataclass
class SweepPoint:
    gain: float
    n_c: int
    outcome: str
    tripped: list[Line] = field(default_factory=list)


@dataclass
class GainCurve:
    fault: Line
    mode: str
    points: list[SweepPoint]

    def zero_from(self) -> Optional[float]:
        """Smallest sampled gain from which every later sample has n_c = 0."""
        best = None
        for p in reversed(self.points):
            if p.n_c != 0:
                break
            best = p.gain
        return best


def _run(args):
    case, fault, sim, control, pre = args
    return simulate_cascade(case.topology, case.params, fault, sim, control, pre_fault=pre)


def _map(fn, jobs: list, workers: Optional[int]):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _faults(case: GridCase, faults) -> list[Line]:
    if faults is None or faults == "all":
        return list(case.topology.lines)
    out = [as_line(*f) for f in faults]
    for f in out:
        remove_line(case.topology, f)
    return sorted(out)


def _classify_one(args):
    case, fault, sim, pre = args
    try:
        stat = static_cascade(case.topology, case.params, fault, sim.alpha).n_c
    except GridError as exc:
        return LineClass(fault, ERROR, None, None, f"{exc.category}: {exc}")
    try:
        dyn = simulate_cascade(case.topology, case.params, fault, sim, pre_fault=pre).n_c
    except GridError as exc:
        return LineClass(fault, ERROR, stat, None, f"{exc.category}: {exc}")
    if stat > 0:
        label = STATIC
    elif dyn > 0:
        label = DYNAMIC_ONLY
    else:
        label = SAFE
    return LineClass(fault, label, stat, dyn)


def classify_all_lines(
    case: GridCase, sim: Optional[SimConfig] = None, *, faults=None, workers: Optional[int] = None
) -> ClassificationTable:
    """Label every line by what its loss does without control.

    static-failure: the iterated equilibrium cascade loses further lines.
    dynamic-only-failure: the equilibrium is overload-free but the transient
    trips lines.  safe: neither.  Solver failures are recorded per line.
    """
    sim = sim or SimConfig(alpha=case.alpha)
    pre = solve_equilibrium(case.topology, case.params)
    jobs = [(case, f, sim, pre) for f in _faults(case, faults)]
    return ClassificationTable(sorted(_map(_classify_one, jobs, workers), key=lambda e: e.line))


def control_config(mode: str, gain: float, pinned: Iterable[int] = ()) -> ControlConfig:
    if mode == "off":
        return ControlConfig.off()
    if mode == "full":
        return ControlConfig.full(gain)
    if mode in ("pin", "pinning"):
        return ControlConfig.pinning(gain, pinned)
    raise ValueError(f"unknown control mode {mode!r}")


def gain_sweep(
    case: GridCase,
    fault,
    gains: Sequence[float],
    mode: str = "full",
    *,
    pinned: Iterable[int] = (),
    sim: Optional[SimConfig] = None,
    workers: Optional[int] = None,
) -> GainCurve:
    """n_c for each gain (sorted ascending) after losing ``fault``.

    Faults that disconnect the grid are still simulated; the coupled
    control layer cannot resynchronize separate islands, and such runs
    come back with outcome ``islanded-unbalanced``.
    """
    sim = sim or SimConfig(alpha=case.alpha)
    fault = as_line(*fault)
    gains = sorted(float(g) for g in gains)
    if any(g < 0 for g in gains):
        raise ValueError("gains must be nonnegative")
    if not is_connected(remove_line(case.topology, fault)):
        log.warning("fault %s disconnects the grid; control cannot restore synchrony", fault)
    pre = solve_equilibrium(case.topology, case.params)
    jobs = [(case, fault, sim, control_config(mode, g, pinned), pre) for g in gains]
    reports: list[CascadeReport] = _map(_run, jobs, workers)
    points = [SweepPoint(g, r.n_c, r.outcome, r.tripped_lines) for g, r in zip(gains, reports)]
    return GainCurve(fault, "off" if mode == "off" else ("pinning" if mode in ("pin", "pinning") else "full"), points)


def uniform_linear_params(case: GridCase) -> LinearModelParams:
    """Uniform (k, gamma) of a case, or refuse when the case is heterogeneous."""
    ks = np.asarray(case.topology.couplings)
    gammas = np.asarray(case.params.damping)
    if ks.size == 0:
        raise NonUniformParametersError("case has no lines")
    if not np.allclose(ks, ks[0], rtol=1e-12, atol=0) or not np.allclose(gammas, gammas[0], rtol=1e-12, atol=0):
        raise NonUniformParametersError(
            "critical gains assume one coupling k on every line and one damping gamma on every node; "
            "this case is heterogeneous, so validate control gains by simulation instead"
        )
    return LinearModelParams(float(ks[0]), float(gammas[0]))


def critical_gain_table(case: GridCase, faults=None) -> list[tuple[Line, float]]:
    """Critical gain per fault line, sorted by line (full control only)."""
    params = uniform_linear_params(case)
    out = []
    for f in _faults(case, faults):
        out.append((f, critical_gain(remove_line(case.topology, f), params)))
    return out


def default_gain_grid(kbar: Optional[float], points: int = 25) -> list[float]:
    """Zero plus log-spaced gains up to 1.1 times the critical gain."""
    if kbar is None or not kbar > 0:
        raise ValueError("default gain grid needs a positive critical gain; pass gains explicitly")
    top = 1.1 * kbar
    return [0.0] + np.geomspace(top / 100.0, top, points - 1).tolist()


def pinning_experiment(
    case: GridCase,
    pinned: Iterable[int],
    faults,
    gains: Sequence[float],
    *,
    sim: Optional[SimConfig] = None,
    workers: Optional[int] = None,
) -> list[GainCurve]:
    pinned = frozenset(int(p) for p in pinned)
    bad = [p for p in pinned if not 0 <= p < case.node_count]
    if bad:
        raise ValueError(f"pinned nodes outside the grid: {sorted(bad)}")
    return [
        gain_sweep(case, f, gains, "pinning", pinned=pinned, sim=sim, workers=workers)
        for f in _faults(case, faults)
    ]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _pair(case: Optional[GridCase], line: Line) -> list[int]:
    return list(case.label_line(line)) if case is not None else list(line)


def sweep_csv(curves: Sequence[GainCurve], case: Optional[GridCase] = None) -> str:
    """Columns k_c,n_c for one curve; fault_i,fault_j,k_c,n_c,outcome for several."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if len(curves) == 1:
        w.writerow(["k_c", "n_c"])
        for p in curves[0].points:
            w.writerow([repr(p.gain), p.n_c])
    else:
        w.writerow(["fault_i", "fault_j", "k_c", "n_c", "outcome"])
        for c in sorted(curves, key=lambda c: c.fault):
            for p in c.points:
                w.writerow(_pair(case, c.fault) + [repr(p.gain), p.n_c, p.outcome])
    return buf.getvalue()


def sweep_json(curves: Sequence[GainCurve], case: Optional[GridCase] = None) -> str:
    doc = {
        "schema": REPORT_SCHEMA,
        "kind": "gain-sweep",
        "curves": [
            {
                "fault": _pair(case, c.fault),
                "mode": c.mode,
                "points": [
                    {"k_c": p.gain, "n_c": p.n_c, "outcome": p.outcome,
                     "tripped": [_pair(case, l) for l in p.tripped]}
                    for p in c.points
                ],
            }
            for c in sorted(curves, key=lambda c: c.fault)
        ],
    }
    return json.dumps(doc, indent=1) + "\n"


def classification_json(table: ClassificationTable, case: Optional[GridCase] = None) -> str:
    doc = {
        "schema": REPORT_SCHEMA,
        "kind": "classification",
        "counts": table.counts(),
    }
    for lab in LABELS:
        doc[lab] = [_pair(case, l) for l in table.lines_with(lab)]
    doc["errors"] = [
        {"line": _pair(case, e.line), "error": e.error} for e in table.entries if e.label == ERROR
    ]
    doc["lines"] = [
        {"line": _pair(case, e.line), "label": e.label, "static_n_c": e.static_n_c, "dynamic_n_c": e.dynamic_n_c}
        for e in table.entries
    ]
    return json.dumps(doc, indent=1) + "\n"


def classification_csv(table: ClassificationTable, case: Optional[GridCase] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["line_i", "line_j", "label", "static_n_c", "dynamic_n_c"])
    for e in table.entries:
        w.writerow(_pair(case, e.line) + [e.label, e.static_n_c, e.dynamic_n_c])
    return buf.getvalue()


def critical_gain_csv(rows, case: Optional[GridCase] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["line_i", "line_j", "critical_gain"])
    for line, value in rows:
        w.writerow(_pair(case, line) + [repr(value)])
    return buf.getvalue()


def critical_gain_json(rows, case: Optional[GridCase] = None) -> str:
    doc = {
        "schema": REPORT_SCHEMA,
        "kind": "critical-gain",
        "rows": [{"line": _pair(case, l), "critical_gain": v} for l, v in rows],
    }
    return json.dumps(doc, indent=1) + "\n"


def cascade_json(report: CascadeReport, case: Optional[GridCase] = None) -> str:
    doc = {
        "schema": REPORT_SCHEMA,
        "kind": "cascade",
        "initial_fault": _pair(case, report.initial_fault),
        "n_c": report.n_c,
        "outcome": report.outcome,
        "tripped": [{"line": _pair(case, t.line), "time": t.time, "reason": t.reason} for t in report.tripped],
        "final_time": report.final_time,
        "settling_time": report.settling_time,
    }
    return json.dumps(doc, indent=1) + "\n"


def cascade_csv(report: CascadeReport, case: Optional[GridCase] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["line_i", "line_j", "trip_time", "reason"])
    for t in report.tripped:
        w.writerow(_pair(case, t.line) + [repr(t.time), t.reason])
    return buf.getvalue()


def trajectory_csv(report: CascadeReport, case: Optional[GridCase] = None) -> str:
    """time, theta_<id>..., omega_<id>..., F_<i>_<j>... (tripped lines read 0)."""
    trace = report.trajectory
    if trace is None:
        raise ValueError("report carries no trajectory; simulate with trace_every set")
    times, theta, omega, flows = trace.as_arrays()
    n = theta.shape[1]
    labels = case.labels if case is not None else tuple(range(n))
    header = ["time"] + [f"theta_{l}" for l in labels] + [f"omega_{l}" for l in labels]
    header += ["F_{}_{}".format(*_pair(case, l)) for l in trace.lines]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in range(times.size):
        w.writerow([repr(float(times[r]))] + [repr(float(x)) for x in theta[r]]
                   + [repr(float(x)) for x in omega[r]] + [repr(float(x)) for x in flows[r]])
    return buf.getvalue()


def render(results, fmt: str, case: Optional[GridCase] = None) -> str:
    """Render a result object as CSV or JSON text."""
    if fmt not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    if isinstance(results, ClassificationTable):
        return (classification_csv if fmt == "csv" else classification_json)(results, case)
    if isinstance(results, CascadeReport):
        return (cascade_csv if fmt == "csv" else cascade_json)(results, case)
    if isinstance(results, GainCurve):
        results = [results]
    results = list(results)
    if results and all(isinstance(r, GainCurve) for r in results):
        return (sweep_csv if fmt == "csv" else sweep_json)(results, case)
    return (critical_gain_csv if fmt == "csv" else critical_gain_json)(results, case)


def emit_reports(
    results,
    fmt: str,
    path,
    *,
    case: Optional[GridCase] = None,
    trace_path=None,
) -> list[Path]:
    """Write ``results`` to ``path`` (and a trajectory CSV to ``trace_path``
    when the results are a traced cascade).  Returns the written paths."""
    written = []
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(results, fmt, case))
    written.append(path)
    if trace_path is not None:
        trace_path = Path(trace_path)
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        trace_path.write_text(trajectory_csv(results, case))
        written.append(trace_path)
    return written


__all__ = [
    "DYNAMIC_ONLY",
    "DisconnectedError",
    "SAFE",
    "STATIC",
    "ClassificationTable",
    "GainCurve",
    "LineClass",
    "SweepPoint",
    "classification_csv",
    "classification_json",
    "classify_all_lines",
    "critical_gain_csv",
    "critical_gain_json",
    "critical_gain_table",
    "default_gain_grid",
    "emit_reports",
    "gain_sweep",
    "pinning_experiment",
    "render",
    "sweep_csv",
    "sweep_json",
    "trajectory_csv",
    "uniform_linear_params",
]
