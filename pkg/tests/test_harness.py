import json

import numpy as np
import pytest

from gridcascade import harness
from gridcascade.cases import apply_overrides
from gridcascade.dynamics import SimConfig
from gridcascade.errors import NonUniformParametersError
from gridcascade.grid import remove_line
from gridcascade.spectral import LinearModelParams, critical_gain


def labelled(case, lines):
    return sorted(case.label_line(l) for l in lines)


@pytest.fixture(scope="module")
def table(five):
    return harness.classify_all_lines(five)


def test_classification(five, table):
    assert labelled(five, table.lines_with(harness.SAFE)) == [(1, 3), (3, 4)]
    assert labelled(five, table.lines_with(harness.STATIC)) == [(1, 5), (4, 5)]
    assert labelled(five, table.lines_with(harness.DYNAMIC_ONLY)) == [(1, 2), (2, 3), (2, 4)]
    assert table.counts() == {"safe": 2, "static-failure": 2, "dynamic-only-failure": 3, "error": 0}


def test_classification_order_invariant(five, table):
    shuffled = list(reversed(five.topology.lines))
    again = harness.classify_all_lines(five, faults=shuffled)
    assert [(e.line, e.label) for e in again.entries] == [(e.line, e.label) for e in table.entries]


def test_classification_parallel_matches_serial(five, table):
    par = harness.classify_all_lines(five, workers=2)
    assert [(e.line, e.label, e.static_n_c, e.dynamic_n_c) for e in par.entries] == [
        (e.line, e.label, e.static_n_c, e.dynamic_n_c) for e in table.entries
    ]


def test_alpha_one_all_safe(five):
    t = harness.classify_all_lines(five.replace(alpha=1.0))
    assert t.counts()["safe"] == 7


def test_gain_sweep_2_4(five):
    curve = harness.gain_sweep(five, five.line(2, 4), [0.5, 0.0], "full")
    assert [(p.gain, p.n_c) for p in curve.points] == [(0.0, 5), (0.5, 0)]


def test_sweep_above_critical_gain(five):
    curve = harness.gain_sweep(five, five.line(2, 3), [1.8, 2.5], "full")
    assert all(p.n_c == 0 for p in curve.points)


@pytest.mark.parametrize("fault", [(1, 2), (2, 3), (2, 4), (1, 3), (1, 5)])
def test_zero_gain_modes_agree(five, fault):
    off = harness.gain_sweep(five, five.line(*fault), [0.0], "off")
    full = harness.gain_sweep(five, five.line(*fault), [0.0], "full")
    assert off.points[0].n_c == full.points[0].n_c


def test_critical_gain_table(five):
    rows = harness.critical_gain_table(five, [five.line(2, 4), five.line(1, 2), five.line(2, 3)])
    assert [five.label_line(l) for l, _ in rows] == [(1, 2), (2, 3), (2, 4)]
    assert [round(v, 4) for _, v in rows] == [2.0997, 1.7555, 2.0997]


def test_critical_gain_table_refuses_heterogeneous(five, ieee118):
    with pytest.raises(NonUniformParametersError):
        harness.critical_gain_table(ieee118)
    with pytest.raises(NonUniformParametersError):
        harness.critical_gain_table(apply_overrides(five, nodes={1: {"damping": 0.3}}))


def test_default_grid_threshold_property(five):
    """Each dynamic-only fault reaches n_c = 0 within the default grid, no later than kbar."""
    params = LinearModelParams(1.63, 0.1)
    for fault in [(1, 2), (2, 3), (2, 4)]:
        line = five.line(*fault)
        kbar = critical_gain(remove_line(five.topology, line), params)
        grid = harness.default_gain_grid(kbar)
        assert len(grid) == 25 and grid[0] == 0.0 and grid[-1] == pytest.approx(1.1 * kbar)
        curve = harness.gain_sweep(five, line, grid, "full", workers=2)
        first_zero = curve.zero_from()
        assert first_zero is not None and first_zero <= kbar


def test_pinning_experiment(five):
    pinned = {five.index(2), five.index(5)}
    curves = harness.pinning_experiment(five, pinned, [five.line(2, 4)], [20.0])
    assert curves[0].mode == "pinning" and curves[0].points[0].n_c == 0
    with pytest.raises(ValueError):
        harness.pinning_experiment(five, {42}, [five.line(2, 4)], [1.0])


def test_reports(five, table, tmp_path):
    curve = harness.gain_sweep(five, five.line(2, 4), [0.0, 0.5], "full")
    csv_text = harness.render(curve, "csv", five)
    assert csv_text.splitlines()[0] == "k_c,n_c"
    assert csv_text.splitlines()[1:] == ["0.0,5", "0.5,0"]
    doc = json.loads(harness.render(table, "json", five))
    assert doc["schema"] == harness.REPORT_SCHEMA
    assert doc["safe"] == [[1, 3], [3, 4]]
    assert doc["static-failure"] == [[1, 5], [4, 5]]
    assert doc["dynamic-only-failure"] == [[1, 2], [2, 3], [2, 4]]
    a = harness.emit_reports(table, "json", tmp_path / "a.json", case=five)[0]
    b = harness.emit_reports(harness.classify_all_lines(five), "json", tmp_path / "b.json", case=five)[0]
    assert a.read_bytes() == b.read_bytes()


def test_multi_fault_csv(five):
    curves = [harness.gain_sweep(five, five.line(*f), [0.0], "full") for f in [(2, 4), (1, 2)]]
    lines = harness.render(curves, "csv", five).splitlines()
    assert lines[0] == "fault_i,fault_j,k_c,n_c,outcome"
    assert lines[1].startswith("1,2,0.0,5")


def test_trajectory_dump(five, tmp_path):
    from gridcascade.dynamics import simulate_cascade

    rep = simulate_cascade(five.topology, five.params, five.line(2, 4), SimConfig(horizon=1.0), trace_every=100)
    paths = harness.emit_reports(rep, "csv", tmp_path / "r.csv", case=five, trace_path=tmp_path / "t.csv")
    header = paths[1].read_text().splitlines()[0].split(",")
    assert header[:2] == ["time", "theta_1"] and "omega_5" in header and header[-1] == "F_4_5"
    assert len(paths[1].read_text().splitlines()) == 1 + 11
