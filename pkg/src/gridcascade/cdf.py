"""IEEE Common Data Format reader (bus and branch sections).

Fields are sliced by column, never split on whitespace, so blank fields in
fixed-format files are handled.  Only the quantities the swing model needs
are read: bus number, type, load MW, generation MW, MVA base, and branch
endpoints, resistance and reactance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cases import GridCase
from .errors import ParseError
from .grid import GridTopology, MachineParams, as_line

# 1-based inclusive column ranges
BUS_NUMBER = (1, 4)
BUS_TYPE = (25, 26)
BUS_LOAD_MW = (41, 49)
BUS_GEN_MW = (60, 67)
BRANCH_FROM = (1, 4)
BRANCH_TO = (6, 9)
BRANCH_R = (20, 29)
BRANCH_X = (30, 40)
TITLE_MVA_BASE = (32, 37)


@dataclass(frozen=True)
class BusRecord:
    number: int
    type: int
    load_mw: float
    gen_mw: float


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    r: float
    x: float


def _field(card: str, cols, lineno: int, kind=float, default=None):
    a, b = cols
    raw = card[a - 1:b].strip()
    if not raw:
        if default is not None:
            return default
        raise ParseError(f"empty field in columns {a}-{b}", line=lineno, column=a)
    try:
        return kind(raw) if kind is not int else int(float(raw)) if "." in raw else int(raw)
    except ValueError:
        raise ParseError(f"malformed number {raw!r} in columns {a}-{b}", line=lineno, column=a) from None


def _section(lines, start, header, lineno_base=1):
    """Return (cards, next_index) for the section whose header starts with ``header``."""
    i = start
    while i < len(lines) and not lines[i].upper().startswith(header):
        i += 1
    if i == len(lines):
        raise ParseError(f"missing section {header!r}")
    cards = []
    i += 1
    while i < len(lines):
        if lines[i].strip().startswith("-999"):
            return cards, i + 1
        if lines[i].strip():
            cards.append((i + lineno_base, lines[i]))
        i += 1
    raise ParseError(f"section {header!r} is not terminated by -999", line=len(lines))


def read_cdf_records(text: str):
    """Parse the title, bus and branch cards into plain records."""
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty CDF document", line=1)
    base = _field(lines[0], TITLE_MVA_BASE, 1, default=100.0)
    if base <= 0:
        raise ParseError("MVA base must be positive", line=1, column=TITLE_MVA_BASE[0])
    bus_cards, nxt = _section(lines, 1, "BUS DATA FOLLOWS")
    branch_cards, _ = _section(lines, nxt, "BRANCH DATA FOLLOWS")
    buses = [
        BusRecord(
            _field(c, BUS_NUMBER, n, int),
            _field(c, BUS_TYPE, n, int, default=0),
            _field(c, BUS_LOAD_MW, n, default=0.0),
            _field(c, BUS_GEN_MW, n, default=0.0),
        )
        for n, c in bus_cards
    ]
    branches = []
    for n, c in branch_cards:
        rec = BranchRecord(
            _field(c, BRANCH_FROM, n, int),
            _field(c, BRANCH_TO, n, int),
            _field(c, BRANCH_R, n, default=0.0),
            _field(c, BRANCH_X, n),
        )
        if rec.x == 0.0:
            raise ParseError("branch with zero reactance", line=n, column=BRANCH_X[0])
        branches.append(rec)
    return base, buses, branches


def parse_ieee_cdf(text: str, *, coupling: str = "reactance", balance: str = "slack") -> GridCase:
    """Build a :class:`GridCase` from an IEEE CDF document.

    ``coupling='reactance'`` gives K = 1/x (lossless line, unit voltages);
    ``'susceptance'`` gives K = x / (r^2 + x^2).  Parallel branches are merged
    by summing their couplings.  Node power is (generation - load) / base.
    Machine nodes are the PV and slack buses (types 2 and 3).

    The raw powers differ by the network losses; ``balance='slack'`` assigns
    the mismatch to the slack bus, ``'proportional'`` scales all generation,
    ``'none'`` keeps the raw values (such a case has no synchronous
    equilibrium).
    """
    if coupling not in ("reactance", "susceptance"):
        raise ValueError("coupling must be 'reactance' or 'susceptance'")
    if balance not in ("slack", "proportional", "none"):
        raise ValueError("balance must be 'slack', 'proportional' or 'none'")
    base, buses, branches = read_cdf_records(text)
    index = {}
    for pos, b in enumerate(buses):
        if b.number in index:
            raise ParseError(f"duplicate bus number {b.number}")
        index[b.number] = pos
    merged: dict = {}
    for br in branches:
        if br.from_bus not in index or br.to_bus not in index:
            raise ParseError(f"branch {br.from_bus}-{br.to_bus} references an unknown bus")
        if br.from_bus == br.to_bus:
            raise ParseError(f"branch {br.from_bus}-{br.to_bus} is a self-loop")
        k = 1.0 / br.x if coupling == "reactance" else br.x / (br.r**2 + br.x**2)
        key = as_line(index[br.from_bus], index[br.to_bus])
        merged[key] = merged.get(key, 0.0) + k
    gen = np.array([b.gen_mw for b in buses]) / base
    load = np.array([b.load_mw for b in buses]) / base
    machines = frozenset(i for i, b in enumerate(buses) if b.type in (2, 3))
    notes = []
    mismatch = float(gen.sum() - load.sum())
    if balance == "slack" and mismatch != 0.0:
        slack = [i for i, b in enumerate(buses) if b.type == 3]
        if len(slack) != 1:
            raise ParseError("slack balancing needs exactly one type-3 bus")
        gen[slack[0]] -= mismatch
        notes.append(f"slack bus {buses[slack[0]].number} absorbed {mismatch * base:.4g} MW of mismatch")
    elif balance == "proportional" and mismatch != 0.0:
        gen *= load.sum() / gen.sum()
        notes.append(f"generation scaled by {load.sum() / (load.sum() + mismatch):.6g}")
    power = gen - load
    if balance != "none":
        # remove rounding residue so the case balances to machine precision
        power[int(np.argmax(np.abs(power)))] -= power.sum()
    else:
        notes.append(f"unbalanced: net injection {mismatch:.6g} p.u.")
    topo = GridTopology(len(buses), tuple(merged), tuple(merged.values()), machines)
    params = MachineParams.uniform(power, inertia=1.0, damping=0.1)
    return GridCase(
        topology=topo,
        params=params,
        alpha=0.6,
        labels=tuple(b.number for b in buses),
        name=text.splitlines()[0][45:].strip() or "ieee-cdf",
        provenance=f"IEEE CDF, {len(buses)} buses, {len(branches)} branch records, base {base:g} MVA",
        notes=tuple(notes),
    )


def branch_count(text: str) -> int:
    return len(read_cdf_records(text)[2])
