"""Grid cases: the bundle of topology, machine parameters and threshold,
the native JSON grid format, parameter overrides and built-in cases."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .equilibrium import check_alpha
from .errors import GridError, OverrideError, ParseError, TopologyError, UnbalancedComponentError
from .grid import GridTopology, Line, MachineParams, as_line, validate_topology

FORMAT_TAG = "gridcascade-grid/1"

# five-node example network (external labels)
FIVE_NODE_EDGES = ((1, 2), (1, 3), (1, 5), (2, 3), (2, 4), (3, 4), (4, 5))


@dataclass(frozen=True, eq=False)
class GridCase:
    """One case study: network, machine parameters and overload threshold.

    ``labels[i]`` is the external identifier of internal node ``i``.
    """

    topology: GridTopology
    params: MachineParams
    alpha: float = 0.6
    labels: tuple[int, ...] = ()
    name: str = ""
    provenance: str = ""
    coupling: Optional[float] = None  # global k when every line uses it
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = self.topology.node_count
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(1, n + 1)))
        if len(self.labels) != n or self.params.size != n:
            raise ValueError("labels, parameters and topology disagree on node count")
        if len(set(self.labels)) != n:
            raise ValueError("node labels must be unique")
        check_alpha(self.alpha)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridCase):
            return NotImplemented
        return (
            self.topology == other.topology
            and self.params == other.params
            and self.alpha == other.alpha
            and self.labels == other.labels
            and self.name == other.name
            and self.provenance == other.provenance
            and self.coupling == other.coupling
        )

    __hash__ = None

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    def index(self, label: int) -> int:
        try:
            return self._index_map()[int(label)]
        except KeyError:
            raise OverrideError(f"unknown node {label}") from None

    def _index_map(self) -> dict[int, int]:
        return {lab: i for i, lab in enumerate(self.labels)}

    def line(self, i: int, j: int) -> Line:
        """Internal line for a pair of external labels."""
        return as_line(self.index(i), self.index(j))

    def label_line(self, line: Line) -> tuple[int, int]:
        a, b = self.labels[line[0]], self.labels[line[1]]
        return (a, b) if a <= b else (b, a)

    def replace(self, **changes) -> GridCase:
        return replace(self, **changes)


def normalize_powers(case: GridCase) -> GridCase:
    """Loads draw 1, generators share the total equally: P_gen = n_loads / n_gens."""
    n = case.node_count
    gens = sorted(case.topology.generators)
    if not gens:
        raise GridError("cannot normalize powers without generators")
    if len(gens) == n:
        raise GridError("cannot normalize powers without loads")
    power = np.full(n, -1.0)
    power[gens] = (n - len(gens)) / len(gens)
    return case.replace(params=case.params.replace(power=power))


def apply_overrides(
    case: GridCase,
    *,
    inertia: Optional[float] = None,
    damping: Optional[float] = None,
    power: Optional[float] = None,
    alpha: Optional[float] = None,
    nodes: Optional[Mapping[int, Mapping[str, float]]] = None,
) -> GridCase:
    """Global scalar overrides first, then per-node values keyed by external label."""
    fields = {
        "inertia": np.array(case.params.inertia),
        "damping": np.array(case.params.damping),
        "power": np.array(case.params.power),
    }
    for name, value in (("inertia", inertia), ("damping", damping), ("power", power)):
        if value is not None:
            fields[name][:] = float(value)
    for label, values in (nodes or {}).items():
        idx = case.index(label)
        for name, value in values.items():
            if name not in fields:
                raise OverrideError(f"unknown parameter {name!r} for node {label}")
            if value is not None:
                fields[name][idx] = float(value)
    out = case.replace(params=MachineParams(**fields))
    if alpha is not None:
        out = out.replace(alpha=check_alpha(alpha))
    return out


def read_sidecar(text: str) -> dict[int, dict[str, float]]:
    """Per-node parameter table: CSV with a ``bus`` column and any of
    ``inertia``, ``damping``, ``power``.  Blank cells are skipped; lines
    starting with ``#`` are comments."""
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(rows)
    if reader.fieldnames is None or "bus" not in [f.strip() for f in reader.fieldnames]:
        raise ParseError("sidecar needs a 'bus' column", line=1)
    out: dict[int, dict[str, float]] = {}
    for lineno, row in enumerate(reader, start=2):
        row = {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
        try:
            bus = int(row.pop("bus"))
            out[bus] = {k: float(v) for k, v in row.items() if v}
        except ValueError as exc:
            raise ParseError(f"bad sidecar row: {exc}", line=lineno) from None
    return out


# ---------------------------------------------------------------------------
# native format
# ---------------------------------------------------------------------------


def _require(obj, key, where):
    if key not in obj:
        raise ParseError(f"missing field {key!r} in {where}")
    return obj[key]


def parse_grid_file(text: str) -> GridCase:
    """Parse the native JSON grid document (see README for the schema)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", line=1, column=1)
    tag = doc.get("format")
    if tag != FORMAT_TAG:
        raise ParseError(f"unsupported format tag {tag!r}; expected {FORMAT_TAG!r}")
    glob = doc.get("globals", {})
    k_global = glob.get("coupling")
    defaults = {"inertia": glob.get("inertia", 1.0), "damping": glob.get("damping", 0.1)}
    nodes = _require(doc, "nodes", "document")
    labels, roles, power, inertia, damping = [], [], [], [], []
    for pos, node in enumerate(nodes):
        where = f"nodes[{pos}]"
        labels.append(int(_require(node, "id", where)))
        role = node.get("role", "load")
        if role not in ("generator", "load"):
            raise ParseError(f"{where}: role must be 'generator' or 'load'")
        roles.append(role)
        power.append(node.get("power"))
        inertia.append(float(node.get("inertia", defaults["inertia"])))
        damping.append(float(node.get("damping", defaults["damping"])))
    index = {lab: i for i, lab in enumerate(labels)}
    if len(index) != len(labels):
        raise ParseError("duplicate node id")
    lines, ks = [], []
    for pos, line in enumerate(_require(doc, "lines", "document")):
        where = f"lines[{pos}]"
        if isinstance(line, dict):
            a, b, k = _require(line, "from", where), _require(line, "to", where), line.get("coupling", k_global)
        else:
            a, b = line[0], line[1]
            k = line[2] if len(line) > 2 else k_global
        if k is None:
            raise ParseError(f"{where}: no coupling and no global 'coupling'")
        if a not in index or b not in index:
            raise TopologyError([f"dangling-node: {where} references unknown node"])
        lines.append((index[a], index[b]))
        ks.append(float(k))
    gens = frozenset(i for i, r in enumerate(roles) if r == "generator")
    topo = GridTopology(len(labels), tuple(lines), tuple(ks), gens)
    violations = validate_topology(topo)
    if violations:
        raise TopologyError(violations)
    normalize = bool(doc.get("normalize_powers", False))
    if any(p is None for p in power) and not normalize:
        raise ParseError("every node needs 'power' unless normalize_powers is true")
    pw = np.array([0.0 if p is None else float(p) for p in power])
    try:
        params = MachineParams(np.array(inertia), np.array(damping), pw)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    case = GridCase(
        topology=topo,
        params=params,
        alpha=float(glob.get("alpha", 0.6)),
        labels=tuple(labels),
        name=str(doc.get("name", "")),
        provenance=str(doc.get("provenance", "")),
        coupling=None if k_global is None else float(k_global),
    )
    if normalize:
        case = normalize_powers(case)
    elif abs(case.params.imbalance()) > 1e-12:
        raise UnbalancedComponentError(
            f"powers sum to {case.params.imbalance():.6g}; set normalize_powers to rebalance"
        )
    return case


def serialize_grid(case: GridCase) -> str:
    """Native JSON text for ``case``; parsing it gives back an equal case."""
    p = case.params
    nodes = [
        {
            "id": lab,
            "role": "generator" if i in case.topology.generators else "load",
            "power": float(p.power[i]),
            "inertia": float(p.inertia[i]),
            "damping": float(p.damping[i]),
        }
        for i, lab in enumerate(case.labels)
    ]
    lines = [
        [case.labels[i], case.labels[j], k] for (i, j), k in zip(case.topology.lines, case.topology.couplings)
    ]
    glob = {"alpha": case.alpha}
    if case.coupling is not None:
        glob["coupling"] = case.coupling
    doc = {
        "format": FORMAT_TAG,
        "name": case.name,
        "provenance": case.provenance,
        "globals": glob,
        "normalize_powers": False,
        "nodes": nodes,
        "lines": lines,
    }
    return json.dumps(doc, indent=1) + "\n"


# ---------------------------------------------------------------------------
# built-in cases
# ---------------------------------------------------------------------------


def builtin_five_node() -> GridCase:
    """Two generators (nodes 2 and 5, P = 1.5) and three loads (P = -1),
    k = 1.63, I = 1, gamma = 0.1, alpha = 0.6."""
    k = 1.63
    edges = [(a - 1, b - 1) for a, b in FIVE_NODE_EDGES]
    topo = GridTopology.from_edges(5, edges, generators={1, 4}, coupling=k)
    params = MachineParams.uniform([-1.0, 1.5, -1.0, -1.0, 1.5], inertia=1.0, damping=0.1)
    return GridCase(topo, params, alpha=0.6, name="five-node", coupling=k,
                    provenance="five-node example network with two generators and three loads")


def _data_text(name: str) -> str:
    return resources.files("gridcascade").joinpath("data", name).read_text()


IEEE118_DEFAULT_INERTIA = 0.064
IEEE118_DAMPING = 0.05
IEEE118_ALPHA = 0.4


def builtin_ieee118(sidecar: Optional[str] = None, coupling: str = "reactance") -> GridCase:
    """IEEE 118-bus case configured for swing-equation runs.

    Machine inertias come from a sidecar table (the shipped one is a
    reconstruction, see its header); every other node gets I = 0.064,
    gamma = 0.05 everywhere, alpha = 0.4.
    """
    from .cdf import parse_ieee_cdf

    case = parse_ieee_cdf(_data_text("ieee118cdf.txt"), coupling=coupling)
    table = read_sidecar(sidecar if sidecar is not None else _data_text("ieee118_machines.csv"))
    case = apply_overrides(
        case, inertia=IEEE118_DEFAULT_INERTIA, damping=IEEE118_DAMPING, alpha=IEEE118_ALPHA, nodes=table
    )
    return case.replace(name="ieee118")


BUILTIN = {"five-node": builtin_five_node, "ieee118": builtin_ieee118}


def load_case(ref: str, *, sidecar: Optional[str] = None) -> GridCase:
    """Resolve a built-in name, a native ``.json`` file or an IEEE CDF file."""
    if ref in BUILTIN:
        if ref == "ieee118" and sidecar is not None:
            return builtin_ieee118(Path(sidecar).read_text())
        return BUILTIN[ref]()
    path = Path(ref)
    if not path.exists():
        raise GridError(f"no built-in case or file named {ref!r}")
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        case = parse_grid_file(text)
    else:
        from .cdf import parse_ieee_cdf

        case = parse_ieee_cdf(text)
    if sidecar is not None:
        case = apply_overrides(case, nodes=read_sidecar(Path(sidecar).read_text()))
    return case


# Italian 380 kV grid: user-supplied topology, fixed parameter recipe.
ITALY380_COUPLING = 15.0
ITALY380_DAMPING = 0.1
ITALY380_ALPHA = 0.6
# loads pinned in addition to every generator
ITALY380_EXTRA_PINNED = (15, 16, 20, 21, 64, 75, 76, 79, 80, 86, 88)


def italy380_pinned(case: GridCase) -> frozenset[int]:
    """Generators plus the extra pinned loads, as internal indices."""
    return frozenset(case.topology.generators) | {case.index(l) for l in ITALY380_EXTRA_PINNED}
