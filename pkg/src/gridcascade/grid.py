"""Grid topology, machine parameters and graph operations.

Nodes are dense 0-based integers.  A line is stored as the ordered pair
``(min, max)`` of its endpoints, which fixes both iteration order and the
sign convention of line flows.  The control layer shares the physical line
set (with unit weights), so removing a line removes it from both layers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np

from .errors import LineNotFoundError, TopologyError

Line = tuple[int, int]


def as_line(i: int, j: int) -> Line:
    """Canonical (min, max) form of an undirected line."""
    i, j = int(i), int(j)
    return (i, j) if i <= j else (j, i)


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


@dataclass(frozen=True, eq=False)
class GridTopology:
    """Undirected weighted network with a generator subset.

    ``lines`` and ``couplings`` are parallel tuples.  Construction does not
    reject malformed input (duplicates, self-loops); use
    :func:`validate_topology` or :meth:`check` for that.
    """

    node_count: int
    lines: tuple[Line, ...]
    couplings: tuple[float, ...]
    generators: frozenset[int] = frozenset()

    def __post_init__(self):
        if len(self.lines) != len(self.couplings):
            raise ValueError("lines and couplings must have equal length")
        lines = tuple(as_line(i, j) for i, j in self.lines)
        order = sorted(range(len(lines)), key=lambda e: lines[e])
        object.__setattr__(self, "lines", tuple(lines[e] for e in order))
        object.__setattr__(self, "couplings", tuple(float(self.couplings[e]) for e in order))
        object.__setattr__(self, "generators", frozenset(int(g) for g in self.generators))

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable, generators: Iterable[int] = (), coupling: float = 1.0):
        """Build from ``(i, j)`` or ``(i, j, K)`` tuples; ``coupling`` fills missing weights."""
        lines, ks = [], []
        for e in edges:
            lines.append((e[0], e[1]))
            ks.append(e[2] if len(e) > 2 else coupling)
        return cls(node_count, tuple(lines), tuple(ks), frozenset(generators))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridTopology):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and self.lines == other.lines
            and self.couplings == other.couplings
            and self.generators == other.generators
        )

    def __hash__(self) -> int:
        return hash((self.node_count, self.lines, self.couplings, self.generators))

    @property
    def line_count(self) -> int:
        return len(self.lines)

    def coupling(self, i: int, j: int) -> float:
        key = as_line(i, j)
        for line, k in zip(self.lines, self.couplings):
            if line == key:
                return k
        raise LineNotFoundError(f"no line {key}")

    def has_line(self, i: int, j: int) -> bool:
        return as_line(i, j) in self.lines

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=int)
        for i, j in self.lines:
            deg[i] += 1
            deg[j] += 1
        return deg

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Endpoint index arrays and coupling array, in line order."""
        if not self.lines:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        ij = np.asarray(self.lines, dtype=np.int64)
        return ij[:, 0].copy(), ij[:, 1].copy(), np.asarray(self.couplings, dtype=float)

    def with_lines(self, lines: Iterable[Line], couplings: Iterable[float]) -> GridTopology:
        return GridTopology(self.node_count, tuple(lines), tuple(couplings), self.generators)

    def add_line(self, i: int, j: int, coupling: float) -> GridTopology:
        return self.with_lines(self.lines + (as_line(i, j),), self.couplings + (coupling,))

    def check(self) -> GridTopology:
        violations = validate_topology(self)
        if violations:
            raise TopologyError(violations)
        return self


@dataclass(frozen=True, eq=False)
class MachineParams:
    """Per-node inertia, damping and injected power (positive = generation)."""

    inertia: np.ndarray
    damping: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        for name in ("inertia", "damping", "power"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.inertia.size
        if self.damping.size != n or self.power.size != n:
            raise ValueError("inertia, damping and power must have equal length")
        if np.any(self.inertia <= 0):
            raise ValueError("inertia must be positive")
        if np.any(self.damping <= 0):
            raise ValueError("damping must be positive")

    @classmethod
    def uniform(cls, power, inertia: float = 1.0, damping: float = 0.1) -> MachineParams:
        power = np.asarray(power, dtype=float)
        return cls(np.full(power.size, inertia), np.full(power.size, damping), power)

    @property
    def size(self) -> int:
        return self.power.size

    def imbalance(self) -> float:
        return float(np.sum(self.power))

    def is_balanced(self, tol: float = 1e-9) -> bool:
        return abs(self.imbalance()) <= tol

    def replace(self, **changes) -> MachineParams:
        fields = {"inertia": self.inertia, "damping": self.damping, "power": self.power}
        fields.update(changes)
        return MachineParams(**fields)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MachineParams):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in ("inertia", "damping", "power")
        )

    __hash__ = None


def validate_topology(topology: GridTopology) -> list[Violation]:
    """Return every invariant violation found; an empty list means valid."""
    out: list[Violation] = []
    n = topology.node_count
    if n < 0:
        out.append(Violation("node-count", f"negative node count {n}"))
    seen: set[Line] = set()
    for (i, j), k in zip(topology.lines, topology.couplings):
        if not (0 <= i < n and 0 <= j < n):
            out.append(Violation("dangling-node", f"line ({i}, {j}) references a node outside 0..{n - 1}"))
        if i == j:
            out.append(Violation("self-loop", f"line ({i}, {j})"))
        if (i, j) in seen:
            out.append(Violation("duplicate-line", f"line ({i}, {j}) appears more than once"))
        seen.add((i, j))
        if not (k > 0) or not np.isfinite(k):
            out.append(Violation("nonpositive-coupling", f"line ({i}, {j}) has coupling {k}"))
    for g in sorted(topology.generators):
        if not 0 <= g < n:
            out.append(Violation("dangling-node", f"generator {g} outside 0..{n - 1}"))
    return out


def remove_line(topology: GridTopology, line: tuple[int, int]) -> GridTopology:
    """Return a copy of ``topology`` without ``line`` (physical and control layers)."""
    key = as_line(*line)
    if key not in topology.lines:
        raise LineNotFoundError(f"no line {key} in topology")
    keep = [(l, k) for l, k in zip(topology.lines, topology.couplings) if l != key]
    return topology.with_lines((l for l, _ in keep), (k for _, k in keep))


def remove_lines(topology: GridTopology, lines: Iterable[tuple[int, int]]) -> GridTopology:
    for line in lines:
        topology = remove_line(topology, line)
    return topology


def adjacency_lists(topology: GridTopology) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(topology.node_count)]
    for i, j in topology.lines:
        adj[i].append(j)
        adj[j].append(i)
    return adj


def connected_components(topology: GridTopology) -> list[list[int]]:
    """Connected components, each sorted, ordered by their smallest node."""
    adj = adjacency_lists(topology)
    seen = [False] * topology.node_count
    comps = []
    for start in range(topology.node_count):
        if seen[start]:
            continue
        seen[start] = True
        comp, queue = [], deque([start])
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        comps.append(sorted(comp))
    return comps


def is_connected(topology: GridTopology) -> bool:
    return len(connected_components(topology)) <= 1


def laplacian(topology: GridTopology, weighting: Literal["unweighted", "physical"] = "unweighted") -> np.ndarray:
    """Dense graph Laplacian ``D - A``.

    ``unweighted`` uses a_ij = 1 per line; ``physical`` uses the couplings K_ij.
    """
    if weighting not in ("unweighted", "physical"):
        raise ValueError(f"unknown weighting {weighting!r}")
    n = topology.node_count
    lap = np.zeros((n, n))
    for (i, j), k in zip(topology.lines, topology.couplings):
        w = 1.0 if weighting == "unweighted" else k
        lap[i, j] -= w
        lap[j, i] -= w
    # Diagonal from the assembled off-diagonals keeps row sums at zero.
    np.fill_diagonal(lap, 0.0)
    np.fill_diagonal(lap, -lap.sum(axis=1))
    return lap
