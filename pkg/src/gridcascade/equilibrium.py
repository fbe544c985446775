"""Synchronous fixed points, line flows, overload tests, static cascades."""

from __future__ import annotations

import logging
from typing import Mapping, Optional

import numpy as np

from .errors import (
    ConvergenceError,
    SingularJacobianError,
    UnbalancedComponentError,
)
from .grid import GridTopology, Line, MachineParams, as_line, connected_components, remove_line
from .results import HORIZON_EXHAUSTED, ISLANDED_UNBALANCED, SETTLED, CascadeReport, Trip

log = logging.getLogger(__name__)

BALANCE_TOL = 1e-9


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"overload threshold must lie in [0, 1], got {alpha}")
    return alpha


def flow_array(angles: np.ndarray, topology: GridTopology) -> np.ndarray:
    """F_ij = K_ij sin(theta_j - theta_i) for each line (i < j), in line order."""
    angles = np.asarray(angles, dtype=float)
    if angles.shape != (topology.node_count,):
        raise ValueError(f"expected {topology.node_count} angles, got shape {angles.shape}")
    ei, ej, k = topology.edge_arrays()
    return k * np.sin(angles[ej] - angles[ei])


def line_flows(angles: np.ndarray, topology: GridTopology) -> dict[Line, float]:
    return dict(zip(topology.lines, flow_array(angles, topology).tolist()))


def oriented_flow(angles: np.ndarray, topology: GridTopology, i: int, j: int) -> float:
    """Flow with an explicit endpoint order; swapping i and j flips the sign."""
    return topology.coupling(i, j) * float(np.sin(angles[j] - angles[i]))


def overloaded_lines(flows: Mapping[Line, float], topology: GridTopology, alpha: float) -> list[Line]:
    """Lines with |F_ij| > alpha K_ij (strict)."""
    alpha = check_alpha(alpha)
    out = []
    for line, k in zip(topology.lines, topology.couplings):
        if abs(flows[line]) > alpha * k:
            out.append(line)
    return out


def residual(angles: np.ndarray, topology: GridTopology, power: np.ndarray) -> np.ndarray:
    """P_i + sum_j K_ij sin(theta_j - theta_i) for every node."""
    ei, ej, _ = topology.edge_arrays()
    f = flow_array(angles, topology)
    r = np.array(power, dtype=float)
    np.add.at(r, ei, f)
    np.subtract.at(r, ej, f)
    return r


def _jacobian(angles: np.ndarray, topology: GridTopology) -> np.ndarray:
    n = topology.node_count
    ei, ej, k = topology.edge_arrays()
    c = k * np.cos(angles[ej] - angles[ei])
    jac = np.zeros((n, n))
    np.add.at(jac, (ei, ej), c)
    np.add.at(jac, (ej, ei), c)
    jac[np.diag_indices(n)] = -jac.sum(axis=1)
    return jac


def _newton(topology, power, theta, free, tol, max_iter):
    """Damped Newton on the nodes in ``free``; other entries stay fixed."""
    r = residual(theta, topology, power)
    norm = np.max(np.abs(r)) if r.size else 0.0
    for _ in range(max_iter):
        if norm < tol:
            return theta
        jac = _jacobian(theta, topology)[np.ix_(free, free)]
        try:
            step = np.linalg.solve(jac, -r[free])
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError("singular power-flow Jacobian") from exc
        if not np.all(np.isfinite(step)):
            raise SingularJacobianError("singular power-flow Jacobian")
        scale = 1.0
        while True:
            trial = theta.copy()
            trial[free] += scale * step
            r_trial = residual(trial, topology, power)
            trial_norm = np.max(np.abs(r_trial))
            if trial_norm < norm or scale < 1e-4:
                break
            scale *= 0.5
        theta, r, norm = trial, r_trial, trial_norm
    if norm < tol:
        return theta
    raise ConvergenceError(f"Newton iteration did not converge in {max_iter} steps (residual {norm:.3e})")


def solve_equilibrium(
    topology: GridTopology,
    params: MachineParams,
    guess: Optional[np.ndarray] = None,
    *,
    tol: float = 1e-10,
    max_iter: int = 100,
    nodes: Optional[list[int]] = None,
) -> np.ndarray:
    """Solve 0 = P_i + sum_j K_ij sin(theta_j - theta_i) by Newton-Raphson.

    Each connected component is gauge-fixed by setting its smallest node to
    angle 0.  ``nodes`` restricts the solve to a subset (a union of whole
    components); remaining entries are returned unchanged from ``guess``.
    """
    n = topology.node_count
    power = np.asarray(params.power, dtype=float)
    if power.size != n:
        raise ValueError("parameter dimension does not match topology")
    theta = np.zeros(n) if guess is None else np.array(guess, dtype=float)
    if theta.shape != (n,):
        raise ValueError(f"guess must have shape ({n},)")
    wanted = None if nodes is None else set(nodes)
    comps = [c for c in connected_components(topology) if wanted is None or c[0] in wanted]
    free: list[int] = []
    for comp in comps:
        total = float(power[comp].sum())
        if abs(total) > BALANCE_TOL:
            raise UnbalancedComponentError(
                f"component starting at node {comp[0]} has net power {total:.6g}"
            )
        theta[comp] -= theta[comp[0]]
        free.extend(comp[1:])
    if wanted is not None:
        # Zero out power outside the solved set so residuals only see active nodes.
        mask = np.zeros(n, dtype=bool)
        for comp in comps:
            mask[comp] = True
        power = np.where(mask, power, 0.0)
        sub = _restrict(topology, mask)
    else:
        sub = topology
    free_idx = np.array(sorted(free), dtype=int)
    if free_idx.size == 0:
        return theta
    solved = _newton(sub, power, theta, free_idx, tol, max_iter)
    return solved


def _restrict(topology: GridTopology, mask: np.ndarray) -> GridTopology:
    keep = [(l, k) for l, k in zip(topology.lines, topology.couplings) if mask[l[0]] and mask[l[1]]]
    return topology.with_lines([l for l, _ in keep], [k for _, k in keep])


def component_balance(components, power: np.ndarray, tol: float = BALANCE_TOL) -> list[bool]:
    return [abs(float(np.sum(power[c]))) <= tol for c in components]


def static_cascade(
    topology: GridTopology,
    params: MachineParams,
    initial_fault: tuple[int, int],
    alpha: float,
    *,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> CascadeReport:
    """Quasi-static cascade: solve, drop every overloaded line, repeat.

    A component whose powers do not balance has no equilibrium; all of its
    lines are declared failed and it is dropped from further iterations.
    Trip "times" are iteration indices (1 = first re-solve after the fault).
    """
    alpha = check_alpha(alpha)
    fault = as_line(*initial_fault)
    theta_pre = solve_equilibrium(topology, params, tol=tol, max_iter=max_iter)
    current = remove_line(topology, fault)
    power = params.power
    theta = theta_pre.copy()
    excluded: set[int] = set()
    trips: list[Trip] = []
    islanded = False
    iteration = 0
    while True:
        iteration += 1
        comps = [c for c in connected_components(current) if c[0] not in excluded]
        dead = []
        for comp, ok in zip(comps, component_balance(comps, power)):
            if ok:
                continue
            islanded = True
            excluded.update(comp)
            members = set(comp)
            lost = [l for l in current.lines if l[0] in members]
            dead.extend(lost)
            trips.extend(Trip(l, float(iteration), ISLANDED_UNBALANCED) for l in lost)
        if dead:
            current = _drop(current, dead)
        live = [c for c in comps if c[0] not in excluded]
        live_nodes = [v for c in live for v in c]
        if live_nodes:
            theta = solve_equilibrium(current, params, theta, tol=tol, max_iter=max_iter, nodes=live_nodes)
        flows = line_flows(theta, current)
        over = [l for l in overloaded_lines(flows, current, alpha) if l[0] not in excluded]
        if not over:
            break
        trips.extend(Trip(l, float(iteration)) for l in over)
        current = _drop(current, over)
    return CascadeReport(
        initial_fault=fault,
        tripped=trips,
        outcome=ISLANDED_UNBALANCED if islanded else SETTLED,
        final_angles=theta,
        final_time=float(iteration),
        operating_lines=current.lines,
        islands=connected_components(current),
    )


def _drop(topology: GridTopology, lines) -> GridTopology:
    gone = set(lines)
    keep = [(l, k) for l, k in zip(topology.lines, topology.couplings) if l not in gone]
    return topology.with_lines([l for l, _ in keep], [k for _, k in keep])


__all__ = [
    "BALANCE_TOL",
    "HORIZON_EXHAUSTED",
    "check_alpha",
    "flow_array",
    "line_flows",
    "oriented_flow",
    "overloaded_lines",
    "residual",
    "solve_equilibrium",
    "static_cascade",
]
