"""Controlled swing-equation integration with in-flight line tripping.

State is (theta, omega) per node.  Each node obeys

    dtheta_i/dt = omega_i
    I_i domega_i/dt = P_i - gamma_i omega_i + sum_j K_ij sin(theta_j - theta_i) + u_i
    u_i = k_c xi_i sum_j a_ij (omega_j - omega_i)

where the sums run over currently operating lines and a_ij = 1 on every
operating line.  Integration is fixed-step classical RK4; after every step
each operating line is tested for |F_ij| > alpha K_ij and all offenders are
removed together before the next step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np

from .equilibrium import BALANCE_TOL, check_alpha, flow_array, solve_equilibrium
from .errors import IntegrationDivergedError, UnbalancedComponentError
from .grid import GridTopology, Line, MachineParams, as_line, connected_components, remove_line
from .results import HORIZON_EXHAUSTED, ISLANDED_UNBALANCED, SETTLED, CascadeReport, Trip

CONTROL_MODES = ("off", "full", "pinning")

# kernel status codes
_RUNNING, _TRIPPED, _SETTLED, _FROZEN, _DIVERGED = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class ControlConfig:
    gain: float = 0.0
    pinned: frozenset = frozenset()
    mode: str = "off"

    def __post_init__(self):
        if self.mode not in CONTROL_MODES:
            raise ValueError(f"control mode must be one of {CONTROL_MODES}, got {self.mode!r}")
        if not self.gain >= 0:
            raise ValueError("control gain must be nonnegative")
        object.__setattr__(self, "pinned", frozenset(int(p) for p in self.pinned))

    @classmethod
    def off(cls) -> ControlConfig:
        return cls()

    @classmethod
    def full(cls, gain: float) -> ControlConfig:
        return cls(gain=gain, mode="full")

    @classmethod
    def pinning(cls, gain: float, pinned) -> ControlConfig:
        return cls(gain=gain, pinned=frozenset(pinned), mode="pinning")

    @property
    def effective_gain(self) -> float:
        return 0.0 if self.mode == "off" else float(self.gain)

    def indicator(self, n: int) -> np.ndarray:
        """Per-node 0/1 vector saying where the control input acts."""
        if self.mode == "full":
            return np.ones(n)
        xi = np.zeros(n)
        if self.mode == "pinning":
            for p in self.pinned:
                if not 0 <= p < n:
                    raise ValueError(f"pinned node {p} outside 0..{n - 1}")
                xi[p] = 1.0
        return xi


@dataclass(frozen=True)
class SimConfig:
    step: float = 1e-3
    horizon: float = 500.0
    settle_velocity_tol: float = 1e-7
    settle_window: float = 1.0
    alpha: float = 0.6

    def __post_init__(self):
        if not (self.step > 0 and self.horizon > 0):
            raise ValueError("step and horizon must be positive")
        if not (self.settle_velocity_tol > 0 and self.settle_window > 0):
            raise ValueError("settle tolerances must be positive")
        check_alpha(self.alpha)

    def with_(self, **changes) -> SimConfig:
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class DynamicState:
    angles: np.ndarray
    velocities: np.ndarray
    time: float
    operating_lines: tuple[Line, ...]


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _rhs(theta, omega, ei, ej, k, active, power, damping, inertia, gain, xi, dtheta, domega, u):
    n = theta.shape[0]
    for i in range(n):
        dtheta[i] = omega[i]
        domega[i] = power[i] - damping[i] * omega[i]
        u[i] = 0.0
    for e in range(ei.shape[0]):
        if not active[e]:
            continue
        i = ei[e]
        j = ej[e]
        f = k[e] * math.sin(theta[j] - theta[i])
        domega[i] += f
        domega[j] -= f
        dw = omega[j] - omega[i]
        u[i] += dw
        u[j] -= dw
    for i in range(n):
        domega[i] = (domega[i] + gain * xi[i] * u[i]) / inertia[i]


@numba.njit(cache=True)
def _advance(
    theta, omega, max_steps, h,
    ei, ej, k, active, power, damping, inertia, gain, xi,
    alpha, check_trips, vtol, window_steps, calm, frozen, islanded, tripped,
):
    """Advance up to ``max_steps`` RK4 steps in place.

    Returns (status, steps_taken, calm, frozen).  ``calm`` counts consecutive
    steps with max|omega| < vtol; ``frozen`` counts consecutive steps with
    every acceleration and every line slip below vtol (used once an
    unbalanced island exists, since such an island can never reach omega = 0).
    """
    n = theta.shape[0]
    k1t = np.empty(n); k1w = np.empty(n)
    k2t = np.empty(n); k2w = np.empty(n)
    k3t = np.empty(n); k3w = np.empty(n)
    k4t = np.empty(n); k4w = np.empty(n)
    tt = np.empty(n); tw = np.empty(n); u = np.empty(n)
    half = 0.5 * h
    sixth = h / 6.0
    for s in range(max_steps):
        _rhs(theta, omega, ei, ej, k, active, power, damping, inertia, gain, xi, k1t, k1w, u)
        for i in range(n):
            tt[i] = theta[i] + half * k1t[i]
            tw[i] = omega[i] + half * k1w[i]
        _rhs(tt, tw, ei, ej, k, active, power, damping, inertia, gain, xi, k2t, k2w, u)
        for i in range(n):
            tt[i] = theta[i] + half * k2t[i]
            tw[i] = omega[i] + half * k2w[i]
        _rhs(tt, tw, ei, ej, k, active, power, damping, inertia, gain, xi, k3t, k3w, u)
        for i in range(n):
            tt[i] = theta[i] + h * k3t[i]
            tw[i] = omega[i] + h * k3w[i]
        _rhs(tt, tw, ei, ej, k, active, power, damping, inertia, gain, xi, k4t, k4w, u)
        finite = True
        vmax = 0.0
        for i in range(n):
            theta[i] = theta[i] + sixth * (k1t[i] + 2.0 * k2t[i] + 2.0 * k3t[i] + k4t[i])
            omega[i] = omega[i] + sixth * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i])
            if not (math.isfinite(theta[i]) and math.isfinite(omega[i])):
                finite = False
            a = abs(omega[i])
            if a > vmax:
                vmax = a
        if not finite:
            return _DIVERGED, s + 1, calm, frozen
        if check_trips:
            hit = False
            for e in range(ei.shape[0]):
                if active[e]:
                    f = k[e] * math.sin(theta[ej[e]] - theta[ei[e]])
                    if abs(f) > alpha * k[e]:
                        tripped[e] = True
                        hit = True
            if hit:
                return _TRIPPED, s + 1, 0, 0
        if vmax < vtol:
            calm += 1
            if calm >= window_steps:
                return _SETTLED, s + 1, calm, frozen
        else:
            calm = 0
        if islanded:
            _rhs(theta, omega, ei, ej, k, active, power, damping, inertia, gain, xi, k1t, k1w, u)
            still = True
            for i in range(n):
                if abs(k1w[i]) >= vtol:
                    still = False
                    break
            if still:
                for e in range(ei.shape[0]):
                    if active[e] and abs(omega[ej[e]] - omega[ei[e]]) >= vtol:
                        still = False
                        break
            if still:
                frozen += 1
                if frozen >= window_steps:
                    return _FROZEN, s + 1, calm, frozen
            else:
                frozen = 0
    return _RUNNING, max_steps, calm, frozen


# ---------------------------------------------------------------------------
# python-level API
# ---------------------------------------------------------------------------


def _kernel_args(topology: GridTopology, params: MachineParams, control: ControlConfig):
    ei, ej, k = topology.edge_arrays()
    return (
        ei, ej, k,
        np.ascontiguousarray(params.power, dtype=float),
        np.ascontiguousarray(params.damping, dtype=float),
        np.ascontiguousarray(params.inertia, dtype=float),
        control.effective_gain,
        control.indicator(topology.node_count),
    )


def control_input(state: DynamicState, topology: GridTopology, control: ControlConfig) -> np.ndarray:
    """u_i = k_c xi_i sum_j a_ij (omega_j - omega_i) over the operating lines."""
    n = topology.node_count
    omega = np.asarray(state.velocities, dtype=float)
    diff = np.zeros(n)
    for i, j in state.operating_lines:
        d = omega[j] - omega[i]
        diff[i] += d
        diff[j] -= d
    return control.effective_gain * control.indicator(n) * diff


def _active_mask(topology: GridTopology, operating) -> np.ndarray:
    live = {as_line(*l) for l in operating}
    return np.array([l in live for l in topology.lines], dtype=np.bool_)


def swing_rhs(state: DynamicState, topology: GridTopology, params: MachineParams, control: ControlConfig):
    """Return (dtheta/dt, domega/dt) at ``state``."""
    n = topology.node_count
    ei, ej, k, p, g, inertia, gain, xi = _kernel_args(topology, params, control)
    dtheta, domega, u = np.empty(n), np.empty(n), np.empty(n)
    _rhs(
        np.asarray(state.angles, dtype=float), np.asarray(state.velocities, dtype=float),
        ei, ej, k, _active_mask(topology, state.operating_lines), p, g, inertia, gain, xi,
        dtheta, domega, u,
    )
    return dtheta, domega


def integrate_step(
    state: DynamicState, topology: GridTopology, params: MachineParams, control: ControlConfig, h: float
) -> DynamicState:
    """One classical RK4 step of size ``h`` (no overload checks)."""
    theta = np.array(state.angles, dtype=float)
    omega = np.array(state.velocities, dtype=float)
    ei, ej, k, p, g, inertia, gain, xi = _kernel_args(topology, params, control)
    active = _active_mask(topology, state.operating_lines)
    status, _, _, _ = _advance(
        theta, omega, 1, float(h), ei, ej, k, active, p, g, inertia, gain, xi,
        1.0, False, 0.0, 1 << 62, 0, 0, False, np.zeros(ei.size, dtype=np.bool_),
    )
    if status == _DIVERGED:
        raise IntegrationDivergedError(f"non-finite state at t = {state.time + h}")
    return DynamicState(theta, omega, state.time + h, state.operating_lines)


@dataclass
class Trajectory:
    """Sampled trajectory: times, angles (T x N), velocities (T x N), flows (T x L).

    Flow columns follow the original line order; tripped lines read 0.
    """

    lines: tuple[Line, ...]
    times: list = field(default_factory=list)
    angles: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    flows: list = field(default_factory=list)

    def record(self, t, theta, omega, flows):
        self.times.append(t)
        self.angles.append(theta.copy())
        self.velocities.append(omega.copy())
        self.flows.append(flows)

    def as_arrays(self):
        return (
            np.asarray(self.times),
            np.asarray(self.angles),
            np.asarray(self.velocities),
            np.asarray(self.flows),
        )


def _unbalanced_islands(topology: GridTopology, active: np.ndarray, power: np.ndarray) -> list[list[int]]:
    live = topology.with_lines(
        [l for l, a in zip(topology.lines, active) if a],
        [k for k, a in zip(topology.couplings, active) if a],
    )
    comps = connected_components(live)
    return [c for c in comps if abs(float(np.sum(power[c]))) > BALANCE_TOL]


def simulate_cascade(
    topology: GridTopology,
    params: MachineParams,
    initial_fault: tuple[int, int],
    sim: SimConfig = SimConfig(),
    control: ControlConfig = ControlConfig(),
    *,
    pre_fault: Optional[np.ndarray] = None,
    trace_every: Optional[int] = None,
) -> CascadeReport:
    """Remove ``initial_fault`` at t = 0 and integrate from (theta*, 0).

    Runs until the grid settles (|omega| < tol for the settle window with no
    overload), until the horizon, or, once an unbalanced island exists, until
    every island is frequency-locked (no acceleration, no line slip).
    ``trace_every`` samples the trajectory every that many steps.
    """
    fault = as_line(*initial_fault)
    if pre_fault is None:
        pre_fault = solve_equilibrium(topology, params)
    pre_flows = flow_array(pre_fault, topology)
    overloaded = np.abs(pre_flows) > sim.alpha * np.asarray(topology.couplings)
    if np.any(overloaded):
        bad = [l for l, o in zip(topology.lines, overloaded) if o]
        raise ValueError(f"pre-fault equilibrium is already overloaded on {bad}")
    remove_line(topology, fault)  # raises if the fault is not a line

    ei, ej, k, p, g, inertia, gain, xi = _kernel_args(topology, params, control)
    active = np.array([l != fault for l in topology.lines], dtype=np.bool_)
    theta = np.array(pre_fault, dtype=float)
    omega = np.zeros(topology.node_count)
    h = float(sim.step)
    total = int(math.ceil(sim.horizon / h - 1e-9))
    window = max(1, int(round(sim.settle_window / h)))
    trace = Trajectory(topology.lines) if trace_every else None

    def sample(step):
        f = np.where(active, k * np.sin(theta[ej] - theta[ei]), 0.0)
        trace.record(step * h, theta, omega, f)

    islands = _unbalanced_islands(topology, active, p)
    step = calm = frozen = 0
    trips: list[Trip] = []
    status = _RUNNING
    if trace is not None:
        sample(0)
    while step < total:
        chunk = total - step
        if trace is not None:
            chunk = min(chunk, trace_every - step % trace_every)
        tripped = np.zeros(ei.size, dtype=np.bool_)
        status, taken, calm, frozen = _advance(
            theta, omega, chunk, h, ei, ej, k, active, p, g, inertia, gain, xi,
            sim.alpha, True, sim.settle_velocity_tol, window, calm, frozen, bool(islands), tripped,
        )
        step += taken
        if status == _DIVERGED:
            raise IntegrationDivergedError(f"non-finite state at t = {step * h:.6g}")
        if trace is not None and (step % trace_every == 0 or status != _RUNNING):
            sample(step)
        if status == _TRIPPED:
            t = step * h
            for e in np.flatnonzero(tripped):
                trips.append(Trip(topology.lines[e], t))
                active[e] = False
            islands = _unbalanced_islands(topology, active, p)
            continue
        if status in (_SETTLED, _FROZEN):
            break

    if status == _SETTLED:
        outcome = ISLANDED_UNBALANCED if islands else SETTLED
    elif islands:
        outcome = ISLANDED_UNBALANCED
    else:
        outcome = HORIZON_EXHAUSTED
    final_time = step * h
    settling_time = final_time - window * h if status == _SETTLED else None
    operating = tuple(l for l, a in zip(topology.lines, active) if a)
    return CascadeReport(
        initial_fault=fault,
        tripped=trips,
        outcome=outcome,
        final_angles=theta,
        final_velocities=omega,
        final_time=final_time,
        settling_time=settling_time,
        operating_lines=operating,
        islands=islands,
        trajectory=trace,
    )


def final_state(report: CascadeReport) -> DynamicState:
    return DynamicState(report.final_angles, report.final_velocities, report.final_time, report.operating_lines)


__all__ = [
    "CONTROL_MODES",
    "ControlConfig",
    "DynamicState",
    "SimConfig",
    "Trajectory",
    "UnbalancedComponentError",
    "control_input",
    "final_state",
    "integrate_step",
    "simulate_cascade",
    "swing_rhs",
]
