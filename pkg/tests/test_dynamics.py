import math

import numpy as np
import pytest

from gridcascade.dynamics import (
    ControlConfig,
    DynamicState,
    SimConfig,
    control_input,
    integrate_step,
    simulate_cascade,
    swing_rhs,
)
from gridcascade.equilibrium import flow_array, residual, solve_equilibrium
from gridcascade.grid import GridTopology, MachineParams, remove_line
from gridcascade.results import HORIZON_EXHAUSTED, SETTLED


def state(theta, omega, topo, t=0.0):
    return DynamicState(np.asarray(theta, float), np.asarray(omega, float), t, topo.lines)


def test_control_zero_when_synchronous(five):
    s = state(np.zeros(5), np.full(5, 0.37), five.topology)
    assert np.array_equal(control_input(s, five.topology, ControlConfig.full(3.0)), np.zeros(5))


def test_full_control_sums_to_zero(five):
    s = state(np.zeros(5), [0.3, -1.2, 0.5, 2.0, -0.7], five.topology)
    u = control_input(s, five.topology, ControlConfig.full(1.7))
    assert abs(u.sum()) < 1e-15


def test_two_node_control_values():
    topo = GridTopology.from_edges(2, [(0, 1)])
    s = state([0, 0], [1, 0], topo)
    u = control_input(s, topo, ControlConfig.pinning(0.5, {0, 1}))
    assert u.tolist() == [-0.5, 0.5]
    assert control_input(s, topo, ControlConfig.pinning(0.5, {1})).tolist() == [0.0, 0.5]
    assert control_input(s, topo, ControlConfig(gain=0.5, mode="off")).tolist() == [0.0, 0.0]


def test_failed_lines_carry_no_control():
    topo = GridTopology.from_edges(3, [(0, 1), (1, 2)])
    s = DynamicState(np.zeros(3), np.array([1.0, 0.0, 0.0]), 0.0, ((1, 2),))
    assert control_input(s, topo, ControlConfig.full(1.0)).tolist() == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("control", [ControlConfig.off(), ControlConfig.full(0.5), ControlConfig.pinning(20, {1, 4})])
def test_rhs_vanishes_at_equilibrium(five, control):
    theta = solve_equilibrium(five.topology, five.params)
    dtheta, domega = swing_rhs(state(theta, np.zeros(5), five.topology), five.topology, five.params, control)
    assert np.array_equal(dtheta, np.zeros(5))
    assert np.max(np.abs(domega)) < 1e-10


def test_rhs_isolated_node():
    topo = GridTopology(1, (), ())
    params = MachineParams([1.0], [0.1], [1.0])
    _, domega = swing_rhs(state([0.0], [0.0], topo), topo, params, ControlConfig.off())
    assert domega.tolist() == [1.0]


def test_rhs_matches_direct_formula(five):
    rng = np.random.default_rng(3)
    theta, omega = rng.normal(size=5), rng.normal(size=5)
    control = ControlConfig.pinning(2.0, {1, 4})
    s = state(theta, omega, five.topology)
    _, domega = swing_rhs(s, five.topology, five.params, control)
    p = five.params
    expect = (residual(theta, five.topology, p.power) - p.damping * omega
              + control_input(s, five.topology, control)) / p.inertia
    assert np.allclose(domega, expect, atol=1e-13)


def test_step_on_fixed_point(five):
    params = MachineParams.uniform(np.zeros(5))
    s = state(np.zeros(5), np.zeros(5), five.topology)
    out = integrate_step(s, five.topology, params, ControlConfig.off(), 1e-3)
    assert np.array_equal(out.angles, s.angles) and np.array_equal(out.velocities, s.velocities)
    assert out.time == 1e-3


def damped_node_error(h, t_end=5.0, rate=1.0, omega0=1.0):
    """Max error of RK4 against omega0 exp(-rate t), theta from its integral."""
    topo = GridTopology(1, (), ())
    params = MachineParams([1.0], [rate], [0.0])
    s = state([0.0], [omega0], topo)
    err = 0.0
    for n in range(1, int(round(t_end / h)) + 1):
        s = integrate_step(s, topo, params, ControlConfig.off(), h)
        t = n * h
        w = omega0 * math.exp(-rate * t)
        th = omega0 / rate * (1 - math.exp(-rate * t))
        err = max(err, abs(s.velocities[0] - w), abs(s.angles[0] - th))
    return err


def test_rk4_against_closed_form():
    assert damped_node_error(1e-2) < 1e-9


def test_rk4_order():
    e1, e2 = damped_node_error(0.1), damped_node_error(0.05)
    assert 12 < e1 / e2 < 20
    assert 3.7 <= math.log2(e1 / e2) <= 4.3


def test_uncontrolled_five_node_cascade(five):
    rep = simulate_cascade(five.topology, five.params, five.line(2, 4), SimConfig(alpha=five.alpha))
    assert five.label_line(rep.first_trip) == (4, 5)
    assert rep.n_c == 5
    times = [t.time for t in rep.tripped]
    assert times == sorted(times)
    assert len(set(rep.tripped_lines)) == rep.n_c


def test_full_control_stops_cascade(five):
    rep = simulate_cascade(five.topology, five.params, five.line(2, 4), SimConfig(), ControlConfig.full(0.5))
    assert rep.n_c == 0 and rep.outcome == SETTLED


def test_pinned_generators_stop_cascade(five):
    pinned = {five.index(2), five.index(5)}
    rep = simulate_cascade(five.topology, five.params, five.line(2, 4), SimConfig(), ControlConfig.pinning(20, pinned))
    assert rep.n_c == 0 and rep.outcome == SETTLED


def test_settled_state_properties(five):
    sim = SimConfig()
    rep = simulate_cascade(five.topology, five.params, five.line(2, 4), sim, ControlConfig.full(1.0))
    post = remove_line(five.topology, five.line(2, 4))
    flows = flow_array(rep.final_angles, post)
    assert np.all(np.abs(flows) <= sim.alpha * np.asarray(post.couplings))
    assert np.max(np.abs(residual(rep.final_angles, post, five.params.power))) < 10 * sim.settle_velocity_tol


def test_deterministic(five):
    run = lambda: simulate_cascade(five.topology, five.params, five.line(2, 3), SimConfig(), ControlConfig.full(0.2))
    assert run().signature() == run().signature()


def test_control_off_equals_zero_gain_full(five):
    """Without trips the k_c = 0 controlled trajectory is the uncontrolled one, bit for bit."""
    sim = SimConfig(horizon=20.0)
    a = simulate_cascade(five.topology, five.params, five.line(1, 3), sim, ControlConfig.off())
    b = simulate_cascade(five.topology, five.params, five.line(1, 3), sim, ControlConfig.full(0.0))
    assert a.n_c == 0 and a.outcome == HORIZON_EXHAUSTED
    assert a.signature() == b.signature()


def test_trace_records_flows(five):
    rep = simulate_cascade(five.topology, five.params, five.line(2, 4), SimConfig(horizon=3.0), trace_every=100)
    times, theta, omega, flows = rep.trajectory.as_arrays()
    assert times[0] == 0.0 and theta.shape == (times.size, 5) and flows.shape == (times.size, 7)
    assert np.all(np.diff(times) > 0)
    # the initial fault carries no flow once the run starts
    assert np.all(flows[:, five.topology.lines.index(five.line(2, 4))] == 0.0)


def test_invalid_configs():
    with pytest.raises(ValueError):
        SimConfig(step=0)
    with pytest.raises(ValueError):
        SimConfig(alpha=1.2)
    with pytest.raises(ValueError):
        ControlConfig(gain=-1, mode="full")
    with pytest.raises(ValueError):
        ControlConfig(mode="bogus")


def test_overloaded_prefault_rejected(five):
    with pytest.raises(ValueError):
        simulate_cascade(five.topology, five.params, five.line(2, 4), SimConfig(alpha=0.1))
