"""Network assembly, solvers and the dynamic series-RLC branch."""

import numpy as np
import pytest

from synchrolens.errors import PfDivergence, SingularY, UnknownElement
from synchrolens.network import (Branch, Bus, Event, EventKind, Network,
                                 PfBusSpec, apply_event, assemble_y,
                                 connected_bus_mask,
                                 dynamic_branch_derivatives,
                                 dynamic_branch_init, interface_solve,
                                 solve_power_flow)

OMEGA_B = 2.0 * np.pi * 60.0


def test_textbook_two_bus_assembly():
    net = Network([Bus("1"), Bus("2")], [Branch("L", "1", "2", 0.0, 0.5)])
    assert np.allclose(assemble_y(net), [[-2j, 2j], [2j, -2j]])


def test_fault_shunt_lands_on_diagonal():
    net = Network([Bus("1"), Bus("2")], [Branch("L", "1", "2", 0.0, 0.5)])
    net.fault_admittance["2"] = -1e4j
    y = assemble_y(net)
    assert y[1, 1] == pytest.approx(-2j - 1e4j)


def test_y_symmetric_without_taps():
    rng = np.random.default_rng(2)
    buses = [Bus(f"B{k}") for k in range(6)]
    branches = [Branch(f"L{k}", f"B{k}", f"B{(k + 1) % 6}",
                       rng.uniform(0.001, 0.05), rng.uniform(0.05, 0.6),
                       rng.uniform(0.0, 0.4)) for k in range(6)]
    y = assemble_y(Network(buses, branches))
    assert np.abs(y - y.T).max() < 1e-12


def _kundur_network():
    from synchrolens.scenarios import build_builtin
    return build_builtin("kundur")


def test_kundur_matrix_matches_independent_assembly():
    """Entry-by-entry check against a plain dict-based stamping routine."""
    scenario = _kundur_network()
    net = scenario.build_network()
    y = assemble_y(net)

    idx = net.bus_index
    expected = np.zeros_like(y)
    for br in net.branches:
        if br.dynamic or not net.in_service[br.id]:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b
        expected[f, f] += (ys + ysh) / br.tap ** 2
        expected[t, t] += ys + ysh
        expected[f, t] -= ys / br.tap
        expected[t, f] -= ys / br.tap
    assert np.abs(y - expected).max() < 1e-12


def test_interface_solve_single_source_radial():
    net = Network([Bus("1"), Bus("2")],
                  [Branch("L", "1", "2", 0.0, 0.4)])
    y = assemble_y(net)
    v, i_src = interface_solve(y, [], np.ones(2, dtype=complex),
                               vsrc=[(0, 0.98 + 0.02j)])
    assert np.abs(v - (0.98 + 0.02j)).max() < 1e-9
    assert abs(i_src[0]) < 1e-9


def test_interface_solve_divider_closed_form():
    net = Network([Bus("1"), Bus("2")], [Branch("L", "1", "2", 0.1, 0.5)])
    y = assemble_y(net)
    y_load = 0.5 - 0.1j
    v, _ = interface_solve(y, [(1, lambda vb: -y_load * vb)],
                           np.ones(2, dtype=complex), vsrc=[(0, 1.0 + 0.0j)])
    z_load, z_src = 1.0 / y_load, 0.1 + 0.5j
    assert abs(v[1] - z_load / (z_load + z_src)) < 1e-12


def test_power_flow_no_load_flat():
    net = Network([Bus("1"), Bus("2")], [Branch("L", "1", "2", 0.0, 0.4)])
    specs = {"1": PfBusSpec(kind="slack", v_set=1.02), "2": PfBusSpec()}
    v, slack_s, _ = solve_power_flow(net, specs)
    assert np.abs(v - 1.02).max() < 1e-10
    assert abs(slack_s) < 1e-10


def test_power_flow_two_bus_closed_form():
    net = Network([Bus("1"), Bus("2")], [Branch("L", "1", "2", 0.0, 0.5)])
    specs = {"1": PfBusSpec(kind="slack", v_set=1.0),
             "2": PfBusSpec(kind="pv", v_set=1.0, p_fns=[lambda v: 0.5])}
    v, _, _ = solve_power_flow(net, specs)
    assert np.angle(v[1]) == pytest.approx(np.arcsin(0.25), abs=1e-10)


def test_power_flow_kundur_residual():
    scenario = _kundur_network()
    from synchrolens.sim import build_adapters
    net = scenario.build_network()
    adapters = build_adapters(scenario)
    specs = {b.id: PfBusSpec() for b in net.buses}
    for a in adapters:
        a.pf_contrib(specs[a.bus], is_slack=(a.id == scenario.slack_device))
    v, slack_s, _ = solve_power_flow(net, specs)
    y = assemble_y(net, include_dynamic_equivalent=True)
    s_net = v * np.conj(y @ v)
    p_spec = np.zeros(len(v))
    q_spec = np.zeros(len(v))
    for k, b in enumerate(net.buses):
        for fn in specs[b.id].p_fns:
            p_spec[k] += fn(abs(v[k]))
        for fn in specs[b.id].q_fns:
            q_spec[k] += fn(abs(v[k]))
    slack_idx = net.bus_index["B3"]
    pq = [k for k, b in enumerate(net.buses) if specs[b.id].kind == "pq"]
    non_slack = [k for k in range(len(v)) if k != slack_idx]
    assert np.abs(p_spec[non_slack] - s_net.real[non_slack]).max() < 1e-9
    assert np.abs(q_spec[pq] - s_net.imag[pq]).max() < 1e-9


def test_power_flow_requires_single_slack():
    net = Network([Bus("1"), Bus("2")], [Branch("L", "1", "2", 0.0, 0.4)])
    with pytest.raises(PfDivergence):
        solve_power_flow(net, {"1": PfBusSpec(), "2": PfBusSpec()})


def test_open_branch_doubles_transfer_impedance():
    net = Network([Bus("1"), Bus("2")],
                  [Branch("LA", "1", "2", 0.0, 0.5),
                   Branch("LB", "1", "2", 0.0, 0.5)])
    y_before = assemble_y(net)
    apply_event(net, Event(1.0, EventKind.OPEN_BRANCH, branch="LB"))
    y_after = assemble_y(net)
    assert y_before[0, 1] == pytest.approx(4j)
    assert y_after[0, 1] == pytest.approx(2j)


def test_midpoint_fault_collapses_voltage():
    net = Network([Bus("1"), Bus("2")], [Branch("L", "1", "2", 0.0, 0.5)])
    net.split_branch_for_fault("L")
    apply_event(net, Event(1.0, EventKind.APPLY_FAULT, branch="L"))
    y = assemble_y(net)
    v, _ = interface_solve(y, [], np.ones(3, dtype=complex),
                           vsrc=[(0, 1.0 + 0.0j)],
                           connected=connected_bus_mask(net, ["1"]))
    assert abs(v[net.bus_index["L_mid"]]) < 0.1


def test_clear_fault_requires_prior_fault():
    net = Network([Bus("1"), Bus("2")], [Branch("L", "1", "2", 0.0, 0.5)])
    net.split_branch_for_fault("L")
    with pytest.raises(UnknownElement):
        apply_event(net, Event(1.0, EventKind.CLEAR_FAULT, branch="L"))


def test_open_unknown_branch_rejected():
    net = Network([Bus("1"), Bus("2")], [Branch("L", "1", "2", 0.0, 0.5)])
    with pytest.raises(UnknownElement):
        net.open_branch("NOPE")


def test_islanded_bus_masked_as_disconnected():
    net = Network([Bus("1"), Bus("2"), Bus("3")],
                  [Branch("LA", "1", "2", 0.0, 0.5),
                   Branch("LB", "2", "3", 0.0, 0.5)])
    net.open_branch("LB")
    mask = connected_bus_mask(net, ["1"])
    assert mask.tolist() == [True, True, False]


def test_dynamic_branch_steady_state_zero_derivative():
    br = Branch("C1", "1", "2", 0.01, 0.6, dynamic=True, x_c=0.35)
    v_f, v_t = 1.0 + 0.0j, 0.95 * np.exp(-0.08j)
    state = dynamic_branch_init(br, v_f, v_t)
    deriv = dynamic_branch_derivatives(state, br, v_f, v_t, OMEGA_B)
    assert np.max(np.abs(deriv)) < 1e-12


def test_dynamic_branch_eigenvalues_match_rlc_discriminant():
    """Shorted-terminal mode pair vs the stationary-frame RLC closed form."""
    br = Branch("C1", "1", "2", 0.05, 0.6, dynamic=True, x_c=0.35)
    c = 1.0 / br.x_c
    m = OMEGA_B * np.array([
        [-(br.r + 1j * br.x) / br.x, -1.0 / br.x],
        [1.0 / c, -1j],
    ])
    eigs = np.linalg.eigvals(m) + 1j * OMEGA_B   # back to the stationary frame
    l_h = br.x / OMEGA_B
    c_f = c / OMEGA_B
    alpha = br.r / (2.0 * l_h)
    disc = alpha ** 2 - 1.0 / (l_h * c_f)
    expected = sorted([-alpha + np.emath.sqrt(disc), -alpha - np.emath.sqrt(disc)],
                      key=lambda z: z.imag)
    got = sorted(eigs, key=lambda z: z.imag)
    assert np.allclose(got, expected, atol=1e-9 * OMEGA_B)


def test_dynamic_branch_energy_decays_when_shorted():
    br = Branch("C1", "1", "2", 0.05, 0.6, dynamic=True, x_c=0.35)
    state = np.array([0.5 + 0.2j, 0.1 - 0.3j])
    dt = 1e-5
    energies = []
    for _ in range(20000):
        # classic RK4 on the 2-state complex system
        k1 = dynamic_branch_derivatives(state, br, 0.0, 0.0, OMEGA_B)
        k2 = dynamic_branch_derivatives(state + 0.5 * dt * k1, br, 0, 0, OMEGA_B)
        k3 = dynamic_branch_derivatives(state + 0.5 * dt * k2, br, 0, 0, OMEGA_B)
        k4 = dynamic_branch_derivatives(state + dt * k3, br, 0, 0, OMEGA_B)
        state = state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        energies.append(0.5 * br.x * abs(state[0]) ** 2
                        + 0.5 * (1.0 / br.x_c) * abs(state[1]) ** 2)
    energies = np.array(energies)
    assert np.all(np.diff(energies) <= 1e-12)
    assert energies[-1] < 0.05 * energies[0]


def test_duplicate_bus_ids_rejected():
    with pytest.raises(SingularY):
        Network([Bus("1"), Bus("1")], [])
