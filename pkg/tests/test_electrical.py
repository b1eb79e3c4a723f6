import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_bus_network
from oracles import two_bus
from mesflow.electrical import (
    ElectricalState,
    SingularBranchError,
    branch_flows,
    branch_impedance,
    branch_loading,
    build_admittance,
    electrical_jacobian,
    electrical_mismatch,
    power_injections,
    scheduled_injections,
)
from mesflow.graph import ElectricalEdge, ElectricalLayer, ElectricalNode, ElectricalNodeKind, MultiEnergyNetwork, Transformer
from mesflow.solver import Problem, SolveOptions, check_domain_jacobian, nr_solve, random_state


def _layer(n_edges=1, r=1.0, x=1.0, v_base=1000.0):
    nodes = (ElectricalNode("1", ElectricalNodeKind.SLACK, v_base), ElectricalNode("2", ElectricalNodeKind.PQ, v_base))
    edges = tuple(ElectricalEdge(f"l{k}", "1", "2", r, x, 1.0) for k in range(n_edges))
    return ElectricalLayer(nodes, edges)


def random_radial(rng, n=10, v_base=400.0):
    nodes = [ElectricalNode("b0", ElectricalNodeKind.SLACK, v_base)]
    edges = []
    for i in range(1, n):
        nodes.append(ElectricalNode(f"b{i}", ElectricalNodeKind.PQ, v_base,
                                    p_load=float(rng.uniform(0, 8e3)), q_load=float(rng.uniform(-1e3, 3e3))))
        edges.append(ElectricalEdge(f"l{i}", f"b{int(rng.integers(0, i))}", f"b{i}",
                                    float(rng.uniform(0.1, 0.7)), float(rng.uniform(0.05, 0.1)),
                                    float(rng.uniform(0.01, 0.08)), 200.0))
    return MultiEnergyNetwork(electricity=ElectricalLayer(tuple(nodes), tuple(edges)))


def test_admittance_of_unit_line():
    adm = build_admittance(_layer(), base_mva=1.0)  # 1 kV, 1 MVA: 1 ohm base
    Y = adm.Y.toarray()
    assert Y[0, 1] == pytest.approx(-(0.5 - 0.5j), abs=1e-15)
    assert Y[0, 0] == pytest.approx(0.5 - 0.5j, abs=1e-15)
    assert Y[1, 1] == pytest.approx(0.5 - 0.5j, abs=1e-15)


def test_parallel_lines_double_every_entry():
    one = build_admittance(_layer(1)).Y.toarray()
    two = build_admittance(_layer(2)).Y.toarray()
    np.testing.assert_allclose(two, 2 * one, rtol=0, atol=1e-15)


def test_transformer_impedance_rescaled_to_system_base():
    nodes = (ElectricalNode("hv", ElectricalNodeKind.SLACK, 20e3), ElectricalNode("lv", ElectricalNodeKind.PQ, 400.0))
    edges = (ElectricalEdge("t", "hv", "lv", transformer=Transformer(0.63e6, 6.0, 1.0)),)
    z, tap = branch_impedance(ElectricalLayer(nodes, edges), base_mva=1.0)
    assert abs(z[0]) * 0.63 == pytest.approx(0.06, rel=1e-12)  # 6 % on its own base
    assert z[0].real * 0.63 == pytest.approx(0.01, rel=1e-12)
    assert tap[0] == 1.0


def test_zero_impedance_branch_is_singular():
    with pytest.raises(SingularBranchError, match="singular branch"):
        build_admittance(_layer(r=0.0, x=0.0))


def test_flat_state_has_no_injections():
    rng = np.random.default_rng(3)
    net = random_radial(rng)
    adm = build_admittance(net.electricity)
    S = power_injections(ElectricalState.flat(net.electricity), adm)
    assert np.max(np.abs(S)) < 1e-12


def test_two_bus_injection_by_hand():
    layer = _layer(r=0.0, x=0.1)  # z = j0.1 p.u. on 1 ohm base
    adm = build_admittance(layer)
    st_ = ElectricalState(np.array([1.0, 0.95]), np.array([0.0, -0.02]))
    V = np.array([1.0, 0.95 * np.exp(-0.02j)])
    i12 = (V[0] - V[1]) / 0.1j
    expected = np.array([V[0] * np.conj(i12), V[1] * np.conj(-i12)])
    np.testing.assert_allclose(power_injections(st_, adm), expected, rtol=0, atol=1e-14)


def test_mismatch_at_flat_start():
    layer = _layer(r=0.0, x=0.1)
    adm = build_admittance(layer)
    flat = ElectricalState.flat(layer)
    p, q = scheduled_injections(layer, [0, 0], [0, 0])
    dp, dq = electrical_mismatch(flat, adm, p, q, layer.pq)
    assert dp.tolist() == [0.0] and dq.tolist() == [0.0]
    p, q = scheduled_injections(layer, [0.0, 0.2e6], [0.0, 0.0])
    dp, dq = electrical_mismatch(flat, adm, p, q, layer.pq)
    assert dp[0] == pytest.approx(-0.2, abs=1e-15)
    assert dq[0] == pytest.approx(0.0, abs=1e-15)


def test_lossless_flat_jacobian_has_no_p_v_coupling():
    layer = _layer(r=0.0, x=0.1)
    J = electrical_jacobian(ElectricalState.flat(layer), build_admittance(layer), layer.pq)
    assert np.all(J["J11"].toarray() == 0)


def test_admittance_symmetric_with_zero_row_sums():
    net = random_radial(np.random.default_rng(11), n=15)
    Y = build_admittance(net.electricity).Y.toarray()
    np.testing.assert_allclose(Y, Y.T, atol=1e-12)
    assert np.max(np.abs(Y.sum(axis=1))) < 1e-12


@settings(max_examples=60, deadline=None)
@given(r=st.floats(0.0, 0.3), x=st.floats(0.02, 0.3), p=st.floats(-0.5, 0.8), q=st.floats(-0.3, 0.4))
def test_two_bus_matches_closed_form(r, x, p, q):
    v1 = 1.0
    b = v1**2 - 2 * (r * p + x * q)
    if b * b - 4 * (r * r + x * x) * (p * p + q * q) < 0.05:
        return  # beyond the voltage-collapse point
    net = two_bus_network(r, x, p * 1e6, q * 1e6, v_base=1000.0)
    report = nr_solve(net, options=SolveOptions(tol_electric=1e-12))
    assert report.converged
    vm, va = two_bus(v1, complex(r, x), p, q)
    st_ = report.state.electrical
    assert abs(st_.vm[1] - vm) <= 1e-10
    assert abs(st_.va[1] - va) <= 1e-10


def test_two_bus_runtime():
    net = two_bus_network(0.05, 0.1, 0.3e6, 0.1e6, v_base=1000.0)
    nr_solve(net)
    timings = []
    for _ in range(5):  # best of five to exclude scheduler noise
        t0 = time.perf_counter()
        nr_solve(net)
        timings.append(time.perf_counter() - t0)
    assert min(timings) < 0.01


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    problem = Problem(random_radial(rng))
    x = random_state(problem, rng)
    for chk in check_domain_jacobian(problem, x, "E"):
        assert chk.rel_error <= 1e-6, chk


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_power_balance_at_solution(seed):
    net = random_radial(np.random.default_rng(seed))
    report = nr_solve(net)
    assert report.converged
    adm = report.problem.adm
    S = power_injections(report.state.electrical, adm)
    flows = branch_flows(report.state.electrical, adm, net.electricity)
    gen = S.real[net.electricity.slack]
    load = -S.real[net.electricity.pq].sum()
    assert np.all(flows.losses >= 0)
    assert abs(gen - load - flows.losses.sum()) <= 1e-8 * max(abs(gen), 1e-12) + 1e-14


def test_two_bus_loading_by_hand():
    nodes = (ElectricalNode("1", ElectricalNodeKind.SLACK, 400.0), ElectricalNode("2", ElectricalNodeKind.PQ, 400.0,
                                                                                   p_load=50e3, q_load=10e3))
    edges = (ElectricalEdge("l", "1", "2", 0.208, 0.08, 0.2, 270.0),)
    net = MultiEnergyNetwork(electricity=ElectricalLayer(nodes, edges))
    report = nr_solve(net)
    st_ = report.state.electrical
    V2 = st_.vm[1] * np.exp(1j * st_.va[1])
    i_amp = abs(complex(50e3, -10e3) / (np.sqrt(3) * 400.0 * np.conj(V2)))  # |S| / (sqrt3 |V|)
    loading = branch_loading(st_, report.problem.adm, net.electricity)
    assert loading[0] == pytest.approx(100 * i_amp / 270.0, rel=1e-9)


def test_zero_flow_loading_is_zero():
    net = two_bus_network(0.1, 0.1, 0.0, 0.0, v_base=400.0)
    nodes = net.electricity.nodes
    edges = (ElectricalEdge("l", "1", "2", 0.1, 0.1, 1.0, 100.0),)
    report = nr_solve(MultiEnergyNetwork(electricity=ElectricalLayer(nodes, edges)))
    assert report.branch_results.summary["max_loading_percent"] == 0.0
