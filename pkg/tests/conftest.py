import numpy as np
import pytest

from mesflow.coupling import CouplingLayer
from mesflow.fixture import generate_fixture, synthetic_week_profiles
from mesflow.fluids import IdealGas, IncompressibleLiquid
from mesflow.graph import (
    EdgeKind,
    ElectricalEdge,
    ElectricalLayer,
    ElectricalNode,
    ElectricalNodeKind,
    HydraulicLayer,
    HydraulicNode,
    HydraulicNodeKind,
    LayerKind,
    MultiEnergyNetwork,
    Pipe,
)


@pytest.fixture(scope="session")
def small_network():
    return generate_fixture(0, "small")


@pytest.fixture(scope="session")
def table1_network():
    return generate_fixture(0, "table1")


@pytest.fixture(scope="session")
def week_profiles():
    return synthetic_week_profiles(0)


def two_bus_network(r_ohm=0.0, x_ohm=1.0, p_w=0.0, q_var=0.0, v_base=1.0, vm_slack=1.0):
    """Slack plus one PQ bus through a single line of length 1 km."""
    layer = ElectricalLayer(
        nodes=(
            ElectricalNode("1", ElectricalNodeKind.SLACK, v_base, vm_setpoint=vm_slack),
            ElectricalNode("2", ElectricalNodeKind.PQ, v_base, p_load=p_w, q_load=q_var),
        ),
        edges=(ElectricalEdge("l", "1", "2", r_ohm, x_ohm, 1.0),),
    )
    return MultiEnergyNetwork(electricity=layer)


def gas_layer(nodes, pipes, reference_pressure=1.05e5, fluid=None):
    """``nodes``: list of (id, demand, height); first entry is the reference."""
    built = []
    for k, (nid, demand, height) in enumerate(nodes):
        kind = HydraulicNodeKind.REFERENCE if k == 0 else HydraulicNodeKind.DEMAND
        built.append(HydraulicNode(nid, kind, reference_pressure, demand, height))
    return HydraulicLayer(LayerKind.GAS, tuple(built), tuple(pipes), fluid or IdealGas())


def heat_layer(node_ids, pipes, supply=353.15, pressure=6e5, demands=None):
    demands = demands or {}
    built = []
    for k, nid in enumerate(node_ids):
        kind = HydraulicNodeKind.REFERENCE if k == 0 else HydraulicNodeKind.DEMAND
        built.append(HydraulicNode(nid, kind, pressure, demands.get(nid, 0.0), fluid_temperature=supply))
    return HydraulicLayer(LayerKind.HEAT, tuple(built), tuple(pipes), IncompressibleLiquid())


def random_tree_gas(rng, n_nodes=5):
    nodes = [("n0", 0.0, 0.0)]
    pipes = []
    for i in range(1, n_nodes):
        parent = int(rng.integers(0, i))
        nodes.append((f"n{i}", float(rng.uniform(1e-4, 5e-3)), float(rng.uniform(-5, 5))))
        a, b = (f"n{parent}", f"n{i}") if rng.random() < 0.7 else (f"n{i}", f"n{parent}")
        pipes.append(Pipe(f"p{i}", a, b, float(rng.choice([0.05, 0.063, 0.1])), float(rng.uniform(50, 400)),
                          roughness=1e-4, local_loss_zeta=float(rng.uniform(0, 2))))
    return gas_layer(nodes, pipes)


def random_heat_tree(rng, n_nodes=6, n_exchangers=2):
    ids = [f"h{i}" for i in range(n_nodes)]
    pipes = []
    for i in range(1, n_nodes):
        parent = int(rng.integers(0, i))
        pipes.append(Pipe(f"p{i}", ids[parent], ids[i], 0.1, float(rng.uniform(50, 500)),
                          u_value=float(rng.uniform(0, 1.5)), ambient_temperature=283.15))
    hosts = rng.choice(np.arange(1, n_nodes), size=n_exchangers, replace=False)
    for k, host in enumerate(hosts):
        cid = f"c{k}"
        ids.append(cid)
        pipes.append(Pipe(f"x{k}", ids[host], cid, 0.05, 5.0, kind=EdgeKind.HEAT_EXCHANGER,
                          heat_extraction=float(rng.uniform(5e3, 60e3))))
    return heat_layer(ids, pipes)


def network_of(**layers):
    return MultiEnergyNetwork(coupling=CouplingLayer(), **layers)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            name = getattr(rep, "nodeid", "").split("::")[-1]
            if not name.startswith("test_criterion_") or getattr(rep, "when", "call") not in ("call", "setup"):
                continue
            if rep.when == "setup" and rep.passed:
                continue
            num, label = name[len("test_criterion_"):].split("_", 1)
            lines.append((int(num), f"criterion {int(num):2d} {label.replace('_', ' '):<32} "
                                   f"{'PASS' if rep.passed else 'FAIL'}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
