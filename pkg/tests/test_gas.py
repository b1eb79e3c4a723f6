import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import gas_layer, network_of, random_tree_gas
from oracles import colebrook, darcy, ideal_gas_density, pipe_residual, tree_solution
from mesflow.fluids import IdealGas, IncompressibleLiquid, PressureDomainError
from mesflow.gas import (
    LAMBDA_MAX,
    HydraulicState,
    edge_terms,
    friction_factor,
    gas_jacobian,
    gas_mismatch,
    pipe_pressure_balance,
)
from mesflow.graph import Pipe
from mesflow.solver import SolveOptions, nr_solve

TIGHT = SolveOptions(tol_gas_mass=1e-13, tol_gas_pressure=1e-7, max_iterations=30)


def test_laminar_friction():
    assert friction_factor(1000.0, 1e-4, 0.1) == pytest.approx(0.064, rel=1e-15)


def test_smooth_turbulent_friction():
    lam = friction_factor(1e5, 0.0, 0.1)
    assert abs(lam - 0.0180) <= 0.0002
    assert lam == pytest.approx(colebrook(1e5, 0.0), rel=1e-10)


def test_rough_turbulent_friction():
    lam = friction_factor(1e6, 1e-4, 0.147)
    assert lam == pytest.approx(colebrook(1e6, 1e-4 / 0.147), rel=1e-10)


@pytest.mark.parametrize("re", [2300.0, 2800.0, 3500.0, 4000.0])
def test_transition_band_is_linear_blend(re):
    assert friction_factor(re, 1e-4, 0.1) == pytest.approx(darcy(re, 1e-3), rel=1e-10)


def test_friction_rejects_negative_reynolds():
    with pytest.raises(ValueError):
        friction_factor(-1.0, 1e-4, 0.1)


def test_friction_capped_at_zero_flow():
    assert friction_factor(0.0, 1e-4, 0.1) == LAMBDA_MAX


def test_no_flow_residual_is_pressure_difference():
    pipe = Pipe("a", "1", "2", 0.1, 100.0)
    assert pipe_pressure_balance(0.0, pipe, IdealGas(), 1.05e5, 1.04e5) == pytest.approx(1e3, abs=1e-9)
    assert pipe_pressure_balance(0.0, pipe, IdealGas(), 1.05e5, 1.05e5) == 0.0


def test_hydrostatic_term():
    fluid = IncompressibleLiquid(density_value=0.8)
    pipe = Pipe("a", "1", "2", 0.1, 100.0)
    res = pipe_pressure_balance(0.0, pipe, fluid, 1e5, 1e5, h_from=0.0, h_to=10.0)
    assert res == pytest.approx(-78.4532, abs=1e-9)


def test_single_pipe_against_hand_evaluation():
    pipe = Pipe("a", "1", "2", 0.05, 100.0, roughness=1e-4)
    gas = IdealGas()
    p_from, p_to = 1.05e5, 1.05e5 - 40.0
    res = pipe_pressure_balance(0.01, pipe, gas, p_from, p_to)
    ref = pipe_residual(0.01, p_from, p_to, 0.05, 100.0, 1e-4, 0.0, 0.0, 0.0,
                        ideal_gas_density(gas.molar_mass, gas.temperature), gas.viscosity)
    assert res == pytest.approx(ref, rel=1e-10, abs=1e-9)


def test_non_positive_pressure_is_out_of_domain():
    pipe = Pipe("a", "1", "2", 0.05, 100.0)
    with pytest.raises(PressureDomainError, match="pressure out of domain"):
        pipe_pressure_balance(0.01, pipe, IdealGas(), -1e3, -2e3)


def _two_node(demand=0.01):
    return gas_layer([("1", 0.0, 0.0), ("2", demand, 0.0)], [Pipe("a", "1", "2", 0.05, 100.0)])


def test_dead_network_has_zero_residuals():
    layer = random_tree_gas(np.random.default_rng(0), 6)
    layer = dataclasses.replace(layer, nodes=tuple(dataclasses.replace(n, height=0.0) for n in layer.nodes))
    state = HydraulicState(np.full(layer.n_nodes, 1.05e5), np.zeros(layer.n_edges))
    dm, dp = gas_mismatch(state, layer, np.zeros(layer.n_nodes))
    assert np.all(dm == 0) and np.all(dp == 0)


def test_two_node_continuity():
    layer = _two_node()
    state = HydraulicState(np.array([1.05e5, 1.0499e5]), np.array([0.01]))
    dm, _ = gas_mismatch(state, layer, [0.0, 0.01])
    assert dm.tolist() == [0.0]


def test_continuity_block_has_no_pressure_dependence():
    layer = gas_layer([("1", 0, 0), ("2", 0, 0)], [Pipe("a", "1", "2", 0.05, 100.0)],
                      fluid=IncompressibleLiquid())
    J = gas_jacobian(HydraulicState(np.array([6e5, 5.9e5]), np.array([0.5])), layer)
    assert J["J11"].nnz == 0 and J["J11"].shape == (1, 1)


@pytest.mark.parametrize("mdot", [0.01, 0.2])
def test_frozen_friction_derivative_by_hand(mdot):
    layer = _two_node()
    state = HydraulicState(np.array([1.05e5, 1.04e5]), np.array([mdot]))
    f, t = layer.from_idx, layer.to_idx
    terms = edge_terms(state.mdot, layer.diameter, layer.length, layer.roughness, layer.zeta,
                       state.p[f], state.p[t], layer.heights[f], layer.heights[t], layer.fluid)
    J = gas_jacobian(state, layer, frozen_friction=True)
    assert J["J22"][0, 0] == pytest.approx(-2.0 * terms.friction[0] / mdot, rel=1e-12)


def _solve_tree(layer):
    report = nr_solve(network_of(gas=layer), options=TIGHT)
    assert report.converged
    return report.state.gas


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_tree_matches_back_substitution(seed):
    layer = random_tree_gas(np.random.default_rng(seed), 5)
    withdrawal = np.array([n.demand_mass_flow for n in layer.nodes])
    p_ref, m_ref = tree_solution(layer, withdrawal, ideal_gas_density(layer.fluid.molar_mass, layer.fluid.temperature),
                                 layer.fluid.viscosity)
    sol = _solve_tree(layer)
    np.testing.assert_allclose(sol.mdot, m_ref, rtol=1e-12, atol=1e-15)
    assert np.max(np.abs(sol.p - p_ref) / p_ref) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 3))
def test_reversing_an_edge_is_antisymmetric(seed, which):
    rng = np.random.default_rng(seed)
    layer = random_tree_gas(rng, 5)
    p = 1.05e5 * rng.uniform(0.98, 1.0, layer.n_nodes)
    m = rng.normal(0, 5e-3, layer.n_edges)
    w = np.array([n.demand_mass_flow for n in layer.nodes])
    e = layer.edges[which]
    flipped = dataclasses.replace(layer, edges=tuple(
        dataclasses.replace(x, from_node=e.to_node, to_node=e.from_node) if k == which else x
        for k, x in enumerate(layer.edges)))
    m2 = m.copy()
    m2[which] = -m2[which]
    dm1, dp1 = gas_mismatch(HydraulicState(p, m), layer, w)
    dm2, dp2 = gas_mismatch(HydraulicState(p, m2), flipped, w)
    np.testing.assert_array_equal(dm1, dm2)
    sign = np.ones(layer.n_edges)
    sign[which] = -1.0  # the balance is written along the edge direction
    np.testing.assert_allclose(dp2, sign * dp1, rtol=1e-12, atol=1e-9)


def test_reversed_edge_solves_to_same_state():
    layer = random_tree_gas(np.random.default_rng(5), 5)
    e = layer.edges[1]
    flipped = dataclasses.replace(layer, edges=tuple(
        dataclasses.replace(x, from_node=e.to_node, to_node=e.from_node) if k == 1 else x
        for k, x in enumerate(layer.edges)))
    a, b = _solve_tree(layer), _solve_tree(flipped)
    np.testing.assert_allclose(a.p, b.p, rtol=1e-13)
    np.testing.assert_allclose(b.mdot[1], -a.mdot[1], rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.floats(1.05, 3.0))
def test_more_demand_lowers_pressure(seed, factor):
    rng = np.random.default_rng(seed)
    layer = random_tree_gas(rng, 6)
    layer = dataclasses.replace(layer, nodes=tuple(dataclasses.replace(n, height=0.0) for n in layer.nodes))
    k = int(rng.integers(1, layer.n_nodes))
    bumped = dataclasses.replace(layer, nodes=tuple(
        dataclasses.replace(n, demand_mass_flow=n.demand_mass_flow * factor) if i == k else n
        for i, n in enumerate(layer.nodes)))
    assert _solve_tree(bumped).p[k] < _solve_tree(layer).p[k]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_meshed_network_continuity(seed):
    rng = np.random.default_rng(seed)
    layer = random_tree_gas(rng, 8)
    ids = [n.id for n in layer.nodes]
    chords = []
    for c in range(3):
        i, j = rng.choice(len(ids), size=2, replace=False)
        chords.append(Pipe(f"c{c}", ids[i], ids[j], 0.063, float(rng.uniform(50, 300))))
    mesh = dataclasses.replace(layer, edges=layer.edges + tuple(chords))
    report = nr_solve(network_of(gas=mesh))
    assert report.converged
    sol = report.state.gas
    w = np.array([n.demand_mass_flow for n in mesh.nodes])
    imbalance = (mesh.incidence @ sol.mdot + w)[mesh.free_nodes]
    assert np.max(np.abs(imbalance)) <= 1e-9
    # the reference node supplies the network total
    assert (mesh.incidence @ sol.mdot)[mesh.reference] == pytest.approx(w.sum(), rel=1e-9)
