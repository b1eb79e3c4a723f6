import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from mesflow.graph import DOMAINS, ElectricalLayer
from mesflow.scenario import nominal_operating_point
from mesflow.solver import (
    BlockJacobian,
    Problem,
    SingularJacobianError,
    SolveOptions,
    assemble,
    check_domain_jacobian,
    finite_difference_jacobian,
    jacobian_check,
    nr_solve,
    random_state,
    solve_linear,
)


def test_zero_loads_converge_immediately_to_boundary_state(small_network):
    report = nr_solve(small_network, nominal_operating_point(small_network, 0.0))
    assert report.converged and report.iterations == 1
    st_ = report.state
    assert np.all(st_.electrical.vm == 1.0) and np.all(st_.electrical.va == 0.0)
    assert np.all(st_.gas.p == small_network.gas.reference_pressure)
    assert np.all(st_.heat.p == small_network.heat.reference_pressure)
    assert np.all(st_.thermal.t_node == small_network.heat.supply_temperature)
    # without flow every pipe takes the stagnant-edge convention
    assert np.all(st_.thermal.t_out == small_network.heat.ambient)


def test_nominal_small_fixture_converges(small_network):
    report = nr_solve(small_network)
    assert report.converged and report.iterations <= 6
    tols = report.problem.options.tolerances()
    assert all(report.final_norms[k] < tols[k] for k in report.final_norms)


def test_jacobian_is_block_diagonal(small_network):
    problem = Problem(small_network)
    x = random_state(problem, np.random.default_rng(0))
    M = problem.jacobian(x).matrix.toarray()
    mask = np.ones_like(M, dtype=bool)
    for d in problem.domains:
        sl = problem.domain_slice(d)
        mask[sl, sl] = False
    assert np.all(M[mask] == 0.0)
    assert problem.domains == list(DOMAINS)
    for d in problem.domains:
        sl = problem.domain_slice(d)
        assert M[sl, sl].shape[0] == M[sl, sl].shape[1]


def test_assembled_jacobian_matches_finite_differences(small_network):
    problem = Problem(small_network)
    rng = np.random.default_rng(1)
    for _ in range(3):
        x = random_state(problem, rng)
        for d in problem.domains:
            for chk in check_domain_jacobian(problem, x, d):
                assert chk.ok, chk


def test_assemble_rejects_wrong_dimension(small_network):
    problem = Problem(small_network)
    with pytest.raises(ValueError, match="dimension mismatch"):
        assemble(small_network, np.zeros(problem.index.size + 1))


def test_assemble_zero_residual_at_solution(small_network):
    plain = small_network.without_coupling()
    report = nr_solve(plain, options=SolveOptions(tol_gas_pressure=1e-9, tol_heat=1e-9))
    J, F = assemble(plain, report.final_state)
    norms = report.problem.norms(F)
    assert norms == report.final_norms
    for d in report.problem.domains:
        alone = Problem(plain.only({"E": "electricity", "G": "gas", "H_hy": "heat", "H_th": "heat"}[d]))
        local = alone.pack(report.state)
        embedded = J.domain_matrix(d).toarray()
        np.testing.assert_array_equal(embedded, alone.jacobian(local).domain_matrix(d).toarray())


def test_singular_block_is_named(small_network):
    problem = Problem(small_network)
    x = problem.initial_state()
    J = problem.jacobian(x)
    g = J.blocks["G"]
    zeroed = {k: sp.csr_matrix(v.shape) for k, v in g.items()}
    broken = BlockJacobian(J.index, {**J.blocks, "G": zeroed})
    with pytest.raises(SingularJacobianError, match="block G"):
        solve_linear(broken, -problem.residual(x), problem.column_scale())
    with pytest.raises(SingularJacobianError, match="block G"):
        solve_linear(broken, -problem.residual(x), problem.column_scale(), per_block=True)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 12))
def test_finite_differences_recover_linear_maps(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) * 10.0 ** rng.uniform(-3, 3, size=(n, 1))
    x = rng.uniform(-2.0, 2.0, size=n)
    # central differences are exact on linear maps; the step only sets the roundoff level
    J = finite_difference_jacobian(lambda v: A @ v, x, step=1e-3)
    rows = np.max(np.abs(A), axis=1, keepdims=True)
    assert np.max(np.abs(J - A) / rows) <= 1e-10


def test_finite_difference_step_must_be_positive():
    with pytest.raises(ValueError):
        finite_difference_jacobian(lambda v: v, np.ones(2), step=0.0)


@pytest.mark.parametrize("fixture_name", ["small_network", "table1_network"])
def test_undamped_norms_decrease_after_second_iteration(request, fixture_name):
    net = request.getfixturevalue(fixture_name)
    report = nr_solve(net, options=SolveOptions(damping=False))
    assert report.converged
    hist = report.residual_history
    for k in range(1, len(hist) - 1):
        for key in hist[k]:
            assert hist[k + 1][key] <= hist[k][key], (k, key)
    # quadratic tail: each step roughly squares the relative electrical mismatch
    tol = report.problem.options.tol_electric
    e = []
    for h in hist:
        e.append(h["E"])
        if h["E"] < tol:
            break  # the group is frozen from here on
    if len(e) >= 3 and e[-2] < 1e-2:
        assert e[-1] <= 10 * e[-2] ** 2 / e[-3]


def test_scaling_does_not_change_the_solution(small_network):
    tight = dict(tol_electric=1e-12, tol_gas_mass=1e-14, tol_gas_pressure=1e-8, tol_heat=1e-8)
    a = nr_solve(small_network, options=SolveOptions(**tight))
    b = nr_solve(small_network, options=SolveOptions(**tight, scaling={"p": 1.0, "mdot": 1e-2, "t_out": 10.0}))
    assert a.converged and b.converged
    xa, xb = a.final_state.x, b.final_state.x
    assert np.max(np.abs(xa - xb) / np.maximum(np.abs(xa), 1.0)) <= 1e-10


def test_per_block_solve_matches_global_factorization(table1_network):
    a = nr_solve(table1_network)
    b = nr_solve(table1_network, options=SolveOptions(per_block_solve=True))
    xa, xb = a.final_state.x, b.final_state.x
    assert a.iterations == b.iterations
    assert np.max(np.abs(xa - xb) / np.maximum(np.abs(xa), 1.0)) <= 1e-12


def test_solves_are_bit_identical(small_network):
    a = nr_solve(small_network)
    b = nr_solve(small_network)
    np.testing.assert_array_equal(a.final_state.x, b.final_state.x)
    assert a.residual_history == b.residual_history
    assert a.branch_results.summary == b.branch_results.summary


def test_warm_start_from_solution_needs_one_iteration(small_network):
    first = nr_solve(small_network)
    again = nr_solve(small_network, warm_start=first.final_state.x)
    assert again.converged and again.iterations == 1
    assert first.iterations > 1


def test_non_convergence_is_reported_not_raised(table1_network):
    report = nr_solve(table1_network, options=SolveOptions(max_iterations=2))
    assert not report.converged
    assert report.iterations == 2
    assert len(report.residual_history) == 2


def test_frozen_friction_newton_also_converges(table1_network):
    exact = nr_solve(table1_network)
    frozen = nr_solve(table1_network, options=SolveOptions(frozen_friction=True, max_iterations=40))
    assert frozen.converged
    assert frozen.iterations >= exact.iterations
    np.testing.assert_allclose(frozen.state.gas.p, exact.state.gas.p, rtol=1e-9)


def test_frozen_friction_jacobian_check(small_network):
    checks = jacobian_check(small_network, n_states=3, seed=2, frozen_friction=True)
    assert all(c.ok for c in checks), [c for c in checks if not c.ok]


def test_loading_is_orientation_independent(small_network):
    el = small_network.electricity
    flipped = ElectricalLayer(el.nodes, tuple(dataclasses.replace(e, from_node=e.to_node, to_node=e.from_node)
                                              if e.id == "l23" else e for e in el.edges))
    a = nr_solve(small_network)
    b = nr_solve(dataclasses.replace(small_network, electricity=flipped))
    la = {r["id"]: r["loading_percent"] for r in a.branch_results.tables["electricity_edges"]}
    lb = {r["id"]: r["loading_percent"] for r in b.branch_results.tables["electricity_edges"]}
    assert la.keys() == lb.keys()
    for k in la:
        assert lb[k] == pytest.approx(la[k], rel=1e-10)


def test_zero_flow_network_has_no_loading(small_network):
    report = nr_solve(small_network, nominal_operating_point(small_network, 0.0))
    for row in report.branch_results.tables["electricity_edges"]:
        assert row["loading_percent"] == pytest.approx(0.0, abs=1e-9)


def test_residual_rejects_wrong_length(small_network):
    problem = Problem(small_network)
    with pytest.raises(ValueError):
        problem.residual(np.zeros(3))


def test_option_validation():
    with pytest.raises(ValueError):
        SolveOptions(tol_electric=0.0)
    with pytest.raises(ValueError):
        SolveOptions(max_iterations=0)
