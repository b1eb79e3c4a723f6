"""Block Newton-Raphson solver for the coupled network.

The global system is block diagonal over four domains (electric, gas, heat
hydraulics, heat thermal). Coupling devices only move scheduled injections,
so they are evaluated once per timestep before the iteration starts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mesflow import electrical, gas, heat
from mesflow.coupling import CouplingInjections, DeviceBalance, apply_coupling
from mesflow.electrical import ElectricalState
from mesflow.fluids import PressureDomainError
from mesflow.gas import HydraulicState
from mesflow.graph import DOMAINS, MultiEnergyNetwork, UnknownIndex, ordered_unknowns
from mesflow.heat import MDOT_EPS, ThermalState
from mesflow.scenario import OperatingPoint, nominal_operating_point

logger = logging.getLogger(__name__)

# line-search / freezing groups; heat hydraulics and thermal move together
GROUPS = {"E": ("E",), "G": ("G",), "H": ("H_hy", "H_th")}
SUB_BLOCKS = ("J11", "J12", "J21", "J22")


class SingularJacobianError(RuntimeError):
    pass


@dataclass
class SolveOptions:
    tol_electric: float = 1e-8  # p.u. power
    tol_gas_mass: float = 1e-8  # kg/s
    tol_gas_pressure: float = 1e-4  # Pa
    tol_heat: float = 1e-6  # W
    tol_heat_mass: float = 1e-8  # kg/s
    tol_heat_pressure: float = 1e-4  # Pa
    max_iterations: int = 20
    damping: bool = True
    step_scale: float = 1.0
    backtrack_factor: float = 0.5
    max_backtracks: int = 6
    per_block_solve: bool = False
    frozen_friction: bool = False
    scaling: dict[str, float] = field(default_factory=lambda: {"p": 1e5, "t_node": 1.0, "t_out": 1.0})

    def __post_init__(self):
        tols = (self.tol_electric, self.tol_gas_mass, self.tol_gas_pressure,
                self.tol_heat, self.tol_heat_mass, self.tol_heat_pressure)
        if min(tols) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.backtrack_factor < 1 or self.step_scale <= 0:
            raise ValueError("need 0 < backtrack_factor < 1 and step_scale > 0")

    def tolerances(self) -> dict[str, float]:
        return {
            "E": self.tol_electric,
            "G_mass": self.tol_gas_mass,
            "G_pressure": self.tol_gas_pressure,
            "H_hy_mass": self.tol_heat_mass,
            "H_hy_pressure": self.tol_heat_pressure,
            "H_th": self.tol_heat,
        }


@dataclass
class SystemState:
    """Global unknown vector in :func:`mesflow.graph.ordered_unknowns` order."""

    index: UnknownIndex
    x: np.ndarray

    def __post_init__(self):
        if len(self.x) != self.index.size:
            raise ValueError(f"state length {len(self.x)} != unknown count {self.index.size}")

    def get(self, layer: str, quantity: str) -> np.ndarray:
        return self.x[self.index.slice(layer, quantity)]


@dataclass
class FullState:
    """Every nodal/edge quantity including fixed boundary values."""

    electrical: ElectricalState | None = None
    gas: HydraulicState | None = None
    heat: HydraulicState | None = None
    thermal: ThermalState | None = None


@dataclass
class BlockJacobian:
    """Four diagonal domain systems, each split into 2x2 sub-blocks."""

    index: UnknownIndex
    blocks: dict[str, dict[str, sp.csr_matrix]]

    def domain_matrix(self, domain: str) -> sp.csc_matrix:
        b = self.blocks[domain]
        return sp.bmat([[b["J11"], b["J12"]], [b["J21"], b["J22"]]], format="csc")

    @property
    def domains(self) -> list[str]:
        return [d for d in DOMAINS if d in self.blocks]

    @property
    def matrix(self) -> sp.csc_matrix:
        mats = [self.domain_matrix(d) for d in self.domains]
        if not mats:
            return sp.csc_matrix((0, 0))
        return sp.block_diag(mats, format="csc")


class Problem:
    """Network plus one operating point, with coupling injections already applied."""

    def __init__(self, network: MultiEnergyNetwork, op: OperatingPoint | None = None,
                 options: SolveOptions | None = None, admittance: electrical.Admittance | None = None):
        self.network = network
        self.op = op if op is not None else nominal_operating_point(network)
        self.options = options or SolveOptions()
        self.index = ordered_unknowns(network)
        self.coupling: CouplingInjections = apply_coupling(
            network, self.op.device_setpoints, self.op.ambient_temperature)
        inj = self.coupling.to_arrays(network)

        el = network.electricity
        if el is not None:
            self.adm = admittance or electrical.build_admittance(el, network.base_mva)
            self.p_sched, self.q_sched = electrical.scheduled_injections(
                el, self.op.p_load, self.op.q_load, inj["electricity"], network.base_mva)
        if network.gas is not None:
            self.gas_withdrawal = self.op.gas_withdrawal - inj["gas"]
        if network.heat is not None:
            self.heat_withdrawal = self.op.heat_sink_flows(network)
            self.heat_extraction = self.op.heat_extraction
            self.heat_injection = inj["heat"]

    # -- state handling -------------------------------------------------
    def domain_slice(self, domain: str) -> slice:
        return self.index.domain_slice(domain)

    @property
    def domains(self) -> list[str]:
        present = {b.domain for b in self.index.blocks}
        return [d for d in DOMAINS if d in present]

    @property
    def groups(self) -> list[str]:
        present = set(self.domains)
        return [g for g, ds in GROUPS.items() if present & set(ds)]

    def unpack(self, x: np.ndarray) -> FullState:
        net, idx = self.network, self.index
        out = FullState()
        if net.electricity is not None:
            st = ElectricalState.flat(net.electricity)
            pq = net.electricity.pq
            st.vm[pq] = x[idx.slice("electricity", "vm")]
            st.va[pq] = x[idx.slice("electricity", "va")]
            out.electrical = st
        for name in ("gas", "heat"):
            layer = getattr(net, name)
            if layer is None:
                continue
            p = np.full(layer.n_nodes, layer.reference_pressure)
            p[layer.free_nodes] = x[idx.slice(name, "p")]
            setattr(out, name, HydraulicState(p, x[idx.slice(name, "mdot")].copy()))
        if net.heat is not None:
            t = np.full(net.heat.n_nodes, net.heat.supply_temperature)
            t[net.heat.free_nodes] = x[idx.slice("heat", "t_node")]
            out.thermal = ThermalState(t, x[idx.slice("heat", "t_out")].copy())
        return out

    def pack(self, full: FullState) -> np.ndarray:
        net, idx = self.network, self.index
        x = np.empty(idx.size)
        if net.electricity is not None:
            pq = net.electricity.pq
            x[idx.slice("electricity", "vm")] = full.electrical.vm[pq]
            x[idx.slice("electricity", "va")] = full.electrical.va[pq]
        for name in ("gas", "heat"):
            layer = getattr(net, name)
            if layer is None:
                continue
            hs = getattr(full, name)
            x[idx.slice(name, "p")] = hs.p[layer.free_nodes]
            x[idx.slice(name, "mdot")] = hs.mdot
        if net.heat is not None:
            x[idx.slice("heat", "t_node")] = full.thermal.t_node[net.heat.free_nodes]
            x[idx.slice("heat", "t_out")] = full.thermal.t_out
        return x

    def initial_state(self, previous: np.ndarray | None = None) -> np.ndarray:
        """Flat start, or a warm start from ``previous`` with flows re-balanced to this timestep's demands."""
        net = self.network
        full = FullState()
        prev = self.unpack(previous) if previous is not None else None
        if net.electricity is not None:
            full.electrical = prev.electrical if prev else ElectricalState.flat(net.electricity)
        for name, w in (("gas", getattr(self, "gas_withdrawal", None)), ("heat", getattr(self, "heat_withdrawal", None))):
            layer = getattr(net, name)
            if layer is None:
                continue
            if prev:
                old = getattr(prev, name)
                mdot = gas.initial_flows(layer, w, chord_flows=old.mdot)
                setattr(full, name, HydraulicState(old.p.copy(), mdot))
            else:
                p = np.full(layer.n_nodes, layer.reference_pressure)
                setattr(full, name, HydraulicState(p, gas.initial_flows(layer, w)))
        if net.heat is not None:
            if prev:
                full.thermal = prev.thermal
            else:
                t_sup = net.heat.supply_temperature
                t_out = np.where(np.abs(full.heat.mdot) > MDOT_EPS, t_sup, net.heat.ambient)
                full.thermal = ThermalState(np.full(net.heat.n_nodes, t_sup), t_out)
        return self.pack(full)

    # -- residuals ------------------------------------------------------
    def domain_residual(self, domain: str, x: np.ndarray, full: FullState | None = None,
                        fixed_lambda=None) -> np.ndarray:
        """``fixed_lambda`` holds hydraulic friction factors constant (derivative checks only)."""
        full = full or self.unpack(x)
        net = self.network
        if domain == "E":
            dp, dq = electrical.electrical_mismatch(full.electrical, self.adm, self.p_sched,
                                                    self.q_sched, net.electricity.pq)
            return np.concatenate([dp, dq])
        if domain == "G":
            return np.concatenate(gas.gas_mismatch(full.gas, net.gas, self.gas_withdrawal, fixed_lambda))
        if domain == "H_hy":
            return np.concatenate(gas.gas_mismatch(full.heat, net.heat, self.heat_withdrawal, fixed_lambda))
        if domain == "H_th":
            return np.concatenate(heat.thermal_mismatch(full.heat, full.thermal, net.heat, self.heat_withdrawal,
                                                        self.heat_extraction, self.heat_injection))
        raise KeyError(domain)

    def residual(self, x: np.ndarray) -> np.ndarray:
        """Mismatch vector [dP, dQ, dm_n, dp_b, dm_n^H, dp_b^H, dQ_n, dQ_b]."""
        if len(x) != self.index.size:
            raise ValueError(f"state length {len(x)} != unknown count {self.index.size}")
        full = self.unpack(x)
        parts = [self.domain_residual(d, x, full) for d in self.domains]
        return np.concatenate(parts) if parts else np.zeros(0)

    def norms(self, F: np.ndarray) -> dict[str, float]:
        """Max-norms per domain and quantity (units of the matching tolerance)."""
        out: dict[str, float] = {}
        net = self.network

        def amax(v):
            return float(np.max(np.abs(v))) if len(v) else 0.0

        if "E" in self.domains:
            out["E"] = amax(F[self.domain_slice("E")])
        for dom, layer in (("G", net.gas), ("H_hy", net.heat)):
            if dom in self.domains:
                seg = F[self.domain_slice(dom)]
                nf = len(layer.free_nodes)
                out[f"{dom}_mass"] = amax(seg[:nf])
                out[f"{dom}_pressure"] = amax(seg[nf:])
        if "H_th" in self.domains:
            out["H_th"] = amax(F[self.domain_slice("H_th")])
        return out

    # -- Jacobian -------------------------------------------------------
    def domain_jacobian(self, domain: str, x: np.ndarray, full: FullState | None = None,
                        frozen_friction: bool | None = None) -> dict[str, sp.csr_matrix]:
        """Sub-blocks d(mismatch)/d(unknowns) of one domain."""
        full = full or self.unpack(x)
        net = self.network
        frozen = self.options.frozen_friction if frozen_friction is None else frozen_friction
        if domain == "E":
            blocks = electrical.electrical_jacobian(full.electrical, self.adm, net.electricity.pq)
            # mismatch is scheduled minus computed
            return {k: -v for k, v in blocks.items()}
        if domain == "G":
            return gas.gas_jacobian(full.gas, net.gas, frozen)
        if domain == "H_hy":
            return gas.gas_jacobian(full.heat, net.heat, frozen)
        if domain == "H_th":
            return heat.thermal_jacobian(full.heat, full.thermal, net.heat, self.heat_withdrawal)
        raise KeyError(domain)

    def jacobian(self, x: np.ndarray) -> BlockJacobian:
        full = self.unpack(x)
        return BlockJacobian(self.index, {d: self.domain_jacobian(d, x, full) for d in self.domains})

    def column_scale(self) -> np.ndarray:
        s = np.ones(self.index.size)
        for blk in self.index.blocks:
            s[blk.slice] = self.options.scaling.get(blk.quantity, 1.0)
        return s


def assemble(network: MultiEnergyNetwork, state: SystemState | np.ndarray,
             op: OperatingPoint | None = None, options: SolveOptions | None = None
             ) -> tuple[BlockJacobian, np.ndarray]:
    """Block Jacobian and mismatch vector at ``state``."""
    problem = Problem(network, op, options)
    x = state.x if isinstance(state, SystemState) else np.asarray(state, dtype=float)
    if len(x) != problem.index.size:
        raise ValueError(f"dimension mismatch: state {len(x)} vs {problem.index.size} unknowns")
    return problem.jacobian(x), problem.residual(x)


def _factorize(mat: sp.csc_matrix, name: str):
    try:
        return spla.splu(mat)
    except RuntimeError as exc:
        raise SingularJacobianError(f"singular Jacobian in block {name}: {exc}") from None


def solve_linear(J: BlockJacobian, rhs: np.ndarray, scale: np.ndarray, per_block: bool = False) -> np.ndarray:
    """Solve J dx = rhs with column scaling dx = scale * y."""
    dx = np.zeros_like(rhs)
    if per_block or len(J.domains) == 1:
        for d in J.domains:
            sl = J.index.domain_slice(d)
            mat = (J.domain_matrix(d) @ sp.diags(scale[sl])).tocsc()
            dx[sl] = scale[sl] * _factorize(mat, d).solve(rhs[sl])
        return dx
    mat = (J.matrix @ sp.diags(scale)).tocsc()
    try:
        lu = spla.splu(mat)
    except RuntimeError:
        for d in J.domains:  # find the culprit
            sl = J.index.domain_slice(d)
            _factorize(J.domain_matrix(d), d)
        raise SingularJacobianError("singular Jacobian") from None
    return scale * lu.solve(rhs)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_history: list[dict[str, float]]
    final_state: SystemState
    state: FullState
    problem: Problem
    ledger: list[DeviceBalance]
    branch_results: "BranchResults | None" = None
    timestamp: str | None = None

    @property
    def final_norms(self) -> dict[str, float]:
        return self.residual_history[-1] if self.residual_history else {}


def _group_merit(norms: dict[str, float], tols: dict[str, float], group: str) -> float:
    return max((v / tols[k] for k, v in norms.items() if k.split("_mass")[0].split("_pressure")[0] in GROUPS[group]),
               default=0.0)


def _converged(norms: dict[str, float], tols: dict[str, float]) -> bool:
    return all(v < tols[k] for k, v in norms.items())


def _group_converged(norms, tols, group) -> bool:
    return _group_merit(norms, tols, group) < 1.0


def nr_solve(network: MultiEnergyNetwork, op: OperatingPoint | None = None,
             options: SolveOptions | None = None, initial: np.ndarray | None = None,
             warm_start: np.ndarray | None = None, admittance=None) -> SolveReport:
    """Damped Newton-Raphson on the block system.

    ``iterations`` counts mismatch evaluations, so a network that is already
    solved by its initial state reports one iteration. A domain group whose
    norms are below tolerance is not updated further; groups are line-searched
    independently, which keeps each carrier's iterates identical to a
    standalone solve of that carrier.
    """
    options = options or SolveOptions()
    problem = Problem(network, op, options, admittance)
    tols = options.tolerances()
    if initial is not None:
        x = np.asarray(initial, dtype=float).copy()
    else:
        x = problem.initial_state(warm_start)
    scale = problem.column_scale()
    history: list[dict[str, float]] = []
    converged = False
    iterations = 0
    F = problem.residual(x)
    for iterations in range(1, options.max_iterations + 1):
        norms = problem.norms(F)
        history.append(norms)
        if _converged(norms, tols):
            converged = True
            break
        if iterations == options.max_iterations:
            break
        J = problem.jacobian(x)
        dx = solve_linear(J, -F, scale, options.per_block_solve)
        alphas = {}
        for g in problem.groups:
            alphas[g] = 0.0 if _group_converged(norms, tols, g) else options.step_scale
        x, F = _line_search(problem, x, dx, F, norms, alphas, options, tols)
        logger.debug("iteration %d: %s", iterations, norms)

    full = problem.unpack(x)
    report = SolveReport(
        converged=converged,
        iterations=iterations,
        residual_history=history,
        final_state=SystemState(problem.index, x),
        state=full,
        problem=problem,
        ledger=list(problem.coupling.ledger),
        timestamp=problem.op.timestamp,
    )
    report.branch_results = branch_results(problem, full)
    return report


def _apply(problem: Problem, x, dx, alphas):
    out = x.copy()
    for g, a in alphas.items():
        if a == 0.0:
            continue
        for d in GROUPS[g]:
            if d in problem.domains:
                sl = problem.domain_slice(d)
                out[sl] = x[sl] + a * dx[sl]
    return out


def _trial_residual(problem: Problem, x):
    try:
        return problem.residual(x)
    except PressureDomainError:
        return None


def _line_search(problem, x, dx, F, norms, alphas, options, tols):
    trial = _apply(problem, x, dx, alphas)
    F_trial = _trial_residual(problem, trial)
    if not options.damping:
        if F_trial is None:
            raise PressureDomainError("pressure out of domain during undamped step")
        return trial, F_trial
    for _ in range(options.max_backtracks):
        if F_trial is None:
            worse = [g for g, a in alphas.items() if a > 0 and g in ("G", "H")]
        else:
            new_norms = problem.norms(F_trial)
            worse = [g for g, a in alphas.items()
                     if a > 0 and _group_merit(new_norms, tols, g) > _group_merit(norms, tols, g)]
        if not worse:
            break
        for g in worse:
            alphas[g] *= options.backtrack_factor
        trial = _apply(problem, x, dx, alphas)
        F_trial = _trial_residual(problem, trial)
    if F_trial is None:
        raise PressureDomainError("pressure out of domain")
    return trial, F_trial


# -- verification oracle --------------------------------------------------
def finite_difference_jacobian(residual_function, x: np.ndarray, step: float = 1e-6,
                               scale: np.ndarray | float | None = None) -> np.ndarray:
    """Dense central-difference Jacobian; column j uses h = step * max(|x_j|, scale_j)."""
    x = np.asarray(x, dtype=float)
    if step <= 0:
        raise ValueError("step must be positive")
    floor = np.ones_like(x) if scale is None else np.broadcast_to(np.asarray(scale, dtype=float), x.shape)
    f0 = np.asarray(residual_function(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = step * max(abs(x[j]), floor[j])
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (np.asarray(residual_function(xp)) - np.asarray(residual_function(xm))) / (2.0 * h)
    return J


# -- branch results -------------------------------------------------------
@dataclass
class BranchResults:
    tables: dict[str, list[dict]]
    summary: dict[str, float]


def branch_results(problem: Problem, full: FullState) -> BranchResults:
    """Per-node and per-edge result tables plus the summary figures of a snapshot."""
    net = problem.network
    tables: dict[str, list[dict]] = {}
    summary: dict[str, float] = {}
    s_base = net.base_mva

    if net.electricity is not None:
        el = net.electricity
        st = full.electrical
        S = electrical.power_injections(st, problem.adm)
        tables["electricity_nodes"] = [
            {"id": n.id, "vm_pu": float(st.vm[i]), "va_degree": float(np.degrees(st.va[i])),
             "p_mw": float(S.real[i] * s_base), "q_mvar": float(S.imag[i] * s_base)}
            for i, n in enumerate(el.nodes)
        ]
        flows = electrical.branch_flows(st, problem.adm, el)
        loading = electrical.branch_loading(st, problem.adm, el)
        rows = []
        for b, e in enumerate(el.edges):
            v_base = el.nodes[el.from_idx[b]].base_voltage
            i_base_ka = s_base * 1e6 / (np.sqrt(3) * v_base) / 1e3
            rows.append({
                "id": e.id, "type": "transformer" if e.transformer else "line",
                "i_from_ka": float(abs(flows.i_from[b]) * i_base_ka),
                "p_from_mw": float(flows.s_from[b].real * s_base),
                "q_from_mvar": float(flows.s_from[b].imag * s_base),
                "losses_mw": float(flows.losses[b] * s_base),
                "loading_percent": float(loading[b]),
            })
        tables["electricity_edges"] = rows
        summary["min_vm_pu"] = float(st.vm.min())
        summary["max_loading_percent"] = float(loading.max()) if len(loading) else 0.0
        summary["slack_p_mw"] = float(S.real[el.slack] * s_base)
        summary["losses_mw"] = float(flows.losses.sum() * s_base)

    for name in ("gas", "heat"):
        layer = getattr(net, name)
        if layer is None:
            continue
        hs = getattr(full, name)
        f, t = layer.from_idx, layer.to_idx
        terms = gas._terms(hs, layer)
        area = np.pi * layer.diameter**2 / 4.0
        p_ref = layer.reference_pressure
        node_rows = [{"id": n.id, "p_bar": float(hs.p[i] / 1e5),
                      "dp_ref_percent": float(100.0 * (p_ref - hs.p[i]) / p_ref)}
                     for i, n in enumerate(layer.nodes)]
        edge_rows = [{"id": e.id, "mdot_kg_per_s": float(hs.mdot[b]),
                      "dp_pa": float(hs.p[f[b]] - hs.p[t[b]]),
                      "v_m_per_s": float(hs.mdot[b] / (terms.density[b] * area[b])),
                      "reynolds": float(terms.reynolds[b])}
                     for b, e in enumerate(layer.edges)]
        tables[f"{name}_nodes"] = node_rows
        tables[f"{name}_edges"] = edge_rows
        summary[f"min_{name}_pressure_bar"] = float(hs.p.min() / 1e5)
        summary[f"max_{name}_pressure_drop_percent"] = float(100.0 * (p_ref - hs.p.min()) / p_ref)

    if net.heat is not None:
        th = full.thermal
        layer = net.heat
        cp = layer.fluid.cp
        hs = full.heat
        inlet = np.where(hs.mdot >= 0, layer.from_idx, layer.to_idx)
        for i, row in enumerate(tables["heat_nodes"]):
            row["t_k"] = float(th.t_node[i])
        for b, row in enumerate(tables["heat_edges"]):
            t_in = th.t_node[inlet[b]]
            row["t_in_k"] = float(t_in)
            row["t_out_k"] = float(th.t_out[b])
            row["dt_k"] = float(t_in - th.t_out[b])
            row["heat_out_w"] = float(abs(hs.mdot[b]) * cp * (t_in - th.t_out[b]))
        sinks = set(layer.to_idx[layer.exchangers].tolist())
        supply = [i for i in range(layer.n_nodes) if i not in sinks]
        summary["min_supply_temperature_k"] = float(th.t_node[supply].min())
        summary["max_supply_temperature_k"] = float(th.t_node[supply].max())
        bal = heat.heat_balance(hs, th, layer, problem.heat_withdrawal, problem.heat_extraction,
                                problem.heat_injection)
        summary["heat_source_w"] = bal.source
        summary["heat_loads_w"] = bal.loads
        summary["heat_losses_w"] = bal.losses
    return BranchResults(tables, summary)


# -- Jacobian self-check --------------------------------------------------
@dataclass(frozen=True)
class BlockCheck:
    domain: str
    block: str
    rel_error: float
    row: int
    col: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.rel_error <= self.tolerance


JACOBIAN_TOLERANCES = {"E": 1e-6, "G": 1e-4, "H_hy": 1e-4, "H_th": 1e-8}


def random_state(problem: Problem, rng: np.random.Generator) -> np.ndarray:
    """A plausible but unsolved state for derivative checks."""
    net = problem.network
    x = problem.initial_state()
    idx = problem.index
    if net.electricity is not None:
        n = len(net.electricity.pq)
        x[idx.slice("electricity", "vm")] = rng.uniform(0.9, 1.1, n)
        x[idx.slice("electricity", "va")] = rng.uniform(-0.2, 0.2, n)
    for name in ("gas", "heat"):
        layer = getattr(net, name)
        if layer is None:
            continue
        nf = len(layer.free_nodes)
        p_ref = layer.reference_pressure
        x[idx.slice(name, "p")] = p_ref * rng.uniform(0.97, 1.0, nf)
        m = x[idx.slice(name, "mdot")]
        spread = max(np.max(np.abs(m)), 1e-3)
        x[idx.slice(name, "mdot")] = m * rng.uniform(0.5, 1.5, m.size) + rng.normal(0, 0.1 * spread, m.size)
    if net.heat is not None:
        t_sup = net.heat.supply_temperature
        lo = float(np.max(net.heat.ambient)) + 5.0
        x[idx.slice("heat", "t_node")] = rng.uniform(lo, t_sup, len(net.heat.free_nodes))
        x[idx.slice("heat", "t_out")] = rng.uniform(lo, t_sup, net.heat.n_edges)
    return x


def _fd_floor(problem: Problem, x: np.ndarray, domain: str) -> np.ndarray:
    sl = problem.domain_slice(domain)
    floor = np.empty(sl.stop - sl.start)
    for blk in problem.index.blocks:
        if blk.domain != domain:
            continue
        seg = slice(blk.start - sl.start, blk.stop - sl.start)
        vals = x[blk.slice]
        if blk.quantity == "mdot":
            floor[seg] = 1e-3 * max(np.max(np.abs(vals)) if len(vals) else 0.0, 1e-9)
        else:
            floor[seg] = 1.0
    return floor


def check_domain_jacobian(problem: Problem, x: np.ndarray, domain: str, step: float = 1e-6,
                          frozen_friction: bool = False) -> list[BlockCheck]:
    """Compare analytic sub-blocks of one domain against central differences.

    With ``frozen_friction`` the hydraulic domains compare the frozen-lambda
    Jacobian with differences of the residual at lambda fixed to its value at ``x``.
    """
    sl = problem.domain_slice(domain)
    base = x.copy()
    fixed = None
    if frozen_friction and domain in ("G", "H_hy"):
        full = problem.unpack(x)
        state, layer = (full.gas, problem.network.gas) if domain == "G" else (full.heat, problem.network.heat)
        fixed = gas.effective_friction(state, layer)

    def fun(xd):
        xx = base.copy()
        xx[sl] = xd
        return problem.domain_residual(domain, xx, fixed_lambda=fixed)

    fd = finite_difference_jacobian(fun, x[sl], step=step, scale=_fd_floor(problem, x, domain))
    blocks = problem.domain_jacobian(domain, x, frozen_friction=frozen_friction)
    nr = blocks["J11"].shape[0]
    nc = blocks["J11"].shape[1]
    parts = {"J11": (slice(0, nr), slice(0, nc)), "J12": (slice(0, nr), slice(nc, None)),
             "J21": (slice(nr, None), slice(0, nc)), "J22": (slice(nr, None), slice(nc, None))}
    out = []
    tol = JACOBIAN_TOLERANCES[domain]
    for name in SUB_BLOCKS:
        rs, cs = parts[name]
        a = blocks[name].toarray()
        n = fd[rs, cs]
        if a.size == 0:
            out.append(BlockCheck(domain, name, 0.0, -1, -1, tol))
            continue
        diff = np.abs(a - n)
        ref = max(np.max(np.abs(a)), np.max(np.abs(n)))
        rel = float(np.max(diff) / ref) if ref > 0 else 0.0
        r, c = np.unravel_index(np.argmax(diff), diff.shape)
        out.append(BlockCheck(domain, name, rel, int(r), int(c), tol))
    return out


def jacobian_check(network: MultiEnergyNetwork, op: OperatingPoint | None = None, n_states: int = 3,
                   seed: int = 0, domains=None, frozen_friction: bool = False) -> list[BlockCheck]:
    """Worst discrepancy per sub-block over ``n_states`` random states."""
    problem = Problem(network, op)
    rng = np.random.default_rng(seed)
    worst: dict[tuple[str, str], BlockCheck] = {}
    domains = domains or problem.domains
    for _ in range(n_states):
        x = random_state(problem, rng)
        for d in domains:
            for chk in check_domain_jacobian(problem, x, d, frozen_friction=frozen_friction):
                key = (chk.domain, chk.block)
                if key not in worst or chk.rel_error > worst[key].rel_error:
                    worst[key] = chk
    return [worst[k] for k in sorted(worst, key=lambda k: (DOMAINS.index(k[0]), k[1]))]
