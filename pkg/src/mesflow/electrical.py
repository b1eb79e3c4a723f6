"""AC power flow in polar form: admittance matrix, injections, mismatch, Jacobian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from mesflow.graph import ElectricalLayer

SQRT3 = np.sqrt(3.0)


class SingularBranchError(ValueError):
    pass


@dataclass(frozen=True)
class Admittance:
    """Per-unit bus admittance plus the branch data needed for branch flows."""

    Y: sp.csr_matrix
    Yf: sp.csr_matrix  # from-side branch currents = Yf @ V
    Yt: sp.csr_matrix
    z_series: np.ndarray  # p.u. series impedance per branch
    tap: np.ndarray
    base_mva: float

    @property
    def n(self) -> int:
        return self.Y.shape[0]


@dataclass
class ElectricalState:
    vm: np.ndarray  # p.u., every node
    va: np.ndarray  # rad, every node

    @property
    def voltage(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)

    @classmethod
    def flat(cls, layer: ElectricalLayer) -> "ElectricalState":
        vm = np.ones(layer.n_nodes)
        va = np.zeros(layer.n_nodes)
        for i in layer.reference_nodes:
            vm[i] = layer.nodes[i].vm_setpoint
            va[i] = layer.nodes[i].va_setpoint
        return cls(vm, va)


def branch_impedance(layer: ElectricalLayer, base_mva: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Series impedance (p.u. on the system base) and tap ratio of every edge."""
    if base_mva <= 0:
        raise ValueError("base_mva must be positive")
    s_base = base_mva * 1e6
    z = np.empty(layer.n_edges, dtype=complex)
    tap = np.ones(layer.n_edges)
    for b, edge in enumerate(layer.edges):
        if edge.transformer is None:
            v_base = layer.nodes[layer.node_index[edge.from_node]].base_voltage
            z_base = v_base**2 / s_base
            z[b] = complex(edge.resistance_per_km, edge.reactance_per_km) * edge.length_km / z_base
        else:
            tr = edge.transformer
            r = tr.vr_percent / 100.0
            x = np.sqrt(max((tr.v_sc_percent / 100.0) ** 2 - r**2, 0.0))
            z[b] = complex(r, x) * s_base / tr.rated_power
            tap[b] = tr.ratio
        if z[b] == 0:
            raise SingularBranchError(f"singular branch: {edge.id} has zero impedance")
    return z, tap


def build_admittance(layer: ElectricalLayer, base_mva: float = 1.0) -> Admittance:
    z, tap = branch_impedance(layer, base_mva)
    y = 1.0 / z
    n, nb = layer.n_nodes, layer.n_edges
    f, t = layer.from_idx, layer.to_idx
    yff = y / tap**2
    yft = -y / tap
    ytf = -y / tap
    ytt = y
    br = np.arange(nb)
    Yf = sp.csr_matrix((np.r_[yff, yft], (np.r_[br, br], np.r_[f, t])), shape=(nb, n))
    Yt = sp.csr_matrix((np.r_[ytf, ytt], (np.r_[br, br], np.r_[f, t])), shape=(nb, n))
    Cf = sp.csr_matrix((np.ones(nb), (br, f)), shape=(nb, n))
    Ct = sp.csr_matrix((np.ones(nb), (br, t)), shape=(nb, n))
    Y = (Cf.T @ Yf + Ct.T @ Yt).tocsr()
    Y.sum_duplicates()
    return Admittance(Y=Y, Yf=Yf, Yt=Yt, z_series=z, tap=tap, base_mva=base_mva)


def power_injections(state: ElectricalState, Y) -> np.ndarray:
    """Complex nodal injections S_i = V_i conj(sum_k Y_ik V_k), p.u."""
    Ymat = Y.Y if isinstance(Y, Admittance) else Y
    V = state.voltage
    return V * np.conj(Ymat @ V)


def scheduled_injections(layer: ElectricalLayer, p_load, q_load, p_coupling=None,
                         base_mva: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Scheduled nodal injections in p.u.; loads in W/var count as negative injection."""
    s_base = base_mva * 1e6
    p = -np.asarray(p_load, dtype=float)
    if p_coupling is not None:
        p = p + np.asarray(p_coupling, dtype=float)
    q = -np.asarray(q_load, dtype=float)
    return p / s_base, q / s_base


def electrical_mismatch(state: ElectricalState, Y, p_sched, q_sched, pq) -> tuple[np.ndarray, np.ndarray]:
    S = power_injections(state, Y)
    return p_sched[pq] - S.real[pq], q_sched[pq] - S.imag[pq]


def electrical_jacobian(state: ElectricalState, Y, pq) -> dict[str, sp.csr_matrix]:
    """Derivatives of the computed injections w.r.t. the unknowns.

    Blocks follow the [|V|, delta] column order: J11 = dP/d|V|, J12 = dP/d delta,
    J21 = dQ/d|V|, J22 = dQ/d delta, rows/columns restricted to PQ nodes.
    """
    Ymat = Y.Y if isinstance(Y, Admittance) else sp.csr_matrix(Y)
    V = state.voltage
    I = Ymat @ V
    Vn = V / np.abs(V)
    coo = Ymat.tocoo()
    r, c, y = coo.row, coo.col, coo.data
    # entrywise on the pattern of Y, diagonal terms added below
    dvm = V[r] * np.conj(y * Vn[c])
    dva = -1j * V[r] * np.conj(y * V[c])
    n = len(V)
    pos = np.full(n, -1)
    pos[pq] = np.arange(len(pq))
    keep = (pos[r] >= 0) & (pos[c] >= 0)
    rows = np.concatenate([pos[r[keep]], np.arange(len(pq))])
    cols = np.concatenate([pos[c[keep]], np.arange(len(pq))])
    dvm = np.concatenate([dvm[keep], np.conj(I[pq]) * Vn[pq]])
    dva = np.concatenate([dva[keep], 1j * V[pq] * np.conj(I[pq])])
    shape = (len(pq), len(pq))

    def block(values):
        return sp.csr_matrix((values, (rows, cols)), shape=shape)

    return {
        "J11": block(dvm.real),
        "J12": block(dva.real),
        "J21": block(dvm.imag),
        "J22": block(dva.imag),
    }


@dataclass(frozen=True)
class BranchFlows:
    i_from: np.ndarray  # p.u. complex
    i_to: np.ndarray
    s_from: np.ndarray
    s_to: np.ndarray
    losses: np.ndarray  # p.u. active, |I_series|^2 R


def branch_flows(state: ElectricalState, adm: Admittance, layer: ElectricalLayer) -> BranchFlows:
    V = state.voltage
    f, t = layer.from_idx, layer.to_idx
    i_f = adm.Yf @ V
    i_t = adm.Yt @ V
    i_series = (V[f] / adm.tap - V[t]) / adm.z_series
    return BranchFlows(
        i_from=i_f,
        i_to=i_t,
        s_from=V[f] * np.conj(i_f),
        s_to=V[t] * np.conj(i_t),
        losses=np.abs(i_series) ** 2 * adm.z_series.real,
    )


def branch_loading(state: ElectricalState, adm: Admittance, layer: ElectricalLayer) -> np.ndarray:
    """Loading in percent: current vs. ampacity for lines, apparent power vs. rating for transformers."""
    flows = branch_flows(state, adm, layer)
    s_base = adm.base_mva * 1e6
    loading = np.zeros(layer.n_edges)
    for b, edge in enumerate(layer.edges):
        if edge.transformer is not None:
            s = max(abs(flows.s_from[b]), abs(flows.s_to[b])) * s_base
            loading[b] = 100.0 * s / edge.transformer.rated_power
        else:
            vf = layer.nodes[layer.from_idx[b]].base_voltage
            i_base = s_base / (SQRT3 * vf)
            i_amp = max(abs(flows.i_from[b]), abs(flows.i_to[b])) * i_base
            loading[b] = 0.0 if not np.isfinite(edge.rating) else 100.0 * i_amp / edge.rating
    return loading
