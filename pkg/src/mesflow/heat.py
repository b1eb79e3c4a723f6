"""District-heating thermal balances on the supply network.

Hydraulics come from :mod:`mesflow.gas`; here flows are parameters. Edges are
upwinded on the sign of their current flow, so residuals are linear in the
temperatures for a fixed hydraulic state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from mesflow.fluids import IncompressibleLiquid
from mesflow.gas import HydraulicState
from mesflow.graph import HydraulicLayer, Pipe

MDOT_EPS = 1e-10  # kg/s; below this an edge or node counts as stagnant
MDOT_REF = 1.0  # kg/s; row scale for stagnant replacement equations


@dataclass
class ThermalState:
    t_node: np.ndarray  # K, every node (mixed nodal temperature)
    t_out: np.ndarray  # K, every edge (outlet temperature)


def pipe_outlet_temperature(mdot: float, t_in: float, pipe: Pipe, fluid: IncompressibleLiquid,
                            heat_extraction: float = 0.0) -> float:
    """Outlet temperature of the exponential heat-loss model; ambient at zero flow."""
    am = abs(mdot)
    if am == 0.0:
        return pipe.ambient_temperature
    kappa = pipe.u_value * np.pi * pipe.diameter * pipe.length / (am * fluid.cp)
    t_amb = pipe.ambient_temperature
    return float(t_amb + (t_in - t_amb) * np.exp(-kappa) - heat_extraction / (am * fluid.cp))


@dataclass(frozen=True)
class _Upwind:
    inlet: np.ndarray
    outlet: np.ndarray
    am: np.ndarray
    flowing: np.ndarray
    decay: np.ndarray
    outflow: np.ndarray  # per node: edge outflow plus mass withdrawal
    mass_in: np.ndarray  # per node: mass injected from outside at supply temperature
    stagnant: np.ndarray  # per node


def _upwind(hyd: HydraulicState, layer: HydraulicLayer, withdrawal) -> _Upwind:
    cp = layer.fluid.cp
    mdot = hyd.mdot
    forward = mdot >= 0
    inlet = np.where(forward, layer.from_idx, layer.to_idx)
    outlet = np.where(forward, layer.to_idx, layer.from_idx)
    am = np.abs(mdot)
    flowing = am > MDOT_EPS
    safe = np.where(flowing, am, 1.0)
    decay = np.where(flowing, np.exp(-layer.u_value * np.pi * layer.diameter * layer.length / (safe * cp)), 0.0)
    w = np.asarray(withdrawal, dtype=float)
    outflow = np.bincount(inlet, weights=np.where(flowing, am, 0.0), minlength=layer.n_nodes) + np.maximum(w, 0.0)
    return _Upwind(inlet, outlet, am, flowing, decay, outflow, np.maximum(-w, 0.0), outflow <= MDOT_EPS)


def edge_heat_extraction(layer: HydraulicLayer, heat_w=None) -> np.ndarray:
    if heat_w is None:
        return np.array([e.heat_extraction for e in layer.edges], dtype=float)
    return np.asarray(heat_w, dtype=float)


def thermal_mismatch(hyd: HydraulicState, th: ThermalState, layer: HydraulicLayer, withdrawal,
                     heat_w=None, injection=None) -> tuple[np.ndarray, np.ndarray]:
    """Energy residuals (W) at free nodes and along every edge.

    node:  sum_in |m| cp T_out + Q_inj - (sum_out |m| + withdrawal) cp T_n
    edge:  |m| cp [(T_in - T_amb) exp(-U pi d l / (|m| cp)) - (T_out - T_amb)] - Q_heat
    """
    cp = layer.fluid.cp
    up = _upwind(hyd, layer, withdrawal)
    q_heat = edge_heat_extraction(layer, heat_w)
    t_amb = layer.ambient
    t_in = th.t_node[up.inlet]

    edge = np.where(
        up.flowing,
        up.am * cp * ((t_in - t_amb) * up.decay - (th.t_out - t_amb)) - q_heat,
        cp * MDOT_REF * (t_amb - th.t_out),
    )
    enthalpy_in = np.bincount(up.outlet, weights=np.where(up.flowing, up.am * cp * th.t_out, 0.0),
                              minlength=layer.n_nodes)
    if injection is not None:
        enthalpy_in = enthalpy_in + np.asarray(injection, dtype=float)
    enthalpy_in = enthalpy_in + up.mass_in * cp * layer.supply_temperature
    node = np.where(
        up.stagnant,
        cp * MDOT_REF * (layer.supply_temperature - th.t_node),
        enthalpy_in - up.outflow * cp * th.t_node,
    )
    return node[layer.free_nodes], edge


def thermal_jacobian(hyd: HydraulicState, th: ThermalState, layer: HydraulicLayer,
                     withdrawal) -> dict[str, sp.csr_matrix]:
    """Constant (for fixed flows) derivative blocks of :func:`thermal_mismatch`.

    J11 = d(dQ_n)/dT_n, J12 = d(dQ_n)/dT_out, J21 = d(dQ_b)/dT_n, J22 = d(dQ_b)/dT_out.
    """
    cp = layer.fluid.cp
    up = _upwind(hyd, layer, withdrawal)
    free = layer.free_nodes
    nf, nb = len(free), layer.n_edges
    col = np.full(layer.n_nodes, -1, dtype=np.int64)
    col[free] = np.arange(nf)
    edges = np.arange(nb)

    diag_n = np.where(up.stagnant, -cp * MDOT_REF, -up.outflow * cp)[free]
    J11 = sp.diags(diag_n, format="csr")

    into = up.flowing & (col[up.outlet] >= 0) & ~up.stagnant[up.outlet]
    J12 = sp.csr_matrix((up.am[into] * cp, (col[up.outlet][into], edges[into])), shape=(nf, nb))

    from_free = up.flowing & (col[up.inlet] >= 0)
    J21 = sp.csr_matrix((up.am[from_free] * cp * up.decay[from_free],
                         (edges[from_free], col[up.inlet][from_free])), shape=(nb, nf))
    J22 = sp.diags(np.where(up.flowing, -up.am * cp, -cp * MDOT_REF), format="csr")
    return {"J11": J11, "J12": J12, "J21": J21, "J22": J22}


@dataclass(frozen=True)
class HeatBalance:
    source: float  # W, net enthalpy delivered by the supply node
    injections: float  # W from coupling devices
    loads: float  # W extracted by heat exchangers
    losses: float  # W lost to ambient along edges

    @property
    def imbalance(self) -> float:
        return self.source + self.injections - self.loads - self.losses


def heat_balance(hyd: HydraulicState, th: ThermalState, layer: HydraulicLayer, withdrawal,
                 heat_w=None, injection=None) -> HeatBalance:
    """Global energy ledger of a heat-layer state.

    The return network is lumped: water withdrawn at sinks carries its
    enthalpy back to the source, so the source term is the net enthalpy it
    supplies.
    """
    cp = layer.fluid.cp
    up = _upwind(hyd, layer, withdrawal)
    ref = layer.reference
    t_in = th.t_node[up.inlet]
    q_heat = edge_heat_extraction(layer, heat_w)
    flow_heat = np.where(up.flowing, up.am * cp * (t_in - th.t_out), 0.0)
    w = np.asarray(withdrawal, dtype=float)
    free = layer.free_nodes
    src = (
        np.sum(np.where(up.flowing & (up.inlet == ref), up.am * cp * th.t_node[ref], 0.0))
        - np.sum(np.where(up.flowing & (up.outlet == ref), up.am * cp * th.t_out, 0.0))
        - np.sum(np.maximum(w[free], 0.0) * cp * th.t_node[free])
        + np.sum(np.maximum(-w[free], 0.0)) * cp * layer.supply_temperature
    )
    loads = float(np.sum(np.where(up.flowing, q_heat, 0.0)))
    inj = 0.0 if injection is None else float(np.sum(np.asarray(injection)[free]))
    return HeatBalance(source=float(src), injections=inj, loads=loads,
                       losses=float(np.sum(flow_heat) - loads))
