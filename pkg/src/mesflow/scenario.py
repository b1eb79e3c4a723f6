"""Operating points: the loads, device setpoints and weather of one timestep."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mesflow.graph import EdgeKind, MultiEnergyNetwork


@dataclass
class OperatingPoint:
    """Scheduled quantities for one steady-state solve (SI units)."""

    p_load: np.ndarray | None = None  # W per electrical node
    q_load: np.ndarray | None = None  # var per electrical node
    gas_withdrawal: np.ndarray | None = None  # kg/s per gas node
    heat_extraction: np.ndarray | None = None  # W per heat edge (exchangers)
    heat_withdrawal: np.ndarray | None = None  # kg/s per heat node, excl. exchanger sinks
    device_setpoints: dict[str, float] = field(default_factory=dict)
    ambient_temperature: float | None = None
    timestamp: str | None = None

    def heat_sink_flows(self, network: MultiEnergyNetwork) -> np.ndarray:
        """Mass withdrawn at every heat node: exchanger outlets plus explicit sinks.

        An exchanger moving Q watts draws Q / (cp (T_supply - T_return)).
        """
        heat = network.heat
        w = np.zeros(heat.n_nodes) if self.heat_withdrawal is None else self.heat_withdrawal.copy()
        if self.heat_extraction is None:
            return w
        dt = heat.supply_temperature - network.heat_return_temperature
        if dt <= 0:
            raise ValueError("supply temperature must exceed the return temperature")
        ex = heat.exchangers
        np.add.at(w, heat.to_idx[ex], self.heat_extraction[ex] / (heat.fluid.cp * dt))
        return w


def _nominal_arrays(network: MultiEnergyNetwork):
    out = {}
    if network.electricity is not None:
        out["p_load"] = np.array([n.p_load for n in network.electricity.nodes], dtype=float)
        out["q_load"] = np.array([n.q_load for n in network.electricity.nodes], dtype=float)
    if network.gas is not None:
        out["gas_withdrawal"] = np.array([n.demand_mass_flow for n in network.gas.nodes], dtype=float)
    if network.heat is not None:
        out["heat_extraction"] = np.array(
            [e.heat_extraction if e.kind is EdgeKind.HEAT_EXCHANGER else 0.0 for e in network.heat.edges],
            dtype=float,
        )
        out["heat_withdrawal"] = np.array([n.demand_mass_flow for n in network.heat.nodes], dtype=float)
    return out


def nominal_operating_point(network: MultiEnergyNetwork, scale: float = 1.0,
                            ambient_temperature: float | None = None) -> OperatingPoint:
    """Every load at ``scale`` times its nominal value, devices at min(scale, 1)."""
    arrays = {k: v * scale for k, v in _nominal_arrays(network).items()}
    setpoint = min(max(scale, 0.0), 1.0)
    return OperatingPoint(
        **arrays,
        device_setpoints={d.id: setpoint for d in network.coupling.devices},
        ambient_temperature=network.ambient_temperature if ambient_temperature is None else ambient_temperature,
    )


def operating_point_at(network: MultiEnergyNetwork, profiles, step: int) -> OperatingPoint:
    """Scale bound loads and device setpoints by the profile values at ``step``.

    Unbound loads stay nominal; unbound devices run at full setpoint.
    """
    arrays = _nominal_arrays(network)
    targets = {
        "electricity": [("p_load", network.electricity), ("q_load", network.electricity)],
        "gas": [("gas_withdrawal", network.gas)],
        "heat": [("heat_withdrawal", network.heat)],
    }
    for b in network.bindings:
        value = profiles.value(b.profile, step)
        if b.layer == "heat" and network.heat is not None and b.element in network.heat.edge_index:
            arrays["heat_extraction"][network.heat.edge_index[b.element]] *= value
            continue
        for key, layer in targets.get(b.layer, []):
            if layer is not None and b.element in layer.node_index:
                arrays[key][layer.node_index[b.element]] *= value
    setpoints = {}
    for dev in network.coupling.devices:
        setpoints[dev.id] = profiles.value(dev.setpoint_profile, step) if dev.setpoint_profile else 1.0
    if network.ambient_profile:
        ambient = profiles.value(network.ambient_profile, step)
    else:
        ambient = network.ambient_temperature
    return OperatingPoint(**arrays, device_setpoints=setpoints, ambient_temperature=ambient,
                          timestamp=profiles.timestamp_str(step))
