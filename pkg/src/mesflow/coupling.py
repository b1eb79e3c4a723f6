"""Coupling layer: duplicated nodes and conversion-device edges.

Devices never enter the Jacobian. For a fixed timestep their operation is
set by exogenous setpoints (and the ambient temperature for heat pumps), so
they only shift the scheduled injections of the carrier layers.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from mesflow.graph import MultiEnergyNetwork


class CouplingError(ValueError):
    pass


class DeviceOverloadError(ValueError):
    pass


class DeviceKind(str, Enum):
    CHP_G2E = "G2E"
    E2G = "E2G"
    GAS_BOILER_G2H = "G2H"
    HEAT_PUMP_E2H = "E2H"

    @property
    def input_layer(self) -> str:
        return {"G2E": "gas", "E2G": "electricity", "G2H": "gas", "E2H": "electricity"}[self.value]

    @property
    def output_layer(self) -> str:
        return {"G2E": "electricity", "E2G": "gas", "G2H": "heat", "E2H": "heat"}[self.value]


# heat-demand-driven first, then electricity-driven, then gas-driven
EVALUATION_ORDER = (DeviceKind.GAS_BOILER_G2H, DeviceKind.HEAT_PUMP_E2H, DeviceKind.E2G, DeviceKind.CHP_G2E)


@dataclass(frozen=True)
class TableCOP:
    """COP over source temperature; linear inside the table, constant outside."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        temps = [t for t, _ in self.points]
        if len(temps) < 1 or any(b <= a for a, b in zip(temps, temps[1:])):
            raise ValueError("COP table must have strictly increasing source temperatures")
        cops = [c for _, c in self.points]
        if any(b < a for a, b in zip(cops, cops[1:])):
            raise ValueError("COP table must be non-decreasing in source temperature")
        if min(cops) < 1.0:
            raise ValueError("COP table values must be >= 1")


@dataclass(frozen=True)
class CarnotCOP:
    """Fraction of the Carnot COP for a fixed sink temperature, clamped."""

    quality: float
    sink_temperature: float
    cop_min: float = 1.0
    cop_max: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.quality <= 1.0:
            raise ValueError("Carnot quality must be in (0, 1]")
        if not 1.0 <= self.cop_min <= self.cop_max:
            raise ValueError("need 1 <= cop_min <= cop_max")


COPModel = TableCOP | CarnotCOP


def cop_evaluate(model: COPModel, source_temperature: float) -> float:
    if isinstance(model, TableCOP):
        temps, cops = zip(*model.points)
        return float(np.interp(source_temperature, temps, cops))
    lift = model.sink_temperature - source_temperature
    if lift <= 0.0:
        return model.cop_max
    cop = model.quality * model.sink_temperature / lift
    return float(min(max(cop, model.cop_min), model.cop_max))


@dataclass(frozen=True)
class CouplingDevice:
    """Directed inter-layer edge. ``rating`` is the output-side capacity in W."""

    id: str
    kind: DeviceKind
    from_node: tuple[str, str]  # (layer, node id)
    to_node: tuple[str, str]
    rating: float
    efficiency: float | None = None
    cop: COPModel | None = None
    setpoint_profile: str | None = None

    def __post_init__(self):
        if self.rating <= 0:
            raise ValueError(f"device {self.id}: rating must be positive")
        if self.from_node[0] != self.kind.input_layer or self.to_node[0] != self.kind.output_layer:
            raise ValueError(
                f"device {self.id}: {self.kind.value} must connect {self.kind.input_layer} -> "
                f"{self.kind.output_layer}, got {self.from_node[0]} -> {self.to_node[0]}"
            )
        if self.kind is DeviceKind.HEAT_PUMP_E2H:
            if self.cop is None:
                raise ValueError(f"device {self.id}: heat pump needs a COP model")
        elif self.efficiency is None or not 0.0 < self.efficiency <= 1.0:
            raise ValueError(f"device {self.id}: efficiency must be in (0, 1]")

    def conversion_factor(self, ambient_temperature: float | None = None) -> float:
        if self.kind is DeviceKind.HEAT_PUMP_E2H:
            if ambient_temperature is None:
                raise CouplingError(f"device {self.id}: heat pump needs an ambient temperature")
            return cop_evaluate(self.cop, ambient_temperature)
        return self.efficiency


@dataclass(frozen=True)
class DuplicateNode:
    """Replica of a carrier node inside the coupling layer."""

    layer: str
    node: str

    @property
    def id(self) -> str:
        return f"{self.layer}:{self.node}"


@dataclass(frozen=True)
class CouplingLayer:
    nodes: tuple[DuplicateNode, ...] = ()
    devices: tuple[CouplingDevice, ...] = ()

    @classmethod
    def from_devices(cls, devices: Sequence[CouplingDevice]) -> "CouplingLayer":
        nodes: dict[str, DuplicateNode] = {}
        for dev in devices:
            for layer, node in (dev.from_node, dev.to_node):
                dup = DuplicateNode(layer, node)
                nodes.setdefault(dup.id, dup)
        return cls(tuple(nodes.values()), tuple(devices))

    def check(self, network: "MultiEnergyNetwork") -> list[str]:
        problems = []
        dup_ids = {n.id for n in self.nodes}
        seen = set()
        for dev in self.devices:
            if dev.id in seen:
                problems.append(f"coupling edge: duplicate device id {dev.id!r}")
            seen.add(dev.id)
            for layer, node in (dev.from_node, dev.to_node):
                if f"{layer}:{node}" not in dup_ids or _resolve(network, layer, node) is None:
                    problems.append(f"coupling edge: unknown endpoint {layer}:{node} (device {dev.id})")
        return problems

    def resolve(self, network: "MultiEnergyNetwork", dup_id: str) -> tuple[str, int]:
        for dup in self.nodes:
            if dup.id == dup_id:
                idx = _resolve(network, dup.layer, dup.node)
                if idx is not None:
                    return dup.layer, idx
        raise CouplingError(f"unresolved duplicated node {dup_id!r}")


def _resolve(network, layer: str, node: str) -> int | None:
    lay = getattr(network, layer, None) if layer in ("electricity", "gas", "heat") else None
    if lay is None:
        return None
    return lay.node_index.get(node)


@dataclass(frozen=True)
class DeviceBalance:
    device_id: str
    kind: DeviceKind
    input_node: str  # duplicated node id
    output_node: str
    input_power: float  # W consumed from the input layer
    output_power: float  # W delivered to the output layer
    factor: float  # efficiency or COP actually applied

    @property
    def injections(self) -> dict[str, float]:
        return {self.kind.input_layer: -self.input_power, self.kind.output_layer: self.output_power}


def device_balance(device: CouplingDevice, input_power: float,
                   ambient_temperature: float | None = None) -> DeviceBalance:
    """Energy balance of one device; output = factor * input exactly."""
    if input_power < 0:
        raise ValueError(f"device {device.id}: input power must be non-negative")
    factor = device.conversion_factor(ambient_temperature)
    rated_input = device.rating / factor
    if input_power > rated_input * (1.0 + 1e-12):
        raise DeviceOverloadError(
            f"device overloaded: {device.id} input {input_power:.6g} W exceeds {rated_input:.6g} W"
        )
    return DeviceBalance(
        device_id=device.id,
        kind=device.kind,
        input_node=DuplicateNode(*device.from_node).id,
        output_node=DuplicateNode(*device.to_node).id,
        input_power=float(input_power),
        output_power=float(factor * input_power),
        factor=float(factor),
    )


@dataclass
class CouplingInjections:
    """Net power injections at duplicated nodes (W; positive = into the carrier)."""

    by_node: dict[str, float] = field(default_factory=dict)
    ledger: list[DeviceBalance] = field(default_factory=list)

    def to_arrays(self, network: "MultiEnergyNetwork") -> dict[str, np.ndarray]:
        """Per-layer nodal injections: electricity and heat in W, gas in kg/s."""
        out: dict[str, np.ndarray] = {}
        for name in ("electricity", "gas", "heat"):
            layer = getattr(network, name)
            if layer is not None:
                out[name] = np.zeros(layer.n_nodes)
        for dup_id, power in self.by_node.items():
            layer, idx = network.coupling.resolve(network, dup_id)
            if layer not in out:
                raise CouplingError(f"unresolved duplicated node {dup_id!r}")
            if layer == "gas":
                power = power / network.gas.fluid.heating_value
            out[layer][idx] += power
        return out


def apply_coupling(network: "MultiEnergyNetwork", setpoints: Mapping[str, float] | None = None,
                   ambient_temperature: float | None = None) -> CouplingInjections:
    """Evaluate every device at ``setpoint * rating`` output power.

    ``setpoints`` maps device id to a normalized output fraction (missing ids
    run at zero).
    """
    setpoints = setpoints or {}
    result = CouplingInjections()
    devices = network.coupling.devices
    for kind in EVALUATION_ORDER:
        for dev in devices:
            if dev.kind is not kind:
                continue
            for dup in (DuplicateNode(*dev.from_node).id, DuplicateNode(*dev.to_node).id):
                network.coupling.resolve(network, dup)
            fraction = float(setpoints.get(dev.id, 0.0))
            if fraction < 0:
                raise ValueError(f"device {dev.id}: negative setpoint")
            factor = dev.conversion_factor(ambient_temperature)
            bal = device_balance(dev, fraction * dev.rating / factor, ambient_temperature)
            result.ledger.append(bal)
            result.by_node[bal.input_node] = result.by_node.get(bal.input_node, 0.0) - bal.input_power
            result.by_node[bal.output_node] = result.by_node.get(bal.output_node, 0.0) + bal.output_power
    return result
