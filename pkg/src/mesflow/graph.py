"""Multi-layer graph data model.

Each energy carrier is one layer of nodes and edges. Conversion devices live
in a separate coupling layer (see :mod:`mesflow.coupling`) that references
carrier nodes through duplicated nodes. Nodes and edges are addressed by
their position in the layer; string ids are only used at the I/O boundary.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from mesflow.coupling import CouplingLayer
from mesflow.fluids import FluidModel, IdealGas, IncompressibleLiquid


class LayerKind(str, Enum):
    ELECTRICITY = "electricity"
    GAS = "gas"
    HEAT = "heat"
    COUPLING = "coupling"

    @property
    def label(self) -> str:
        return self.value.capitalize()


class ElectricalNodeKind(str, Enum):
    SLACK = "slack"
    PQ = "pq"


class HydraulicNodeKind(str, Enum):
    REFERENCE = "reference"
    DEMAND = "demand"


class EdgeKind(str, Enum):
    PIPE = "pipe"
    HEAT_EXCHANGER = "heat_exchanger"


@dataclass(frozen=True)
class ElectricalNode:
    id: str
    kind: ElectricalNodeKind
    base_voltage: float  # V, line-to-line
    p_load: float = 0.0  # W, consumption positive
    q_load: float = 0.0  # var
    vm_setpoint: float = 1.0  # p.u., slack only
    va_setpoint: float = 0.0  # rad, slack only

    def __post_init__(self):
        if self.base_voltage <= 0:
            raise ValueError(f"node {self.id}: base voltage must be positive")


@dataclass(frozen=True)
class Transformer:
    rated_power: float  # VA
    v_sc_percent: float
    vr_percent: float = 0.0
    ratio: float = 1.0  # off-nominal tap on the from (high-voltage) side

    def __post_init__(self):
        if self.rated_power <= 0:
            raise ValueError("transformer rated power must be positive")
        if self.v_sc_percent <= 0 or self.vr_percent < 0 or self.vr_percent > self.v_sc_percent:
            raise ValueError("transformer requires 0 <= vr_percent <= v_sc_percent, v_sc_percent > 0")
        if self.ratio <= 0:
            raise ValueError("transformer ratio must be positive")


@dataclass(frozen=True)
class ElectricalEdge:
    id: str
    from_node: str
    to_node: str
    resistance_per_km: float = 0.0  # ohm/km
    reactance_per_km: float = 0.0  # ohm/km
    length_km: float = 1.0
    rating: float = np.inf  # A, for loading
    transformer: Transformer | None = None

    def __post_init__(self):
        if self.transformer is not None:
            return
        if self.length_km <= 0:
            raise ValueError(f"edge {self.id}: length must be positive")
        if self.resistance_per_km < 0:
            raise ValueError(f"edge {self.id}: resistance must be non-negative")
        # zero series impedance is caught by the admittance builder ("singular branch")


@dataclass(frozen=True)
class HydraulicNode:
    id: str
    kind: HydraulicNodeKind
    pressure_nominal: float  # Pa, absolute
    demand_mass_flow: float = 0.0  # kg/s, withdrawal positive
    height: float = 0.0  # m
    fluid_temperature: float = 283.15  # K; supply temperature on the heat reference node


@dataclass(frozen=True)
class Pipe:
    id: str
    from_node: str
    to_node: str
    diameter: float  # m
    length: float  # m
    roughness: float = 1e-4  # m
    local_loss_zeta: float = 0.0
    u_value: float = 0.0  # W/(m^2 K), heat layer only
    ambient_temperature: float = 283.15  # K, heat layer only
    kind: EdgeKind = EdgeKind.PIPE
    heat_extraction: float = 0.0  # W, heat exchangers only
    mdot_hint: float | None = None

    def __post_init__(self):
        if self.diameter <= 0:
            raise ValueError(f"pipe {self.id}: diameter must be positive")
        if self.length <= 0:
            raise ValueError(f"pipe {self.id}: length must be positive")
        if self.roughness < 0:
            raise ValueError(f"pipe {self.id}: roughness must be non-negative")
        if self.local_loss_zeta < 0:
            raise ValueError(f"pipe {self.id}: zeta must be non-negative")
        if self.u_value < 0:
            raise ValueError(f"pipe {self.id}: u_value must be non-negative")

    @property
    def area(self) -> float:
        return np.pi * self.diameter**2 / 4.0


def _index(items) -> dict[str, int]:
    out: dict[str, int] = {}
    for i, item in enumerate(items):
        out.setdefault(item.id, i)
    return out


class _LayerArrays:
    """Index arrays common to every carrier layer."""

    nodes: tuple
    edges: tuple

    @cached_property
    def node_index(self) -> dict[str, int]:
        return _index(self.nodes)

    @cached_property
    def edge_index(self) -> dict[str, int]:
        return _index(self.edges)

    @cached_property
    def from_idx(self) -> np.ndarray:
        return np.array([self.node_index[e.from_node] for e in self.edges], dtype=np.int64)

    @cached_property
    def to_idx(self) -> np.ndarray:
        return np.array([self.node_index[e.to_node] for e in self.edges], dtype=np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class ElectricalLayer(_LayerArrays):
    nodes: tuple[ElectricalNode, ...]
    edges: tuple[ElectricalEdge, ...]
    kind = LayerKind.ELECTRICITY

    @cached_property
    def reference_nodes(self) -> np.ndarray:
        return np.array([i for i, n in enumerate(self.nodes) if n.kind is ElectricalNodeKind.SLACK],
                        dtype=np.int64)

    @property
    def slack(self) -> int:
        return int(self.reference_nodes[0])

    @cached_property
    def pq(self) -> np.ndarray:
        return np.array([i for i, n in enumerate(self.nodes) if n.kind is not ElectricalNodeKind.SLACK],
                        dtype=np.int64)

    @cached_property
    def lines(self) -> tuple[ElectricalEdge, ...]:
        return tuple(e for e in self.edges if e.transformer is None)

    @cached_property
    def transformers(self) -> tuple[ElectricalEdge, ...]:
        return tuple(e for e in self.edges if e.transformer is not None)


@dataclass(frozen=True)
class HydraulicLayer(_LayerArrays):
    """Gas or district-heating layer; both share the pipe/node schema."""

    kind: LayerKind
    nodes: tuple[HydraulicNode, ...]
    edges: tuple[Pipe, ...]
    fluid: FluidModel = field(default_factory=IdealGas)

    @cached_property
    def reference_nodes(self) -> np.ndarray:
        return np.array([i for i, n in enumerate(self.nodes) if n.kind is HydraulicNodeKind.REFERENCE],
                        dtype=np.int64)

    @property
    def reference(self) -> int:
        return int(self.reference_nodes[0])

    @cached_property
    def free_nodes(self) -> np.ndarray:
        ref = set(self.reference_nodes.tolist())
        return np.array([i for i in range(self.n_nodes) if i not in ref], dtype=np.int64)

    @property
    def reference_pressure(self) -> float:
        return self.nodes[self.reference].pressure_nominal

    @property
    def supply_temperature(self) -> float:
        return self.nodes[self.reference].fluid_temperature

    @cached_property
    def heights(self) -> np.ndarray:
        return np.array([n.height for n in self.nodes], dtype=float)

    @cached_property
    def diameter(self) -> np.ndarray:
        return np.array([e.diameter for e in self.edges], dtype=float)

    @cached_property
    def length(self) -> np.ndarray:
        return np.array([e.length for e in self.edges], dtype=float)

    @cached_property
    def roughness(self) -> np.ndarray:
        return np.array([e.roughness for e in self.edges], dtype=float)

    @cached_property
    def zeta(self) -> np.ndarray:
        return np.array([e.local_loss_zeta for e in self.edges], dtype=float)

    @cached_property
    def u_value(self) -> np.ndarray:
        return np.array([e.u_value for e in self.edges], dtype=float)

    @cached_property
    def ambient(self) -> np.ndarray:
        return np.array([e.ambient_temperature for e in self.edges], dtype=float)

    @cached_property
    def exchangers(self) -> np.ndarray:
        return np.array([i for i, e in enumerate(self.edges) if e.kind is EdgeKind.HEAT_EXCHANGER],
                        dtype=np.int64)

    @cached_property
    def pipes_only(self) -> np.ndarray:
        return np.array([i for i, e in enumerate(self.edges) if e.kind is EdgeKind.PIPE], dtype=np.int64)

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        return incidence_matrix(self)


@dataclass(frozen=True)
class ProfileBinding:
    """Scale an element's nominal load by a profile column."""

    layer: str
    element: str  # node id (electricity, gas, heat sinks) or heat-exchanger edge id
    profile: str


@dataclass(frozen=True)
class MultiEnergyNetwork:
    """Three carrier layers plus the coupling layer. Any carrier layer may be absent."""

    electricity: ElectricalLayer | None = None
    gas: HydraulicLayer | None = None
    heat: HydraulicLayer | None = None
    coupling: CouplingLayer = field(default_factory=CouplingLayer)
    base_mva: float = 1.0
    heat_return_temperature: float = 323.15  # K
    bindings: tuple[ProfileBinding, ...] = ()
    ambient_profile: str | None = None
    ambient_temperature: float = 283.15  # K, used when no ambient profile is bound
    name: str = ""

    def layer(self, kind: LayerKind | str):
        kind = LayerKind(kind)
        if kind is LayerKind.COUPLING:
            return self.coupling
        return getattr(self, kind.value)

    @property
    def carrier_layers(self) -> list:
        return [lay for lay in (self.electricity, self.gas, self.heat) if lay is not None]

    def without_coupling(self) -> "MultiEnergyNetwork":
        return replace(self, coupling=CouplingLayer())

    def only(self, kind: LayerKind | str) -> "MultiEnergyNetwork":
        """Standalone single-carrier network (coupling dropped)."""
        kind = LayerKind(kind)
        return replace(
            self,
            electricity=self.electricity if kind is LayerKind.ELECTRICITY else None,
            gas=self.gas if kind is LayerKind.GAS else None,
            heat=self.heat if kind is LayerKind.HEAT else None,
            coupling=CouplingLayer(),
            bindings=tuple(b for b in self.bindings if b.layer == kind.value),
        )


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "network ok"
        return "\n".join(self.violations)


def _check_layer(layer, report: ValidationReport) -> None:
    label = f"layer {layer.kind.label}"
    seen: set[str] = set()
    for n in layer.nodes:
        if n.id in seen:
            report.violations.append(f"{label}: duplicate node id {n.id!r}")
        seen.add(n.id)
    seen = set()
    for e in layer.edges:
        if e.id in seen:
            report.violations.append(f"{label}: duplicate edge id {e.id!r}")
        seen.add(e.id)

    node_ids = {n.id for n in layer.nodes}
    adjacency: dict[str, list[str]] = {n: [] for n in node_ids}
    for e in layer.edges:
        dangling = [end for end in (e.from_node, e.to_node) if end not in node_ids]
        for end in dangling:
            report.violations.append(f"{label}: edge {e.id!r} has dangling endpoint {end!r}")
        if dangling:
            continue
        if e.from_node == e.to_node:
            report.violations.append(f"{label}: edge {e.id!r} is a self-loop")
        adjacency[e.from_node].append(e.to_node)
        adjacency[e.to_node].append(e.from_node)

    refs = [layer.nodes[i].id for i in layer.reference_nodes]
    if not refs:
        report.violations.append(f"{label}: no reference node")
        return
    if len(refs) > 1:
        report.violations.append(f"{label}: {len(refs)} reference nodes, expected exactly one")

    reached = {refs[0]}
    queue = deque([refs[0]])
    while queue:
        for nxt in adjacency[queue.popleft()]:
            if nxt not in reached:
                reached.add(nxt)
                queue.append(nxt)
    for n in layer.nodes:
        if n.id not in reached:
            report.violations.append(f"{label}: node {n.id!r} is disconnected from the reference node")


def validate_topology(network: MultiEnergyNetwork) -> ValidationReport:
    """Collect every structural problem; never raises."""
    report = ValidationReport()
    for layer in network.carrier_layers:
        _check_layer(layer, report)
    if network.heat is not None and not isinstance(network.heat.fluid, IncompressibleLiquid):
        report.violations.append("layer Heat: fluid must be an incompressible liquid")
    if network.gas is not None and not isinstance(network.gas.fluid, IdealGas):
        report.violations.append("layer Gas: fluid must be an ideal gas")
    report.violations.extend(network.coupling.check(network))
    return report


def incidence_matrix(layer) -> sp.csr_matrix:
    """Signed node-edge incidence: +1 where the edge leaves the node, -1 where it enters."""
    n, b = layer.n_nodes, layer.n_edges
    cols = np.arange(b)
    rows = np.concatenate([layer.from_idx, layer.to_idx])
    vals = np.concatenate([np.ones(b), -np.ones(b)])
    return sp.csr_matrix((vals, (rows, np.concatenate([cols, cols]))), shape=(n, b))


# (domain, layer, quantity) in global block order
BLOCK_ORDER: tuple[tuple[str, str, str], ...] = (
    ("E", "electricity", "vm"),
    ("E", "electricity", "va"),
    ("G", "gas", "p"),
    ("G", "gas", "mdot"),
    ("H_hy", "heat", "p"),
    ("H_hy", "heat", "mdot"),
    ("H_th", "heat", "t_node"),
    ("H_th", "heat", "t_out"),
)
DOMAINS = ("E", "G", "H_hy", "H_th")


@dataclass(frozen=True)
class UnknownBlock:
    domain: str
    layer: str
    quantity: str
    elements: np.ndarray  # node or edge positions within the layer
    start: int

    @property
    def stop(self) -> int:
        return self.start + len(self.elements)

    @property
    def slice(self) -> slice:
        return slice(self.start, self.stop)


@dataclass(frozen=True)
class UnknownIndex:
    """Bijection between (layer, quantity, element) and global state positions."""

    blocks: tuple[UnknownBlock, ...]

    @property
    def size(self) -> int:
        return self.blocks[-1].stop if self.blocks else 0

    def block(self, layer: str, quantity: str) -> UnknownBlock:
        for blk in self.blocks:
            if blk.layer == layer and blk.quantity == quantity:
                return blk
        raise KeyError((layer, quantity))

    def slice(self, layer: str, quantity: str) -> slice:
        return self.block(layer, quantity).slice

    def domain_slice(self, domain: str) -> slice:
        blks = [b for b in self.blocks if b.domain == domain]
        return slice(blks[0].start, blks[-1].stop)

    @cached_property
    def _positions(self) -> dict[tuple[str, str, int], int]:
        return {key: pos for pos, key in enumerate(self.keys)}

    @cached_property
    def keys(self) -> list[tuple[str, str, int]]:
        return [(b.layer, b.quantity, int(e)) for b in self.blocks for e in b.elements]

    def position(self, layer: str, quantity: str, element: int) -> int:
        return self._positions[(layer, quantity, element)]

    def key(self, position: int) -> tuple[str, str, int]:
        return self.keys[position]


def ordered_unknowns(network: MultiEnergyNetwork) -> UnknownIndex:
    """Global unknown ordering [|V|, delta, p, mdot, p_H, mdot_H, T_n, T_out].

    Slack voltage, reference pressures and the fixed supply temperature are
    boundary values and never appear. Absent layers contribute no block.
    """
    blocks: list[UnknownBlock] = []
    start = 0
    for domain, layer_name, quantity in BLOCK_ORDER:
        layer = getattr(network, layer_name)
        if layer is None:
            continue
        if quantity in ("vm", "va"):
            elements = layer.pq
        elif quantity in ("p", "t_node"):
            elements = layer.free_nodes
        else:
            elements = np.arange(layer.n_edges, dtype=np.int64)
        blocks.append(UnknownBlock(domain, layer_name, quantity, elements, start))
        start += len(elements)
    return UnknownIndex(tuple(blocks))
