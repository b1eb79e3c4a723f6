"""Network documents (JSON), load/weather profiles (CSV) and result export.

File units follow the attribute names of the network description: kV, bar,
km, mm, degrees and Kelvin. Everything is converted to SI (V, Pa, m, rad, K)
on load and back on save; the back-conversion is chosen so that
load -> save -> load reproduces the in-memory network exactly.
"""

from __future__ import annotations

import csv
import decimal
import json
import math
import re
import warnings
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from mesflow.coupling import CarnotCOP, CouplingDevice, CouplingLayer, DeviceKind, TableCOP
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
    ProfileBinding,
    Transformer,
    validate_topology,
)

SCHEMA_VERSION = 1
PROFILE_PEAK_TOLERANCE = 1.05
LOAD_POWER_FACTOR = 0.93  # inductive; applied when a load gives P only
LOAD_Q_PER_P = math.tan(math.acos(LOAD_POWER_FACTOR))


class NetworkFormatError(ValueError):
    """Every schema violation found in a document, each with its location."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid network document:\n  " + "\n  ".join(self.errors))


class NetworkFormatWarning(UserWarning):
    pass


class ProfileFormatError(ValueError):
    pass


# -- unit conversion ----------------------------------------------------
@dataclass(frozen=True)
class _Unit:
    to_si: Callable[[float], float]
    from_si: Callable[[float], float]

    def dump(self, si: float) -> float:
        """File value whose conversion gives back exactly ``si``."""
        if not math.isfinite(si):
            return si
        guess = self.from_si(si)
        if self.to_si(guess) == si:
            return guess
        lo = hi = guess
        for _ in range(64):
            lo, hi = math.nextafter(lo, -math.inf), math.nextafter(hi, math.inf)
            for cand in (lo, hi):
                if self.to_si(cand) == si:
                    return cand
        return guess


_DECIMAL = decimal.Context(prec=40)


def _scale(factor: float) -> _Unit:
    """Multiply by ``factor`` in decimal, so 1.1 bar is exactly 110000 Pa."""
    f = decimal.Decimal(repr(factor))

    def to_si(v):
        return float(_DECIMAL.multiply(decimal.Decimal(repr(float(v))), f))

    def from_si(v):
        return float(_DECIMAL.divide(decimal.Decimal(repr(float(v))), f))

    return _Unit(to_si, from_si)


def _divide(divisor: float) -> _Unit:
    inverse = _scale(divisor)
    return _Unit(inverse.from_si, inverse.to_si)


IDENTITY = _Unit(lambda v: v, lambda v: v)
KV = _scale(1e3)
BAR = _scale(1e5)
KM = _scale(1e3)
MM = _divide(1e3)
KW = _scale(1e3)
MW = _scale(1e6)
KA = _scale(1e3)
MVA = _scale(1e6)
DEGREE = _Unit(math.radians, math.degrees)
KWH_PER_KG = _scale(3.6e6)


# -- reading ------------------------------------------------------------
class _Reader:
    """Collects located errors while pulling typed fields out of plain dicts."""

    def __init__(self, text: str):
        self.text = text
        self.errors: list[str] = []

    def line_of(self, ident: Any) -> int | None:
        if ident is None:
            return None
        m = re.search(r'"id"\s*:\s*' + re.escape(json.dumps(ident)), self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def where(self, path: str, obj: dict | None) -> str:
        line = self.line_of(obj.get("id")) if isinstance(obj, dict) else None
        return f"{path} (line {line})" if line else path

    def error(self, path: str, obj, msg: str) -> None:
        self.errors.append(f"{self.where(path, obj)}: {msg}")

    def check_fields(self, path: str, obj: dict, allowed: Iterable[str]) -> None:
        for key in obj:
            if key not in allowed:
                warnings.warn(f"{self.where(path, obj)}: unknown field {key!r} ignored", NetworkFormatWarning,
                              stacklevel=4)

    def get(self, path: str, obj: dict, key: str, kind=float, required: bool = True, default=None,
            unit: _Unit = IDENTITY):
        if key not in obj or obj[key] is None:
            if required:
                self.error(f"{path}.{key}", obj, "missing required field")
            return default
        value = obj[key]
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                if value in ("inf", "Infinity"):
                    return math.inf
                self.error(f"{path}.{key}", obj, f"expected a number, got {value!r}")
                return default
            return unit.to_si(float(value))
        if kind is str:
            if not isinstance(value, str):
                self.error(f"{path}.{key}", obj, f"expected a string, got {value!r}")
                return default
            return value
        return value

    def items(self, path: str, obj: dict, key: str, required: bool = True) -> list:
        value = obj.get(key)
        if value is None:
            if required:
                self.error(f"{path}.{key}", obj, "missing required field")
            return []
        if not isinstance(value, list):
            self.error(f"{path}.{key}", obj, "expected a list")
            return []
        return value


def _construct(reader: _Reader, path: str, obj, factory, **kwargs):
    try:
        return factory(**kwargs)
    except (ValueError, TypeError) as exc:
        reader.error(path, obj, str(exc))
        return None


_EL_NODE_FIELDS = {"id", "type", "voltage", "vm_pu", "va_degree", "load"}
_EL_EDGE_FIELDS = {"id", "from", "to", "r_ohm_per_km", "x_ohm_per_km", "length_km", "max_i_ka", "transformer"}
_TRAFO_FIELDS = {"sn_mva", "vk_percent", "vkr_percent", "ratio"}
_HY_NODE_FIELDS = {"id", "type", "pn_bar", "mdot", "tfluid_k", "height_m"}
_HY_EDGE_FIELDS = {"id", "from", "to", "type", "diameter_m", "length_km", "k_mm", "zeta", "mdot",
                   "u_w_per_m2k", "text_k", "heat_w"}
_DEVICE_FIELDS = {"id", "kind", "from", "to", "rating_kw", "efficiency", "cop", "setpoint_profile"}
_TOP_FIELDS = {"schema_version", "name", "base_mva", "heat_return_temperature_k", "ambient_temperature_k",
               "ambient_profile", "electricity", "gas", "heat", "coupling", "bindings"}


def _enum(reader, path, obj, key, enum, default=None):
    raw = reader.get(path, obj, key, kind=str, required=default is None, default=default)
    if raw is None:
        return None
    try:
        return enum(raw)
    except ValueError:
        reader.error(f"{path}.{key}", obj, f"unknown value {raw!r} (expected one of {[e.value for e in enum]})")
        return None


def _read_electricity(reader: _Reader, doc: dict) -> ElectricalLayer | None:
    nodes, edges = [], []
    for i, raw in enumerate(reader.items("electricity", doc, "nodes")):
        path = f"electricity.nodes[{i}]"
        if not isinstance(raw, dict):
            reader.error(path, None, "expected an object")
            continue
        reader.check_fields(path, raw, _EL_NODE_FIELDS)
        load = raw.get("load", {})
        if not isinstance(load, dict):
            reader.error(path + ".load", raw, "expected an object")
            load = {}
        node = dict(
            id=reader.get(path, raw, "id", str),
            kind=_enum(reader, path, raw, "type", ElectricalNodeKind),
            base_voltage=reader.get(path, raw, "voltage", unit=KV),
            p_load=reader.get(path + ".load", load, "p_mw", required=False, default=0.0, unit=MW),
            q_load=reader.get(path + ".load", load, "q_mvar", required=False, default=None, unit=MW),
            vm_setpoint=reader.get(path, raw, "vm_pu", required=False, default=1.0),
            va_setpoint=reader.get(path, raw, "va_degree", required=False, default=0.0, unit=DEGREE),
        )
        if node["q_load"] is None:
            node["q_load"] = node["p_load"] * LOAD_Q_PER_P if node["p_load"] else 0.0
        if None not in node.values():
            built = _construct(reader, path, raw, ElectricalNode, **node)
            if built:
                nodes.append(built)
    for i, raw in enumerate(reader.items("electricity", doc, "edges")):
        path = f"electricity.edges[{i}]"
        if not isinstance(raw, dict):
            reader.error(path, None, "expected an object")
            continue
        reader.check_fields(path, raw, _EL_EDGE_FIELDS)
        common = dict(id=reader.get(path, raw, "id", str), from_node=reader.get(path, raw, "from", str),
                      to_node=reader.get(path, raw, "to", str))
        tr_raw = raw.get("transformer")
        if tr_raw is not None:
            tpath = path + ".transformer"
            if not isinstance(tr_raw, dict):
                reader.error(tpath, raw, "expected an object")
                continue
            reader.check_fields(tpath, tr_raw, _TRAFO_FIELDS)
            tr = dict(rated_power=reader.get(tpath, tr_raw, "sn_mva", unit=MVA),
                      v_sc_percent=reader.get(tpath, tr_raw, "vk_percent"),
                      vr_percent=reader.get(tpath, tr_raw, "vkr_percent", required=False, default=0.0),
                      ratio=reader.get(tpath, tr_raw, "ratio", required=False, default=1.0))
            if None in tr.values() or None in common.values():
                continue
            trafo = _construct(reader, tpath, raw, Transformer, **tr)
            if trafo:
                edge = _construct(reader, path, raw, ElectricalEdge, **common, transformer=trafo)
                if edge:
                    edges.append(edge)
            continue
        line = dict(**common,
                    resistance_per_km=reader.get(path, raw, "r_ohm_per_km"),
                    reactance_per_km=reader.get(path, raw, "x_ohm_per_km", required=False, default=0.0),
                    length_km=reader.get(path, raw, "length_km"),
                    rating=reader.get(path, raw, "max_i_ka", required=False, default=math.inf, unit=KA))
        if None not in line.values():
            edge = _construct(reader, path, raw, ElectricalEdge, **line)
            if edge:
                edges.append(edge)
    return ElectricalLayer(tuple(nodes), tuple(edges))


def _read_fluid(reader: _Reader, name: str, raw: dict | None, ref_temperature: float):
    raw = raw or {}
    path = f"{name}.fluid"
    if name == "gas":
        reader.check_fields(path, raw, {"molar_mass_kg_per_mol", "viscosity_pa_s", "heating_value_kwh_per_kg"})
        base = IdealGas()
        return IdealGas(
            molar_mass=reader.get(path, raw, "molar_mass_kg_per_mol", required=False, default=base.molar_mass),
            temperature=ref_temperature,
            viscosity=reader.get(path, raw, "viscosity_pa_s", required=False, default=base.viscosity),
            heating_value=reader.get(path, raw, "heating_value_kwh_per_kg", required=False,
                                     default=base.heating_value, unit=KWH_PER_KG),
        )
    reader.check_fields(path, raw, {"density_kg_per_m3", "cp_j_per_kgk", "viscosity_pa_s"})
    base = IncompressibleLiquid()
    return IncompressibleLiquid(
        density_value=reader.get(path, raw, "density_kg_per_m3", required=False, default=base.density_value),
        cp=reader.get(path, raw, "cp_j_per_kgk", required=False, default=base.cp),
        viscosity=reader.get(path, raw, "viscosity_pa_s", required=False, default=base.viscosity),
    )


def _read_hydraulic(reader: _Reader, name: str, doc: dict) -> HydraulicLayer:
    nodes, edges = [], []
    for i, raw in enumerate(reader.items(name, doc, "nodes")):
        path = f"{name}.nodes[{i}]"
        if not isinstance(raw, dict):
            reader.error(path, None, "expected an object")
            continue
        reader.check_fields(path, raw, _HY_NODE_FIELDS)
        node = dict(
            id=reader.get(path, raw, "id", str),
            kind=_enum(reader, path, raw, "type", HydraulicNodeKind),
            pressure_nominal=reader.get(path, raw, "pn_bar", unit=BAR),
            demand_mass_flow=reader.get(path, raw, "mdot", required=False, default=0.0),
            height=reader.get(path, raw, "height_m", required=False, default=0.0),
            fluid_temperature=reader.get(path, raw, "tfluid_k", required=False, default=283.15),
        )
        if None not in node.values():
            built = _construct(reader, path, raw, HydraulicNode, **node)
            if built:
                nodes.append(built)
    for i, raw in enumerate(reader.items(name, doc, "edges")):
        path = f"{name}.edges[{i}]"
        if not isinstance(raw, dict):
            reader.error(path, None, "expected an object")
            continue
        reader.check_fields(path, raw, _HY_EDGE_FIELDS)
        pipe = dict(
            id=reader.get(path, raw, "id", str),
            from_node=reader.get(path, raw, "from", str),
            to_node=reader.get(path, raw, "to", str),
            diameter=reader.get(path, raw, "diameter_m"),
            length=reader.get(path, raw, "length_km", unit=KM),
            roughness=reader.get(path, raw, "k_mm", required=False, default=0.1, unit=MM),
            local_loss_zeta=reader.get(path, raw, "zeta", required=False, default=0.0),
            u_value=reader.get(path, raw, "u_w_per_m2k", required=False, default=0.0),
            ambient_temperature=reader.get(path, raw, "text_k", required=False, default=283.15),
            kind=_enum(reader, path, raw, "type", EdgeKind, default="pipe"),
            heat_extraction=reader.get(path, raw, "heat_w", required=False, default=0.0),
        )
        hint = reader.get(path, raw, "mdot", required=False, default=None)
        if None not in pipe.values():
            built = _construct(reader, path, raw, Pipe, **pipe, mdot_hint=hint)
            if built:
                edges.append(built)
    refs = [n for n in nodes if n.kind is HydraulicNodeKind.REFERENCE]
    ref_t = refs[0].fluid_temperature if refs else 283.15
    fluid = _read_fluid(reader, name, doc.get("fluid"), ref_t)
    return HydraulicLayer(LayerKind(name), tuple(nodes), tuple(edges), fluid)


def _parse_endpoint(reader, path, raw, key):
    value = reader.get(path, raw, key, str)
    if value is None:
        return None
    if ":" not in value:
        reader.error(f"{path}.{key}", raw, f"expected 'layer:node', got {value!r}")
        return None
    layer, node = value.split(":", 1)
    return layer, node


def _read_cop(reader, path, raw, model):
    if model is None:
        return None
    if not isinstance(model, dict) or len(model) != 1 or not ({"table", "carnot"} & set(model)):
        reader.error(path + ".cop", raw, "expected {'table': [[T_k, cop], ...]} or {'carnot': {...}}")
        return None
    try:
        if "table" in model:
            return TableCOP(tuple((float(t), float(c)) for t, c in model["table"]))
        c = model["carnot"]
        return CarnotCOP(quality=float(c["quality"]), sink_temperature=float(c["sink_temperature_k"]),
                         cop_min=float(c.get("cop_min", 1.0)), cop_max=float(c.get("cop_max", 10.0)))
    except (KeyError, TypeError, ValueError) as exc:
        reader.error(path + ".cop", raw, f"invalid COP model: {exc}")
        return None


def _read_coupling(reader: _Reader, doc: dict) -> CouplingLayer:
    devices = []
    for i, raw in enumerate(reader.items("coupling", doc, "devices", required=False)):
        path = f"coupling.devices[{i}]"
        if not isinstance(raw, dict):
            reader.error(path, None, "expected an object")
            continue
        reader.check_fields(path, raw, _DEVICE_FIELDS)
        dev = dict(
            id=reader.get(path, raw, "id", str),
            kind=_enum(reader, path, raw, "kind", DeviceKind),
            from_node=_parse_endpoint(reader, path, raw, "from"),
            to_node=_parse_endpoint(reader, path, raw, "to"),
            rating=reader.get(path, raw, "rating_kw", unit=KW),
        )
        extra = dict(
            efficiency=reader.get(path, raw, "efficiency", required=False),
            cop=_read_cop(reader, path, raw, raw.get("cop")),
            setpoint_profile=reader.get(path, raw, "setpoint_profile", str, required=False),
        )
        if None not in dev.values():
            built = _construct(reader, path, raw, CouplingDevice, **dev, **extra)
            if built:
                devices.append(built)
    return CouplingLayer.from_devices(devices)


def parse_network(text: str, source: str = "<string>") -> MultiEnergyNetwork:
    """Build and validate a network from document text."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError([f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    reader = _Reader(text)
    if not isinstance(doc, dict):
        raise NetworkFormatError([f"{source}: top level must be an object"])
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise NetworkFormatError([f"schema_version: unsupported value {version!r} (expected {SCHEMA_VERSION})"])
    reader.check_fields("document", doc, _TOP_FIELDS)
    layers: dict[str, Any] = {}
    for name in ("electricity", "gas", "heat"):
        sub = doc.get(name)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            reader.error(name, None, "expected an object")
            continue
        reader.check_fields(name, sub, {"nodes", "edges", "fluid"})
        layers[name] = _read_electricity(reader, sub) if name == "electricity" else _read_hydraulic(reader, name, sub)
    coupling = _read_coupling(reader, doc.get("coupling") or {})
    bindings = []
    for i, raw in enumerate(doc.get("bindings") or []):
        path = f"bindings[{i}]"
        if not isinstance(raw, dict):
            reader.error(path, None, "expected an object")
            continue
        reader.check_fields(path, raw, {"layer", "element", "profile"})
        vals = [reader.get(path, raw, k, str) for k in ("layer", "element", "profile")]
        if None not in vals:
            bindings.append(ProfileBinding(*vals))
    top = dict(
        base_mva=reader.get("document", doc, "base_mva", required=False, default=1.0),
        heat_return_temperature=reader.get("document", doc, "heat_return_temperature_k", required=False,
                                           default=323.15),
        ambient_temperature=reader.get("document", doc, "ambient_temperature_k", required=False, default=283.15),
        ambient_profile=reader.get("document", doc, "ambient_profile", str, required=False),
        name=reader.get("document", doc, "name", str, required=False, default=""),
    )
    if reader.errors:
        raise NetworkFormatError(reader.errors)
    network = MultiEnergyNetwork(**layers, coupling=coupling, bindings=tuple(bindings), **top)
    errors = _binding_errors(network)
    report = validate_topology(network)
    errors = [_locate(reader, v) for v in report.violations] + errors
    if errors:
        raise NetworkFormatError(errors)
    return network


def _locate(reader: _Reader, message: str) -> str:
    """Append the document line of the first element a topology message names."""
    m = re.search(r"'([^']+)'", message) or re.search(r"\(device (\S+)\)", message)
    line = reader.line_of(m.group(1)) if m else None
    return f"{message} (line {line})" if line else message


def _binding_errors(network: MultiEnergyNetwork) -> list[str]:
    out = []
    for i, b in enumerate(network.bindings):
        layer = getattr(network, b.layer, None) if b.layer in ("electricity", "gas", "heat") else None
        if layer is None:
            out.append(f"bindings[{i}]: unknown layer {b.layer!r}")
        elif b.element not in layer.node_index and b.element not in layer.edge_index:
            out.append(f"bindings[{i}]: unknown element {b.element!r} in layer {b.layer}")
    return out


def load_network(path: str | Path) -> MultiEnergyNetwork:
    path = Path(path)
    return parse_network(path.read_text(encoding="utf-8"), source=str(path))


# -- writing ------------------------------------------------------------
def _drop_defaults(d: dict, defaults: dict) -> dict:
    return {k: v for k, v in d.items() if not (k in defaults and defaults[k] == v)}


def network_to_document(network: MultiEnergyNetwork) -> dict:
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "name": network.name,
                           "base_mva": network.base_mva,
                           "heat_return_temperature_k": network.heat_return_temperature,
                           "ambient_temperature_k": network.ambient_temperature}
    if network.ambient_profile:
        doc["ambient_profile"] = network.ambient_profile
    el = network.electricity
    if el is not None:
        nodes = []
        for n in el.nodes:
            d = {"id": n.id, "type": n.kind.value, "voltage": KV.dump(n.base_voltage)}
            if n.kind is ElectricalNodeKind.SLACK:
                d["vm_pu"] = n.vm_setpoint
                d["va_degree"] = DEGREE.dump(n.va_setpoint)
            if n.p_load or n.q_load:
                d["load"] = {"p_mw": MW.dump(n.p_load), "q_mvar": MW.dump(n.q_load)}
            nodes.append(d)
        edges = []
        for e in el.edges:
            d = {"id": e.id, "from": e.from_node, "to": e.to_node}
            if e.transformer is not None:
                t = e.transformer
                d["transformer"] = {"sn_mva": MVA.dump(t.rated_power), "vk_percent": t.v_sc_percent,
                                    "vkr_percent": t.vr_percent, "ratio": t.ratio}
            else:
                d.update(r_ohm_per_km=e.resistance_per_km, x_ohm_per_km=e.reactance_per_km,
                         length_km=e.length_km)
                if math.isfinite(e.rating):
                    d["max_i_ka"] = KA.dump(e.rating)
            edges.append(d)
        doc["electricity"] = {"nodes": nodes, "edges": edges}
    for name in ("gas", "heat"):
        layer = getattr(network, name)
        if layer is None:
            continue
        nodes = [_drop_defaults({"id": n.id, "type": n.kind.value, "pn_bar": BAR.dump(n.pressure_nominal),
                                 "mdot": n.demand_mass_flow, "height_m": n.height,
                                 "tfluid_k": n.fluid_temperature},
                                {"mdot": 0.0, "height_m": 0.0})
                 for n in layer.nodes]
        edges = []
        for e in layer.edges:
            d = {"id": e.id, "from": e.from_node, "to": e.to_node, "type": e.kind.value,
                 "diameter_m": e.diameter, "length_km": KM.dump(e.length), "k_mm": MM.dump(e.roughness),
                 "zeta": e.local_loss_zeta, "u_w_per_m2k": e.u_value, "text_k": e.ambient_temperature,
                 "heat_w": e.heat_extraction, "mdot": e.mdot_hint}
            defaults = {"zeta": 0.0, "heat_w": 0.0, "mdot": None}
            if name == "gas":
                defaults.update(u_w_per_m2k=0.0, text_k=283.15, type="pipe")
            edges.append(_drop_defaults(d, defaults))
        f = layer.fluid
        if isinstance(f, IdealGas):
            fluid = {"molar_mass_kg_per_mol": f.molar_mass, "viscosity_pa_s": f.viscosity,
                     "heating_value_kwh_per_kg": KWH_PER_KG.dump(f.heating_value)}
        else:
            fluid = {"density_kg_per_m3": f.density_value, "cp_j_per_kgk": f.cp, "viscosity_pa_s": f.viscosity}
        doc[name] = {"fluid": fluid, "nodes": nodes, "edges": edges}
    devices = []
    for dev in network.coupling.devices:
        d = {"id": dev.id, "kind": dev.kind.value, "from": ":".join(dev.from_node), "to": ":".join(dev.to_node),
             "rating_kw": KW.dump(dev.rating)}
        if dev.efficiency is not None:
            d["efficiency"] = dev.efficiency
        if isinstance(dev.cop, TableCOP):
            d["cop"] = {"table": [list(p) for p in dev.cop.points]}
        elif isinstance(dev.cop, CarnotCOP):
            d["cop"] = {"carnot": {"quality": dev.cop.quality, "sink_temperature_k": dev.cop.sink_temperature,
                                   "cop_min": dev.cop.cop_min, "cop_max": dev.cop.cop_max}}
        if dev.setpoint_profile:
            d["setpoint_profile"] = dev.setpoint_profile
        devices.append(d)
    doc["coupling"] = {"devices": devices}
    doc["bindings"] = [{"layer": b.layer, "element": b.element, "profile": b.profile} for b in network.bindings]
    return doc


def dumps_network(network: MultiEnergyNetwork) -> str:
    return json.dumps(network_to_document(network), indent=1) + "\n"


def save_network(network: MultiEnergyNetwork, path: str | Path) -> None:
    Path(path).write_text(dumps_network(network), encoding="utf-8")


# -- profiles -----------------------------------------------------------
def is_physical_column(name: str) -> bool:
    """Columns suffixed ``_k`` carry weather data in Kelvin; all others are normalized."""
    return name.endswith("_k")


@dataclass(frozen=True)
class ProfileSet:
    timestamps: tuple[datetime, ...]
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        n = len(self.timestamps)
        if n == 0:
            raise ProfileFormatError("profile set has no rows")
        for name, col in self.columns.items():
            if len(col) != n:
                raise ProfileFormatError(f"column {name!r} has {len(col)} rows, expected {n}")
            bad = np.flatnonzero(~np.isfinite(col))
            if len(bad):
                raise ProfileFormatError(f"missing value in column {name!r} at row {bad[0] + 1}")
            if not is_physical_column(name):
                out = np.flatnonzero((col < 0) | (col > PROFILE_PEAK_TOLERANCE))
                if len(out):
                    raise ProfileFormatError(
                        f"normalized column {name!r} out of [0, {PROFILE_PEAK_TOLERANCE}] at row {out[0] + 1}")
        if n > 1:
            steps = np.diff(np.array(self.timestamps, dtype="datetime64[us]"))
            bad = np.flatnonzero(steps != steps[0])
            if steps[0] <= np.timedelta64(0):
                raise ProfileFormatError("timestamps must increase")
            if len(bad):
                k = int(bad[0]) + 1
                raise ProfileFormatError(
                    f"non-uniform timestep at row {k + 1} ({self.timestamps[k].isoformat()}): "
                    f"expected {self.step}, got {self.timestamps[k] - self.timestamps[k - 1]}")

    @property
    def n_steps(self) -> int:
        return len(self.timestamps)

    @property
    def step(self) -> timedelta:
        return self.timestamps[1] - self.timestamps[0] if self.n_steps > 1 else timedelta(minutes=15)

    def value(self, column: str, step: int) -> float:
        try:
            return float(self.columns[column][step])
        except KeyError:
            raise KeyError(f"profile column {column!r} not found") from None

    def timestamp_str(self, step: int) -> str:
        return self.timestamps[step].isoformat()

    def index_of(self, timestamp: str | datetime) -> int:
        ts = datetime.fromisoformat(timestamp) if isinstance(timestamp, str) else timestamp
        try:
            return self.timestamps.index(ts)
        except ValueError:
            raise KeyError(f"timestamp {ts.isoformat()} not in profiles "
                           f"({self.timestamps[0].isoformat()} .. {self.timestamps[-1].isoformat()})") from None

    def missing_columns(self, network: MultiEnergyNetwork) -> list[str]:
        wanted = {b.profile for b in network.bindings}
        wanted |= {d.setpoint_profile for d in network.coupling.devices if d.setpoint_profile}
        if network.ambient_profile:
            wanted.add(network.ambient_profile)
        return sorted(wanted - set(self.columns))

    def to_csv(self, path: str | Path) -> None:
        names = list(self.columns)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", *names])
            for i, ts in enumerate(self.timestamps):
                w.writerow([ts.isoformat(), *(repr(float(self.columns[c][i])) for c in names)])


def load_profiles(path: str | Path, delimiter: str | None = None) -> ProfileSet:
    """Read a delimiter-separated profile table whose first column holds ISO-8601 timestamps."""
    text = Path(path).read_text(encoding="utf-8")
    if delimiter is None:
        header = text.splitlines()[0] if text else ""
        delimiter = ";" if header.count(";") > header.count(",") else ","
    rows = list(csv.reader(text.splitlines(), delimiter=delimiter))
    if len(rows) < 2:
        raise ProfileFormatError(f"{path}: need a header row and at least one data row")
    names = [c.strip() for c in rows[0][1:]]
    stamps: list[datetime] = []
    data = np.empty((len(rows) - 1, len(names)))
    for r, row in enumerate(rows[1:], start=1):
        if len(row) != len(names) + 1:
            raise ProfileFormatError(f"{path}: row {r} has {len(row)} fields, expected {len(names) + 1}")
        try:
            stamps.append(datetime.fromisoformat(row[0].strip()))
        except ValueError:
            raise ProfileFormatError(f"{path}: row {r}: bad timestamp {row[0]!r}") from None
        for c, cell in enumerate(row[1:]):
            cell = cell.strip()
            try:
                value = float(cell) if cell else math.nan
            except ValueError:
                raise ProfileFormatError(f"{path}: row {r} column {names[c]!r}: not a number {cell!r}") from None
            if math.isnan(value):
                raise ProfileFormatError(f"{path}: missing value (NaN) in row {r} column {names[c]!r}")
            data[r - 1, c] = value
    try:
        return ProfileSet(tuple(stamps), {n: data[:, i].copy() for i, n in enumerate(names)})
    except ProfileFormatError as exc:
        raise ProfileFormatError(f"{path}: {exc}") from None


# -- results ------------------------------------------------------------
def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_table(rows: list[dict], path: Path) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    names = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([_fmt(row[n]) for n in names])


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=False) + "\n", encoding="utf-8")


def snapshot_summary(report) -> dict:
    return {
        "timestamp": report.timestamp,
        "converged": report.converged,
        "iterations": report.iterations,
        "final_norms": report.final_norms,
        "residual_history": report.residual_history,
        "summary": report.branch_results.summary,
        "devices": [
            {"id": b.device_id, "kind": b.kind.value, "input_node": b.input_node, "output_node": b.output_node,
             "input_w": b.input_power, "output_w": b.output_power, "factor": b.factor}
            for b in report.ledger
        ],
    }


SERIES_COLUMNS = ("min_vm_pu", "max_loading_percent", "min_gas_pressure_bar", "max_gas_pressure_drop_percent",
                  "min_heat_pressure_bar", "min_supply_temperature_k", "max_supply_temperature_k",
                  "heat_source_w", "slack_p_mw")


def series_row(report) -> dict:
    row = {"timestamp": report.timestamp or "", "converged": report.converged, "iterations": report.iterations}
    summary = report.branch_results.summary if report.branch_results else {}
    for col in SERIES_COLUMNS:
        if col in summary:
            row[col] = summary[col]
    return row


def series_summary(rows: list[dict]) -> dict:
    out: dict[str, Any] = {
        "steps": len(rows),
        "converged_steps": sum(1 for r in rows if r["converged"]),
        "mean_iterations": float(np.mean([r["iterations"] for r in rows])) if rows else 0.0,
        "max_iterations": max((r["iterations"] for r in rows), default=0),
        "worst_case": {},
    }
    # earliest step wins ties
    worst = {"min_vm_pu": 1.0, "max_loading_percent": -1.0, "min_gas_pressure_bar": 1.0,
             "min_supply_temperature_k": 1.0}
    for col, sign in worst.items():
        steps = [i for i, r in enumerate(rows) if col in r]
        if steps:
            i = min(steps, key=lambda k: (sign * rows[k][col], k))
            out["worst_case"][col] = {"value": rows[i][col], "timestamp": rows[i]["timestamp"]}
    return out


def write_results(reports, path: str | Path, fmt: str = "csv") -> list[Path]:
    """Write one snapshot (per-node/per-edge tables) or a series (one row per step).

    Passing a single report writes a snapshot; a list writes a series.
    Returns the written files in a fixed order.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written: list[Path] = []
    if not isinstance(reports, (list, tuple)):
        report = reports
        tables = report.branch_results.tables
        if fmt == "csv":
            for name in sorted(tables):
                p = out / f"{name}.csv"
                _write_table(tables[name], p)
                written.append(p)
        else:
            p = out / "tables.json"
            _write_json({k: tables[k] for k in sorted(tables)}, p)
            written.append(p)
        p = out / "summary.json"
        _write_json(snapshot_summary(report), p)
        written.append(p)
        return written
    if not reports:
        raise ValueError("no reports to write")
    rows = [series_row(r) for r in reports]
    if fmt == "csv":
        p = out / "series.csv"
        _write_table(rows, p)
    else:
        p = out / "series.json"
        _write_json(rows, p)
    written.append(p)
    p = out / "summary.json"
    _write_json(series_summary(rows), p)
    written.append(p)
    return written
