"""Deterministic synthetic networks and load profiles.

``table1`` mirrors the element counts and device ratings of a rural German
multi-energy district (295 electric nodes, 236 gas nodes, 132 heat nodes);
``small`` is a 5/4/4-node network for unit tests. Geometry and load values are
drawn from a seeded generator, so the output is a pure function of
(seed, scale).
"""

from __future__ import annotations

from datetime import datetime, timedelta

import numpy as np

from mesflow.coupling import CouplingDevice, CouplingLayer, DeviceKind, TableCOP
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
)
from mesflow.io import ProfileSet

SCALES = ("small", "table1")

# device ratings of the modelled district
CHP_RATING_W = 60e3
CHP_EFFICIENCY = 0.5
BOILER_RATING_W = 73e3
BOILER_EFFICIENCY = 0.977
HEAT_PUMP_RATING_W = 76.7e3

SUPPLY_TEMPERATURE_K = 353.15  # 80 degC
RETURN_TEMPERATURE_K = 323.15  # 50 degC
HEAT_MASS_FLOW = 9.0  # kg/s at nominal load
GAS_REFERENCE_PRESSURE = 1.1e5  # Pa absolute
HEAT_REFERENCE_PRESSURE = 6.0e5
GROUND_TEMPERATURE_K = 283.15

# cable types: (r ohm/km, x ohm/km, ampacity A)
NA2XS2Y_185 = (0.161, 0.117, 362.0)
NAYY_150 = (0.208, 0.080, 270.0)
NAYY_50 = (0.641, 0.085, 142.0)
POWER_FACTOR = 0.93  # inductive, all electrical loads

# (rated VA, v_sc %, v_r %, LV nodes incl. busbar, loads)
FEEDERS = (
    (0.25e6, 6.0, 1.46, 56, 37),
    (0.40e6, 6.0, 1.15, 90, 58),
    (0.63e6, 6.0, 1.00, 141, 92),
)
MV_NODES = 8
GAS_INTERNAL = 112
GAS_HOUSES = 123
GAS_DIAMETERS = (0.147, 0.11, 0.09, 0.063, 0.05)  # PE series, m
HEAT_TREE_NODES = 107  # incl. the supply node
HEAT_EXCHANGERS = 25
DN_SERIES = (0.04, 0.05, 0.065, 0.08, 0.1, 0.125, 0.15, 0.2)

# heat-pump COP over ambient temperature (air source, 80 degC supply)
HEAT_PUMP_COP = TableCOP(((253.15, 1.9), (263.15, 2.3), (273.15, 2.7), (283.15, 3.2), (293.15, 3.8)))

PROFILE_START = datetime(2016, 1, 18)
PROFILE_STEPS = 7 * 24 * 4
PROFILE_STEP = timedelta(minutes=15)
PEAK_TIME = datetime(2016, 1, 22, 8, 0)


def generate_fixture(seed: int = 0, scale: str = "table1") -> MultiEnergyNetwork:
    if scale == "small":
        return _small()
    if scale == "table1":
        return _table1(np.random.default_rng(seed))
    raise ValueError(f"unknown fixture scale {scale!r} (expected one of {SCALES})")


def _small() -> MultiEnergyNetwork:
    r, x, amp = NAYY_150
    el = ElectricalLayer(
        nodes=(
            ElectricalNode("e0", ElectricalNodeKind.SLACK, 20e3),
            ElectricalNode("e1", ElectricalNodeKind.PQ, 400.0),
            ElectricalNode("e2", ElectricalNodeKind.PQ, 400.0, p_load=5e3, q_load=1.2e3),
            ElectricalNode("e3", ElectricalNodeKind.PQ, 400.0, p_load=8e3, q_load=2.0e3),
            ElectricalNode("e4", ElectricalNodeKind.PQ, 400.0, p_load=6e3, q_load=1.5e3),
        ),
        edges=(
            ElectricalEdge("t1", "e0", "e1", transformer=Transformer(0.25e6, 6.0, 1.46)),
            ElectricalEdge("l12", "e1", "e2", r, x, 0.1, amp),
            ElectricalEdge("l23", "e2", "e3", r, x, 0.08, amp),
            ElectricalEdge("l24", "e2", "e4", r, x, 0.12, amp),
        ),
    )
    gas = HydraulicLayer(
        LayerKind.GAS,
        nodes=(
            HydraulicNode("g0", HydraulicNodeKind.REFERENCE, GAS_REFERENCE_PRESSURE, fluid_temperature=283.15),
            HydraulicNode("g1", HydraulicNodeKind.DEMAND, GAS_REFERENCE_PRESSURE, 0.0),
            HydraulicNode("g2", HydraulicNodeKind.DEMAND, GAS_REFERENCE_PRESSURE, 2.0e-3),
            HydraulicNode("g3", HydraulicNodeKind.DEMAND, GAS_REFERENCE_PRESSURE, 1.5e-3),
        ),
        edges=(
            Pipe("p01", "g0", "g1", 0.11, 300.0),
            Pipe("p12", "g1", "g2", 0.063, 200.0),
            Pipe("p13", "g1", "g3", 0.063, 250.0),
            Pipe("p23", "g2", "g3", 0.05, 150.0),
        ),
        fluid=IdealGas(),
    )
    heat = HydraulicLayer(
        LayerKind.HEAT,
        nodes=(
            HydraulicNode("h0", HydraulicNodeKind.REFERENCE, HEAT_REFERENCE_PRESSURE,
                          fluid_temperature=SUPPLY_TEMPERATURE_K),
            HydraulicNode("h1", HydraulicNodeKind.DEMAND, HEAT_REFERENCE_PRESSURE),
            HydraulicNode("h2", HydraulicNodeKind.DEMAND, HEAT_REFERENCE_PRESSURE),
            HydraulicNode("h3", HydraulicNodeKind.DEMAND, HEAT_REFERENCE_PRESSURE),
        ),
        edges=(
            Pipe("d01", "h0", "h1", 0.08, 400.0, u_value=0.4),
            Pipe("x12", "h1", "h2", 0.05, 10.0, kind=EdgeKind.HEAT_EXCHANGER, heat_extraction=50e3),
            Pipe("x13", "h1", "h3", 0.05, 10.0, kind=EdgeKind.HEAT_EXCHANGER, heat_extraction=30e3),
        ),
        fluid=IncompressibleLiquid(),
    )
    devices = (
        CouplingDevice("chp", DeviceKind.CHP_G2E, ("gas", "g2"), ("electricity", "e4"), 10e3,
                       efficiency=CHP_EFFICIENCY),
        CouplingDevice("boiler", DeviceKind.GAS_BOILER_G2H, ("gas", "g3"), ("heat", "h1"), 12e3,
                       efficiency=BOILER_EFFICIENCY),
        CouplingDevice("heat_pump", DeviceKind.HEAT_PUMP_E2H, ("electricity", "e3"), ("heat", "h1"), 8e3,
                       cop=HEAT_PUMP_COP),
    )
    return MultiEnergyNetwork(el, gas, heat, CouplingLayer.from_devices(devices),
                              heat_return_temperature=RETURN_TEMPERATURE_K, name="small")


def _radial_feeder(rng, prefix: str, n_nodes: int, n_branches: int):
    """Busbar plus ``n_nodes - 1`` nodes on ``n_branches`` radial strands.

    Returns node ids and (from, to, is_spur) links.
    """
    ids = [f"{prefix}_bus"]
    links = []
    sizes = np.full(n_branches, (n_nodes - 1) // n_branches)
    sizes[: (n_nodes - 1) % n_branches] += 1
    k = 1
    for size in sizes:
        prev = ids[0]
        strand = []
        for _ in range(size):
            nid = f"{prefix}_{k}"
            # occasional short side spur off the strand
            spur = bool(strand) and rng.random() < 0.25
            parent = strand[rng.integers(len(strand))] if spur else prev
            ids.append(nid)
            links.append((parent, nid, spur))
            strand.append(nid)
            prev = nid
            k += 1
    return ids, links


def _electricity(rng):
    nodes = [ElectricalNode("mv0", ElectricalNodeKind.SLACK, 20e3, vm_setpoint=1.0)]
    edges = []
    r, x, amp = NA2XS2Y_185
    for i in range(1, MV_NODES):
        parent = f"mv{i - 1}" if i < 5 else ("mv2" if i == 5 else f"mv{i - 1}")
        nodes.append(ElectricalNode(f"mv{i}", ElectricalNodeKind.PQ, 20e3))
        edges.append(ElectricalEdge(f"line_mv{i}", parent, f"mv{i}", r, x, round(float(rng.uniform(0.4, 1.2)), 3), amp))
    lv_load_nodes = []
    for f, (rated, vsc, vr, n_lv, n_loads) in enumerate(FEEDERS, start=1):
        prefix = f"lv{f}"
        ids, links = _radial_feeder(rng, prefix, n_lv, n_branches=4 + 2 * f)
        candidates = ids[1:]
        loaded = set(rng.choice(len(candidates), size=n_loads, replace=False).tolist())
        for j, nid in enumerate(ids):
            p = q = 0.0
            if j >= 1 and (j - 1) in loaded:
                p = float(round(rng.uniform(2.0e3, 4.0e3)))
                q = round(p * float(np.tan(np.arccos(POWER_FACTOR))), 1)
                lv_load_nodes.append(nid)
            nodes.append(ElectricalNode(nid, ElectricalNodeKind.PQ, 400.0, p_load=p, q_load=q))
        mv = f"mv{2 * f + 1}"
        edges.append(ElectricalEdge(f"trafo{f}", mv, ids[0], transformer=Transformer(rated, vsc, vr)))
        for k, (a, b, spur) in enumerate(links, start=1):
            r, x, amp = NAYY_50 if spur else NAYY_150
            length = rng.uniform(0.01, 0.02) if spur else rng.uniform(0.02, 0.035)
            edges.append(ElectricalEdge(f"line_{prefix}_{k}", a, b, r, x, round(float(length), 4), amp))
    return ElectricalLayer(tuple(nodes), tuple(edges)), lv_load_nodes


def _sized(mdot: float, rho: float, velocity: float, series) -> float:
    """Smallest diameter in ``series`` keeping the flow below ``velocity``."""
    need = np.sqrt(4.0 * max(mdot, 1e-9) / (rho * np.pi * velocity))
    for dn in series:
        if dn >= need:
            return dn
    return series[-1]


def _gas(rng):
    rho = IdealGas().density(GAS_REFERENCE_PRESSURE)
    parents = {}
    internal = ["g_ref"]
    for i in range(1, GAS_INTERNAL + 1):
        nid = f"g{i}"
        parents[nid] = internal[int(rng.integers(max(0, len(internal) - 8), len(internal)))]
        internal.append(nid)
    houses = [(f"gh{k}", internal[1 + int(rng.integers(GAS_INTERNAL))], round(float(rng.uniform(1.5e-4, 4.0e-4)), 7))
              for k in range(1, GAS_HOUSES + 1)]  # demand about 6 to 16 kW each
    carried = {n: 0.0 for n in internal}
    for _, parent, demand in houses:
        carried[parent] += demand
    carried["g2"] += 2.5 * BOILER_RATING_W / BOILER_EFFICIENCY / IdealGas().heating_value
    carried["g3"] += 2.5 * CHP_RATING_W / CHP_EFFICIENCY / IdealGas().heating_value
    for n in reversed(internal[1:]):
        carried[parents[n]] += carried[n]
    series = GAS_DIAMETERS[::-1]

    nodes = [HydraulicNode("g_ref", HydraulicNodeKind.REFERENCE, GAS_REFERENCE_PRESSURE,
                           fluid_temperature=GROUND_TEMPERATURE_K, height=150.0)]
    edges = []
    for i, nid in enumerate(internal[1:], start=1):
        nodes.append(HydraulicNode(nid, HydraulicNodeKind.DEMAND, GAS_REFERENCE_PRESSURE,
                                   height=round(150.0 + float(rng.uniform(-2.0, 2.0)), 2),
                                   fluid_temperature=GROUND_TEMPERATURE_K))
        edges.append(Pipe(f"gp{i}", parents[nid], nid, _sized(carried[nid], rho, 2.0, series),
                          round(float(rng.uniform(30.0, 80.0)), 1), roughness=1e-4))
    for k, (nid, parent, demand) in enumerate(houses, start=1):
        nodes.append(HydraulicNode(nid, HydraulicNodeKind.DEMAND, GAS_REFERENCE_PRESSURE, demand,
                                   height=150.0, fluid_temperature=GROUND_TEMPERATURE_K))
        edges.append(Pipe(f"gc{k}", parent, nid, GAS_DIAMETERS[-1], round(float(rng.uniform(8.0, 20.0)), 1), roughness=1e-4))
    return HydraulicLayer(LayerKind.GAS, tuple(nodes), tuple(edges), IdealGas()), [h[0] for h in houses]


def _heat(rng):
    cp = IncompressibleLiquid().cp
    parents = {}
    tree = ["h_src"]
    # main trunk plus branches; consumers hang off the later, outer nodes
    for i in range(1, HEAT_TREE_NODES):
        nid = f"h{i}"
        # h1 is the single trunk node every consumer is fed through
        parents[nid] = "h_src" if i == 1 else tree[int(rng.integers(max(1, len(tree) - 6), len(tree)))]
        tree.append(nid)
    children = {n: [] for n in tree}
    for c, p in parents.items():
        children[p].append(c)
    leaves = [n for n in tree[1:] if not children[n]]
    others = [n for n in tree[1:] if children[n]]
    rng.shuffle(others)
    hosts = (leaves + others)[:HEAT_EXCHANGERS]
    weights = rng.uniform(0.5, 1.5, HEAT_EXCHANGERS)
    weights = weights / weights.sum()
    total_heat = HEAT_MASS_FLOW * cp * (SUPPLY_TEMPERATURE_K - RETURN_TEMPERATURE_K)
    heat_w = weights * total_heat
    # size each pipe for the mass flow it carries
    carried = {n: 0.0 for n in tree}
    for host, q in zip(hosts, heat_w):
        carried[host] += q / (cp * (SUPPLY_TEMPERATURE_K - RETURN_TEMPERATURE_K))
    for n in reversed(tree[1:]):
        carried[parents[n]] += carried[n]

    nodes = [HydraulicNode("h_src", HydraulicNodeKind.REFERENCE, HEAT_REFERENCE_PRESSURE,
                           fluid_temperature=SUPPLY_TEMPERATURE_K)]
    for n in tree[1:]:
        nodes.append(HydraulicNode(n, HydraulicNodeKind.DEMAND, HEAT_REFERENCE_PRESSURE,
                                   fluid_temperature=SUPPLY_TEMPERATURE_K))
    edges = []
    for i, n in enumerate(tree[1:], start=1):
        edges.append(Pipe(f"hp{i}", parents[n], n, _sized(carried[n], 977.0, 1.0, DN_SERIES),
                          round(float(rng.uniform(20.0, 60.0)), 1),
                          roughness=1e-5, u_value=0.4, ambient_temperature=GROUND_TEMPERATURE_K))
    for k, (host, q) in enumerate(zip(hosts, heat_w), start=1):
        nid = f"hc{k}"
        nodes.append(HydraulicNode(nid, HydraulicNodeKind.DEMAND, HEAT_REFERENCE_PRESSURE,
                                   fluid_temperature=RETURN_TEMPERATURE_K))
        edges.append(Pipe(f"hx{k}", host, nid, 0.05, 5.0, roughness=1e-5, kind=EdgeKind.HEAT_EXCHANGER,
                          heat_extraction=float(round(q)), ambient_temperature=GROUND_TEMPERATURE_K))
    return HydraulicLayer(LayerKind.HEAT, tuple(nodes), tuple(edges), IncompressibleLiquid()), "h1"


def _table1(rng) -> MultiEnergyNetwork:
    el, lv_loads = _electricity(rng)
    gas, houses = _gas(rng)
    heat, trunk = _heat(rng)
    devices = (
        CouplingDevice("chp", DeviceKind.CHP_G2E, ("gas", "g3"), ("electricity", "lv3_1"), CHP_RATING_W,
                       efficiency=CHP_EFFICIENCY, setpoint_profile="chp_setpoint"),
        CouplingDevice("boiler", DeviceKind.GAS_BOILER_G2H, ("gas", "g2"), ("heat", trunk), BOILER_RATING_W,
                       efficiency=BOILER_EFFICIENCY, setpoint_profile="boiler_setpoint"),
        CouplingDevice("heat_pump", DeviceKind.HEAT_PUMP_E2H, ("electricity", "lv3_2"), ("heat", trunk),
                       HEAT_PUMP_RATING_W, cop=HEAT_PUMP_COP, setpoint_profile="heat_pump_setpoint"),
    )
    bindings = [ProfileBinding("electricity", n, "electric_household") for n in lv_loads]
    bindings += [ProfileBinding("gas", n, "gas_household") for n in houses]
    bindings += [ProfileBinding("heat", e.id, "heat_demand") for e in heat.edges if e.kind is EdgeKind.HEAT_EXCHANGER]
    return MultiEnergyNetwork(
        el, gas, heat, CouplingLayer.from_devices(devices),
        heat_return_temperature=RETURN_TEMPERATURE_K,
        bindings=tuple(bindings),
        ambient_profile="ambient_k",
        ambient_temperature=268.15,
        name="table1",
    )


# -- profiles -----------------------------------------------------------
def _daily(hours: np.ndarray, morning: float, evening: float, base: float) -> np.ndarray:
    return (base + morning * np.exp(-0.5 * ((hours - 8.0) / 1.2) ** 2)
            + evening * np.exp(-0.5 * ((hours - 19.0) / 1.8) ** 2))


def _normalise(raw: np.ndarray, peak_step: int, peak: float = 1.05) -> np.ndarray:
    out = raw / raw.max() * peak
    out = np.minimum(out, peak * (1.0 - 1e-3))
    out[peak_step] = peak
    return out


def synthetic_week_profiles(seed: int = 0, steps: int = PROFILE_STEPS) -> ProfileSet:
    """A cold January week at 15-minute resolution; all loads peak Friday 08:00.

    Stand-in for standard load profiles: daily double-peaked shapes, a weekly
    envelope with its maximum on Friday, and a cold snap in the ambient
    temperature on the same morning.
    """
    rng = np.random.default_rng(seed)
    stamps = tuple(PROFILE_START + i * PROFILE_STEP for i in range(steps))
    t = np.arange(steps) * PROFILE_STEP.total_seconds() / 3600.0
    hours = t % 24.0
    day = t / 24.0
    peak_step = stamps.index(PEAK_TIME) if PEAK_TIME in stamps else int(np.argmin(np.abs(hours - 8.0)))
    peak_day = (stamps[peak_step] - PROFILE_START).total_seconds() / 86400.0
    envelope = 1.0 - 0.08 * np.abs(day - peak_day) / 4.0
    cold = np.exp(-0.5 * ((t - (peak_day * 24.0 - 1.0)) / 18.0) ** 2)

    def noisy(x, sd):
        return x * (1.0 + rng.normal(0.0, sd, x.size))

    electric = _normalise(noisy(_daily(hours, 0.9, 0.7, 0.45) * envelope, 0.03), peak_step)
    heat_base = _daily(hours, 0.5, 0.3, 0.55) * envelope * (0.85 + 0.15 * cold)
    heat = _normalise(noisy(heat_base, 0.02), peak_step)
    gas = _normalise(noisy(heat_base, 0.03), peak_step)
    ambient = 273.15 - 2.0 - 3.0 * np.cos(2 * np.pi * (hours - 15.0) / 24.0) - 4.0 * cold
    columns = {
        "electric_household": electric,
        "gas_household": gas,
        "heat_demand": heat,
        "chp_setpoint": np.clip(0.6 + 0.4 * heat / 1.05, 0.0, 1.0),
        "boiler_setpoint": np.clip(0.3 + 0.7 * heat / 1.05, 0.0, 1.0),
        "heat_pump_setpoint": np.clip(0.5 + 0.5 * heat / 1.05, 0.0, 1.0),
        "ambient_k": ambient,
    }
    return ProfileSet(stamps, columns)


def constant_profiles(network: MultiEnergyNetwork, steps: int = 4, value: float = 1.0,
                      ambient: float | None = None) -> ProfileSet:
    """Every referenced column held at ``value`` (ambient columns at ``ambient`` K)."""
    stamps = tuple(PROFILE_START + i * PROFILE_STEP for i in range(steps))
    names = {b.profile for b in network.bindings}
    names |= {d.setpoint_profile for d in network.coupling.devices if d.setpoint_profile}
    cols = {n: np.full(steps, value) for n in sorted(names)}
    if network.ambient_profile:
        cols[network.ambient_profile] = np.full(steps, ambient if ambient is not None else network.ambient_temperature)
    return ProfileSet(stamps, cols)
