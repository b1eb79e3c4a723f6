"""Hydraulic kernel: friction, pipe pressure balance, nodal continuity.

Used for the gas layer (ideal gas) and for the district-heating hydraulics
(incompressible water). Flows are signed relative to edge orientation.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from mesflow.fluids import GRAVITY, FluidModel
from mesflow.graph import HydraulicLayer, Pipe

RE_LAMINAR = 2300.0
RE_TURBULENT = 4000.0
LAMBDA_MAX = 1e3
_LN10 = np.log(10.0)


def _colebrook(re, rel_roughness, tol: float = 1e-15):
    """Colebrook-White friction factor and d(lambda)/dRe, Newton on 1/sqrt(lambda).

    Seeded with Swamee-Jain; iterated until the correction is below ``tol``
    relative (well past the 1e-10 requirement, so finite differences stay clean).
    """
    re = np.asarray(re, dtype=float)
    a = np.asarray(rel_roughness, dtype=float) / 3.7 + np.zeros_like(re)
    b = 2.51
    lam0 = 0.25 / np.log10(a + 5.74 / re**0.9) ** 2
    s = 1.0 / np.sqrt(lam0)
    for _ in range(50):
        arg = a + b * s / re
        g = s + 2.0 * np.log10(arg)
        gp = 1.0 + (2.0 / _LN10) * (b / re) / arg
        ds = g / gp
        s = s - ds
        if np.all(np.abs(ds) <= tol * np.abs(s)):
            break
    arg = a + b * s / re
    gp = 1.0 + (2.0 / _LN10) * (b / re) / arg
    g_re = (2.0 / _LN10) * (-b * s / re**2) / arg
    ds_dre = -g_re / gp
    lam = 1.0 / s**2
    return lam, -2.0 * ds_dre / s**3


def friction_factor(reynolds, roughness, diameter, max_factor: float = LAMBDA_MAX):
    """Darcy friction factor: laminar, linear transition blend, Colebrook-White.

    ``roughness`` and ``diameter`` in metres. Works on scalars or arrays.
    """
    re = np.asarray(reynolds, dtype=float)
    if np.any(re < 0):
        raise ValueError("Reynolds number must be non-negative")
    if np.any(np.asarray(diameter) <= 0):
        raise ValueError("diameter must be positive")
    lam, _ = _friction_and_slope(re, np.asarray(roughness, dtype=float) / np.asarray(diameter, dtype=float))
    with np.errstate(divide="ignore"):
        lam = np.where(re < RE_LAMINAR, np.minimum(64.0 / np.where(re > 0, re, 1.0), max_factor), lam)
    lam = np.where(re == 0, max_factor, lam)
    return float(lam[0]) if np.ndim(reynolds) == 0 else lam


def _friction_and_slope(re, rel_roughness):
    """lambda(Re) and d lambda/dRe for Re >= RE_LAMINAR (laminar entries are filled with 64/Re)."""
    re = np.atleast_1d(np.asarray(re, dtype=float))
    rel = np.broadcast_to(np.asarray(rel_roughness, dtype=float), re.shape)
    lam = np.empty_like(re)
    slope = np.empty_like(re)

    lamr = re < RE_LAMINAR
    safe = np.where(re[lamr] > 0, re[lamr], 1.0)
    lam[lamr] = 64.0 / safe
    slope[lamr] = -64.0 / safe**2

    turb = re > RE_TURBULENT
    if np.any(turb):
        lam[turb], slope[turb] = _colebrook(re[turb], rel[turb])

    trans = ~lamr & ~turb
    if np.any(trans):
        lam_hi, _ = _colebrook(np.full(trans.sum(), RE_TURBULENT), rel[trans])
        lam_lo = 64.0 / RE_LAMINAR
        w = (re[trans] - RE_LAMINAR) / (RE_TURBULENT - RE_LAMINAR)
        lam[trans] = lam_lo + (lam_hi - lam_lo) * w
        slope[trans] = (lam_hi - lam_lo) / (RE_TURBULENT - RE_LAMINAR)
    return lam, slope


@dataclass(frozen=True)
class EdgeTerms:
    residual: np.ndarray  # Pa
    d_mdot: np.ndarray  # d residual / d mdot
    d_pfrom: np.ndarray
    d_pto: np.ndarray
    friction: np.ndarray  # signed friction pressure loss, Pa
    density: np.ndarray
    reynolds: np.ndarray


def edge_terms(mdot, diameter, length, roughness, zeta, p_from, p_to, h_from, h_to,
               fluid: FluidModel, frozen_friction: bool = False, fixed_lambda=None) -> EdgeTerms:
    """Pressure-balance residual of each edge and its partial derivatives.

    residual = (p_from - p_to) - sign(m) rho v^2/2 (lambda l/d + zeta) - rho g (h_to - h_from)

    The laminar branch is evaluated through lambda*|m| = 16 pi d mu, which is
    the Hagen-Poiseuille loss and stays regular at zero flow.

    ``frozen_friction`` drops d(lambda)/d(mdot) from the derivative.
    ``fixed_lambda`` evaluates the residual itself with lambda held at the
    given values (NaN entries keep the flow-dependent factor).
    """
    mdot = np.asarray(mdot, dtype=float)
    area = np.pi * diameter**2 / 4.0
    p_mean = 0.5 * (np.asarray(p_from, dtype=float) + np.asarray(p_to, dtype=float))
    rho = fluid.density(p_mean)
    mu = fluid.viscosity
    am = np.abs(mdot)
    re = 4.0 * am / (np.pi * diameter * mu)

    lam, slope = _friction_and_slope(re, roughness / diameter)
    laminar = re < RE_LAMINAR
    phi = np.where(laminar, 16.0 * np.pi * diameter * mu, lam * am)  # lambda * |m|
    # d phi / d|m| = lambda + Re dlambda/dRe, which is zero on the laminar branch
    dphi = np.where(laminar, 0.0, lam + re * slope)
    if fixed_lambda is not None:
        fixed = np.isfinite(fixed_lambda)
        lam_fixed = np.where(fixed, fixed_lambda, 0.0)
        phi = np.where(fixed, lam_fixed * am, phi)
        dphi = np.where(fixed, lam_fixed, dphi)
    elif frozen_friction:
        flowing = am > 0
        dphi = np.where(flowing, phi / np.where(flowing, am, 1.0), dphi)

    denom = 2.0 * rho * area**2
    friction = mdot * (phi * length / diameter + zeta * am) / denom
    dF_dm = (phi * length / diameter + am * dphi * length / diameter + 2.0 * zeta * am) / denom

    dh = np.asarray(h_to, dtype=float) - np.asarray(h_from, dtype=float)
    elevation = rho * GRAVITY * dh
    residual = (p_from - p_to) - friction - elevation
    # density enters through the mean pressure; d friction/d rho = -friction/rho
    dres_drho = friction / rho - GRAVITY * dh
    half = 0.5 * fluid.drho_dp
    return EdgeTerms(
        residual=residual,
        d_mdot=-dF_dm,
        d_pfrom=1.0 + dres_drho * half,
        d_pto=-1.0 + dres_drho * half,
        friction=friction,
        density=rho,
        reynolds=re,
    )


def pipe_pressure_balance(mdot: float, pipe: Pipe, fluid: FluidModel, p_from: float, p_to: float,
                          h_from: float = 0.0, h_to: float = 0.0) -> float:
    """Pressure-balance residual of a single pipe, Pa."""
    terms = edge_terms(
        np.array([mdot]), np.array([pipe.diameter]), np.array([pipe.length]),
        np.array([pipe.roughness]), np.array([pipe.local_loss_zeta]),
        np.array([p_from]), np.array([p_to]), np.array([h_from]), np.array([h_to]), fluid,
    )
    return float(terms.residual[0])


@dataclass
class HydraulicState:
    p: np.ndarray  # Pa, every node
    mdot: np.ndarray  # kg/s, every edge, positive from -> to


def _terms(state: HydraulicState, layer: HydraulicLayer, frozen_friction: bool = False,
           fixed_lambda=None) -> EdgeTerms:
    f, t = layer.from_idx, layer.to_idx
    return edge_terms(state.mdot, layer.diameter, layer.length, layer.roughness, layer.zeta,
                      state.p[f], state.p[t], layer.heights[f], layer.heights[t], layer.fluid,
                      frozen_friction=frozen_friction, fixed_lambda=fixed_lambda)


def effective_friction(state: HydraulicState, layer: HydraulicLayer) -> np.ndarray:
    """Friction factor each edge currently runs at (NaN for stagnant edges)."""
    am = np.abs(state.mdot)
    re = 4.0 * am / (np.pi * layer.diameter * layer.fluid.viscosity)
    lam, _ = _friction_and_slope(re, layer.roughness / layer.diameter)
    return np.where(am > 0, lam, np.nan)


def gas_mismatch(state: HydraulicState, layer: HydraulicLayer, withdrawal,
                 fixed_lambda=None) -> tuple[np.ndarray, np.ndarray]:
    """Nodal continuity at free nodes and pressure balance per edge.

    ``withdrawal`` is demand minus injection per node in kg/s. The nodal
    residual is inflow - outflow - withdrawal.
    """
    withdrawal = np.asarray(withdrawal, dtype=float)
    net_out = layer.incidence @ state.mdot
    free = layer.free_nodes
    dm = -withdrawal[free] - net_out[free]
    return dm, _terms(state, layer, fixed_lambda=fixed_lambda).residual


def gas_jacobian(state: HydraulicState, layer: HydraulicLayer,
                 frozen_friction: bool = False) -> dict[str, sp.csr_matrix]:
    """Derivative blocks of :func:`gas_mismatch`.

    J11 = d(dm_n)/dp (identically zero), J12 = d(dm_n)/d mdot, J21 = d(dp_b)/dp,
    J22 = d(dp_b)/d mdot (diagonal).
    """
    free = layer.free_nodes
    nf, nb = len(free), layer.n_edges
    terms = _terms(state, layer, frozen_friction)
    col = np.full(layer.n_nodes, -1, dtype=np.int64)
    col[free] = np.arange(nf)
    rows, cols, vals = [], [], []
    for ends, deriv in ((layer.from_idx, terms.d_pfrom), (layer.to_idx, terms.d_pto)):
        keep = col[ends] >= 0
        rows.append(np.arange(nb)[keep])
        cols.append(col[ends][keep])
        vals.append(deriv[keep])
    J21 = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nb, nf))
    return {
        "J11": sp.csr_matrix((nf, nf)),
        "J12": (-layer.incidence[free]).tocsr(),
        "J21": J21,
        "J22": sp.diags(terms.d_mdot, format="csr"),
    }


def spanning_tree(layer: HydraulicLayer) -> tuple[list[int], np.ndarray, np.ndarray]:
    """BFS tree from the reference node: visit order, parent edge per node (-1 at root), chord mask."""
    adjacency: list[list[tuple[int, int]]] = [[] for _ in range(layer.n_nodes)]
    for b, (f, t) in enumerate(zip(layer.from_idx, layer.to_idx)):
        adjacency[f].append((b, int(t)))
        adjacency[t].append((b, int(f)))
    root = layer.reference
    parent_edge = np.full(layer.n_nodes, -1, dtype=np.int64)
    seen = np.zeros(layer.n_nodes, dtype=bool)
    seen[root] = True
    order = [root]
    queue = deque([root])
    tree = np.zeros(layer.n_edges, dtype=bool)
    while queue:
        n = queue.popleft()
        for b, m in adjacency[n]:
            if not seen[m]:
                seen[m] = True
                parent_edge[m] = b
                tree[b] = True
                order.append(m)
                queue.append(m)
    return order, parent_edge, ~tree


def initial_flows(layer: HydraulicLayer, withdrawal, chord_flows=None) -> np.ndarray:
    """Edge flows satisfying continuity exactly, with chord flows held fixed.

    Chords default to the edges' ``mdot_hint`` (or zero). On a tree the
    result is the unique continuity solution.
    """
    withdrawal = np.asarray(withdrawal, dtype=float)
    order, parent_edge, chord = spanning_tree(layer)
    mdot = np.zeros(layer.n_edges)
    if chord_flows is None:
        hints = np.array([e.mdot_hint or 0.0 for e in layer.edges])
        mdot[chord] = hints[chord]
    else:
        mdot[chord] = np.asarray(chord_flows, dtype=float)[chord]
    A = layer.incidence
    # tree edges must supply s_n = required net outflow minus what chords already carry
    s = -withdrawal - A @ mdot
    subtotal = s.copy()
    f = layer.from_idx
    for n in reversed(order[1:]):
        b = parent_edge[n]
        sign = 1.0 if f[b] == n else -1.0
        mdot[b] = subtotal[n] / sign
        parent = layer.to_idx[b] if f[b] == n else f[b]
        subtotal[parent] += subtotal[n]
    return mdot
