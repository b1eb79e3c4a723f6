"""Steady-state power flow for coupled electricity, gas and district-heating networks."""

from mesflow.graph import (
    ElectricalEdge,
    ElectricalLayer,
    ElectricalNode,
    ElectricalNodeKind,
    EdgeKind,
    HydraulicLayer,
    HydraulicNode,
    HydraulicNodeKind,
    LayerKind,
    MultiEnergyNetwork,
    Pipe,
    ProfileBinding,
    Transformer,
    ordered_unknowns,
    validate_topology,
)
from mesflow.coupling import CouplingDevice, CouplingLayer, DeviceKind, TableCOP, CarnotCOP
from mesflow.fluids import IdealGas, IncompressibleLiquid
from mesflow.scenario import OperatingPoint, nominal_operating_point
from mesflow.solver import SolveOptions, SolveReport, nr_solve

__all__ = [
    "CarnotCOP", "CouplingDevice", "CouplingLayer", "DeviceKind", "EdgeKind", "ElectricalEdge",
    "ElectricalLayer", "ElectricalNode", "ElectricalNodeKind", "HydraulicLayer", "HydraulicNode",
    "HydraulicNodeKind", "IdealGas", "IncompressibleLiquid", "LayerKind", "MultiEnergyNetwork",
    "OperatingPoint", "Pipe", "ProfileBinding", "SolveOptions", "SolveReport", "TableCOP",
    "Transformer", "nominal_operating_point", "nr_solve", "ordered_unknowns", "validate_topology",
]
