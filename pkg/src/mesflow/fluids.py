"""Fluid property models shared by the gas and district-heating layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

R_UNIVERSAL = 8.314462618  # J/(mol K)
GRAVITY = 9.80665  # m/s^2


class PressureDomainError(ValueError):
    """Raised when an ideal-gas density is requested at a non-positive pressure."""


@dataclass(frozen=True)
class IdealGas:
    """Isothermal ideal gas, density evaluated from absolute pressure.

    Defaults describe a natural-gas-like mixture at 10 degC.
    """

    molar_mass: float = 0.0166  # kg/mol
    temperature: float = 283.15  # K
    viscosity: float = 1.1e-5  # Pa s
    heating_value: float = 11.06 * 3.6e6  # J/kg

    compressible = True

    def density(self, pressure):
        p = np.asarray(pressure, dtype=float)
        if np.any(p <= 0.0):
            raise PressureDomainError("pressure out of domain")
        return p * self.drho_dp

    @property
    def drho_dp(self) -> float:
        return self.molar_mass / (R_UNIVERSAL * self.temperature)


@dataclass(frozen=True)
class IncompressibleLiquid:
    """Constant-density liquid (water at 80 degC by default)."""

    density_value: float = 977.0  # kg/m^3
    cp: float = 4182.0  # J/(kg K)
    viscosity: float = 3.55e-4  # Pa s

    compressible = False
    drho_dp = 0.0

    def density(self, pressure):
        return np.full(np.shape(pressure), self.density_value, dtype=float)


FluidModel = IdealGas | IncompressibleLiquid
