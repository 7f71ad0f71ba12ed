"""Classical synchronous machine.

Constant voltage behind transient reactance with the swing equation:

    dδ/dt  = ω_base·Δω
    dΔω/dt = (P_m − P_e − d·Δω) / (2h)

The machine appears to the network as a Norton equivalent
y = 1/(jx'd) with source current E'∠δ·y; electrical power is recovered
from the terminal voltage each network solve.  The damping term d
stands in for governor and damper-winding action.

States: (δ, Δω), machine base.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

from renstab.blocks.drivetrain import OMEGA_BASE


@dataclass
class MachineParams:
    h: float = 4.0     # inertia constant, s
    d: float = 0.0     # damping, pu power per pu speed
    xdp: float = 0.3   # transient reactance, pu

    def validate(self) -> None:
        if self.h <= 0:
            raise ValueError(f"machine inertia h must be positive, got {self.h}")
        if self.xdp <= 0:
            raise ValueError(f"machine reactance xdp must be positive, got {self.xdp}")


def machine_init(
    p: MachineParams, v: complex, p0: float, q0: float
) -> tuple[tuple[float, float], float, float]:
    """States, internal EMF magnitude, and mechanical power from dispatch.

    The terminal current follows from the machine-base power, and
    E'∠δ = V + jx'd·I fixes both the EMF and the initial rotor angle.
    """
    i = (complex(p0, q0) / v).conjugate()
    e = v + 1j * p.xdp * i
    return (cmath.phase(e), 0.0), abs(e), p0


def machine_derivatives(
    p: MachineParams, state: tuple[float, float], p_m: float, p_e: float
) -> tuple[float, float]:
    delta, domega = state
    ddelta = OMEGA_BASE * domega
    ddomega = (p_m - p_e - p.d * domega) / (2.0 * p.h)
    return (ddelta, ddomega)


def machine_norton(
    p: MachineParams, emag: float, delta: float, mbase_over_sbase: float
) -> tuple[complex, complex]:
    """(shunt admittance, source current) on system base."""
    y = mbase_over_sbase / (1j * p.xdp)
    return y, cmath.rect(emag, delta) * y


def machine_electrical_power(
    p: MachineParams, emag: float, delta: float, v: complex
) -> tuple[float, float]:
    """(P_e, Q_e) injected at terminal voltage v, machine base."""
    i = (cmath.rect(emag, delta) - v) / (1j * p.xdp)
    s = v * i.conjugate()
    return s.real, s.imag
