"""Two-mass wind turbine drive train (wtgt_a).

Turbine and generator masses coupled by a torsional spring/damper; the
twist angle integrates the slip between the two speeds at electrical
base frequency:

    dω_t/dt  = (T_m − T_shaft) / (2·ht)
    dω_g/dt  = (T_shaft − T_e) / (2·hg)
    dδ_tg/dt = ω_base·(ω_t − ω_g)
    T_shaft  = kshaft·δ_tg + dshaft·(ω_t − ω_g),   T_e = P_e/ω_g

A template with hg = 0 collapses to a single rotating mass (ω_g ≡ ω_t,
T_shaft ≡ T_e) with one state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

OMEGA_BASE = 2.0 * math.pi * 60.0


@dataclass
class DriveTrainParams:
    ht: float = 4.0            # turbine inertia, s
    hg: float = 0.7            # generator inertia, s (0 -> single mass)
    dshaft: float = 1.0        # pu damping on speed difference
    kshaft: float = 20.0       # pu torque per rad of twist
    response_limit_kind: str = "Normal"   # template group tag (Fixed/Normal)

    @property
    def n_states(self) -> int:
        return 1 if self.hg <= 0.0 else 3

    def validate(self) -> None:
        if self.ht <= 0:
            raise ValueError(f"drive train ht must be positive, got {self.ht}")
        if self.hg < 0:
            raise ValueError(f"drive train hg must be non-negative, got {self.hg}")
        if self.n_states == 3 and self.kshaft <= 0:
            raise ValueError("two-mass drive train needs kshaft > 0")
        if self.response_limit_kind not in ("Fixed", "Normal"):
            raise ValueError(
                "drive train response_limit_kind must be 'Fixed' or 'Normal', "
                f"got {self.response_limit_kind!r}"
            )


def shaft_frequency_hz(p: DriveTrainParams) -> float:
    """Free torsional mode of the two-mass system."""
    if p.hg <= 0.0:
        return 0.0
    return (1.0 / (2.0 * math.pi)) * math.sqrt(
        p.kshaft * OMEGA_BASE * (p.ht + p.hg) / (2.0 * p.ht * p.hg)
    )


def wtgt_init(p: DriveTrainParams, p_e0: float, w0: float) -> tuple[float, ...]:
    """Equilibrium states for electrical power p_e0 at speed w0."""
    if p.hg <= 0.0:
        return (w0,)
    t0 = p_e0 / w0
    return (w0, w0, t0 / p.kshaft)


def wtgt_derivatives(
    p: DriveTrainParams, state: tuple[float, ...], t_m: float, p_e: float
) -> tuple[tuple[float, ...], float]:
    """Returns (state derivatives, generator speed ω_g)."""
    if not (math.isfinite(t_m) and math.isfinite(p_e)):
        raise ValueError(f"non-finite drive-train input (t_m={t_m}, p_e={p_e})")
    if p.hg <= 0.0:
        (wt,) = state
        t_e = p_e / wt
        return ((t_m - t_e) / (2.0 * p.ht),), wt
    wt, wg, dtg = state
    slip = wt - wg
    t_shaft = p.kshaft * dtg + p.dshaft * slip
    t_e = p_e / wg
    dwt = (t_m - t_shaft) / (2.0 * p.ht)
    dwg = (t_shaft - t_e) / (2.0 * p.hg)
    ddtg = OMEGA_BASE * slip
    return (dwt, dwg, ddtg), wg


def wtgt_speed(p: DriveTrainParams, state: tuple[float, ...]) -> float:
    """Generator-side speed without evaluating derivatives."""
    return state[0] if p.hg <= 0.0 else state[1]
