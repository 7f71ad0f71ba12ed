"""Renewable generator/converter interface (regc_a).

Turns current commands from the electrical control into a network
current injection.  Two first-order lags (tg) track the commands; the
active branch additionally has an upward ramp-rate limit (rrpwr) and a
low-voltage power logic (LVPL) ceiling that caps active current as the
terminal voltage collapses.  On the network side a low-voltage gain
rolls the active current off linearly between lvpnt1 and lvpnt0 —
reactive support keeps flowing through a dip — and a high-voltage clamp
bleeds reactive current above volim.  Below ~1% terminal voltage the
whole current tapers to zero (no phase reference to inject against).

States: (ip, iq), machine base.  Sign convention: positive iq injects
reactive power into the network (iqcmd > 0 boosts voltage).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from renstab.blocks.util import ramp01

# Below ~1% terminal voltage there is no usable phase reference, so the
# injected current tapers linearly to zero instead of holding its command.
# The taper also removes the direction discontinuity at V = 0 that would
# otherwise leave the network equations without a reachable solution when
# a converter absorbs reactive power behind a bolted fault.
DEAD_TAPER_V = 0.01


@dataclass
class ConverterParams:
    tg: float = 0.02         # current regulator lag, s
    rrpwr: float = 10.0      # active current up-ramp limit, pu/s
    lvplsw: int = 1          # 1 -> low-voltage power logic active
    zerox: float = 0.1       # LVPL zero-crossing voltage, pu
    brkpt: float = 0.9       # LVPL breakpoint voltage, pu
    lvpl1: float = 1.22      # LVPL gain at the breakpoint, pu current
    lvpnt0: float = 0.4      # injection fully off below this voltage
    lvpnt1: float = 0.8      # injection fully on above this voltage
    volim: float = 1.2       # high-voltage clamp threshold, pu
    iolim: float = -1.3      # floor on clamped reactive current, pu
    khv: float = 0.7         # high-voltage clamp gain

    def validate(self) -> None:
        if self.tg <= 0:
            raise ValueError(f"converter lag tg must be positive, got {self.tg}")
        if self.lvplsw and self.brkpt <= self.zerox:
            raise ValueError(
                f"LVPL breakpoint {self.brkpt} must exceed zero-crossing {self.zerox}"
            )
        if self.lvpnt1 <= self.lvpnt0:
            raise ValueError(
                f"low-voltage gain points inverted: ({self.lvpnt0}, {self.lvpnt1})"
            )


def lvpl_ceiling(p: ConverterParams, v_mag: float) -> float:
    """Active-current cap from the low-voltage power logic."""
    if not p.lvplsw:
        return math.inf
    if v_mag <= p.zerox:
        return 0.0
    if v_mag >= p.brkpt:
        return math.inf
    return p.lvpl1 * (v_mag - p.zerox) / (p.brkpt - p.zerox)


def regc_init(ip0: float, iq0: float) -> tuple[float, float]:
    return (ip0, iq0)


def regc_derivatives(
    p: ConverterParams,
    state: tuple[float, float],
    v_mag: float,
    ipcmd: float,
    iqcmd: float,
) -> tuple[float, float]:
    ip, iq = state
    dip = (ipcmd - ip) / p.tg
    if dip > p.rrpwr:
        dip = p.rrpwr
    if ip >= lvpl_ceiling(p, v_mag) and dip > 0.0:
        dip = 0.0
    diq = (iqcmd - iq) / p.tg
    return (dip, diq)


def regc_clamp(
    p: ConverterParams, state: tuple[float, float], v_mag: float
) -> tuple[float, float]:
    """Pull the active-current state under a ceiling that dropped below it."""
    ip, iq = state
    ceil = lvpl_ceiling(p, v_mag)
    if ip > ceil:
        ip = ceil
    return (ip, iq)


def regc_injection(
    p: ConverterParams, state: tuple[float, float], v: complex
) -> tuple[complex, float, float]:
    """Network current (machine base) and the resulting (P, Q) at voltage v.

    The current phasor is built in the terminal-voltage reference frame:
    ip along the voltage, iq in quadrature leading it.
    """
    ip, iq = state
    vm = abs(v)
    if vm == 0.0:
        return 0.0j, 0.0, 0.0
    iq_eff = iq - p.khv * max(vm - p.volim, 0.0)
    if iq_eff < p.iolim:
        iq_eff = p.iolim
    ip_eff = ramp01(vm, p.lvpnt0, p.lvpnt1) * ip
    live = min(vm / DEAD_TAPER_V, 1.0)
    i = live * (ip_eff - 1j * iq_eff) * (v / vm)
    return i, live * vm * ip_eff, live * vm * iq_eff
