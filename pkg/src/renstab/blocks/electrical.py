"""Renewable electrical control (reec_a).

Builds active/reactive current commands for the converter from power
references and the terminal voltage.  Mode flags select the topology:

  * pf_flag — reactive reference from a fixed power factor on filtered
    active power (1) or from the external/plant reference (0);
  * q_flag  — closed-loop reactive control through a Q-PI cascaded with
    a V-PI (1) or an open-loop lag dividing the reference by voltage (0);
  * v_flag  — with q_flag = 1, the V-PI target comes from the Q-PI (1)
    or from a fixed local voltage setpoint (0);
  * p_flag  — active reference multiplied by generator speed (1) or
    passed through (0);
  * pq_flag — current limit priority, P (1) or Q (0).

A voltage dip (terminal voltage outside [vdip, vup]) freezes the
controller states and gates in a proportional reactive boost
kqv·deadband(vref0 − V) clamped to [iql1, iqh1].  Current commands are
clipped against voltage-dependent ceilings (vdl1/vdl2 curves) and the
total-current circle of radius imax.

States: (s_vt, s_pe, x_q, x_v, s_iql, s_pord).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from renstab.blocks.util import clamp, deadband, pi_non_windup, pw_linear

#: Voltages below this floor are held up before dividing current commands.
VP_FLOOR = 0.01


@dataclass
class ElectricalParams:
    pf_flag: int = 0
    v_flag: int = 1
    q_flag: int = 1
    p_flag: int = 0
    pq_flag: int = 0          # 0 -> Q priority, 1 -> P priority
    vdip: float = 0.9         # dip detection window, pu
    vup: float = 1.1
    trv: float = 0.02         # terminal voltage transducer lag, s
    dbd1: float = -0.05       # dip-boost deadband, pu voltage error
    dbd2: float = 0.05
    kqv: float = 2.0          # dip-boost gain, pu current per pu voltage
    iqh1: float = 1.05        # dip-boost injection limits, pu
    iql1: float = -1.05
    vref0: float = 0.0        # dip-boost voltage reference (0 -> initial V)
    vref1: float = 0.0        # local voltage target for v_flag = 0 (0 -> initial V)
    tp: float = 0.05          # active power transducer lag, s
    qmax: float = 0.436       # reactive reference limits, pu
    qmin: float = -0.436
    vmax: float = 1.1         # Q-PI output limits, pu voltage
    vmin: float = 0.9
    kqp: float = 1.0          # Q-PI gains
    kqi: float = 5.0
    kvp: float = 2.0          # V-PI gains
    kvi: float = 30.0
    tiq: float = 0.02         # open-loop reactive lag, s
    tpord: float = 0.02       # power order lag, s
    dpmax: float = 99.0       # power order rate limits, pu/s
    dpmin: float = -99.0
    pmax: float = 1.0         # power order limits, pu
    pmin: float = 0.0
    imax: float = 1.3         # total current limit, pu
    vdl1: tuple[tuple[float, float], ...] = field(default_factory=tuple)
    vdl2: tuple[tuple[float, float], ...] = field(default_factory=tuple)

    def validate(self) -> None:
        for name in ("pf_flag", "v_flag", "q_flag", "p_flag", "pq_flag"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"reec {name} must be 0 or 1, got {getattr(self, name)}")
        if self.vup <= self.vdip:
            raise ValueError(f"dip window inverted: [{self.vdip}, {self.vup}]")
        if self.imax <= 0:
            raise ValueError(f"imax must be positive, got {self.imax}")
        for name in ("trv", "tp", "tiq", "tpord"):
            if getattr(self, name) <= 0:
                raise ValueError(f"reec {name} must be positive, got {getattr(self, name)}")


@dataclass
class ElectricalRefs:
    """Operating-point values fixed at initialization (kept off the shared
    parameter record so units sharing a template stay independent)."""

    vref0: float
    vref1: float
    pf_tan: float
    pref0: float
    qref0: float


def _ceiling(curve: tuple[tuple[float, float], ...], v: float) -> float:
    if not curve:
        return math.inf
    return pw_linear(curve, v)


def current_limits(
    p: ElectricalParams, vt_filt: float, ipcmd_pre: float, iqcmd_pre: float
) -> tuple[float, float]:
    """(ipmax, iqmax) after curve ceilings, the imax circle, and priority.

    The deprioritized axis gives way: its headroom is what the circle
    leaves after the other axis' command is accounted for.
    """
    ip_ceil = _ceiling(p.vdl2, vt_filt)
    iq_ceil = _ceiling(p.vdl1, vt_filt)
    if p.pq_flag == 1:
        ipmax = min(ip_ceil, p.imax)
        used = min(abs(ipcmd_pre), ipmax)
        iqmax = min(iq_ceil, math.sqrt(max(p.imax**2 - used**2, 0.0)))
    else:
        iqmax = min(iq_ceil, p.imax)
        used = min(abs(iqcmd_pre), iqmax)
        ipmax = min(ip_ceil, math.sqrt(max(p.imax**2 - used**2, 0.0)))
    return ipmax, iqmax


def reec_init(
    p: ElectricalParams, v0: float, p0: float, q0: float, wg0: float = 1.0
) -> tuple[tuple[float, float, float, float, float, float], ElectricalRefs]:
    """Equilibrium states and per-unit references for dispatch (p0, q0) at v0.

    Raises when the dispatch cannot be held, naming the binding limit.
    """
    if not (p.pmin <= p0 <= p.pmax):
        raise ValueError(f"initial power {p0:.4f} outside [pmin={p.pmin}, pmax={p.pmax}]")
    if not (p.qmin <= q0 <= p.qmax):
        raise ValueError(
            f"initial reactive power {q0:.4f} outside [qmin={p.qmin}, qmax={p.qmax}]"
        )
    ip0 = p0 / max(v0, VP_FLOOR)
    iq0 = q0 / max(v0, VP_FLOOR)
    if p.pq_flag == 1:
        ipmax, iqmax = current_limits(p, v0, ip0, 0.0)
    else:
        ipmax, iqmax = current_limits(p, v0, 0.0, iq0)
    if ip0 > ipmax + 1e-9:
        raise ValueError(
            f"initial active current {ip0:.4f} exceeds limit {ipmax:.4f} (imax/vdl2)"
        )
    if not (-iqmax - 1e-9 <= iq0 <= iqmax + 1e-9):
        raise ValueError(
            f"initial reactive current {iq0:.4f} exceeds limit {iqmax:.4f} (imax/vdl1)"
        )
    if p.q_flag == 1 and p.v_flag == 1 and not (p.vmin <= v0 <= p.vmax):
        raise ValueError(f"initial voltage {v0:.4f} outside [vmin={p.vmin}, vmax={p.vmax}]")
    refs = ElectricalRefs(
        vref0=p.vref0 if p.vref0 != 0.0 else v0,
        vref1=p.vref1 if p.vref1 != 0.0 else v0,
        pf_tan=q0 / p0 if abs(p0) > 1e-9 else 0.0,
        pref0=p0 / wg0 if p.p_flag == 1 else p0,
        qref0=q0,
    )
    state = (v0, p0, v0, iq0, iq0, p0)
    return state, refs


def reec_derivatives(
    p: ElectricalParams,
    refs: ElectricalRefs,
    state: tuple[float, float, float, float, float, float],
    v_mag: float,
    p_e: float,
    q_e: float,
    wg: float,
    pref: float,
    qext: float,
) -> tuple[tuple[float, float, float, float, float, float], float, float, bool]:
    """Returns (state derivatives, ipcmd, iqcmd, dip active)."""
    s_vt, s_pe, x_q, x_v, s_iql, s_pord = state
    dip = v_mag < p.vdip or v_mag > p.vup
    vp = max(s_vt, VP_FLOOR)

    ds_vt = (v_mag - s_vt) / p.trv
    ds_pe = (p_e - s_pe) / p.tp

    qsel = refs.pf_tan * s_pe if p.pf_flag == 1 else qext
    qsel = clamp(qsel, p.qmin, p.qmax)

    psel = pref * wg if p.p_flag == 1 else pref
    dpord = clamp((psel - s_pord) / p.tpord, p.dpmin, p.dpmax)
    if (s_pord >= p.pmax and dpord > 0.0) or (s_pord <= p.pmin and dpord < 0.0):
        dpord = 0.0
    ipcmd_pre = s_pord / vp

    if p.pq_flag == 1:
        ipmax, iqmax = current_limits(p, s_vt, ipcmd_pre, 0.0)
        ipcmd = clamp(ipcmd_pre, 0.0, ipmax)
        iq_base, dx_q, dx_v, ds_iql = _reactive_path(
            p, refs, state, qsel, q_e, vp, -iqmax, iqmax
        )
        iqinj = _dip_injection(p, refs, s_vt) if dip else 0.0
        iqcmd = clamp(iq_base + iqinj, -iqmax, iqmax)
    else:
        _, iqmax = current_limits(p, s_vt, 0.0, 0.0)
        iq_base, dx_q, dx_v, ds_iql = _reactive_path(
            p, refs, state, qsel, q_e, vp, -iqmax, iqmax
        )
        iqinj = _dip_injection(p, refs, s_vt) if dip else 0.0
        iqcmd = clamp(iq_base + iqinj, -iqmax, iqmax)
        ipmax, _ = current_limits(p, s_vt, 0.0, iqcmd)
        ipcmd = clamp(ipcmd_pre, 0.0, ipmax)

    if dip:
        dx_q = dx_v = ds_iql = dpord = 0.0
    return (ds_vt, ds_pe, dx_q, dx_v, ds_iql, dpord), ipcmd, iqcmd, dip


def _reactive_path(p, refs, state, qsel, q_e, vp, iqmin, iqmax):
    """Base reactive current command plus the three reactive-state slopes."""
    s_vt, _, x_q, x_v, s_iql, _ = state
    y_q, dx_q = pi_non_windup(qsel - q_e, p.kqp, p.kqi, x_q, p.vmin, p.vmax)
    ds_iql = (qsel / vp - s_iql) / p.tiq
    if p.q_flag == 1:
        v_target = y_q if p.v_flag == 1 else refs.vref1
        iq_base, dx_v = pi_non_windup(v_target - s_vt, p.kvp, p.kvi, x_v, iqmin, iqmax)
    else:
        iq_base = s_iql
        dx_v = 0.0
        dx_q = 0.0
    return iq_base, dx_q, dx_v, ds_iql


def _dip_injection(p: ElectricalParams, refs: ElectricalRefs, vt_filt: float) -> float:
    boost = p.kqv * deadband(refs.vref0 - vt_filt, p.dbd1, p.dbd2)
    return clamp(boost, p.iql1, p.iqh1)
