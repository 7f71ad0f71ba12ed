"""Plant-level controller (repc_a / repc_b).

Closes a slow reactive loop at a monitored (point of interconnection)
bus and, optionally, a frequency-droop active loop:

  * reactive — ref_flag = 1 regulates compensated voltage
    (|V − (rc+jxc)·I| when line drop compensation is set, else
    V + kc·Q_branch), ref_flag = 0 regulates branch reactive flow; the
    error feeds a PI then a lead-lag (tft/tfv) producing the reactive
    reference handed to the units.  The PI freezes while the regulated
    voltage sits below vfrz.
  * active — frequency error through a deadband and asymmetric droop
    gains (ddn above nominal, dup below), summed with the plant
    reference against filtered branch flow, through a PI and lag.

The A and B variants share this structure; B (variant "B") is the
multi-unit form whose output is dispatched across controlled_units.
All quantities are plant base.

States: (s_qm, x_q, s_ll, s_pm, x_p, s_plag).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from renstab.blocks.util import clamp, deadband, pi_non_windup

NOMINAL_HZ = 60.0


@dataclass
class PlantParams:
    variant: str = "A"        # "A" (single unit) or "B" (multi-unit)
    ref_flag: int = 1          # 1 -> voltage control, 0 -> Q control
    freq_flag: int = 0         # 1 -> active/frequency loop enabled
    kp: float = 1.0            # reactive PI gains
    ki: float = 4.0
    kc: float = 0.0            # reactive droop in the voltage measurement
    rc: float = 0.0            # line drop compensation impedance, pu
    xc: float = 0.0
    tfltr: float = 0.02        # measurement filter, s
    tft: float = 0.0           # lead-lag numerator time constant, s
    tfv: float = 0.15          # lead-lag denominator time constant, s
    tp: float = 0.25           # active flow filter, s
    tlag: float = 0.1          # active output lag, s
    emax: float = 999.0        # reactive error limits
    emin: float = -999.0
    qmax: float = 0.436        # reactive output limits, plant pu
    qmin: float = -0.436
    ddn: float = 20.0          # droop gain above nominal frequency
    dup: float = 0.0           # droop gain below nominal frequency
    fdbd1: float = -0.017      # frequency deadband, Hz (fdbd1 <= 0 <= fdbd2)
    fdbd2: float = 0.017
    femax: float = 999.0       # active error limits
    femin: float = -999.0
    kpg: float = 0.1           # active PI gains
    kig: float = 0.5
    pmax: float = 1.0          # active output limits, plant pu
    pmin: float = 0.0
    vfrz: float = 0.7          # reactive PI freeze threshold, pu voltage
    controlled_units: tuple[tuple[int, str], ...] = field(default_factory=tuple)

    def validate(self) -> None:
        if self.variant not in ("A", "B"):
            raise ValueError(f"plant variant must be 'A' or 'B', got {self.variant!r}")
        if self.ref_flag not in (0, 1):
            raise ValueError(f"plant ref_flag must be 0 or 1, got {self.ref_flag}")
        if self.freq_flag not in (0, 1):
            raise ValueError(f"plant freq_flag must be 0 or 1, got {self.freq_flag}")
        for name in ("tfltr", "tp", "tlag"):
            if getattr(self, name) <= 0:
                raise ValueError(f"plant {name} must be positive, got {getattr(self, name)}")
        if self.tft < 0 or self.tfv < 0:
            raise ValueError("plant lead-lag time constants must be non-negative")
        if not (self.fdbd1 <= 0.0 <= self.fdbd2):
            raise ValueError(
                f"frequency deadband must satisfy fdbd1 <= 0 <= fdbd2, "
                f"got ({self.fdbd1}, {self.fdbd2})"
            )


@dataclass
class PlantRefs:
    """Setpoints captured at initialization, plant base."""

    vref: float
    qref: float
    pref: float
    fref: float = NOMINAL_HZ


def compensated_voltage(p: PlantParams, v_reg: complex, i_branch: complex, q_branch: float) -> float:
    """Regulated quantity for ref_flag = 1."""
    if p.rc != 0.0 or p.xc != 0.0:
        return abs(v_reg - complex(p.rc, p.xc) * i_branch)
    return abs(v_reg) + p.kc * q_branch


def droop_response(p: PlantParams, f_hz: float, fref: float = NOMINAL_HZ) -> float:
    """Active-power droop contribution, plant pu.

    The deadband applies to the frequency error in Hz; the remainder is
    normalized to nominal before the droop gain (ddn when frequency is
    high, dup when low).
    """
    ferr_hz = deadband(fref - f_hz, p.fdbd1, p.fdbd2)
    ferr = ferr_hz / NOMINAL_HZ
    gain = p.ddn if ferr < 0.0 else p.dup
    return gain * ferr


def repc_init(
    p: PlantParams, v_c0: float, q_branch0: float, p_branch0: float
) -> tuple[tuple[float, float, float, float, float, float], PlantRefs]:
    """Equilibrium states and captured setpoints.

    Raises when the initial flow is outside the controller's output
    limits, naming the limit.
    """
    if not (p.qmin <= q_branch0 <= p.qmax):
        raise ValueError(
            f"initial plant reactive output {q_branch0:.4f} outside "
            f"[qmin={p.qmin}, qmax={p.qmax}]"
        )
    if p.freq_flag and not (p.pmin <= p_branch0 <= p.pmax):
        raise ValueError(
            f"initial plant active output {p_branch0:.4f} outside "
            f"[pmin={p.pmin}, pmax={p.pmax}]"
        )
    meas0 = v_c0 if p.ref_flag == 1 else q_branch0
    state = (meas0, q_branch0, q_branch0, p_branch0, p_branch0, p_branch0)
    return state, PlantRefs(vref=v_c0, qref=q_branch0, pref=p_branch0)


def repc_derivatives(
    p: PlantParams,
    refs: PlantRefs,
    state: tuple[float, float, float, float, float, float],
    v_reg: complex,
    i_branch: complex,
    q_branch: float,
    p_branch: float,
    f_hz: float,
) -> tuple[tuple[float, float, float, float, float, float], float, float, bool]:
    """Returns (state derivatives, reactive reference, active reference, frozen)."""
    s_qm, x_q, s_ll, s_pm, x_p, s_plag = state

    if p.ref_flag == 1:
        meas = compensated_voltage(p, v_reg, i_branch, q_branch)
        err = refs.vref - s_qm
    else:
        meas = q_branch
        err = refs.qref - s_qm
    ds_qm = (meas - s_qm) / p.tfltr
    err = clamp(err, p.emin, p.emax)
    frozen = abs(v_reg) < p.vfrz
    y_q, dx_q = pi_non_windup(err, p.kp, p.ki, x_q, p.qmin, p.qmax)
    if frozen:
        dx_q = 0.0
    if p.tfv > 0.0:
        ratio = p.tft / p.tfv
        q_out = ratio * y_q + (1.0 - ratio) * s_ll
        ds_ll = (y_q - s_ll) / p.tfv
    else:
        q_out = y_q
        ds_ll = 0.0

    if p.freq_flag == 1:
        ds_pm = (p_branch - s_pm) / p.tp
        perr = clamp(
            droop_response(p, f_hz, refs.fref) + refs.pref - s_pm, p.femin, p.femax
        )
        y_p, dx_p = pi_non_windup(perr, p.kpg, p.kig, x_p, p.pmin, p.pmax)
        ds_plag = (y_p - s_plag) / p.tlag
        p_out = s_plag
    else:
        ds_pm = dx_p = ds_plag = 0.0
        p_out = refs.pref

    return (ds_qm, dx_q, ds_ll, ds_pm, dx_p, ds_plag), q_out, p_out, frozen


def plant_equilibrium_check(
    p: PlantParams, refs: PlantRefs, state, v_reg, i_branch, q_branch, p_branch
) -> float:
    """Largest state derivative magnitude at nominal frequency (init audit)."""
    dstate, _, _, _ = repc_derivatives(
        p, refs, state, v_reg, i_branch, q_branch, p_branch, NOMINAL_HZ
    )
    return max(abs(d) for d in dstate)
