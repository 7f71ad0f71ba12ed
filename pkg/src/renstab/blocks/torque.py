"""Torque controller (wtgq_a).

Produces the active-power reference for the electrical control from a
speed-power operating curve.  Filtered electrical power picks a speed
target off the curve; depending on control_flag the PI regulates either

  * Speed:  err = ω_g − ω_ref, or
  * Torque: err = (P_ref − P_meas)/ω_g

into a torque command clamped to [te_min, te_max], and the downstream
reference is P = T_cmd·ω_g.

States: (p_filt, p_meas, x_pi) — the ω_ref selection filter (twref), a
power transducer lag (tp), and the PI integrator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from renstab.blocks.util import pi_non_windup, pw_linear

#: Default ω_ref(P) operating curve, flat beyond both ends.
DEFAULT_SPEED_POWER_CURVE: tuple[tuple[float, float], ...] = (
    (0.2, 0.58),
    (0.4, 0.72),
    (0.6, 0.86),
    (0.8, 1.0),
)


@dataclass
class TorqueParams:
    control_flag: str = "Speed"   # "Speed" or "Torque"
    kpp: float = 3.0
    kip: float = 0.6
    tp: float = 0.05              # power transducer lag, s
    te_max: float = 1.2           # torque command limits, pu
    te_min: float = 0.08
    twref: float = 60.0           # speed reference selection filter, s
    speed_power_curve: tuple[tuple[float, float], ...] = field(
        default_factory=lambda: DEFAULT_SPEED_POWER_CURVE
    )

    def validate(self) -> None:
        if self.control_flag not in ("Speed", "Torque"):
            raise ValueError(
                f"torque control_flag must be 'Speed' or 'Torque', got {self.control_flag!r}"
            )
        if not self.speed_power_curve:
            raise ValueError("speed_power_curve must have at least one point")
        xs = [x for x, _ in self.speed_power_curve]
        if xs != sorted(xs):
            raise ValueError("speed_power_curve abscissae must be non-decreasing")


def curve_speed(p: TorqueParams, power: float) -> tuple[float, bool]:
    """ω from the operating curve; second value flags end-segment clamping."""
    xs0 = p.speed_power_curve[0][0]
    xs1 = p.speed_power_curve[-1][0]
    clamped = power < xs0 or power > xs1
    return pw_linear(p.speed_power_curve, power), clamped


def wtgtrq_init(
    p: TorqueParams, p_e0: float
) -> tuple[tuple[float, float, float], float]:
    """Equilibrium states and the resulting speed ω_g0.

    The initial speed is dictated by the curve at the dispatch power; the
    integrator carries the full torque command.
    """
    w0, _ = curve_speed(p, p_e0)
    t0 = p_e0 / w0
    if not (p.te_min <= t0 <= p.te_max):
        raise ValueError(
            f"initial torque {t0:.4f} outside [te_min={p.te_min}, te_max={p.te_max}]"
        )
    return (p_e0, p_e0, t0), w0


def wtgtrq_derivatives(
    p: TorqueParams,
    state: tuple[float, float, float],
    p_e: float,
    wg: float,
    pref_ext: float,
) -> tuple[tuple[float, float, float], float, float, bool]:
    """Returns (state derivatives, inner power reference, ω_ref, curve clamped)."""
    p_filt, p_meas, x_pi = state
    dp_filt = (p_e - p_filt) / p.twref
    dp_meas = (p_e - p_meas) / p.tp
    wref, clamped = curve_speed(p, p_filt)
    if p.control_flag == "Speed":
        err = wg - wref
    else:
        err = (pref_ext - p_meas) / wg
    t_cmd, dx_pi = pi_non_windup(err, p.kpp, p.kip, x_pi, p.te_min, p.te_max)
    return (dp_filt, dp_meas, dx_pi), t_cmd * wg, wref, clamped
