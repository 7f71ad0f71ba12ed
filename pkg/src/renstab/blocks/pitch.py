"""Pitch controller (wtgp_a).

Two parallel PI branches feed a rate-limited blade servo:

  * pitch control     — drives on speed error ω_g − ω_ref plus a
    cross-coupled power error kcc·(P_ord − P_ref0),
  * pitch compensation — drives on the power error P_ord − P_ref0 alone.

Both integrators are clamped to [theta_min, theta_max] with anti-windup,
their sum is clamped again, and the servo slews toward the command at a
rate limited to [rtheta_min, rtheta_max] deg/s.  The blade position
itself cannot leave [theta_min, theta_max].

States: (theta, x_pc, x_cmp).
"""

from __future__ import annotations

from dataclasses import dataclass

from renstab.blocks.util import clamp, pi_non_windup


@dataclass
class PitchParams:
    tp: float = 0.3            # servo time constant, s
    kpp: float = 150.0         # pitch-control proportional gain
    kip: float = 25.0          # pitch-control integral gain
    kpc: float = 3.0           # pitch-compensation proportional gain
    kic: float = 30.0          # pitch-compensation integral gain
    kcc: float = 0.0           # power error coupling into the speed branch
    theta_min: float = 0.0     # blade angle limits, deg
    theta_max: float = 27.0
    rtheta_min: float = -10.0  # slew limits, deg/s
    rtheta_max: float = 10.0

    def validate(self) -> None:
        if self.theta_max <= self.theta_min:
            raise ValueError(
                f"pitch limits inverted: [{self.theta_min}, {self.theta_max}]"
            )
        if self.tp <= 0:
            raise ValueError(f"pitch servo time constant must be positive, got {self.tp}")


def wtgpt_init(p: PitchParams, theta0: float) -> tuple[float, float, float]:
    """Equilibrium: both branch errors are zero, integrators carry θ0.

    The split between the two integrators is arbitrary at equilibrium;
    the compensation branch starts at zero and the control branch holds
    the whole initial angle.
    """
    if not (p.theta_min <= theta0 <= p.theta_max):
        raise ValueError(
            f"initial blade angle {theta0} outside [{p.theta_min}, {p.theta_max}]"
        )
    return (theta0, theta0, 0.0)


def wtgpt_derivatives(
    p: PitchParams,
    state: tuple[float, float, float],
    wg: float,
    wref: float,
    p_ord: float,
    p_ref0: float,
) -> tuple[tuple[float, float, float], float]:
    """Returns (state derivatives, blade angle θ)."""
    theta, x_pc, x_cmp = state
    perr = p_ord - p_ref0
    y_pc, dx_pc = pi_non_windup(
        (wg - wref) + p.kcc * perr, p.kpp, p.kip, x_pc, p.theta_min, p.theta_max
    )
    y_cmp, dx_cmp = pi_non_windup(
        perr, p.kpc, p.kic, x_cmp, p.theta_min, p.theta_max
    )
    cmd = clamp(y_pc + y_cmp, p.theta_min, p.theta_max)
    dtheta = clamp((cmd - theta) / p.tp, p.rtheta_min, p.rtheta_max)
    if theta >= p.theta_max and dtheta > 0.0:
        dtheta = 0.0
    elif theta <= p.theta_min and dtheta < 0.0:
        dtheta = 0.0
    return (dtheta, dx_pc, dx_cmp), theta
