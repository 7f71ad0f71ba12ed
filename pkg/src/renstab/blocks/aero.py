"""Simplified aerodynamic model (wtga_a).

Stateless: mechanical power falls off quadratically as the blades pitch
away from the initial angle,

    P_m = P_m0 − ka·θ·(θ − θ0)

with P_m0 fixed at the initial electrical output.  At θ = θ0 the turbine
recovers exactly P_m0, so the model is consistent with any dispatch.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class AeroParams:
    ka: float = 0.007   # pu power per deg^2
    theta0: float = 0.0  # initial blade angle, deg


def wtga_power(p: AeroParams, theta_deg: float, p_m0: float) -> float:
    return p_m0 - p.ka * theta_deg * (theta_deg - p.theta0)
