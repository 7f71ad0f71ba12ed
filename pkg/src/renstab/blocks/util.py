"""Small control-diagram pieces shared by the dynamic blocks: clamps,
deadbands, piecewise-linear curves, and the non-windup PI convention.

Non-windup convention used throughout: a PI in parallel form
``y = kp*e + xi`` with output limits freezes its integrator (dxi = 0)
whenever the unclamped output sits at or beyond a limit while the error
pushes further out; integration resumes as soon as the error sign
reverses.
"""

from __future__ import annotations


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def deadband(x: float, db_lo: float, db_hi: float) -> float:
    """Dead zone [db_lo, db_hi] (db_lo <= 0 <= db_hi); outside, the output
    picks up from the nearest edge."""
    if x > db_hi:
        return x - db_hi
    if x < db_lo:
        return x - db_lo
    return 0.0


def pw_linear(points: list[tuple[float, float]], x: float) -> float:
    """Evaluate a piecewise-linear curve given as ((x0,y0), (x1,y1), ...)
    with flat extrapolation beyond the end points."""
    if not points:
        raise ValueError("empty piecewise-linear curve")
    if x <= points[0][0]:
        return points[0][1]
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if x <= x1:
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    return points[-1][1]


def ramp01(x: float, x0: float, x1: float) -> float:
    """0 below x0, 1 above x1, linear in between (x0 < x1)."""
    if x <= x0:
        return 0.0
    if x >= x1:
        return 1.0
    return (x - x0) / (x1 - x0)


def pi_non_windup(err: float, kp: float, ki: float, xi: float,
                  lo: float, hi: float) -> tuple[float, float]:
    """Parallel-form PI with output limits and integrator freeze.

    Returns (limited output, integrator derivative).
    """
    y_raw = kp * err + xi
    dxi = ki * err
    if y_raw >= hi and err > 0.0:
        dxi = 0.0
    elif y_raw <= lo and err < 0.0:
        dxi = 0.0
    return clamp(y_raw, lo, hi), dxi


def lag_non_windup(u: float, y: float, t: float,
                   lo: float, hi: float) -> float:
    """First-order lag dy/dt = (u - y)/t whose state may not integrate
    past [lo, hi]; returns the state derivative."""
    dy = (u - y) / t
    if y >= hi and dy > 0.0:
        return 0.0
    if y <= lo and dy < 0.0:
        return 0.0
    return dy
