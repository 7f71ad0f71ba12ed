"""Transient-stability verdicts computed from a recorded simulation.

Three numbers summarize a contingency run: the minimum damping ratio of
any machine's relative rotor angle (ringdown analysis by logarithmic
decrement over detected oscillation peaks), the extreme bus frequencies
after the last event, and the worst ratio of bus-voltage nadir to its
pre-contingency value.  Each is judged against a threshold and the three
verdicts combine into a single pass/fail report.

The damping estimator is deliberately plain: detrend by the final
settled value, pick successive same-sign peaks (quadratically refined
between samples), average the log-decrement estimate over the available
pairs.  Channels that never leave a small amplitude floor — or whose
oscillation has fully died inside the window — count as fully damped.
A window too short to contain one full period of a visible oscillation
yields an "indeterminate" verdict rather than a number.

All functions are pure readers of the result object; nothing here
mutates or re-simulates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fnmatch import fnmatch

import numpy as np

NOMINAL_HZ = 60.0

#: Rotor-angle swings smaller than this (degrees, after detrending) are
#: treated as "no oscillation": the channel is fully damped by fiat.
AMPLITUDE_FLOOR_DEG = 0.1

#: Seconds of trailing signal whose mean defines the settled value.
DETREND_TAIL_S = 0.5

#: Evaluation windows open this long after the last event by default.
SETTLE_MARGIN_S = 0.5


class MetricsError(ValueError):
    """A metric could not be computed from the given result."""


# ---------------------------------------------------------------------------
# Thresholds and report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsThresholds:
    """Pass bands: damping ratio and nadir ratio are lower bounds,
    frequency is an inclusive interval around nominal."""

    mr_min: float = 0.03
    mf_low: float = 59.5
    mf_high: float = 60.5
    mv_min: float = 0.75

    def validate(self) -> None:
        if not self.mf_low < NOMINAL_HZ < self.mf_high:
            raise MetricsError(
                f"frequency band [{self.mf_low}, {self.mf_high}] must "
                f"straddle {NOMINAL_HZ}"
            )
        if not 0.0 < self.mv_min < 1.0:
            raise MetricsError(
                f"voltage nadir ratio bound must lie in (0, 1), got {self.mv_min}"
            )


@dataclass(frozen=True)
class MetricsReport:
    mr: float | None            # None when indeterminate
    mr_worst: str | None
    mr_pass: bool
    mf_min: float
    mf_max: float
    mf_worst: str | None
    mf_pass: bool
    mv: float
    mv_worst: str | None
    mv_pass: bool
    window: tuple[float, float]
    thresholds: MetricsThresholds

    @property
    def passed(self) -> bool:
        return self.mr_pass and self.mf_pass and self.mv_pass

    def to_dict(self) -> dict:
        mr: dict = {"value": self.mr, "worst": self.mr_worst, "pass": self.mr_pass}
        if self.mr is None:
            mr["status"] = "indeterminate"
        return {
            "mr": mr,
            "mf": {
                "min": self.mf_min,
                "max": self.mf_max,
                "worst": self.mf_worst,
                "pass": self.mf_pass,
            },
            "mv": {"value": self.mv, "worst": self.mv_worst, "pass": self.mv_pass},
            "pass": self.passed,
            "window": list(self.window),
            "estimator": {
                "method": "log_decrement",
                "amplitude_floor_deg": AMPLITUDE_FLOOR_DEG,
                "detrend_tail_s": DETREND_TAIL_S,
            },
        }


# ---------------------------------------------------------------------------
# Damping estimation
# ---------------------------------------------------------------------------

def _refined_extremes(y: np.ndarray, sign: int) -> np.ndarray:
    """Amplitudes of interior maxima (sign=+1) or minima (sign=-1) of y,
    refined by fitting a parabola through each discrete extremum and its
    neighbours.  Only same-sign extrema are kept (positive maxima,
    negative minima); amplitudes return positive, in time order."""
    s = sign * np.asarray(y, dtype=float)
    if s.size < 3:
        return np.empty(0)
    left = s[1:-1] - s[:-2]
    right = s[1:-1] - s[2:]
    idx = np.nonzero((left > 0.0) & (right >= 0.0))[0] + 1
    amps = []
    for i in idx:
        y0, y1, y2 = s[i - 1], s[i], s[i + 1]
        curv = y0 - 2.0 * y1 + y2
        peak = y1 if curv >= 0.0 else y1 - (y2 - y0) ** 2 / (8.0 * curv)
        if peak > 0.0:
            amps.append(peak)
    return np.asarray(amps)


def _log_decrement(a: float, b: float) -> float:
    r = math.log(a / b)
    return r / math.sqrt(4.0 * math.pi ** 2 + r * r)


def estimate_damping(
    time,
    values,
    *,
    amplitude_floor: float = AMPLITUDE_FLOOR_DEG,
    detrend_tail: float = DETREND_TAIL_S,
    decay_tail: float = 1.0,
) -> float | None:
    """Damping ratio of one ringdown channel, or None if indeterminate.

    The signal is detrended by the mean of its last ``detrend_tail``
    seconds.  If it never exceeds ``amplitude_floor`` it is fully damped
    (1.0).  Otherwise successive same-sign peak pairs give log-decrement
    estimates, averaged over both the maxima and minima chains.  With no
    usable pair the verdict falls back on evidence: a quiet final
    ``decay_tail`` seconds or a peak-free (monotone) signal still count
    as damped; a live oscillation with less than one full period in view
    is indeterminate (None).

    Negative returns mean growing oscillation; the estimate always lies
    in (-1, 1).
    """
    t = np.asarray(time, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size != y.size or t.size == 0:
        raise MetricsError("time and signal must be equal-length and non-empty")
    tail = y[t >= t[-1] - detrend_tail]
    y = y - (tail.mean() if tail.size else y[-1])
    if np.max(np.abs(y)) < amplitude_floor:
        return 1.0
    maxima = _refined_extremes(y, +1)
    minima = _refined_extremes(y, -1)
    estimates = [
        _log_decrement(a, b)
        for chain in (maxima, minima)
        for a, b in zip(chain[:-1], chain[1:])
        if a >= amplitude_floor and b >= amplitude_floor
    ]
    if estimates:
        return float(np.mean(estimates))
    if np.max(np.abs(y[t >= t[-1] - decay_tail])) < amplitude_floor:
        return 1.0     # rang, then settled inside the window
    if maxima.size + minima.size == 0:
        return 1.0     # monotone trend: nothing oscillating
    return None


def _resolve_window(result, window_start: float | None) -> tuple[float, float]:
    """Default evaluation window: shortly after the last event, to the
    end of the recording."""
    t_end = float(result.time[-1])
    if window_start is None:
        if result.event_log:
            window_start = (
                max(e["time"] for e in result.event_log) + SETTLE_MARGIN_S
            )
        else:
            window_start = 0.0
    if not 0.0 <= window_start <= t_end:
        raise MetricsError(
            f"window start {window_start} s outside recording [0, {t_end}] s"
        )
    return float(window_start), t_end


def _outaged_generators(result) -> set[str]:
    return {
        f"gen.{e['bus']}.{e['unit_id']}"
        for e in result.event_log
        if e["kind"] == "generator_outage"
    }


def damping_ratio_min(
    result,
    window_start: float | None = None,
    *,
    amplitude_floor: float = AMPLITUDE_FLOOR_DEG,
) -> tuple[float | None, str | None]:
    """Minimum damping ratio over machine rotor-angle channels.

    Outaged machines are skipped (a frozen rotor tells nothing).  If the
    recording's angle reference was itself outaged, the surviving
    channels are re-referenced to the first remaining machine so they
    settle rather than drift with the lost reference.  Returns
    ``(None, generator)`` when any surviving channel is indeterminate,
    and ``(1.0, None)`` for a case with no machines at all.
    """
    t0, _ = _resolve_window(result, window_start)
    mask = result.time >= t0 - 1e-9
    outaged = _outaged_generators(result)
    names = [
        n for n in result.channels
        if fnmatch(n, "gen.*.rotor_angle_deg")
        and n.removesuffix(".rotor_angle_deg") not in outaged
    ]
    if not names:
        return 1.0, None
    t = result.time[mask]
    signals = {n: result.channels[n][mask] for n in names}
    if result.reference is not None and result.reference in outaged:
        base = signals[names[0]].copy()
        for n in names:
            signals[n] = signals[n] - base
    worst: str | None = None
    worst_zeta = math.inf
    for n in names:
        zeta = estimate_damping(t, signals[n], amplitude_floor=amplitude_floor)
        gen = n.removesuffix(".rotor_angle_deg")
        if zeta is None:
            return None, gen
        if zeta < worst_zeta:
            worst_zeta, worst = zeta, gen
    return worst_zeta, worst


# ---------------------------------------------------------------------------
# Frequency and voltage metrics
# ---------------------------------------------------------------------------

def frequency_extremes(
    result, window_start: float | None = None
) -> tuple[float, float, str | None]:
    """(min Hz, max Hz, worst bus) over bus-frequency channels in the
    window, skipping samples flagged de-energized.  The worst bus is the
    one straying farthest from nominal."""
    t0, _ = _resolve_window(result, window_start)
    mask = result.time >= t0 - 1e-9
    dead = {int(b): spans for b, spans in result.deenergized.items()}
    dt = result.options.dt
    fmin, fmax = math.inf, -math.inf
    bus_min = bus_max = None
    seen = False
    for name in result.channels:
        if not fnmatch(name, "bus.*.f_hz"):
            continue
        bus = int(name.split(".")[1])
        keep = mask.copy()
        for t_on, t_off in dead.get(bus, []):
            keep &= ~(
                (result.time >= t_on - dt / 2) & (result.time <= t_off + dt / 2)
            )
        if not keep.any():
            continue
        seen = True
        f = result.channels[name][keep]
        lo, hi = float(f.min()), float(f.max())
        if lo < fmin:
            fmin, bus_min = lo, bus
        if hi > fmax:
            fmax, bus_max = hi, bus
    if not seen:
        raise MetricsError("no live bus-frequency samples in the window")
    worst = bus_min if NOMINAL_HZ - fmin >= fmax - NOMINAL_HZ else bus_max
    return fmin, fmax, f"bus.{worst}"


def voltage_nadir_ratio(result) -> tuple[float, str | None]:
    """Worst ratio of post-event voltage nadir to the pre-contingency
    value, over all buses.  Samples taken while any applied fault is
    still active are excluded — a bolted fault reads near zero
    everywhere and says nothing about recovery.  Buses already dead at
    t=0 are excluded with a warning.  An event-free run scores 1.0."""
    if not result.event_log:
        return 1.0, None
    first = min(e["time"] for e in result.event_log)
    dt = result.options.dt
    cleared = {
        (e["bus"], round(e["time"] / dt))
        for e in result.event_log
        if e["kind"] == "clear_fault"
    }
    mask = result.time >= first - 1e-9
    for bus, t_on, t_off in result.fault_intervals:
        # The sample at an actual clearing instant is post-clear and
        # counts; an interval closed at the horizon is still faulted.
        if (bus, round(t_off / dt)) in cleared:
            upper = result.time < t_off - dt / 2
        else:
            upper = result.time <= t_off + dt / 2
        mask &= ~((result.time >= t_on - dt / 2) & upper)
    if not mask.any():
        raise MetricsError("no post-event samples outside fault windows")
    ratio_min = math.inf
    worst = None
    for name in result.channels:
        if not fnmatch(name, "bus.*.v_pu"):
            continue
        bus = int(name.split(".")[1])
        v = result.channels[name]
        v0 = float(v[0])
        if v0 < 0.01:
            warnings.warn(
                f"bus {bus} de-energized before the contingency "
                f"(V(0)={v0:.4g} pu); excluded from the nadir metric"
            )
            continue
        ratio = float(v[mask].min()) / v0
        if ratio < ratio_min:
            ratio_min, worst = ratio, bus
    if worst is None:
        raise MetricsError("no buses with live pre-contingency voltage")
    return ratio_min, f"bus.{worst}"


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------

def evaluate(
    result,
    thresholds: MetricsThresholds | None = None,
    window_start: float | None = None,
) -> MetricsReport:
    """All three metrics plus per-metric and overall verdicts.

    An indeterminate damping estimate fails its verdict: a pass must be
    demonstrated, not defaulted.  Bound comparisons are inclusive, so a
    zero damping-ratio threshold accepts an undamped (zero) estimate.
    """
    th = thresholds if thresholds is not None else MetricsThresholds()
    th.validate()
    window = _resolve_window(result, window_start)
    mr, mr_worst = damping_ratio_min(result, window[0])
    fmin, fmax, mf_worst = frequency_extremes(result, window[0])
    mv, mv_worst = voltage_nadir_ratio(result)
    return MetricsReport(
        mr=mr,
        mr_worst=mr_worst,
        mr_pass=mr is not None and mr >= th.mr_min,
        mf_min=fmin,
        mf_max=fmax,
        mf_worst=mf_worst,
        mf_pass=th.mf_low <= fmin and fmax <= th.mf_high,
        mv=mv,
        mv_worst=mv_worst,
        mv_pass=mv >= th.mv_min,
        window=window,
        thresholds=th,
    )
