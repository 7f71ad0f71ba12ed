"""Fixed-step time-domain simulation of a dynamic case.

Partitioned explicit scheme: device states advance with the explicit
trapezoid rule (Heun) while the network algebraic equations are re-solved
at every stage.  The network is the static admittance matrix augmented
with constant-impedance loads (absorbing any generator that has no
dynamic record) and classical-machine Norton branches; converter units
enter as voltage-dependent current injections, so each solve is a short
fixed-point sweep against the one factorized matrix.  The factorization
is reused until an event changes the matrix.

Events (bus faults, fault clearings, generator outages) are snapped to
the nearest step boundary; applying and clearing a fault in the same
instant restores the matrix bit-identically, leaving the trajectory equal
to an event-free run.  Outaged devices freeze: zero injection, zero
derivatives, channels report zero output and a flat rotor angle.

Each bus carries a washout state tracking its unwrapped voltage angle;
bus frequency is 60 Hz plus the filtered angle derivative.  De-energized
buses (|V| below 0.01 pu) hold their frequency and stop ingesting angle
noise; the affected spans are flagged in the result.

Runtime failures (network solve divergence, non-finite states) abort the
run but return the portion already simulated, with ``aborted_at`` and the
reason set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fnmatch import fnmatch
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import root as _scipy_root
from scipy.sparse.linalg import splu

from renstab.devices import SynchronousMachine
from renstab.dynamics import assemble_devices
from renstab.network import PowerFlowCase, build_ybus
from renstab.powerflow import solve_powerflow

NOMINAL_HZ = 60.0
TWO_PI = 2.0 * math.pi

DEFAULT_FAULT_ADMITTANCE = complex(1.0e4, -1.0e4)

#: Fixed-point tolerance on max |ΔV| between network sweeps, pu.
NETWORK_TOL = 1e-8
NETWORK_MAX_SWEEPS = 50
#: Sweeps before Aitken extrapolation may engage; healthy solves finish
#: earlier, so acceleration never perturbs them.
ACCEL_AFTER = 20

#: Below this voltage magnitude a bus counts as de-energized: its
#: frequency holds the last live value and the span is flagged.
DEENERGIZED_V = 0.01

EVENT_KINDS = ("bus_fault", "clear_fault", "generator_outage")


class SimulationError(RuntimeError):
    """Simulation cannot start or cannot continue."""


class EventError(ValueError):
    """Event schedule is malformed or names unknown equipment."""


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    kind: str
    time: float
    bus: int | None = None
    unit_id: str | None = None
    fault_admittance: complex = DEFAULT_FAULT_ADMITTANCE

    def describe(self) -> str:
        if self.kind == "generator_outage":
            return f"generator_outage {self.bus}.{self.unit_id}"
        return f"{self.kind} bus {self.bus}"


def parse_events(data) -> list[Event]:
    """Parse the JSON event list; enforces kinds, fields, and that every
    clearing follows a matching fault."""
    if not isinstance(data, (list, tuple)):
        raise EventError("event schedule must be a list")
    events: list[Event] = []
    for k, raw in enumerate(data):
        where = f"events[{k}]"
        if not isinstance(raw, dict):
            raise EventError(f"{where}: expected an object")
        kind = raw.get("kind")
        if kind not in EVENT_KINDS:
            raise EventError(f"{where}: unknown kind {kind!r}")
        if "time" not in raw:
            raise EventError(f"{where}: missing 'time'")
        time = float(raw["time"])
        if time < 0:
            raise EventError(f"{where}: time must be non-negative, got {time}")
        allowed = {"kind", "time", "bus"}
        if kind == "bus_fault":
            allowed.add("fault_admittance")
        if kind == "generator_outage":
            allowed.add("unit_id")
        unknown = set(raw) - allowed
        if unknown:
            raise EventError(f"{where}: unknown key {sorted(unknown)[0]!r}")
        if "bus" not in raw:
            raise EventError(f"{where}: missing 'bus'")
        bus = int(raw["bus"])
        if kind == "generator_outage":
            if "unit_id" not in raw:
                raise EventError(f"{where}: missing 'unit_id'")
            events.append(Event(kind, time, bus, str(raw["unit_id"])))
        elif kind == "bus_fault":
            y = raw.get("fault_admittance")
            if y is None:
                yc = DEFAULT_FAULT_ADMITTANCE
            else:
                try:
                    g, b = y
                    yc = complex(float(g), float(b))
                except (TypeError, ValueError):
                    raise EventError(
                        f"{where}: fault_admittance must be a [g, b] pair"
                    ) from None
            events.append(Event(kind, time, bus, fault_admittance=yc))
        else:
            events.append(Event(kind, time, bus))

    open_faults: dict[int, float] = {}
    for k, ev in enumerate(sorted(events, key=lambda e: e.time)):
        if ev.kind == "bus_fault":
            open_faults[ev.bus] = ev.time
        elif ev.kind == "clear_fault":
            if ev.bus not in open_faults:
                raise EventError(
                    f"clear_fault at bus {ev.bus} (t={ev.time}) has no "
                    "preceding bus_fault"
                )
            del open_faults[ev.bus]
    return events


def event_to_dict(ev: Event) -> dict:
    doc: dict = {"kind": ev.kind, "time": ev.time, "bus": ev.bus}
    if ev.kind == "generator_outage":
        doc["unit_id"] = ev.unit_id
    if ev.kind == "bus_fault":
        doc["fault_admittance"] = [ev.fault_admittance.real, ev.fault_admittance.imag]
    return doc


# ---------------------------------------------------------------------------
# Options and result
# ---------------------------------------------------------------------------

@dataclass
class SimOptions:
    dt: float = 0.005
    t_end: float = 10.0
    record_channels: tuple[str, ...] | None = None
    freq_filter_tc: float = 0.04

    def validate(self) -> None:
        if not 0.0 < self.dt <= 0.01:
            raise SimulationError(f"dt must lie in (0, 0.01], got {self.dt}")
        if self.t_end <= 0.0:
            raise SimulationError(f"t_end must be positive, got {self.t_end}")
        if self.freq_filter_tc <= 0.0:
            raise SimulationError(
                f"freq_filter_tc must be positive, got {self.freq_filter_tc}"
            )


@dataclass
class SimulationResult:
    time: np.ndarray
    channels: dict[str, np.ndarray]
    event_log: list[dict]
    stats: dict
    options: SimOptions
    fault_intervals: list[list] = field(default_factory=list)   # [bus, on, off]
    deenergized: dict[int, list[list[float]]] = field(default_factory=dict)
    aborted_at: float | None = None
    abort_reason: str | None = None
    reference: str | None = None    # rotor-angle reference channel

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise KeyError(f"no recorded channel {name!r}") from None

    def metadata(self) -> dict:
        """Sidecar document for the CSV: everything except the samples."""
        return {
            "dt": self.options.dt,
            "t_end": self.options.t_end,
            "freq_filter_tc": self.options.freq_filter_tc,
            "events": self.event_log,
            "stats": self.stats,
            "fault_intervals": self.fault_intervals,
            "deenergized": {str(b): iv for b, iv in sorted(self.deenergized.items())},
            "aborted_at": self.aborted_at,
            "abort_reason": self.abort_reason,
            "reference": self.reference,
            "channels": list(self.channels),
        }

    def to_csv(self, path: str | Path) -> None:
        """First column time_s, then one column per channel, stable order."""
        names = list(self.channels)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(["time_s", *names]) + "\n")
            cols = [self.time, *(self.channels[n] for n in names)]
            for row in zip(*cols):
                fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# Simulation state
# ---------------------------------------------------------------------------

def _aitken(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Elementwise Aitken extrapolation of three fixed-point iterates.

    For an element converging geometrically (any complex ratio) this
    jumps to the limit; elements whose second difference is negligible
    are left at the newest iterate.
    """
    d1 = v2 - v1
    d2 = v2 - 2.0 * v1 + v0
    out = v2.copy()
    safe = np.abs(d2) > 1e-3 * np.abs(d1)
    step = np.zeros_like(v2)
    step[safe] = d1[safe] ** 2 / d2[safe]
    # keep the jump bounded so a noisy ratio estimate cannot fling the
    # iterate out of the solver's basin
    step[np.abs(step) > 0.5] = 0.0
    out -= step
    return np.where(np.isfinite(out), out, v2)


def _principal(angle):
    """Wrap to (-pi, pi]."""
    return angle - TWO_PI * np.round(angle / TWO_PI)


class Simulation:
    """One case, initialized at its power-flow equilibrium, ready to step.

    The state vector is [machines | units | plants | bus angle washouts]
    with devices in sorted key order; ``device_slice`` exposes the layout
    so scenarios may perturb individual devices before running.
    """

    def __init__(self, case: PowerFlowCase, options: SimOptions | None = None):
        self.options = options or SimOptions()
        self.options.validate()
        self.case = case
        devices = assemble_devices(case)
        if devices.empty:
            raise SimulationError("case has no dynamic devices to simulate")
        self.machines = sorted(devices.machines, key=lambda d: d.key)
        self.units = sorted(devices.units, key=lambda d: d.key)
        self.plants = sorted(devices.plants, key=lambda d: d.key)
        self._plant_of = {
            u.key: plant for plant in self.plants for u in plant.members
        }

        solution = solve_powerflow(case, tol=1e-12 * case.sbase_mva, max_iter=50)
        if not solution.converged:
            raise SimulationError(
                "power flow did not converge; cannot initialize the simulation"
            )
        self._bus_ids = [b.id for b in case.buses]
        self._bus_idx = {b: i for i, b in enumerate(self._bus_ids)}
        n_bus = len(self._bus_ids)
        self.v = np.array(
            [solution.voltage(b) for b in self._bus_ids], dtype=complex
        )

        # Constant-impedance loads from the power-flow point; generators
        # without dynamics are folded in as negative load.
        dynamic_keys = {d.key for d in (*self.machines, *self.units)}
        s_net = np.zeros(n_bus, dtype=complex)
        for ld in case.loads:
            s_net[self._bus_idx[ld.bus]] += complex(ld.p_mw, ld.q_mvar)
        for g in case.generators:
            if g.on and g.key not in dynamic_keys:
                s_net[self._bus_idx[g.bus]] -= complex(
                    solution.p_gen[g.key], solution.q_gen[g.key]
                )
        s_net /= case.sbase_mva
        vm2 = np.abs(self.v) ** 2
        self._load_y = np.conj(s_net) / vm2

        # Device initialization at the dispatch, then state assembly.
        parts: list[np.ndarray] = []
        self._slices: dict[tuple[int, str], slice] = {}
        self._plant_slices: dict[tuple[int, str], slice] = {}
        offset = 0
        for dev in (*self.machines, *self.units):
            v0 = self.v[self._bus_idx[dev.bus]]
            p0 = solution.p_gen[dev.key] / dev.mbase
            q0 = solution.q_gen[dev.key] / dev.mbase
            state = dev.init_equilibrium(v0, p0, q0)
            self._slices[dev.key] = slice(offset, offset + state.size)
            offset += state.size
            parts.append(state)
        for plant in self.plants:
            member_pq = {
                u.key: (
                    solution.p_gen[u.key] / u.mbase,
                    solution.q_gen[u.key] / u.mbase,
                )
                for u in plant.members
            }
            v0 = self.v[self._bus_idx[plant.bus]]
            state = plant.init_equilibrium(v0, member_pq)
            self._plant_slices[plant.key] = slice(offset, offset + state.size)
            offset += state.size
            parts.append(state)
        self._wash = slice(offset, offset + n_bus)
        self._theta = np.angle(self.v)       # committed unwrapped angles
        parts.append(self._theta.copy())     # washout states start at 60 Hz
        self.x = np.concatenate(parts)
        self.t = 0.0

        self.active = {dev.key: True for dev in (*self.machines, *self.units)}
        self._faults: dict[int, complex] = {}
        self._dirty = False
        self._needs_resolve = False
        self.stats = {
            "factorizations": 0,
            "steps": 0,
            "network_sweeps": 0,
            "network_fallbacks": 0,
            "max_network_residual": 0.0,
        }
        self._y_base = build_ybus(case)
        self._y_data: np.ndarray | None = None
        self._lu = None
        self._refresh_matrix()

        slack_buses = {b.id for b in case.buses if b.kind == "Slack"}
        self.reference = next(
            (m for m in self.machines if m.bus in slack_buses),
            self.machines[0] if self.machines else None,
        )

        dx = self._derivatives(self.x, self.v)
        worst = int(np.argmax(np.abs(dx)))
        if abs(dx[worst]) >= 1e-9:
            raise SimulationError(
                f"initial state is not an equilibrium: max derivative "
                f"{dx[worst]:.3e} at {self._locate_state(worst)}"
            )

    # -- layout ------------------------------------------------------------

    def device_slice(self, key: tuple[int, str]) -> slice:
        """State slice of a machine or renewable unit (bus, unit_id)."""
        try:
            return self._slices[key]
        except KeyError:
            raise KeyError(f"no dynamic device {key[0]}.{key[1]}") from None

    def _locate_state(self, flat_index: int) -> str:
        for key, sl in (*self._slices.items(), *self._plant_slices.items()):
            if sl.start <= flat_index < sl.stop:
                return f"gen.{key[0]}.{key[1]} state {flat_index - sl.start}"
        return f"bus angle tracker {flat_index - self._wash.start}"

    # -- network -----------------------------------------------------------

    def _refresh_matrix(self) -> bool:
        """Rebuild the augmented admittance matrix; factorize only when it
        differs from the current one.  Returns True when refactorized."""
        diag = self._load_y.copy()
        for m in self.machines:
            if self.active[m.key]:
                diag[self._bus_idx[m.bus]] += m.norton_admittance()
        for bus, y in self._faults.items():
            diag[self._bus_idx[bus]] += y
        y_aug = (self._y_base + sp.diags(diag, format="csc")).tocsc()
        y_aug.sort_indices()
        if self._y_data is not None and np.array_equal(y_aug.data, self._y_data):
            return False
        self._y_data = y_aug.data.copy()
        self._lu = splu(y_aug)
        self.stats["factorizations"] += 1
        return True

    def _injections(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        i = np.zeros_like(v)
        for m in self.machines:
            if self.active[m.key]:
                i[self._bus_idx[m.bus]] += m.source_current(x[self._slices[m.key]])
        for u in self.units:
            if self.active[u.key]:
                i[self._bus_idx[u.bus]] += u.injection(
                    x[self._slices[u.key]], v[self._bus_idx[u.bus]]
                )
        return i

    def _solve_network(self, x: np.ndarray, v_start: np.ndarray) -> np.ndarray:
        """Fixed-point sweep V <- Y \\ I(x, V) from the given start.

        Plain sweeps handle the healthy case in a handful of iterations.
        Three refinements cover degeneracies behind a bolted fault:

        * Aitken extrapolation (engaged only after ACCEL_AFTER sweeps, so
          fast solves are untouched) removes slow geometric modes, e.g.
          a spur voltage whose phase is anchored only by the near-zero
          fault-bus voltage.
        * A damped retry settles direction-flipping iterations (absorbing
          current source over a dead spur).
        * A Newton fallback handles solutions that sweeps cannot reach at
          all.  A converter forcing reactive current through a resistive
          feeder into a fault rotates the far-end voltage every sweep
          (the R drop is in phase with the current, not the voltage); the
          only self-consistent state is the de-energized spur, which is a
          repelling point of the sweep map but a plain root of the
          network equations.
        """
        v, worst, resid = v_start, 0, np.zeros(1)
        v_best, best_resid = v_start, math.inf
        for relax in (1.0, 0.5):
            prev1 = prev2 = None
            for sweep in range(NETWORK_MAX_SWEEPS):
                v_new = self._lu.solve(self._injections(x, v))
                if relax != 1.0:
                    v_new = relax * v_new + (1.0 - relax) * v
                self.stats["network_sweeps"] += 1
                resid = np.abs(v_new - v)
                worst = int(np.argmax(resid))
                if not np.all(np.isfinite(v_new)):
                    raise SimulationError(
                        f"non-finite network voltage at bus {self._bus_ids[worst]}"
                    )
                if resid[worst] < NETWORK_TOL:
                    self.stats["max_network_residual"] = max(
                        self.stats["max_network_residual"], float(resid[worst])
                    )
                    return v_new
                if resid[worst] < best_resid:
                    v_best, best_resid = v_new, float(resid[worst])
                if sweep >= ACCEL_AFTER and prev2 is not None:
                    v_new = _aitken(prev2, prev1, v_new)
                    prev1 = prev2 = None
                else:
                    prev2, prev1 = prev1, v_new
                v = v_new
            v = v_start
        solved = self._solve_network_fallback(x, v_best)
        if solved is not None:
            return solved
        raise SimulationError(
            "voltage collapse suspected at bus "
            f"{self._bus_ids[worst]} (network solve residual {resid[worst]:.3e})"
        )

    def _solve_network_fallback(self, x: np.ndarray, v_guess: np.ndarray):
        """Solve V - Y \\ I(x, V) = 0 directly when sweeping stalls.

        Tries a short ladder of starting points and root methods: the
        best sweep iterate first, then a start with depressed buses
        collapsed to zero (the degenerate spurs' solution lies in the
        de-energized region, and landing in its basin is most of the
        battle).  Returns the voltage vector, or None if no attempt
        reached the sweep tolerance.
        """
        n = v_guess.size

        def residual(z: np.ndarray) -> np.ndarray:
            v = z[:n] + 1j * z[n:]
            self.stats["network_sweeps"] += 1
            d = self._lu.solve(self._injections(x, v)) - v
            return np.concatenate([d.real, d.imag])

        flattened = np.where(np.abs(v_guess) < 0.3, 0.0, v_guess)
        attempts = [
            (v_guess, "hybr", {"xtol": 1e-12}),
            (flattened, "hybr", {"xtol": 1e-12}),
            (flattened, "df-sane", {"fatol": 1e-12, "maxfev": 3000}),
            (v_guess, "df-sane", {"fatol": 1e-12, "maxfev": 3000}),
        ]
        for v0, method, opts in attempts:
            sol = _scipy_root(
                residual,
                np.concatenate([v0.real, v0.imag]),
                method=method,
                options=opts,
            )
            if not np.all(np.isfinite(sol.x)):
                continue
            err = float(np.max(np.abs(residual(sol.x))))
            if err < NETWORK_TOL:
                self.stats["network_fallbacks"] += 1
                self.stats["max_network_residual"] = max(
                    self.stats["max_network_residual"], err
                )
                return sol.x[:n] + 1j * sol.x[n:]
        return None

    # -- dynamics ----------------------------------------------------------

    def _stage_angles(self, v: np.ndarray) -> np.ndarray:
        """Continuous bus angles at this stage; de-energized buses hold."""
        live = np.abs(v) >= DEENERGIZED_V
        theta = self._theta.copy()
        delta = _principal(np.angle(v) - self._theta)
        theta[live] += delta[live]
        return theta

    def _derivatives(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        dx = np.zeros_like(x)
        tc = self.options.freq_filter_tc
        theta = self._stage_angles(v)
        wash = x[self._wash]
        live = np.abs(v) >= DEENERGIZED_V
        dx[self._wash] = np.where(live, (theta - wash) / tc, 0.0)
        f_bus = NOMINAL_HZ + (theta - wash) / (tc * TWO_PI)

        pq: dict[tuple[int, str], tuple[float, float]] = {}
        for u in self.units:
            if self.active[u.key]:
                pq[u.key] = u.electrical_pq(
                    x[self._slices[u.key]], v[self._bus_idx[u.bus]]
                )
            else:
                pq[u.key] = (0.0, 0.0)

        refs: dict[tuple[int, str], tuple[float, float]] = {}
        for plant in self.plants:
            i = self._bus_idx[plant.bus]
            sl = self._plant_slices[plant.key]
            d_plant, out = plant.derivatives_and_refs(
                x[sl], v[i], pq, float(f_bus[i])
            )
            dx[sl] = d_plant
            refs.update(out)

        for m in self.machines:
            if not self.active[m.key]:
                continue
            sl = self._slices[m.key]
            dx[sl] = m.derivatives(x[sl], v[self._bus_idx[m.bus]])
        for u in self.units:
            if not self.active[u.key]:
                continue
            sl = self._slices[u.key]
            qext, pref = refs.get(u.key, (u.q_ref0, u.p_ref0))
            dx[sl] = u.derivatives(
                x[sl], v[self._bus_idx[u.bus]], qext, pref
            )
        return dx

    def _clamp(self, x: np.ndarray, v: np.ndarray) -> None:
        for u in self.units:
            if self.active[u.key]:
                u.clamp_state(x[self._slices[u.key]], v[self._bus_idx[u.bus]])

    def _commit_angles(self, v: np.ndarray) -> None:
        live = np.abs(v) >= DEENERGIZED_V
        delta = _principal(np.angle(v) - self._theta)
        self._theta[live] += delta[live]

    def step(self) -> None:
        """One explicit-trapezoid step with a network solve per stage."""
        self.settle()
        dt = self.options.dt
        x, v = self.x, self.v
        f1 = self._derivatives(x, v)
        xp = x + dt * f1
        self._clamp(xp, v)
        vp = self._solve_network(xp, v)
        f2 = self._derivatives(xp, vp)
        xn = x + 0.5 * dt * (f1 + f2)
        self._clamp(xn, vp)
        vn = self._solve_network(xn, vp)
        self.x, self.v = xn, vn
        self._commit_angles(vn)
        self.t += dt
        self.stats["steps"] += 1

    # -- events ------------------------------------------------------------

    def apply_event(self, ev: Event) -> None:
        """Record one event's effect.  The matrix refresh and network
        re-solve are deferred to ``settle`` so a batch whose net effect is
        nothing (fault cleared in the same instant) leaves both the
        factorization and the trajectory untouched."""
        if ev.kind == "bus_fault":
            if ev.bus not in self._bus_idx:
                raise EventError(f"bus_fault names unknown bus {ev.bus}")
            if ev.bus in self._faults:
                raise EventError(f"bus {ev.bus} is already faulted")
            self._faults[ev.bus] = ev.fault_admittance
            self._dirty = True
        elif ev.kind == "clear_fault":
            if ev.bus not in self._faults:
                raise EventError(f"no active fault at bus {ev.bus} to clear")
            del self._faults[ev.bus]
            self._dirty = True
        elif ev.kind == "generator_outage":
            key = (ev.bus, ev.unit_id)
            if key not in self.active:
                raise EventError(
                    f"generator_outage names unknown generator {ev.bus}.{ev.unit_id}"
                )
            if not self.active[key]:
                raise EventError(
                    f"generator {ev.bus}.{ev.unit_id} is already out of service"
                )
            self.active[key] = False
            self._dirty = True
            self._needs_resolve = True
        else:
            raise EventError(f"unknown event kind {ev.kind!r}")

    def settle(self) -> None:
        """Apply pending event effects: refactorize if the matrix changed,
        re-solve the network if anything changed the operating point."""
        if self._dirty:
            if self._refresh_matrix():
                self._needs_resolve = True
            self._dirty = False
        if self._needs_resolve:
            self.v = self._solve_network(self.x, self.v)
            self._commit_angles(self.v)
            self._needs_resolve = False

    # -- recording ---------------------------------------------------------

    def _channel_names(self) -> list[str]:
        names: list[str] = []
        for b in self._bus_ids:
            names.append(f"bus.{b}.v_pu")
            names.append(f"bus.{b}.f_hz")
        for dev in sorted(
            (*self.machines, *self.units), key=lambda d: d.key
        ):
            base = f"gen.{dev.bus}.{dev.unit_id}"
            names.append(f"{base}.p_mw")
            names.append(f"{base}.q_mvar")
            if isinstance(dev, SynchronousMachine):
                names.append(f"{base}.rotor_angle_deg")
        return names

    def _sample(self) -> dict[str, float]:
        tc = self.options.freq_filter_tc
        wash = self.x[self._wash]
        out: dict[str, float] = {}
        for i, b in enumerate(self._bus_ids):
            out[f"bus.{b}.v_pu"] = abs(self.v[i])
            out[f"bus.{b}.f_hz"] = NOMINAL_HZ + (self._theta[i] - wash[i]) / (
                tc * TWO_PI
            )
        ref_angle = 0.0
        if self.reference is not None:
            ref_angle = self.x[self._slices[self.reference.key]][0]
        for dev in (*self.machines, *self.units):
            base = f"gen.{dev.bus}.{dev.unit_id}"
            if self.active[dev.key]:
                p, q = dev.electrical_pq(
                    self.x[self._slices[dev.key]], self.v[self._bus_idx[dev.bus]]
                )
            else:
                p, q = 0.0, 0.0
            out[f"{base}.p_mw"] = p * dev.mbase
            out[f"{base}.q_mvar"] = q * dev.mbase
            if isinstance(dev, SynchronousMachine):
                delta = self.x[self._slices[dev.key]][0]
                out[f"{base}.rotor_angle_deg"] = math.degrees(delta - ref_angle)
        return out

    # -- driving -----------------------------------------------------------

    def run(self, events) -> SimulationResult:
        """Step from t=0 to t_end applying the schedule; always returns the
        recorded trajectory, truncated with a reason if the run aborts."""
        opts = self.options
        if events and not isinstance(events[0], Event):
            events = parse_events(events)
        else:
            events = list(events)
        for ev in events:
            if ev.kind == "generator_outage":
                if (ev.bus, ev.unit_id) not in self.active:
                    raise EventError(
                        f"generator_outage names unknown generator "
                        f"{ev.bus}.{ev.unit_id}"
                    )
            elif ev.bus not in self._bus_idx:
                raise EventError(f"{ev.kind} names unknown bus {ev.bus}")

        n_steps = max(1, int(round(opts.t_end / opts.dt)))
        schedule: dict[int, list[Event]] = {}
        log: list[dict] = []
        for ev in events:
            k = min(max(int(round(ev.time / opts.dt)), 0), n_steps)
            schedule.setdefault(k, []).append(ev)
            entry = event_to_dict(ev)
            entry["time"] = k * opts.dt
            entry["requested_time"] = ev.time
            log.append(entry)
        log.sort(key=lambda e: e["time"])

        names = self._channel_names()
        if opts.record_channels is not None:
            patterns = list(opts.record_channels)
            names = [n for n in names if any(fnmatch(n, p) for p in patterns)]
        data = {n: np.empty(n_steps + 1) for n in names}
        time = np.arange(n_steps + 1) * opts.dt
        dead = np.zeros((n_steps + 1, len(self._bus_ids)), dtype=bool)

        fault_on: dict[int, float] = {}
        fault_intervals: list[list] = []
        aborted_at = None
        abort_reason = None
        last = 0

        for k in range(n_steps + 1):
            t_k = k * opts.dt
            try:
                for ev in schedule.get(k, ()):
                    self.apply_event(ev)
                    if ev.kind == "bus_fault":
                        fault_on[ev.bus] = t_k
                    elif ev.kind == "clear_fault":
                        fault_intervals.append([ev.bus, fault_on.pop(ev.bus), t_k])
                self.settle()
            except SimulationError as exc:
                aborted_at, abort_reason = t_k, str(exc)
                break
            sample = self._sample()
            for n in names:
                data[n][k] = sample[n]
            dead[k] = np.abs(self.v) < DEENERGIZED_V
            last = k
            if k == n_steps:
                break
            try:
                self.step()
            except (SimulationError, ValueError) as exc:
                # block-level guards surface non-finite inputs as ValueError
                aborted_at, abort_reason = t_k + opts.dt, str(exc)
                break
            if not np.all(np.isfinite(self.x)):
                bad = int(np.argmax(~np.isfinite(self.x)))
                aborted_at = t_k + opts.dt
                abort_reason = (
                    f"non-finite state at {self._locate_state(bad)}"
                )
                break

        horizon = time[last]
        for bus, t_on in sorted(fault_on.items()):
            fault_intervals.append([bus, t_on, horizon])
        fault_intervals.sort(key=lambda iv: (iv[1], iv[0]))

        n_keep = last + 1
        deenergized: dict[int, list[list[float]]] = {}
        for i, b in enumerate(self._bus_ids):
            spans = _mask_intervals(time[:n_keep], dead[:n_keep, i])
            if spans:
                deenergized[b] = spans

        return SimulationResult(
            time=time[:n_keep],
            channels={n: data[n][:n_keep] for n in names},
            event_log=log,
            stats=dict(self.stats),
            options=opts,
            fault_intervals=fault_intervals,
            deenergized=deenergized,
            aborted_at=aborted_at,
            abort_reason=abort_reason,
            reference=(
                f"gen.{self.reference.bus}.{self.reference.unit_id}"
                if self.reference is not None else None
            ),
        )


def _mask_intervals(time: np.ndarray, mask: np.ndarray) -> list[list[float]]:
    """Contiguous True spans of the mask as [t_start, t_end] pairs."""
    spans: list[list[float]] = []
    start = None
    for k, flag in enumerate(mask):
        if flag and start is None:
            start = time[k]
        elif not flag and start is not None:
            spans.append([float(start), float(time[k - 1])])
            start = None
    if start is not None:
        spans.append([float(start), float(time[-1])])
    return spans


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def initialize_simulation(
    case: PowerFlowCase, options: SimOptions | None = None
) -> Simulation:
    """Assemble devices, solve the power flow, initialize every device at
    its dispatch, and factorize the network.  Raises unless the result is
    an equilibrium (max state derivative below 1e-9)."""
    return Simulation(case, options)


def run(case: PowerFlowCase, events, options: SimOptions) -> SimulationResult:
    """Initialize and run one scenario."""
    return Simulation(case, options).run(events)


def load_result(
    csv_path: str | Path, metadata_path: str | Path | None = None
) -> SimulationResult:
    """Rebuild a result from its CSV and metadata sidecar.

    The sidecar defaults to the CSV path with a ``.json`` suffix, the
    convention used when writing.  Round-trips everything the metrics
    need: channels, event log, fault and de-energized intervals, abort
    state and the rotor-angle reference.
    """
    csv_path = Path(csv_path)
    if metadata_path is None:
        metadata_path = csv_path.with_suffix(".json")
    meta = json.loads(Path(metadata_path).read_text(encoding="utf-8"))
    with open(csv_path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "time_s":
        raise SimulationError(f"{csv_path} is not a recorded-channel CSV")
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise SimulationError(
            f"{csv_path}: {data.shape[1]} columns but {len(header)} headers"
        )
    return SimulationResult(
        time=data[:, 0],
        channels={name: data[:, j] for j, name in enumerate(header) if j},
        event_log=meta["events"],
        stats=meta["stats"],
        options=SimOptions(
            dt=meta["dt"],
            t_end=meta["t_end"],
            record_channels=tuple(meta["channels"]),
            freq_filter_tc=meta["freq_filter_tc"],
        ),
        fault_intervals=[list(iv) for iv in meta["fault_intervals"]],
        deenergized={int(b): iv for b, iv in meta["deenergized"].items()},
        aborted_at=meta["aborted_at"],
        abort_reason=meta["abort_reason"],
        reference=meta["reference"],
    )


def bus_frequency(
    angles: np.ndarray, dt: float, freq_filter_tc: float = 0.04
) -> np.ndarray:
    """Bus frequency (Hz) from an unwrapped voltage-angle series.

    Offline version of the in-loop measurement: washout state integrated
    by the same explicit-trapezoid rule, f = 60 + (angle - state) /
    (2*pi*tc).
    """
    theta = np.asarray(angles, dtype=float)
    tc = freq_filter_tc
    wash = np.empty_like(theta)
    wash[0] = theta[0]
    for k in range(len(theta) - 1):
        f1 = (theta[k] - wash[k]) / tc
        pred = wash[k] + dt * f1
        f2 = (theta[k + 1] - pred) / tc
        wash[k + 1] = wash[k] + 0.5 * dt * (f1 + f2)
    return NOMINAL_HZ + (theta - wash) / (tc * TWO_PI)
