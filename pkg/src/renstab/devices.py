"""Device composites that tie the control blocks to the network.

Each device owns a contiguous slice of the global state vector and
exposes the same surface to the integrator: equilibrium initialization
from the power-flow dispatch, derivative evaluation at a terminal
voltage, a network current injection, and (where meaningful) state
clamping after an integration stage.

Device quantities are machine base; network currents are returned on
system base.  Plant controllers run on the plant base (sum of member
machine bases) and hand their members per-unit reference deltas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from renstab.blocks.aero import AeroParams, wtga_power
from renstab.blocks.converter import (
    ConverterParams,
    regc_clamp,
    regc_derivatives,
    regc_init,
    regc_injection,
)
from renstab.blocks.drivetrain import (
    DriveTrainParams,
    wtgt_derivatives,
    wtgt_init,
    wtgt_speed,
)
from renstab.blocks.electrical import (
    ElectricalParams,
    ElectricalRefs,
    reec_derivatives,
    reec_init,
)
from renstab.blocks.machine import (
    MachineParams,
    machine_derivatives,
    machine_electrical_power,
    machine_init,
    machine_norton,
)
from renstab.blocks.pitch import PitchParams, wtgpt_derivatives, wtgpt_init
from renstab.blocks.plant import (
    PlantParams,
    PlantRefs,
    compensated_voltage,
    repc_derivatives,
    repc_init,
)
from renstab.blocks.torque import TorqueParams, wtgtrq_derivatives, wtgtrq_init
from renstab.blocks.util import clamp

GenKey = tuple[int, str]


class DeviceInitError(ValueError):
    """Equilibrium initialization failed; message names the device and limit."""


@dataclass
class UnitModels:
    """Parameter bundle for one renewable unit; optional blocks may be None."""

    regc: ConverterParams
    reec: ElectricalParams
    wtgt: DriveTrainParams | None = None
    wtga: AeroParams | None = None
    wtgp: PitchParams | None = None
    wtgq: TorqueParams | None = None

    def validate(self) -> None:
        self.regc.validate()
        self.reec.validate()
        for block in (self.wtgt, self.wtgp, self.wtgq):
            if block is not None:
                block.validate()
        if self.wtgq is not None and self.wtgt is None:
            raise ValueError("torque controller requires a drive train")
        if self.wtgp is not None and (
            self.wtgq is None or self.wtga is None or self.wtgt is None
        ):
            raise ValueError(
                "pitch controller requires drive train, aerodynamics and torque controller"
            )
        if self.wtga is not None and self.wtgp is None:
            raise ValueError("aerodynamics requires a pitch controller")


class RenewableUnit:
    """Inverter-based unit: converter + electrical control, optionally the
    full wind mechanical chain (drive train, torque, pitch, aerodynamics)."""

    def __init__(
        self, bus: int, unit_id: str, mbase: float, sbase: float, models: UnitModels
    ):
        models.validate()
        self.bus = bus
        self.unit_id = unit_id
        self.mbase = mbase
        self.i_scale = mbase / sbase
        self.m = models
        n = 8  # converter (2) + electrical control (6)
        self._wtgt_off = n
        if models.wtgt is not None:
            n += models.wtgt.n_states
        self._wtgq_off = n
        if models.wtgq is not None:
            n += 3
        self._wtgp_off = n
        if models.wtgp is not None:
            n += 3
        self.n_states = n
        # filled by init_equilibrium
        self.refs: ElectricalRefs | None = None
        self.p_ref0 = 0.0
        self.q_ref0 = 0.0
        self.pm0 = 0.0
        self.curve_clamped = False

    @property
    def key(self) -> GenKey:
        return (self.bus, self.unit_id)

    def _label(self) -> str:
        return f"gen.{self.bus}.{self.unit_id}"

    def init_equilibrium(self, v0: complex, p0: float, q0: float) -> np.ndarray:
        """Equilibrium state for machine-base dispatch (p0, q0) at voltage v0."""
        vm0 = abs(v0)
        w0 = 1.0
        try:
            if self.m.wtgq is not None:
                tq_state, w0 = wtgtrq_init(self.m.wtgq, p0)
            reec_state, self.refs = reec_init(self.m.reec, vm0, p0, q0, w0)
        except ValueError as exc:
            raise DeviceInitError(f"{self._label()}: {exc}") from exc
        ip0 = p0 / vm0
        iq0 = q0 / vm0
        parts = [regc_init(ip0, iq0), reec_state]
        if self.m.wtgt is not None:
            parts.append(wtgt_init(self.m.wtgt, p0, w0))
        if self.m.wtgq is not None:
            parts.append(tq_state)
        if self.m.wtgp is not None:
            theta0 = self.m.wtga.theta0 if self.m.wtga is not None else 0.0
            try:
                parts.append(wtgpt_init(self.m.wtgp, theta0))
            except ValueError as exc:
                raise DeviceInitError(f"{self._label()}: {exc}") from exc
        self.p_ref0 = self.refs.pref0 if self.m.wtgq is None else p0
        self.q_ref0 = q0
        self.pm0 = p0
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    def injection(self, x: np.ndarray, v: complex) -> complex:
        """Network current on system base at terminal voltage v."""
        i, _, _ = regc_injection(self.m.regc, (x[0], x[1]), v)
        return i * self.i_scale

    def electrical_pq(self, x: np.ndarray, v: complex) -> tuple[float, float]:
        """(P, Q) delivered to the network, machine base."""
        _, p_e, q_e = regc_injection(self.m.regc, (x[0], x[1]), v)
        return p_e, q_e

    def speed(self, x: np.ndarray) -> float:
        if self.m.wtgt is None:
            return 1.0
        return wtgt_speed(self.m.wtgt, x[self._wtgt_off : self._wtgq_off])

    def derivatives(
        self, x: np.ndarray, v: complex, qext: float, pref_ext: float
    ) -> np.ndarray:
        """State slopes given terminal voltage and external references
        (machine base; without a plant the references are the dispatch)."""
        m = self.m
        v_mag = abs(v)
        p_e, q_e = self.electrical_pq(x, v)
        wg = self.speed(x)
        dx = np.empty(self.n_states)

        if m.wtgq is not None:
            tq = tuple(x[self._wtgq_off : self._wtgq_off + 3])
            d_tq, p_ref_inner, wref, clipped = wtgtrq_derivatives(
                m.wtgq, tq, p_e, wg, pref_ext
            )
            dx[self._wtgq_off : self._wtgq_off + 3] = d_tq
            if clipped:
                self.curve_clamped = True
            reec_pref = p_ref_inner
        else:
            wref = 1.0
            reec_pref = pref_ext

        reec_state = tuple(x[2:8])
        d_reec, ipcmd, iqcmd, _ = reec_derivatives(
            m.reec, self.refs, reec_state, v_mag, p_e, q_e, wg, reec_pref, qext
        )
        dx[2:8] = d_reec
        dx[0:2] = regc_derivatives(m.regc, (x[0], x[1]), v_mag, ipcmd, iqcmd)

        if m.wtgp is not None:
            pitch_state = tuple(x[self._wtgp_off : self._wtgp_off + 3])
            d_pitch, theta = wtgpt_derivatives(
                m.wtgp, pitch_state, wg, wref, x[7], self.pm0
            )
            dx[self._wtgp_off : self._wtgp_off + 3] = d_pitch
        else:
            theta = None

        if m.wtgt is not None:
            p_m = self.pm0 if theta is None else wtga_power(m.wtga, theta, self.pm0)
            wt_state = tuple(x[self._wtgt_off : self._wtgq_off])
            t_m = p_m / wt_state[0]
            d_wt, _ = wtgt_derivatives(m.wtgt, wt_state, t_m, p_e)
            dx[self._wtgt_off : self._wtgq_off] = d_wt
        return dx

    def clamp_state(self, x: np.ndarray, v: complex) -> None:
        """Pull hard-limited states back inside their ranges, in place."""
        m = self.m
        x[0], x[1] = regc_clamp(m.regc, (x[0], x[1]), abs(v))
        x[7] = clamp(x[7], m.reec.pmin, m.reec.pmax)
        if m.wtgp is not None:
            off = self._wtgp_off
            x[off] = clamp(x[off], m.wtgp.theta_min, m.wtgp.theta_max)


class SynchronousMachine:
    """Classical machine behind transient reactance."""

    n_states = 2

    def __init__(self, bus: int, unit_id: str, mbase: float, sbase: float, params: MachineParams):
        params.validate()
        self.bus = bus
        self.unit_id = unit_id
        self.mbase = mbase
        self.i_scale = mbase / sbase
        self.p = params
        self.emag = 0.0
        self.pm = 0.0

    @property
    def key(self) -> GenKey:
        return (self.bus, self.unit_id)

    def init_equilibrium(self, v0: complex, p0: float, q0: float) -> np.ndarray:
        state, self.emag, self.pm = machine_init(self.p, v0, p0, q0)
        return np.asarray(state, dtype=float)

    def norton_admittance(self) -> complex:
        y, _ = machine_norton(self.p, self.emag, 0.0, self.i_scale)
        return y

    def source_current(self, x: np.ndarray) -> complex:
        _, i_src = machine_norton(self.p, self.emag, x[0], self.i_scale)
        return i_src

    def electrical_pq(self, x: np.ndarray, v: complex) -> tuple[float, float]:
        return machine_electrical_power(self.p, self.emag, x[0], v)

    def derivatives(self, x: np.ndarray, v: complex) -> np.ndarray:
        p_e, _ = machine_electrical_power(self.p, self.emag, x[0], v)
        return np.asarray(
            machine_derivatives(self.p, (x[0], x[1]), self.pm, p_e), dtype=float
        )

    def rotor_angle_deg(self, x: np.ndarray) -> float:
        return math.degrees(x[0])


class PlantController:
    """Plant-level controller bound to its member units.

    Measures the aggregate member flow (the plant's interconnection
    flow), regulates voltage at the bus its record names, and dispatches
    reference deltas: reactive deltas split by machine base (the same
    per-unit delta for every member), active deltas by initial dispatch.
    """

    n_states = 6

    def __init__(
        self,
        bus: int,
        unit_id: str,
        params: PlantParams,
        members: list[RenewableUnit],
        sbase: float,
    ):
        params.validate()
        if not members:
            raise ValueError(f"plant controller at bus {bus} has no controlled units")
        if params.variant == "A" and len(members) > 1:
            raise ValueError(
                f"plant controller at bus {bus} controls {len(members)} units; "
                "multi-unit plants require variant B"
            )
        self.bus = bus
        self.unit_id = unit_id
        self.p = params
        self.members = members
        self.sbase = sbase
        self.plant_base = sum(u.mbase for u in members)
        self.refs: PlantRefs | None = None
        self._member_p0: dict[GenKey, float] = {}
        self._member_q0: dict[GenKey, float] = {}
        self._pshare: dict[GenKey, float] = {}

    @property
    def key(self) -> GenKey:
        return (self.bus, self.unit_id)

    def init_equilibrium(
        self, v_reg0: complex, member_pq0: dict[GenKey, tuple[float, float]]
    ) -> np.ndarray:
        """Equilibrium state from the regulated-bus voltage and each
        member's machine-base dispatch."""
        p_tot = q_tot = 0.0
        for u in self.members:
            p0, q0 = member_pq0[u.key]
            self._member_p0[u.key] = p0
            self._member_q0[u.key] = q0
            p_tot += p0 * u.mbase
            q_tot += q0 * u.mbase
        for u in self.members:
            if p_tot > 1e-9:
                self._pshare[u.key] = self._member_p0[u.key] * u.mbase / p_tot
            else:
                self._pshare[u.key] = u.mbase / self.plant_base
        p_branch0 = p_tot / self.plant_base
        q_branch0 = q_tot / self.plant_base
        i_branch0 = (complex(p_branch0, q_branch0) / v_reg0).conjugate()
        v_c0 = compensated_voltage(self.p, v_reg0, i_branch0, q_branch0)
        try:
            state, self.refs = repc_init(self.p, v_c0, q_branch0, p_branch0)
        except ValueError as exc:
            raise DeviceInitError(f"plant.{self.bus}.{self.unit_id}: {exc}") from exc
        return np.asarray(state, dtype=float)

    def derivatives_and_refs(
        self,
        x: np.ndarray,
        v_reg: complex,
        member_pq: dict[GenKey, tuple[float, float]],
        f_hz: float,
    ) -> tuple[np.ndarray, dict[GenKey, tuple[float, float]]]:
        """State slopes plus each member's (qext, pref), machine base."""
        p_tot = q_tot = 0.0
        for u in self.members:
            p_e, q_e = member_pq[u.key]
            p_tot += p_e * u.mbase
            q_tot += q_e * u.mbase
        p_branch = p_tot / self.plant_base
        q_branch = q_tot / self.plant_base
        vm = abs(v_reg)
        if vm > 1e-6:
            i_branch = (complex(p_branch, q_branch) / v_reg).conjugate()
        else:
            i_branch = 0.0j
        dx, q_out, p_out, _ = repc_derivatives(
            self.p, self.refs, tuple(x), v_reg, i_branch, q_branch, p_branch, f_hz
        )
        dq = q_out - self.refs.qref
        dp = p_out - self.refs.pref
        out: dict[GenKey, tuple[float, float]] = {}
        for u in self.members:
            qext = self._member_q0[u.key] + dq
            pref = (
                self._member_p0[u.key]
                + dp * self.plant_base * self._pshare[u.key] / u.mbase
            )
            out[u.key] = (qext, pref)
        return np.asarray(dx, dtype=float), out
