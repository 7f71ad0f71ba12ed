"""Newton-Raphson AC power flow (polar form, sparse analytic Jacobian).

Solves the static operating point that dynamic simulations initialize
from.  PV buses switch to PQ while a generator reactive limit binds and
switch back if the limit releases.  ``check_flat_start`` closes the loop:
it runs the dynamic simulator event-free and reports the worst drift.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from renstab.network import PowerFlowCase, build_ybus


class PowerFlowError(RuntimeError):
    """Structural problem that prevents even attempting a solve."""


@dataclass
class PowerFlowSolution:
    bus_ids: list[int]
    v_mag: np.ndarray          # pu, per bus
    v_angle: np.ndarray        # radians, per bus
    p_gen: dict[tuple[int, str], float]   # MW per generator
    q_gen: dict[tuple[int, str], float]   # MVAr per generator
    converged: bool
    iterations: int
    max_mismatch: float        # MVA
    q_limited_buses: list[int] = field(default_factory=list)

    def voltage(self, bus_id: int) -> complex:
        i = self.bus_ids.index(bus_id)
        return self.v_mag[i] * np.exp(1j * self.v_angle[i])

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "max_mismatch_mva": self.max_mismatch,
            "q_limited_buses": self.q_limited_buses,
            "buses": [
                {"id": b, "v_mag": float(m), "v_angle": float(a)}
                for b, m, a in zip(self.bus_ids, self.v_mag, self.v_angle)
            ],
            "generators": [
                {"bus": k[0], "unit_id": k[1], "p_mw": float(self.p_gen[k]),
                 "q_mvar": float(self.q_gen[k])}
                for k in sorted(self.p_gen)
            ],
        }


def _scheduled_injections(case: PowerFlowCase) -> tuple[np.ndarray, np.ndarray]:
    """Net scheduled P and Q injection per bus in pu (gen minus load)."""
    n = case.n_bus
    idx = case.bus_index()
    p = np.zeros(n)
    q = np.zeros(n)
    for g in case.generators:
        if g.on:
            p[idx[g.bus]] += g.p_mw / case.sbase_mva
            q[idx[g.bus]] += g.q_mvar / case.sbase_mva
    for ld in case.loads:
        p[idx[ld.bus]] -= ld.p_mw / case.sbase_mva
        q[idx[ld.bus]] -= ld.q_mvar / case.sbase_mva
    return p, q


def _dSbus_dV(ybus: sp.spmatrix, v: np.ndarray):
    """Partial derivatives of complex bus injections w.r.t. angle and
    magnitude (polar form)."""
    ib = ybus @ v
    diag_v = sp.diags(v)
    diag_ib = sp.diags(ib)
    diag_vnorm = sp.diags(v / np.abs(v))
    ds_dva = 1j * diag_v @ (diag_ib - ybus @ diag_v).conjugate()
    ds_dvm = diag_v @ (ybus @ diag_vnorm).conjugate() + diag_ib.conjugate() @ diag_vnorm
    return ds_dva.tocsr(), ds_dvm.tocsr()


def _locate_singular_pivot(j_dense: np.ndarray, row_labels: list[str]) -> str:
    """Run plain Gaussian elimination to find the first zero pivot row."""
    a = j_dense.copy()
    n = a.shape[0]
    for k in range(n):
        piv = np.argmax(np.abs(a[k:, k])) + k
        if np.abs(a[piv, k]) < 1e-12:
            return row_labels[k]
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
        a[k + 1:] -= np.outer(a[k + 1:, k] / a[k, k], a[k])
    return row_labels[-1]


def solve_powerflow(
    case: PowerFlowCase,
    tol: float | None = None,
    max_iter: int = 30,
    enforce_q_limits: bool = True,
) -> PowerFlowSolution:
    """Full Newton-Raphson solve.  Returns ``converged=False`` rather than
    raising when the iteration budget runs out."""
    n = case.n_bus
    if n == 0:
        raise PowerFlowError("case has no buses")
    sbase = case.sbase_mva
    tol_pu = (tol / sbase) if tol is not None else 1e-8

    idx = case.bus_index()
    ybus = build_ybus(case)
    p_sched, q_sched = _scheduled_injections(case)

    gens_at = {i: [] for i in range(n)}
    for g in case.generators:
        if g.on:
            gens_at[idx[g.bus]].append(g)

    kinds = []
    for b in case.buses:
        kind = b.kind
        if kind in ("PV", "Slack") and not gens_at[idx[b.id]]:
            kind = "PQ"  # a regulated bus needs an in-service generator
        kinds.append(kind)
    slack = [i for i, k in enumerate(kinds) if k == "Slack"]
    if not slack:
        raise PowerFlowError("no slack bus with an in-service generator")

    # Regulated magnitude: generator setpoint wins over the bus record.
    vm = np.array([b.v_mag for b in case.buses], dtype=float)
    va = np.array([b.v_angle for b in case.buses], dtype=float)
    for i, k in enumerate(kinds):
        if k in ("PV", "Slack"):
            vm[i] = gens_at[i][0].v_setpoint

    # Per-bus reactive range for PV->PQ switching, pu.
    q_hi = np.full(n, np.inf)
    q_lo = np.full(n, -np.inf)
    load_q = q_sched.copy()  # will subtract gen part to recover -load
    for i in range(n):
        gs = gens_at[i]
        if gs:
            q_hi[i] = sum(g.q_max for g in gs) / sbase
            q_lo[i] = sum(g.q_min for g in gs) / sbase
            load_q[i] -= sum(g.q_mvar for g in gs) / sbase

    is_pv = np.array([k == "PV" for k in kinds])
    is_slack = np.array([k == "Slack" for k in kinds])
    limited = np.zeros(n, dtype=int)  # 0 free, +1 at q_hi, -1 at q_lo

    v = vm * np.exp(1j * va)
    iterations = 0
    converged = False

    def mismatch(v):
        s_calc = v * np.conj(ybus @ v)
        dp = p_sched - s_calc.real
        dq = q_sched - s_calc.imag
        # While limited, the bus behaves as PQ with gen Q pinned at the limit.
        for i in np.nonzero(limited)[0]:
            qg = q_hi[i] if limited[i] > 0 else q_lo[i]
            dq[i] = (qg + load_q[i]) - s_calc.imag[i]
        return dp, dq

    def active_sets():
        pv_now = is_pv & (limited == 0)
        pq_now = ~is_slack & ~pv_now
        return np.nonzero(~is_slack)[0], np.nonzero(pq_now)[0]

    for _ in range(max_iter + 1):
        ang_buses, mag_buses = active_sets()
        dp, dq = mismatch(v)
        f = np.concatenate([dp[ang_buses], dq[mag_buses]])
        worst = np.abs(f).max() if f.size else 0.0

        switched = False
        if enforce_q_limits and worst < max(tol_pu * 100, 1e-4):
            # Near a solution: audit reactive limits before declaring done.
            s_calc = v * np.conj(ybus @ v)
            q_need = s_calc.imag - load_q  # generator reactive output, pu
            for i in np.nonzero(is_pv)[0]:
                if limited[i] == 0:
                    if q_need[i] > q_hi[i] + 1e-9:
                        limited[i] = 1
                        switched = True
                    elif q_need[i] < q_lo[i] - 1e-9:
                        limited[i] = -1
                        switched = True
                elif limited[i] == 1 and np.abs(v[i]) > vm[i] + 1e-9:
                    limited[i] = 0   # limit released
                    switched = True
                elif limited[i] == -1 and np.abs(v[i]) < vm[i] - 1e-9:
                    limited[i] = 0
                    switched = True
            if switched:
                continue

        if worst < tol_pu and not switched:
            converged = True
            break
        if iterations >= max_iter:
            break

        ds_dva, ds_dvm = _dSbus_dV(ybus, v)
        j11 = ds_dva[np.ix_(ang_buses, ang_buses)].real
        j12 = ds_dvm[np.ix_(ang_buses, mag_buses)].real
        j21 = ds_dva[np.ix_(mag_buses, ang_buses)].imag
        j22 = ds_dvm[np.ix_(mag_buses, mag_buses)].imag
        jac = sp.bmat([[j11, j12], [j21, j22]], format="csc")

        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", spla.MatrixRankWarning)
                dx = spla.spsolve(jac, f)
        except RuntimeError:
            labels = [f"bus {case.buses[i].id} (angle)" for i in ang_buses] + \
                     [f"bus {case.buses[i].id} (voltage)" for i in mag_buses]
            where = _locate_singular_pivot(jac.toarray(), labels)
            raise PowerFlowError(f"singular Jacobian pivot at {where}") from None
        if not np.all(np.isfinite(dx)):
            labels = [f"bus {case.buses[i].id} (angle)" for i in ang_buses] + \
                     [f"bus {case.buses[i].id} (voltage)" for i in mag_buses]
            where = _locate_singular_pivot(jac.toarray(), labels)
            raise PowerFlowError(f"singular Jacobian pivot at {where}")

        na = len(ang_buses)
        va[ang_buses] += dx[:na]
        vm_new = np.abs(v)
        vm_new[mag_buses] += dx[na:]
        vm_free = vm_new
        # Re-pin regulated magnitudes that are still actively regulated.
        for i in range(n):
            if (is_pv[i] and limited[i] == 0) or is_slack[i]:
                vm_free[i] = vm[i]
        v = vm_free * np.exp(1j * va)
        iterations += 1

    dp, dq = mismatch(v)
    ang_buses, mag_buses = active_sets()
    f = np.concatenate([dp[ang_buses], dq[mag_buses]])
    max_mis = float(np.abs(f).max() * sbase) if f.size else 0.0

    # Per-generator dispatch out of the solved point.
    s_calc = v * np.conj(ybus @ v)
    p_gen: dict[tuple[int, str], float] = {}
    q_gen: dict[tuple[int, str], float] = {}
    for g in case.generators:
        if not g.on:
            p_gen[g.key] = 0.0
            q_gen[g.key] = 0.0
            continue
        p_gen[g.key] = g.p_mw
        q_gen[g.key] = g.q_mvar
    for i in range(n):
        gs = gens_at[i]
        if not gs:
            continue
        if is_slack[i]:
            # Residual island balance lands on the first slack-bus unit.
            p_need = s_calc.real[i] * sbase + sum(
                ld.p_mw for ld in case.loads if ld.bus == case.buses[i].id
            )
            others = sum(g.p_mw for g in gs[1:])
            p_gen[gs[0].key] = p_need - others
        if is_slack[i] or is_pv[i]:
            q_need = (s_calc.imag[i] - load_q[i]) * sbase
            span = sum(g.q_max - g.q_min for g in gs)
            for g in gs:
                share = (g.q_max - g.q_min) / span if span > 0 else 1.0 / len(gs)
                q_gen[g.key] = q_need * share

    return PowerFlowSolution(
        bus_ids=[b.id for b in case.buses],
        v_mag=np.abs(v),
        v_angle=np.angle(v),
        p_gen=p_gen,
        q_gen=q_gen,
        converged=converged,
        iterations=iterations,
        max_mismatch=max_mis,
        q_limited_buses=[case.buses[i].id for i in np.nonzero(limited)[0]],
    )


@dataclass
class FlatStartReport:
    max_dv_pu: float
    max_df_hz: float
    worst_v_bus: int
    worst_f_bus: int
    horizon_s: float

    @property
    def flat(self) -> bool:
        return self.max_dv_pu < 1e-4 and self.max_df_hz < 1e-4


def check_flat_start(dyncase: PowerFlowCase, horizon_s: float = 20.0,
                     dt: float = 0.005) -> FlatStartReport:
    """Run the dynamic case with no events and report the worst voltage and
    frequency drift from the initial values."""
    from renstab.simulator import SimOptions, run  # deferred: avoids cycle

    result = run(dyncase, [], SimOptions(dt=dt, t_end=horizon_s))
    max_dv, max_df = 0.0, 0.0
    worst_v, worst_f = -1, -1
    for name, series in result.channels.items():
        parts = name.split(".")
        if parts[0] != "bus":
            continue
        if parts[2] == "v_pu":
            dv = float(np.abs(series - series[0]).max())
            if dv > max_dv:
                max_dv, worst_v = dv, int(parts[1])
        elif parts[2] == "f_hz":
            df = float(np.abs(series - 60.0).max())
            if df > max_df:
                max_df, worst_f = df, int(parts[1])
    return FlatStartReport(max_dv, max_df, worst_v, worst_f, horizon_s)
