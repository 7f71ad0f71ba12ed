"""Power-flow solver: closed-form oracle, resubstitution, limit switching.

The two-bus scenario has an analytic solution (load角 from a quadratic in
sin/cos), derived here by hand:

    slack 1.0∠0, pure reactance x, load P at bus 2 with Q=0:
        (V2/x)·sin(th2) = -P     (P balance)
        V2 = cos(th2)            (Q balance)
    =>  sin(2·th2) = -2·P·x,  V2 = cos(th2)
"""

import numpy as np
import pytest

from renstab.cases import case9
from renstab.network import (
    Branch,
    Bus,
    Generator,
    Load,
    PowerFlowCase,
    build_ybus,
)
from renstab.powerflow import PowerFlowError, solve_powerflow


def two_bus_case(p_load_mw=100.0, q_load_mvar=0.0, x=0.1):
    return PowerFlowCase(
        sbase_mva=100.0,
        buses=[Bus(1, "Slack", 230.0), Bus(2, "PQ", 230.0)],
        branches=[Branch(1, 2, 0.0, x)],
        generators=[Generator(1, "1", "Hydro", 100.0, p_max=1000.0,
                              p_min=-1000.0, v_setpoint=1.0)],
        loads=[Load(2, p_load_mw, q_load_mvar)],
    )


def resubstitution_mismatch(case, sol) -> float:
    """Independent power-balance check: scheduled minus computed injection."""
    idx = {b.id: i for i, b in enumerate(case.buses)}
    v = sol.v_mag * np.exp(1j * sol.v_angle)
    s_calc = v * np.conj(build_ybus(case).toarray() @ v)
    p = np.zeros(case.n_bus)
    q = np.zeros(case.n_bus)
    for g in case.generators:
        if g.on:
            p[idx[g.bus]] += sol.p_gen[g.key]
            q[idx[g.bus]] += sol.q_gen[g.key]
    for ld in case.loads:
        p[idx[ld.bus]] -= ld.p_mw
        q[idx[ld.bus]] -= ld.q_mvar
    mis = (p + 1j * q) / case.sbase_mva - s_calc
    return float(np.abs(np.concatenate([mis.real, mis.imag])).max())


class TestTwoBusOracle:
    def test_matches_closed_form(self):
        sol = solve_powerflow(two_bus_case())
        assert sol.converged
        th2 = np.arcsin(-2.0 * 1.0 * 0.1) / 2.0
        v2 = np.cos(th2)
        assert sol.v_angle[1] == pytest.approx(th2, abs=1e-8)
        assert sol.v_mag[1] == pytest.approx(v2, abs=1e-8)

    def test_slack_picks_up_losses(self):
        # Lossless line: slack P equals the load exactly.
        sol = solve_powerflow(two_bus_case())
        assert sol.p_gen[(1, "1")] == pytest.approx(100.0, abs=1e-6)

    def test_quadratic_convergence(self):
        sol = solve_powerflow(two_bus_case())
        assert sol.iterations <= 4


class TestTrivialAndNineBus:
    def test_zero_injection_case_is_already_solved(self):
        case = PowerFlowCase(
            buses=[Bus(1, "Slack"), Bus(2, "PQ"), Bus(3, "PQ")],
            branches=[Branch(1, 2, 0.0, 0.1), Branch(2, 3, 0.0, 0.1)],
            generators=[Generator(1, "1", "Hydro", 0.0, p_max=10.0,
                                  p_min=-10.0, v_setpoint=1.0)],
        )
        sol = solve_powerflow(case)
        assert sol.converged
        assert sol.iterations == 0
        assert np.allclose(sol.v_mag, 1.0)
        assert np.allclose(sol.v_angle, 0.0)

    def test_nine_bus_converges_fast(self):
        sol = solve_powerflow(case9())
        assert sol.converged
        assert sol.iterations <= 6
        assert sol.max_mismatch < 1e-8 * 100.0  # MVA at sbase 100

    def test_nine_bus_resubstitution(self):
        case = case9()
        sol = solve_powerflow(case)
        assert resubstitution_mismatch(case, sol) < 1e-8

    def test_nine_bus_known_profile(self):
        """Spot values of the classic solved point (textbook)."""
        sol = solve_powerflow(case9())
        by_id = dict(zip(sol.bus_ids, sol.v_mag))
        assert by_id[5] == pytest.approx(0.9956, abs=2e-3)
        assert by_id[7] == pytest.approx(1.0258, abs=2e-3)
        assert sol.p_gen[(1, "1")] == pytest.approx(71.6, abs=1.0)

    def test_reordering_invariance(self):
        case = case9()
        sol_a = solve_powerflow(case)
        case_b = case9()
        order = [4, 8, 0, 2, 6, 1, 7, 3, 5]
        case_b.buses = [case_b.buses[i] for i in order]
        sol_b = solve_powerflow(case_b)
        va = dict(zip(sol_a.bus_ids, sol_a.v_mag))
        vb = dict(zip(sol_b.bus_ids, sol_b.v_mag))
        for bus_id in va:
            assert vb[bus_id] == pytest.approx(va[bus_id], abs=1e-10)


class TestQLimits:
    def _pv_case(self, q_max):
        return PowerFlowCase(
            buses=[Bus(1, "Slack"), Bus(2, "PV")],
            branches=[Branch(1, 2, 0.0, 0.1)],
            generators=[
                Generator(1, "1", "Hydro", 0.0, p_max=500.0, p_min=-500.0,
                          v_setpoint=1.0),
                Generator(2, "1", "Gas", 0.0, p_max=500.0, p_min=-500.0,
                          q_max=q_max, q_min=-q_max, v_setpoint=1.05),
            ],
            loads=[Load(2, 0.0, 50.0)],
        )

    def test_limit_binds_and_bus_demotes(self):
        sol = solve_powerflow(self._pv_case(q_max=20.0))
        assert sol.converged
        assert sol.q_limited_buses == [2]
        assert sol.q_gen[(2, "1")] == pytest.approx(20.0, abs=1e-5)
        assert sol.v_mag[1] < 1.05  # cannot hold the setpoint

    def test_wide_limit_holds_setpoint(self):
        sol = solve_powerflow(self._pv_case(q_max=500.0))
        assert sol.converged
        assert sol.q_limited_buses == []
        assert sol.v_mag[1] == pytest.approx(1.05, abs=1e-9)

    def test_enforcement_can_be_disabled(self):
        sol = solve_powerflow(self._pv_case(q_max=20.0), enforce_q_limits=False)
        assert sol.converged
        assert sol.v_mag[1] == pytest.approx(1.05, abs=1e-9)
        assert sol.q_gen[(2, "1")] > 20.0


class TestFailureModes:
    def test_isolated_bus_singular_jacobian(self):
        case = PowerFlowCase(
            buses=[Bus(1, "Slack"), Bus(2, "PQ"), Bus(3, "PQ")],
            branches=[Branch(1, 2, 0.0, 0.1)],
            generators=[Generator(1, "1", "Hydro", 0.0, p_max=10.0,
                                  p_min=-10.0, v_setpoint=1.0)],
            loads=[Load(3, 10.0, 0.0)],
        )
        with pytest.raises(PowerFlowError, match="bus 3"):
            solve_powerflow(case)

    def test_no_slack_generator(self):
        case = two_bus_case()
        case.generators[0].status = "Off"
        with pytest.raises(PowerFlowError, match="slack"):
            solve_powerflow(case)

    def test_infeasible_case_reports_not_converged(self):
        # 60 pu of load through a 0.1 pu line cannot be served.
        sol = solve_powerflow(two_bus_case(p_load_mw=6000.0))
        assert not sol.converged
        assert sol.max_mismatch > 1.0
