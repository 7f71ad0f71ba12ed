"""Time-domain simulator: equilibrium holding, integration accuracy,
events, frequency measurement, recording, and failure handling."""

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renstab.assignment import AssignmentConfig, build_dynamic_case
from renstab.devices import DeviceInitError
from renstab.network import Branch, Bus, Generator, Load, PowerFlowCase
from renstab.powerflow import check_flat_start
from renstab.simulator import (
    DEFAULT_FAULT_ADMITTANCE,
    Event,
    EventError,
    SimOptions,
    Simulation,
    SimulationError,
    _mask_intervals,
    _principal,
    bus_frequency,
    event_to_dict,
    initialize_simulation,
    parse_events,
    run,
)

W_BASE = 2.0 * math.pi * 60.0


def wind_gen(bus, uid, p=15.0, mbase=25.0):
    return Generator(bus, uid, "Wind", p, p_max=0.8 * mbase, q_max=0.48 * mbase,
                     q_min=-0.48 * mbase, mbase=mbase, v_setpoint=1.01)


def mixed_case() -> PowerFlowCase:
    """Hydro slack, two-unit wind plant, solar unit, with assigned models."""
    case = PowerFlowCase(
        sbase_mva=100.0,
        buses=[
            Bus(1, "Slack", 230.0, v_mag=1.02),
            Bus(2, "PV", 34.5, v_mag=1.01),
            Bus(3, "PQ", 34.5),
        ],
        branches=[Branch(1, 2, 0.01, 0.05, 0.02), Branch(2, 3, 0.01, 0.04, 0.01)],
        generators=[
            Generator(1, "1", "Hydro", 52.0, p_max=120.0, q_max=80.0, q_min=-80.0,
                      mbase=150.0, v_setpoint=1.02),
            wind_gen(2, "1"),
            wind_gen(2, "2"),
            Generator(3, "1", "Solar", 8.0, p_max=10.0, q_max=6.0, q_min=-6.0,
                      mbase=12.0),
        ],
        loads=[Load(3, 80.0, 20.0)],
    )
    return build_dynamic_case(case, AssignmentConfig(seed=7))


def machines_case() -> PowerFlowCase:
    """Two classical machines and a load; every vector field smooth."""
    return PowerFlowCase(
        sbase_mva=100.0,
        buses=[Bus(1, "Slack", v_mag=1.0), Bus(2, "PV", v_mag=1.0), Bus(3, "PQ")],
        branches=[Branch(1, 2, 0.01, 0.3, 0.02), Branch(2, 3, 0.01, 0.2, 0.01),
                  Branch(1, 3, 0.01, 0.25, 0.01)],
        generators=[
            Generator(1, "1", "Hydro", 0.0, p_max=500.0, p_min=-500.0,
                      mbase=100.0, v_setpoint=1.0),
            Generator(2, "1", "Gas", 30.0, p_max=100.0, mbase=100.0,
                      v_setpoint=1.0),
        ],
        loads=[Load(3, 40.0, 10.0)],
        dynamics=[
            {"model": "classical", "bus": 1, "unit_id": "1",
             "params": {"h": 5.0, "d": 2.0, "xdp": 0.2}},
            {"model": "classical", "bus": 2, "unit_id": "1",
             "params": {"h": 3.0, "d": 2.0, "xdp": 0.25}},
        ],
    )


def smib_case() -> PowerFlowCase:
    """Lossless single machine against a very large one."""
    return PowerFlowCase(
        sbase_mva=100.0,
        buses=[Bus(1, "Slack", v_mag=1.0), Bus(2, "PV", v_mag=1.0)],
        branches=[Branch(1, 2, 0.0, 0.3, 0.0)],
        generators=[
            Generator(1, "1", "Hydro", 0.0, p_max=500.0, p_min=-500.0,
                      mbase=100.0, v_setpoint=1.0),
            Generator(2, "1", "Hydro", 30.0, p_max=100.0, mbase=100.0,
                      v_setpoint=1.0),
        ],
        dynamics=[
            {"model": "classical", "bus": 1, "unit_id": "1",
             "params": {"h": 1.0e6, "d": 0.0, "xdp": 0.2}},
            {"model": "classical", "bus": 2, "unit_id": "1",
             "params": {"h": 3.0, "d": 0.0, "xdp": 0.25}},
        ],
    )


FAULT_50MS = [
    {"kind": "bus_fault", "bus": 3, "time": 1.0},
    {"kind": "clear_fault", "bus": 3, "time": 1.05},
]


@pytest.fixture(scope="module")
def assigned():
    return mixed_case()


@pytest.fixture(scope="module")
def fault_result(assigned):
    return run(assigned, FAULT_50MS, SimOptions(dt=0.005, t_end=3.0))


class TestEventParsing:
    def test_round_trip_with_defaults(self):
        evs = parse_events(FAULT_50MS)
        assert evs[0] == Event("bus_fault", 1.0, 3)
        assert evs[0].fault_admittance == DEFAULT_FAULT_ADMITTANCE
        assert evs[1].kind == "clear_fault"

    def test_custom_fault_admittance(self):
        ev = parse_events([{"kind": "bus_fault", "bus": 7, "time": 0.5,
                            "fault_admittance": [300.0, -250.0]}])[0]
        assert ev.fault_admittance == complex(300.0, -250.0)
        doc = event_to_dict(ev)
        assert doc["fault_admittance"] == [300.0, -250.0]

    def test_outage_event(self):
        ev = parse_events([{"kind": "generator_outage", "bus": 2,
                            "unit_id": "1", "time": 2.0}])[0]
        assert ev.unit_id == "1"
        assert event_to_dict(ev) == {"kind": "generator_outage", "time": 2.0,
                                     "bus": 2, "unit_id": "1"}

    @pytest.mark.parametrize("bad, msg", [
        ([{"kind": "line_trip", "bus": 1, "time": 0.0}], "unknown kind"),
        ([{"kind": "bus_fault", "bus": 1, "time": -0.1}], "non-negative"),
        ([{"kind": "bus_fault", "time": 0.0}], "missing 'bus'"),
        ([{"kind": "generator_outage", "bus": 1, "time": 0.0}], "missing 'unit_id'"),
        ([{"kind": "bus_fault", "bus": 1, "time": 0.0, "spice": 1}], "unknown key"),
        ([{"kind": "bus_fault", "bus": 1}], "missing 'time'"),
        ({"kind": "bus_fault"}, "must be a list"),
        ([{"kind": "bus_fault", "bus": 1, "time": 0.0,
           "fault_admittance": "big"}], "pair"),
    ])
    def test_malformed(self, bad, msg):
        with pytest.raises(EventError, match=msg):
            parse_events(bad)

    def test_clear_requires_preceding_fault(self):
        with pytest.raises(EventError, match="no preceding bus_fault"):
            parse_events([{"kind": "clear_fault", "bus": 3, "time": 1.0}])
        with pytest.raises(EventError, match="no preceding"):
            parse_events([
                {"kind": "clear_fault", "bus": 3, "time": 1.0},
                {"kind": "bus_fault", "bus": 3, "time": 2.0},
            ])


class TestSimOptions:
    @pytest.mark.parametrize("kwargs, msg", [
        ({"dt": 0.0}, "dt"),
        ({"dt": 0.02}, "dt"),
        ({"t_end": 0.0}, "t_end"),
        ({"freq_filter_tc": 0.0}, "freq_filter_tc"),
    ])
    def test_rejects_bad_options(self, kwargs, msg):
        with pytest.raises(SimulationError, match=msg):
            SimOptions(**kwargs).validate()


class TestInitialization:
    def test_flat_start(self, assigned):
        report = check_flat_start(assigned, horizon_s=5.0)
        assert report.flat
        assert report.max_dv_pu < 1e-6
        assert report.max_df_hz < 1e-6

    def test_single_step_stays_put(self, assigned):
        sim = initialize_simulation(assigned, SimOptions(dt=0.005, t_end=1.0))
        x0 = sim.x.copy()
        sim.step()
        assert np.abs(sim.x - x0).max() < 1e-12

    def test_one_factorization_without_events(self, assigned):
        res = run(assigned, [], SimOptions(dt=0.005, t_end=0.5))
        assert res.stats["factorizations"] == 1

    def test_needs_dynamic_devices(self):
        case = machines_case()
        case.dynamics = []
        with pytest.raises(SimulationError, match="no dynamic devices"):
            initialize_simulation(case)

    def test_init_failure_names_unit(self):
        case = machines_case()
        case.generators.append(
            Generator(3, "1", "Solar", 8.0, q_mvar=6.0, p_max=10.0,
                      q_max=9.0, q_min=-9.0, mbase=12.0))
        case.dynamics += [
            {"model": "regc_a", "bus": 3, "unit_id": "1", "params": {}},
            {"model": "reec_a", "bus": 3, "unit_id": "1",
             "params": {"qmax": 0.01, "qmin": -0.01}},
        ]
        with pytest.raises(DeviceInitError, match=r"gen\.3\.1"):
            initialize_simulation(case)

    def test_device_slice_lookup(self, assigned):
        sim = initialize_simulation(assigned, SimOptions(t_end=1.0))
        sl = sim.device_slice((1, "1"))
        assert sl.stop - sl.start == 2
        with pytest.raises(KeyError, match=r"9\.1"):
            sim.device_slice((9, "1"))


class TestIntegrationAccuracy:
    def test_richardson_order_on_bus_fault(self):
        case = machines_case()
        sols = {}
        for dt in (0.005, 0.0025, 0.00125):
            r = run(case, FAULT_50MS, SimOptions(dt=dt, t_end=3.0))
            stride = int(round(0.005 / dt))
            sols[dt] = {n: r.channels[n][::stride] for n in r.channels}
        t = np.arange(len(sols[0.005]["bus.2.v_pu"])) * 0.005
        win = (t >= 1.1)
        for name in ("bus.2.v_pu", "gen.2.1.rotor_angle_deg", "gen.2.1.p_mw"):
            e1 = np.abs(sols[0.005][name][win] - sols[0.0025][name][win]).max()
            e2 = np.abs(sols[0.0025][name][win] - sols[0.00125][name][win]).max()
            assert math.log2(e1 / e2) >= 1.8, name

    def test_smib_energy_conservation(self):
        sim = Simulation(smib_case(), SimOptions(dt=0.005, t_end=20.0))
        m1, m2 = sorted(sim.machines, key=lambda m: m.bus)
        sl1, sl2 = sim.device_slice(m1.key), sim.device_slice(m2.key)
        sim.x[sl2.start] += 0.02  # rotor-angle kick
        x_total = 0.3 + m1.p.xdp + m2.p.xdp
        k_e = m1.emag * m2.emag / x_total

        def energy(x):
            d_rel = x[sl2.start] - x[sl1.start]
            return (m2.p.h * W_BASE * x[sl2.start + 1] ** 2
                    - m2.pm * d_rel - k_e * math.cos(d_rel))

        e0 = energy(sim.x)
        n = 4000
        for _ in range(n):
            sim.step()
        d0 = math.asin(m2.pm / k_e)
        w_mode = math.sqrt(W_BASE * k_e * math.cos(d0) / (2.0 * m2.p.h))
        cycles = n * 0.005 * w_mode / (2.0 * math.pi)
        assert abs(energy(sim.x) - e0) / cycles < 1e-6


class TestEvents:
    def test_fault_depresses_voltage(self, fault_result):
        v3 = fault_result.channels["bus.3.v_pu"]
        k = 200  # t = 1.0 at dt = 0.005
        assert v3[k - 1] > 0.9
        assert np.all(v3[k:k + 10] < 0.05)
        assert fault_result.fault_intervals == [[3, 1.0, 1.05]]

    def test_recovery_to_prefault_voltage(self, fault_result):
        for b in (1, 2, 3):
            v = fault_result.channels[f"bus.{b}.v_pu"]
            assert abs(v[-1] - v[0]) < 0.02 * v[0]

    def test_neighbor_units_boost_reactive_during_dip(self, assigned):
        ev = [{"kind": "bus_fault", "bus": 3, "time": 1.0,
               "fault_admittance": [20.0, -20.0]},
              {"kind": "clear_fault", "bus": 3, "time": 1.05}]
        res = run(assigned, ev, SimOptions(dt=0.005, t_end=1.5))
        for name in ("gen.2.1.q_mvar", "gen.2.2.q_mvar"):
            q = res.channels[name]
            assert q[200:211].max() > q[199] + 1.0

    def test_weak_fault_admittance_respected(self, assigned):
        ev = [{"kind": "bus_fault", "bus": 3, "time": 1.0,
               "fault_admittance": [2.0, -2.0]},
              {"kind": "clear_fault", "bus": 3, "time": 1.05}]
        res = run(assigned, ev, SimOptions(dt=0.005, t_end=1.2))
        v3 = res.channels["bus.3.v_pu"]
        assert 0.2 < v3[205] < 0.9

    def test_zero_elapsed_fault_is_invisible(self, assigned):
        opts = SimOptions(dt=0.005, t_end=4.0)
        base = list(FAULT_50MS)
        withpair = base + [
            {"kind": "bus_fault", "bus": 2, "time": 2.0},
            {"kind": "clear_fault", "bus": 2, "time": 2.0},
        ]
        r1 = run(assigned, base, opts)
        r2 = run(assigned, withpair, opts)
        assert r1.stats["factorizations"] == r2.stats["factorizations"]
        for name in r1.channels:
            assert np.abs(r1.channels[name] - r2.channels[name]).max() < 1e-12

    def test_event_snapped_to_nearest_step(self, assigned):
        ev = [{"kind": "bus_fault", "bus": 3, "time": 1.0021},
              {"kind": "clear_fault", "bus": 3, "time": 1.0539}]
        res = run(assigned, ev, SimOptions(dt=0.005, t_end=1.5))
        v3 = res.channels["bus.3.v_pu"]
        assert v3[199] > 0.9
        assert v3[200] < 0.05
        assert res.event_log[0]["time"] == pytest.approx(1.0)
        assert res.event_log[0]["requested_time"] == 1.0021
        assert res.event_log[1]["time"] == pytest.approx(1.055)

    def test_generator_outage_zeroes_unit(self, assigned):
        ev = [{"kind": "generator_outage", "bus": 2, "unit_id": "1", "time": 1.0}]
        res = run(assigned, ev, SimOptions(dt=0.005, t_end=3.0))
        p = res.channels["gen.2.1.p_mw"]
        assert p[199] == pytest.approx(15.0, rel=1e-3)
        assert np.all(p[200:] == 0.0)
        assert np.all(res.channels["gen.2.1.q_mvar"][200:] == 0.0)
        # the network refactorizes only for matrix changes; a converter
        # outage just removes its injection
        assert res.stats["factorizations"] == 1
        # the slack machine picks up the lost output
        p_slack = res.channels["gen.1.1.p_mw"]
        assert p_slack[-1] > p_slack[0] + 10.0

    def test_machine_outage_refactorizes(self):
        ev = [{"kind": "generator_outage", "bus": 2, "unit_id": "1", "time": 1.0}]
        res = run(machines_case(), ev, SimOptions(dt=0.005, t_end=2.0))
        assert res.stats["factorizations"] == 2
        assert np.all(res.channels["gen.2.1.p_mw"][200:] == 0.0)

    def test_unknown_targets_rejected(self, assigned):
        opts = SimOptions(t_end=1.0)
        with pytest.raises(EventError, match="unknown bus 99"):
            run(assigned, [{"kind": "bus_fault", "bus": 99, "time": 0.5}], opts)
        with pytest.raises(EventError, match=r"unknown generator 9\.1"):
            run(assigned, [{"kind": "generator_outage", "bus": 9,
                            "unit_id": "1", "time": 0.5}], opts)

    def test_conflicting_events_rejected(self, assigned):
        sim = initialize_simulation(assigned, SimOptions(t_end=1.0))
        sim.apply_event(Event("bus_fault", 0.0, 3))
        with pytest.raises(EventError, match="already faulted"):
            sim.apply_event(Event("bus_fault", 0.0, 3))
        sim.apply_event(Event("clear_fault", 0.0, 3))
        with pytest.raises(EventError, match="no active fault"):
            sim.apply_event(Event("clear_fault", 0.0, 3))
        sim.apply_event(Event("generator_outage", 0.0, 2, "1"))
        with pytest.raises(EventError, match="already out of service"):
            sim.apply_event(Event("generator_outage", 0.0, 2, "1"))


class TestFrequency:
    def test_constant_angle_reads_nominal(self):
        f = bus_frequency(np.full(400, 0.7), dt=0.005)
        assert np.all(f == 60.0)

    def test_ramp_tracks_within_tolerance(self):
        # -2*pi*0.5 rad/s ramp reads 59.5 Hz once the filter settles (ten
        # time constants; the first-order response still carries 3.4e-3 Hz
        # of error at five).
        dt, tc = 0.005, 0.04
        t = np.arange(0, 1.0, dt)
        f = bus_frequency(-2.0 * math.pi * 0.5 * t, dt, tc)
        k = int(round(10 * tc / dt))
        assert abs(f[k] - 59.5) < 1e-3
        assert abs(f[-1] - 59.5) < 1e-6

    def test_sustained_rotation_in_simulation(self):
        # undamped machines hold the speed offset; the angle tracker
        # unwraps many revolutions without a single 2*pi glitch
        sim = Simulation(smib_case(), SimOptions(dt=0.005, t_end=8.0))
        for m in sim.machines:
            sim.x[sim.device_slice(m.key).start + 1] += 0.2 / 60.0
        res = sim.run([])
        for b in (1, 2):
            f = res.channels[f"bus.{b}.f_hz"]
            assert abs(f[-1] - 60.2) < 2e-3
            assert np.abs(np.diff(f[int(1.0 / 0.005):])).max() < 0.01

    def test_deenergized_bus_holds_frequency(self, fault_result):
        f3 = fault_result.channels["bus.3.f_hz"]
        assert np.all(f3[200:210] == f3[199])
        assert fault_result.deenergized == {3: [[1.0, 1.045]]}


class TestDroopResponse:
    REEC = {"q_flag": 0, "pf_flag": 0, "v_flag": 0, "pmax": 1.0, "pmin": 0.0}
    REPC = {"ref_flag": 0, "freq_flag": 1, "kpg": 0.1, "kig": 1.0,
            "pmax": 1.0, "pmin": 0.0}

    def rig(self) -> PowerFlowCase:
        """Giant machine plus three single-unit plants: with headroom,
        without, and down-regulating only."""
        dyn = [{"model": "classical", "bus": 1, "unit_id": "1",
                "params": {"h": 1.0e5, "d": 0.0, "xdp": 0.2}}]
        for bus, pmax, dup in ((2, 1.0, 20.0), (3, 0.5, 20.0), (4, 1.0, 0.0)):
            dyn += [
                {"model": "regc_a", "bus": bus, "unit_id": "1", "params": {}},
                {"model": "reec_a", "bus": bus, "unit_id": "1",
                 "params": dict(self.REEC, pmax=pmax)},
                {"model": "repc_a", "bus": bus, "unit_id": "1",
                 "params": dict(self.REPC, ddn=20.0, dup=dup, pmax=pmax)},
            ]
        return PowerFlowCase(
            sbase_mva=100.0,
            buses=[Bus(1, "Slack", v_mag=1.0), Bus(2, "PV", v_mag=1.0),
                   Bus(3, "PV", v_mag=1.0), Bus(4, "PV", v_mag=1.0)],
            branches=[Branch(1, 2, 0.002, 0.05), Branch(1, 3, 0.002, 0.05),
                      Branch(1, 4, 0.002, 0.05)],
            generators=[
                Generator(1, "1", "Hydro", 60.0, p_max=2000.0, p_min=-2000.0,
                          q_max=900.0, q_min=-900.0, mbase=1000.0, v_setpoint=1.0),
                Generator(2, "1", "Wind", 50.0, p_max=100.0, mbase=100.0,
                          v_setpoint=1.0),
                Generator(3, "1", "Wind", 50.0, p_max=50.0, mbase=100.0,
                          v_setpoint=1.0),
                Generator(4, "1", "Solar", 50.0, p_max=100.0, mbase=100.0,
                          v_setpoint=1.0),
            ],
            loads=[Load(1, 200.0, 30.0)],
            dynamics=dyn,
        )

    def offset_run(self, df_hz):
        sim = Simulation(self.rig(), SimOptions(dt=0.005, t_end=20.0))
        mach = sim.machines[0]
        sim.x[sim.device_slice(mach.key).start + 1] += df_hz / 60.0
        res = sim.run([])
        assert res.aborted_at is None
        return res

    # droop target for |df| = 0.2 Hz past the 0.017 Hz deadband, gain 20,
    # on the 100 MVA plant base
    TARGET_MW = 20.0 * (0.2 - 0.017) / 60.0 * 100.0

    def test_over_frequency_curtails_all_plants(self):
        res = self.offset_run(+0.2)
        assert abs(res.channels["bus.2.f_hz"][-1] - 60.2) < 1e-3
        for bus in (2, 3, 4):
            p = res.channels[f"gen.{bus}.1.p_mw"]
            drop = p[0] - p[-1]
            assert drop == pytest.approx(self.TARGET_MW, rel=0.01)

    def test_under_frequency_respects_headroom_and_dup(self):
        res = self.offset_run(-0.2)
        rise = {bus: res.channels[f"gen.{bus}.1.p_mw"][-1]
                - res.channels[f"gen.{bus}.1.p_mw"][0] for bus in (2, 3, 4)}
        assert rise[2] == pytest.approx(self.TARGET_MW, rel=0.01)
        assert abs(rise[3]) < 1e-4 * 100.0   # saturated at its ceiling
        assert abs(rise[4]) < 1e-4 * 100.0   # no up-regulation gain
        # a down-regulating-only plant never settles above its pre-event
        # output after an under-frequency event
        assert res.channels["gen.4.1.p_mw"][-1] <= 50.0 + 1e-6


class TestRecording:
    def test_channel_names_and_order(self, fault_result):
        names = list(fault_result.channels)
        assert names[:6] == ["bus.1.v_pu", "bus.1.f_hz", "bus.2.v_pu",
                             "bus.2.f_hz", "bus.3.v_pu", "bus.3.f_hz"]
        assert "gen.1.1.rotor_angle_deg" in names
        assert "gen.2.1.p_mw" in names
        assert "gen.2.1.rotor_angle_deg" not in names
        assert fault_result.reference == "gen.1.1"

    def test_rotor_angles_relative_to_reference(self):
        res = run(machines_case(), FAULT_50MS, SimOptions(dt=0.005, t_end=2.0))
        assert np.all(res.channels["gen.1.1.rotor_angle_deg"] == 0.0)
        assert np.abs(res.channels["gen.2.1.rotor_angle_deg"]).max() > 1.0

    def test_record_channel_patterns(self, assigned):
        res = run(assigned, [], SimOptions(
            t_end=0.5, record_channels=("bus.*.v_pu", "gen.2.*.p_mw")))
        assert list(res.channels) == ["bus.1.v_pu", "bus.2.v_pu", "bus.3.v_pu",
                                      "gen.2.1.p_mw", "gen.2.2.p_mw"]

    def test_csv_round_trip(self, fault_result, tmp_path):
        path = tmp_path / "out.csv"
        fault_result.to_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "time_s"
        assert rows[0][1:] == list(fault_result.channels)
        assert len(rows) == 1 + fault_result.time.size
        got = float(rows[201][rows[0].index("bus.3.v_pu")])
        assert got == pytest.approx(fault_result.channels["bus.3.v_pu"][200],
                                    abs=1e-9)

    def test_metadata_document(self, fault_result):
        doc = fault_result.metadata()
        assert doc["dt"] == 0.005
        assert doc["aborted_at"] is None
        assert doc["fault_intervals"] == [[3, 1.0, 1.05]]
        assert doc["events"][0]["kind"] == "bus_fault"
        assert doc["stats"]["factorizations"] == 3
        assert "bus.3.f_hz" in doc["channels"]

    def test_bit_identical_reruns(self, assigned, tmp_path):
        opts = SimOptions(dt=0.005, t_end=2.0)
        paths = []
        for tag in ("a", "b"):
            res = run(assigned, FAULT_50MS, opts)
            p = tmp_path / f"{tag}.csv"
            res.to_csv(p)
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]


class TestAborts:
    def test_network_divergence_reports_collapse(self, assigned, monkeypatch):
        import renstab.simulator as simmod
        monkeypatch.setattr(simmod, "NETWORK_MAX_SWEEPS", 1)
        monkeypatch.setattr(
            simmod.Simulation, "_solve_network_fallback", lambda self, x, v: None
        )
        res = run(assigned, FAULT_50MS, SimOptions(dt=0.005, t_end=3.0))
        assert res.aborted_at is not None
        assert "voltage collapse suspected at bus" in res.abort_reason
        assert res.time.size < 601
        assert res.time[-1] <= res.aborted_at

    def test_non_finite_state_aborts_with_channels(self, assigned):
        sim = initialize_simulation(assigned, SimOptions(dt=0.005, t_end=2.0))
        sim.x[sim.device_slice((2, "1")).start] = np.nan
        res = sim.run([])
        assert res.aborted_at is not None
        assert "non-finite" in res.abort_reason
        assert res.time.size >= 1
        assert set(res.channels)  # partial dump still present


class TestHelpers:
    @given(st.floats(-1e6, 1e6))
    @settings(max_examples=200, deadline=None)
    def test_principal_wraps_into_band(self, x):
        p = float(_principal(np.float64(x)))
        assert -math.pi - 1e-9 <= p <= math.pi + 1e-9
        assert abs(complex(math.cos(p), math.sin(p))
                   - complex(math.cos(x), math.sin(x))) < 1e-7

    @given(st.lists(st.booleans(), min_size=1, max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_mask_intervals_cover_exactly(self, mask):
        mask = np.asarray(mask)
        t = np.arange(mask.size) * 0.5
        spans = _mask_intervals(t, mask)
        rebuilt = np.zeros_like(mask)
        for a, b in spans:
            rebuilt |= (t >= a) & (t <= b)
        assert np.array_equal(rebuilt, mask)
