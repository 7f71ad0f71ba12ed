"""Case model: validation findings, admittance assembly, JSON round trip.

The admittance oracle here stamps a dense matrix with explicitly written-out
pi-model arithmetic, independent of the production assembly path.
"""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renstab.cases import case9
from renstab.network import (
    Branch,
    Bus,
    CaseFormatError,
    Generator,
    Load,
    PowerFlowCase,
    Shunt,
    build_ybus,
    case_from_dict,
    case_to_dict,
    load_case,
    mw_to_pu,
    pu_to_mw,
    save_case,
    validate_case,
)


def dense_ybus_oracle(case: PowerFlowCase) -> np.ndarray:
    """Naive dense admittance stamping, written independently of build_ybus."""
    n = len(case.buses)
    pos = {b.id: i for i, b in enumerate(case.buses)}
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if br.status != "Closed":
            continue
        i, j = pos[br.from_bus], pos[br.to_bus]
        series = 1.0 / (br.r + 1j * br.x)
        half_charging = 1j * br.b_charging / 2.0
        a = br.tap
        y[i, i] += (series + half_charging) / a**2
        y[j, j] += series + half_charging
        y[i, j] += -series / a
        y[j, i] += -series / a
    for sh in case.shunts:
        i = pos[sh.bus]
        y[i, i] += (sh.g_mw + 1j * sh.b_mvar) / case.sbase_mva
    return y


class TestValidation:
    def test_bundled_case_is_clean(self):
        rep = validate_case(case9())
        assert rep.errors == []
        assert rep.ok

    def test_zero_reactance_closed_branch(self):
        case = case9()
        case.branches[0].x = 0.0
        rep = validate_case(case)
        assert any("zero-reactance closed branch" in e for e in rep.errors)

    def test_open_branch_may_have_zero_x(self):
        case = case9()
        case.branches[0].x = 0.0
        case.branches[0].status = "Open"
        rep = validate_case(case)
        # Opening the only path to bus 1 creates a slack-less island instead.
        assert not any("zero-reactance" in e for e in rep.errors)

    def test_two_slacks_in_one_island(self):
        case = case9()
        case.buses[1].kind = "Slack"
        rep = validate_case(case)
        assert any("multiple slack" in e for e in rep.errors)

    def test_island_without_slack(self):
        case = case9()
        # Disconnect bus 9's branches -> island {3, 9} without a slack.
        for br in case.branches:
            if 9 in (br.from_bus, br.to_bus) and br.from_bus != 3:
                br.status = "Open"
        rep = validate_case(case)
        assert any("no Slack" in e for e in rep.errors)

    def test_dangling_references(self):
        case = case9()
        case.loads.append(Load(99, 10.0, 0.0))
        case.generators.append(Generator(98, "1", "Gas", 1.0, p_max=10.0))
        case.branches.append(Branch(1, 97, 0.0, 0.1))
        rep = validate_case(case)
        msgs = "\n".join(rep.errors)
        assert "load at bus 99" in msgs
        assert "generator 98:1" in msgs
        assert "to_bus 97" in msgs

    def test_generator_dispatch_range(self):
        case = case9()
        case.generators[1].p_mw = 1000.0
        rep = validate_case(case)
        assert any("outside [p_min, p_max]" in e for e in rep.errors)

    def test_off_generator_ignores_dispatch_range(self):
        case = case9()
        case.generators[1].p_mw = 1000.0
        case.generators[1].status = "Off"
        rep = validate_case(case)
        assert not any("outside" in e for e in rep.errors)

    def test_island_without_generation_warns(self):
        case = case9()
        # Cut 5-7 and 4-5: bus 5 becomes its own island with only load.
        for br in case.branches:
            if (br.from_bus, br.to_bus) in ((4, 5), (5, 7)):
                br.status = "Open"
        rep = validate_case(case)
        assert any("no in-service generation" in w for w in rep.warnings)


class TestYbus:
    def test_single_branch_stamp(self):
        case = PowerFlowCase(
            buses=[Bus(1, "Slack"), Bus(2, "PQ")],
            branches=[Branch(1, 2, 0.0, 0.1)],
        )
        y = build_ybus(case).toarray()
        assert y[0, 1] == pytest.approx(-1.0 / 0.1j)
        assert y[0, 0] == pytest.approx(1.0 / 0.1j)
        assert y[1, 1] == pytest.approx(1.0 / 0.1j)

    def test_open_branch_contributes_nothing(self):
        case = PowerFlowCase(
            buses=[Bus(1, "Slack"), Bus(2, "PQ")],
            branches=[Branch(1, 2, 0.0, 0.1, status="Open")],
        )
        assert abs(build_ybus(case).toarray()).max() == 0.0

    def test_nine_bus_against_dense_oracle(self):
        case = case9()
        y = build_ybus(case).toarray()
        oracle = dense_ybus_oracle(case)
        assert np.abs(y - oracle).max() < 1e-12

    def test_symmetry_with_unit_taps(self):
        y = build_ybus(case9()).toarray()
        assert np.abs(y - y.T).max() < 1e-12

    def test_shunt_lands_on_diagonal(self):
        case = case9()
        case.shunts.append(Shunt(5, g_mw=2.0, b_mvar=30.0))
        y = build_ybus(case).toarray()
        base = build_ybus(case9()).toarray()
        delta = y - base
        i = case.bus_index()[5]
        assert delta[i, i] == pytest.approx((2.0 + 30.0j) / 100.0)
        delta[i, i] = 0.0
        assert np.abs(delta).max() == 0.0

    def test_assembly_linearity(self):
        """Removing one branch equals subtracting its 4-entry stamp."""
        case = case9()
        full = build_ybus(case).toarray()
        removed = case.branches.pop(5)
        reduced = build_ybus(case).toarray()
        diff = full - reduced
        oracle_case = PowerFlowCase(sbase_mva=case.sbase_mva,
                                    buses=case.buses, branches=[removed])
        assert np.abs(diff - dense_ybus_oracle(oracle_case)).max() < 1e-14

    def test_off_nominal_tap_asymmetry(self):
        case = PowerFlowCase(
            buses=[Bus(1, "Slack"), Bus(2, "PQ")],
            branches=[Branch(1, 2, 0.0, 0.1, tap=1.05)],
        )
        y = build_ybus(case).toarray()
        assert y[0, 0] == pytest.approx((1.0 / 0.1j) / 1.05**2)
        assert y[0, 1] == pytest.approx(-(1.0 / 0.1j) / 1.05)
        assert y[1, 1] == pytest.approx(1.0 / 0.1j)


@given(
    mw=st.floats(-5000, 5000, allow_nan=False),
    sbase=st.floats(1.0, 1000.0, allow_nan=False),
)
@settings(max_examples=200)
def test_per_unit_round_trip(mw, sbase):
    assert pu_to_mw(mw_to_pu(mw, sbase), sbase) == pytest.approx(mw, rel=1e-12, abs=1e-9)


class TestJsonExchange:
    def test_round_trip(self, tmp_path):
        case = case9()
        p = tmp_path / "case9.json"
        save_case(case, p)
        back = load_case(p)
        assert case_to_dict(back) == case_to_dict(case)

    def test_unknown_top_level_key_rejected(self):
        doc = case_to_dict(case9())
        doc["frobnicator"] = 1
        with pytest.raises(CaseFormatError, match="frobnicator"):
            case_from_dict(doc)

    def test_unknown_record_key_rejected(self):
        doc = case_to_dict(case9())
        doc["buses"][0]["voltage"] = 1.0
        with pytest.raises(CaseFormatError, match="voltage"):
            case_from_dict(doc)

    def test_missing_required_key_rejected(self):
        doc = case_to_dict(case9())
        del doc["branches"][0]["x"]
        with pytest.raises(CaseFormatError, match="'x'"):
            case_from_dict(doc)

    def test_malformed_json_file(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(CaseFormatError, match="not valid JSON"):
            load_case(p)

    def test_dynamics_records_carried_verbatim(self):
        doc = case_to_dict(case9())
        doc["dynamics"] = [{"model": "classical", "bus": 1, "unit_id": "1",
                            "params": {"h": 5.0, "d": 0.0, "xdp": 0.3}}]
        case = case_from_dict(doc)
        assert case.dynamics[0]["params"]["h"] == 5.0
        assert case_to_dict(case)["dynamics"] == doc["dynamics"]

    def test_dynamics_record_without_model_rejected(self):
        doc = case_to_dict(case9())
        doc["dynamics"] = [{"bus": 1}]
        with pytest.raises(CaseFormatError, match="model"):
            case_from_dict(doc)

    def test_save_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_case(case9(), a)
        save_case(case9(), b)
        assert a.read_bytes() == b.read_bytes()
