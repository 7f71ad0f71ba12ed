"""Bundled test systems.

``case9`` is the classic three-machine nine-bus system (textbook
parameters); ``renewable_case`` is a twelve-bus derivative hosting wind,
solar, and classical units and is the fixture used by the scenario tests
and demos.  Both are also shipped as JSON under ``renstab/data``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from renstab.network import (
    Branch,
    Bus,
    Generator,
    Load,
    PowerFlowCase,
    load_case,
)


def case9() -> PowerFlowCase:
    """Three-machine nine-bus system, 100 MVA base, 230 kV ring."""
    buses = [
        Bus(1, "Slack", 16.5, v_mag=1.040),
        Bus(2, "PV", 18.0, v_mag=1.025),
        Bus(3, "PV", 13.8, v_mag=1.025),
        Bus(4, "PQ", 230.0),
        Bus(5, "PQ", 230.0),
        Bus(6, "PQ", 230.0),
        Bus(7, "PQ", 230.0),
        Bus(8, "PQ", 230.0),
        Bus(9, "PQ", 230.0),
    ]
    branches = [
        Branch(1, 4, 0.0, 0.0576),
        Branch(2, 7, 0.0, 0.0625),
        Branch(3, 9, 0.0, 0.0586),
        Branch(4, 5, 0.010, 0.085, 0.176),
        Branch(4, 6, 0.017, 0.092, 0.158),
        Branch(5, 7, 0.032, 0.161, 0.306),
        Branch(6, 9, 0.039, 0.170, 0.358),
        Branch(7, 8, 0.0085, 0.072, 0.149),
        Branch(8, 9, 0.0119, 0.1008, 0.209),
    ]
    generators = [
        Generator(1, "1", "Hydro", 71.6, 27.0, p_max=250.0, p_min=10.0,
                  q_max=300.0, q_min=-300.0, mbase=250.0, v_setpoint=1.040),
        Generator(2, "1", "Coal", 163.0, 6.7, p_max=300.0, p_min=10.0,
                  q_max=300.0, q_min=-300.0, mbase=200.0, v_setpoint=1.025),
        Generator(3, "1", "Gas", 85.0, -10.9, p_max=270.0, p_min=10.0,
                  q_max=300.0, q_min=-300.0, mbase=150.0, v_setpoint=1.025),
    ]
    loads = [
        Load(5, 125.0, 50.0),
        Load(6, 90.0, 30.0),
        Load(8, 100.0, 35.0),
    ]
    return PowerFlowCase(
        sbase_mva=100.0,
        buses=buses,
        branches=branches,
        generators=generators,
        loads=loads,
    )


def data_path(name: str) -> Path:
    """Path to a bundled data file (template library, case JSON)."""
    return Path(resources.files("renstab").joinpath("data", name))


def renewable_case() -> PowerFlowCase:
    """Twelve-bus system with two classical machines, three wind plants
    (Type 3 and Type 4), and a five-unit solar plant, with dynamics
    records attached.  Loaded from the bundled JSON."""
    return load_case(data_path("rentest12.json"))


def renewable_case_static() -> PowerFlowCase:
    """The twelve-bus system without any dynamics records (input for the
    statistical assignment workflow)."""
    return load_case(data_path("rentest12_static.json"))
