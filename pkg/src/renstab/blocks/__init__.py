"""Dynamic control blocks: converter, electrical, plant, and the wind
mechanical chain, plus the classical machine.  Each block module exposes
its parameter dataclass, equilibrium initializer, and derivative
evaluator; composition into network-facing devices lives one level up.
"""

from renstab.blocks.aero import AeroParams, wtga_power
from renstab.blocks.converter import (
    ConverterParams,
    lvpl_ceiling,
    regc_derivatives,
    regc_init,
    regc_injection,
)
from renstab.blocks.drivetrain import (
    OMEGA_BASE,
    DriveTrainParams,
    shaft_frequency_hz,
    wtgt_derivatives,
    wtgt_init,
)
from renstab.blocks.electrical import (
    ElectricalParams,
    ElectricalRefs,
    current_limits,
    reec_derivatives,
    reec_init,
)
from renstab.blocks.machine import (
    MachineParams,
    machine_derivatives,
    machine_init,
)
from renstab.blocks.pitch import PitchParams, wtgpt_derivatives, wtgpt_init
from renstab.blocks.plant import (
    PlantParams,
    PlantRefs,
    droop_response,
    repc_derivatives,
    repc_init,
)
from renstab.blocks.torque import (
    DEFAULT_SPEED_POWER_CURVE,
    TorqueParams,
    wtgtrq_derivatives,
    wtgtrq_init,
)
from renstab.blocks.util import clamp, deadband, pi_non_windup, pw_linear, ramp01

__all__ = [
    "AeroParams",
    "ConverterParams",
    "DEFAULT_SPEED_POWER_CURVE",
    "DriveTrainParams",
    "ElectricalParams",
    "ElectricalRefs",
    "MachineParams",
    "OMEGA_BASE",
    "PitchParams",
    "PlantParams",
    "PlantRefs",
    "TorqueParams",
    "clamp",
    "current_limits",
    "deadband",
    "droop_response",
    "lvpl_ceiling",
    "machine_derivatives",
    "machine_init",
    "pi_non_windup",
    "pw_linear",
    "ramp01",
    "reec_derivatives",
    "reec_init",
    "regc_derivatives",
    "regc_init",
    "regc_injection",
    "repc_derivatives",
    "repc_init",
    "shaft_frequency_hz",
    "wtga_power",
    "wtgpt_derivatives",
    "wtgpt_init",
    "wtgt_derivatives",
    "wtgt_init",
    "wtgtrq_derivatives",
    "wtgtrq_init",
]
