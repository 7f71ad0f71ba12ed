"""Dynamic-model records: JSON shape, parameter parsing, device assembly.

A case carries its dynamic data as a list of records

    {"model": "wtgt_a", "bus": 7, "unit_id": "1", "params": { ... }}

with model names from the supported set below.  Records addressed to the
same (bus, unit_id) combine into one device; plant-controller records
(repc_a / repc_b) stand alone and name the units they control.  Parsing
is strict: unknown model names, unknown parameter keys, and structurally
impossible model combinations are errors that name the offender.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

from renstab.blocks.aero import AeroParams
from renstab.blocks.converter import ConverterParams
from renstab.blocks.drivetrain import DriveTrainParams
from renstab.blocks.electrical import ElectricalParams
from renstab.blocks.machine import MachineParams
from renstab.blocks.pitch import PitchParams
from renstab.blocks.plant import PlantParams
from renstab.blocks.torque import TorqueParams
from renstab.devices import (
    GenKey,
    PlantController,
    RenewableUnit,
    SynchronousMachine,
    UnitModels,
)
from renstab.network import PowerFlowCase

MODEL_PARAMS = {
    "regc_a": ConverterParams,
    "reec_a": ElectricalParams,
    "repc_a": PlantParams,
    "repc_b": PlantParams,
    "wtgt_a": DriveTrainParams,
    "wtga_a": AeroParams,
    "wtgp_a": PitchParams,
    "wtgq_a": TorqueParams,
    "classical": MachineParams,
}

PLANT_MODELS = ("repc_a", "repc_b")

#: Parameter fields holding lists of pairs in JSON.
_PAIR_FIELDS = {"vdl1", "vdl2", "speed_power_curve", "controlled_units"}


class DynamicsError(ValueError):
    """Dynamic records are malformed or do not fit the case."""


def params_from_record(record: dict, where: str = "dynamics") -> object:
    """Parse one record's params into the dataclass for its model."""
    model = record.get("model")
    if model not in MODEL_PARAMS:
        raise DynamicsError(f"{where}: unknown model {model!r}")
    cls = MODEL_PARAMS[model]
    raw = record.get("params", {})
    if not isinstance(raw, dict):
        raise DynamicsError(f"{where}: params must be an object")
    allowed = {f.name for f in dc_fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise DynamicsError(f"{where}: unknown parameter {sorted(unknown)[0]!r}")
    kwargs = {}
    for key, value in raw.items():
        if key in _PAIR_FIELDS:
            try:
                if key == "controlled_units":
                    value = tuple((int(b), str(u)) for b, u in value)
                else:
                    value = tuple((float(a), float(b)) for a, b in value)
            except (TypeError, ValueError) as exc:
                raise DynamicsError(f"{where}: {key} must be a list of pairs") from exc
        kwargs[key] = value
    if model in PLANT_MODELS:
        variant = "B" if model == "repc_b" else "A"
        stated = kwargs.setdefault("variant", variant)
        if stated != variant:
            raise DynamicsError(
                f"{where}: model {model} conflicts with variant {stated!r}"
            )
    try:
        params = cls(**kwargs)
        if hasattr(params, "validate"):
            params.validate()
    except (TypeError, ValueError) as exc:
        raise DynamicsError(f"{where}: {exc}") from exc
    return params


def record_from_params(model: str, bus: int, unit_id: str, params) -> dict:
    """JSON-safe dynamics record; inverse of params_from_record."""
    body = {}
    for f in dc_fields(params):
        value = getattr(params, f.name)
        if f.name in _PAIR_FIELDS:
            value = [list(pair) for pair in value]
        body[f.name] = value
    return {"model": model, "bus": bus, "unit_id": str(unit_id), "params": body}


@dataclass
class DeviceSet:
    """All dynamic devices of a case, ready for initialization."""

    machines: list[SynchronousMachine] = field(default_factory=list)
    units: list[RenewableUnit] = field(default_factory=list)
    plants: list[PlantController] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.machines or self.units or self.plants)

    def dynamic_gen_keys(self) -> set[GenKey]:
        keys = {m.key for m in self.machines}
        keys.update(u.key for u in self.units)
        return keys


def assemble_devices(case: PowerFlowCase) -> DeviceSet:
    """Build machines, renewable units, and plant controllers from the
    case's dynamics records, cross-checked against its generators."""
    gens = {g.key: g for g in case.generators}
    by_unit: dict[GenKey, dict[str, object]] = {}
    plant_records: list[tuple[GenKey, PlantParams]] = []

    for k, record in enumerate(case.dynamics):
        where = f"dynamics[{k}]"
        for req in ("model", "bus", "unit_id"):
            if req not in record:
                raise DynamicsError(f"{where}: missing key {req!r}")
        extra = set(record) - {"model", "bus", "unit_id", "params"}
        if extra:
            raise DynamicsError(f"{where}: unknown key {sorted(extra)[0]!r}")
        model = record["model"]
        key = (int(record["bus"]), str(record["unit_id"]))
        params = params_from_record(record, where)
        if model in PLANT_MODELS:
            plant_records.append((key, params))
            continue
        slot = by_unit.setdefault(key, {})
        if model in slot:
            raise DynamicsError(
                f"{where}: duplicate {model} for generator {key[0]}.{key[1]}"
            )
        slot[model] = params

    devices = DeviceSet()
    units_by_key: dict[GenKey, RenewableUnit] = {}
    for key, slot in by_unit.items():
        bus, unit_id = key
        label = f"generator {bus}.{unit_id}"
        gen = gens.get(key)
        if gen is None:
            raise DynamicsError(f"dynamics reference unknown {label}")
        if not gen.on:
            raise DynamicsError(f"dynamics attached to out-of-service {label}")
        if "classical" in slot:
            if len(slot) > 1:
                other = sorted(m for m in slot if m != "classical")[0]
                raise DynamicsError(f"{label}: classical machine cannot combine with {other}")
            devices.machines.append(
                SynchronousMachine(bus, unit_id, gen.mbase, case.sbase_mva, slot["classical"])
            )
            continue
        if "regc_a" not in slot or "reec_a" not in slot:
            missing = [m for m in ("regc_a", "reec_a") if m not in slot]
            raise DynamicsError(f"{label}: renewable unit missing {missing[0]}")
        models = UnitModels(
            regc=slot["regc_a"],
            reec=slot["reec_a"],
            wtgt=slot.get("wtgt_a"),
            wtga=slot.get("wtga_a"),
            wtgp=slot.get("wtgp_a"),
            wtgq=slot.get("wtgq_a"),
        )
        try:
            unit = RenewableUnit(bus, unit_id, gen.mbase, case.sbase_mva, models)
        except ValueError as exc:
            raise DynamicsError(f"{label}: {exc}") from exc
        devices.units.append(unit)
        units_by_key[key] = unit

    claimed: dict[GenKey, GenKey] = {}
    for key, params in plant_records:
        bus, unit_id = key
        label = f"plant controller {bus}.{unit_id}"
        refs = list(params.controlled_units)
        if params.variant == "B" and len(refs) < 2:
            raise DynamicsError(
                f"{label}: variant B requires more than one controlled unit"
            )
        if params.variant == "A" and not refs:
            refs = [key]
        members = []
        for ref in refs:
            member = units_by_key.get(tuple(ref))
            if member is None:
                raise DynamicsError(
                    f"{label}: controlled unit {ref[0]}.{ref[1]} is not a renewable unit"
                )
            if member.key in claimed:
                raise DynamicsError(
                    f"{label}: unit {ref[0]}.{ref[1]} already controlled by plant "
                    f"{claimed[member.key][0]}.{claimed[member.key][1]}"
                )
            claimed[member.key] = key
            members.append(member)
        try:
            devices.plants.append(
                PlantController(bus, unit_id, params, members, case.sbase_mva)
            )
        except ValueError as exc:
            raise DynamicsError(f"{label}: {exc}") from exc

    return devices


def dynamics_manifest(case: PowerFlowCase) -> dict[str, int]:
    """Record counts by model name (assignment reporting)."""
    counts: dict[str, int] = {}
    for record in case.dynamics:
        model = record.get("model", "?")
        counts[model] = counts.get(model, 0) + 1
    return dict(sorted(counts.items()))
