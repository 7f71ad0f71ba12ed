"""Static network model: buses, branches, generators, loads, shunts.

Provides the JSON exchange format, structural validation, and sparse
admittance-matrix assembly that everything downstream (power flow, dynamic
simulation) builds on.  Quantities are SI at the boundary (MW, MVAr, kV) and
per-unit on ``sbase_mva`` internally.
"""

from __future__ import annotations

import json
from dataclasses import MISSING, dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

BUS_KINDS = ("Slack", "PV", "PQ")
BRANCH_STATUSES = ("Closed", "Open")
GEN_STATUSES = ("On", "Off")
FUELS = ("Coal", "Gas", "Nuclear", "Hydro", "Wind", "Solar")
RENEWABLE_FUELS = frozenset({"Wind", "Solar"})


class CaseFormatError(ValueError):
    """Malformed case document: unknown keys, bad enums, missing fields."""


@dataclass
class Bus:
    id: int
    kind: str = "PQ"
    nominal_kv: float = 230.0
    v_mag: float = 1.0
    v_angle: float = 0.0  # radians
    area: int = 1


@dataclass
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charging: float = 0.0
    tap: float = 1.0
    status: str = "Closed"

    @property
    def closed(self) -> bool:
        return self.status == "Closed"


@dataclass
class Generator:
    bus: int
    unit_id: str
    fuel: str
    p_mw: float
    q_mvar: float = 0.0
    p_max: float = 0.0
    p_min: float = 0.0
    q_max: float = 9999.0
    q_min: float = -9999.0
    mbase: float = 100.0
    status: str = "On"
    v_setpoint: float = 1.0

    @property
    def on(self) -> bool:
        return self.status == "On"

    @property
    def key(self) -> tuple[int, str]:
        return (self.bus, self.unit_id)

    @property
    def is_renewable(self) -> bool:
        return self.fuel in RENEWABLE_FUELS


@dataclass
class Load:
    bus: int
    p_mw: float
    q_mvar: float = 0.0


@dataclass
class Shunt:
    """Fixed shunt; g_mw / b_mvar are the injections at 1.0 pu voltage."""

    bus: int
    g_mw: float = 0.0
    b_mvar: float = 0.0


@dataclass
class PowerFlowCase:
    sbase_mva: float = 100.0
    buses: list[Bus] = field(default_factory=list)
    branches: list[Branch] = field(default_factory=list)
    generators: list[Generator] = field(default_factory=list)
    loads: list[Load] = field(default_factory=list)
    shunts: list[Shunt] = field(default_factory=list)
    # Dynamic-model records ({"model": ..., "bus": ..., ...}); parsed by the
    # blocks layer, carried verbatim here so a case round-trips unchanged.
    dynamics: list[dict] = field(default_factory=list)

    def bus_index(self) -> dict[int, int]:
        """Map bus id -> position in ``buses`` (and in every matrix/vector)."""
        return {b.id: i for i, b in enumerate(self.buses)}

    def bus_by_id(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(f"no bus with id {bus_id}")

    def generator(self, bus: int, unit_id: str) -> Generator:
        for g in self.generators:
            if g.bus == bus and g.unit_id == unit_id:
                return g
        raise KeyError(f"no generator {bus}:{unit_id}")

    @property
    def n_bus(self) -> int:
        return len(self.buses)


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {"ok": self.ok, "errors": self.errors, "warnings": self.warnings}


# ---------------------------------------------------------------------------
# Per-unit helpers
# ---------------------------------------------------------------------------

def mw_to_pu(mw: float, sbase_mva: float) -> float:
    return mw / sbase_mva


def pu_to_mw(pu: float, sbase_mva: float) -> float:
    return pu * sbase_mva


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _island_labels(case: PowerFlowCase) -> np.ndarray:
    """Connected-component label per bus, using closed branches only."""
    n = case.n_bus
    idx = case.bus_index()
    rows, cols = [], []
    for br in case.branches:
        if br.closed and br.from_bus in idx and br.to_bus in idx:
            rows.append(idx[br.from_bus])
            cols.append(idx[br.to_bus])
    adj = sp.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, n)
    )
    _, labels = connected_components(adj, directed=False)
    return labels


def validate_case(case: PowerFlowCase) -> ValidationReport:
    """Check structural invariants; returns findings, never raises."""
    rep = ValidationReport()
    err = rep.errors.append
    warn = rep.warnings.append

    if case.sbase_mva <= 0:
        err(f"sbase_mva must be positive, got {case.sbase_mva}")

    seen_ids: set[int] = set()
    for b in case.buses:
        if not isinstance(b.id, int) or b.id <= 0:
            err(f"bus id must be a positive integer, got {b.id!r}")
        if b.id in seen_ids:
            err(f"duplicate bus id {b.id}")
        seen_ids.add(b.id)
        if b.kind not in BUS_KINDS:
            err(f"bus {b.id}: unknown kind {b.kind!r}")
        if b.v_mag <= 0:
            err(f"bus {b.id}: v_mag must be positive, got {b.v_mag}")
        if b.nominal_kv <= 0:
            err(f"bus {b.id}: nominal_kv must be positive, got {b.nominal_kv}")

    idx = case.bus_index()
    for k, br in enumerate(case.branches):
        tag = f"branch {br.from_bus}-{br.to_bus} (#{k})"
        if br.from_bus not in idx:
            err(f"{tag}: from_bus {br.from_bus} does not exist")
        if br.to_bus not in idx:
            err(f"{tag}: to_bus {br.to_bus} does not exist")
        if br.from_bus == br.to_bus:
            err(f"{tag}: from_bus equals to_bus")
        if br.closed and br.x == 0.0:
            err(f"{tag}: zero-reactance closed branch")
        if br.status not in BRANCH_STATUSES:
            err(f"{tag}: unknown status {br.status!r}")
        if br.tap <= 0:
            err(f"{tag}: tap must be positive, got {br.tap}")

    seen_gen: set[tuple[int, str]] = set()
    for g in case.generators:
        tag = f"generator {g.bus}:{g.unit_id}"
        if g.bus not in idx:
            err(f"{tag}: attached bus does not exist")
        if g.key in seen_gen:
            err(f"duplicate generator key {g.bus}:{g.unit_id}")
        seen_gen.add(g.key)
        if g.fuel not in FUELS:
            err(f"{tag}: unknown fuel {g.fuel!r}")
        if g.status not in GEN_STATUSES:
            err(f"{tag}: unknown status {g.status!r}")
        if g.mbase <= 0:
            err(f"{tag}: mbase must be positive, got {g.mbase}")
        if g.on and not (g.p_min <= g.p_mw <= g.p_max):
            err(
                f"{tag}: p_mw={g.p_mw} outside [p_min, p_max]="
                f"[{g.p_min}, {g.p_max}] while On"
            )

    for ld in case.loads:
        if ld.bus not in idx:
            err(f"load at bus {ld.bus}: attached bus does not exist")
    for sh in case.shunts:
        if sh.bus not in idx:
            err(f"shunt at bus {sh.bus}: attached bus does not exist")

    # Island-level checks: exactly one Slack per island, generation presence.
    if case.buses and not rep.errors:
        labels = _island_labels(case)
        by_island: dict[int, list[Bus]] = {}
        for b, lab in zip(case.buses, labels):
            by_island.setdefault(int(lab), []).append(b)
        gen_buses = {g.bus for g in case.generators if g.on}
        for lab, members in sorted(by_island.items()):
            slacks = [b.id for b in members if b.kind == "Slack"]
            names = sorted(b.id for b in members)
            if len(slacks) == 0:
                err(f"island containing bus {names[0]} has no Slack bus")
            elif len(slacks) > 1:
                err(
                    f"multiple slack buses in one island: {slacks}"
                )
            if not any(b.id in gen_buses for b in members):
                warn(f"island containing bus {names[0]} has no in-service generation")

    return rep


# ---------------------------------------------------------------------------
# Admittance assembly
# ---------------------------------------------------------------------------

def branch_stamp(br: Branch) -> tuple[complex, complex, complex, complex]:
    """(Yff, Yft, Ytf, Ytt) for one closed branch, pi model with tap on the
    from side."""
    ys = 1.0 / complex(br.r, br.x)
    ysh = complex(0.0, br.b_charging / 2.0)
    t = br.tap
    yff = (ys + ysh) / (t * t)
    yft = -ys / t
    ytf = -ys / t
    ytt = ys + ysh
    return yff, yft, ytf, ytt


def build_ybus(case: PowerFlowCase) -> sp.csc_matrix:
    """Assemble the n_bus x n_bus complex nodal admittance matrix.

    Includes closed branches (pi model with off-nominal taps) and fixed
    shunts; loads and machine equivalents are not part of this matrix.
    """
    n = case.n_bus
    idx = case.bus_index()
    rows: list[int] = []
    cols: list[int] = []
    vals: list[complex] = []

    for br in case.branches:
        if not br.closed:
            continue
        try:
            f, t = idx[br.from_bus], idx[br.to_bus]
        except KeyError as e:
            raise CaseFormatError(
                f"branch {br.from_bus}-{br.to_bus} references unknown bus {e}"
            ) from None
        yff, yft, ytf, ytt = branch_stamp(br)
        rows += [f, f, t, t]
        cols += [f, t, f, t]
        vals += [yff, yft, ytf, ytt]

    for sh in case.shunts:
        try:
            i = idx[sh.bus]
        except KeyError:
            raise CaseFormatError(f"shunt references unknown bus {sh.bus}") from None
        rows.append(i)
        cols.append(i)
        vals.append(complex(sh.g_mw, sh.b_mvar) / case.sbase_mva)

    y = sp.coo_matrix(
        (np.asarray(vals, dtype=complex), (rows, cols)), shape=(n, n)
    )
    return y.tocsc()


# ---------------------------------------------------------------------------
# JSON exchange
# ---------------------------------------------------------------------------

_RECORD_TYPES = {
    "buses": Bus,
    "branches": Branch,
    "generators": Generator,
    "loads": Load,
    "shunts": Shunt,
}

_TOP_KEYS = ("sbase_mva", "buses", "branches", "generators", "loads", "shunts", "dynamics")


def _record_from_dict(cls, raw: dict, what: str):
    allowed = {f.name for f in dc_fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise CaseFormatError(f"{what}: unknown key {sorted(unknown)[0]!r}")
    for f in dc_fields(cls):
        if (
            f.default is MISSING
            and f.default_factory is MISSING
            and f.name not in raw
        ):
            raise CaseFormatError(f"{what}: missing required key {f.name!r}")
    return cls(**raw)


def case_from_dict(doc: dict) -> PowerFlowCase:
    """Parse a case document; unknown keys anywhere are an error."""
    if not isinstance(doc, dict):
        raise CaseFormatError("case document must be a JSON object")
    unknown = set(doc) - set(_TOP_KEYS)
    if unknown:
        raise CaseFormatError(f"case: unknown key {sorted(unknown)[0]!r}")

    case = PowerFlowCase(sbase_mva=float(doc.get("sbase_mva", 100.0)))
    for key, cls in _RECORD_TYPES.items():
        for k, raw in enumerate(doc.get(key, [])):
            if not isinstance(raw, dict):
                raise CaseFormatError(f"{key}[{k}]: expected an object")
            rec = _record_from_dict(cls, raw, f"{key}[{k}]")
            getattr(case, key).append(rec)

    for k, raw in enumerate(doc.get("dynamics", [])):
        if not isinstance(raw, dict) or "model" not in raw:
            raise CaseFormatError(f"dynamics[{k}]: expected an object with a 'model' key")
        case.dynamics.append(raw)

    return case


def case_to_dict(case: PowerFlowCase) -> dict:
    def rec(obj) -> dict:
        return {f.name: getattr(obj, f.name) for f in dc_fields(obj)}

    doc: dict = {"sbase_mva": case.sbase_mva}
    for key in _RECORD_TYPES:
        doc[key] = [rec(o) for o in getattr(case, key)]
    if case.dynamics:
        doc["dynamics"] = case.dynamics
    return doc


def load_case(path: str | Path) -> PowerFlowCase:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise CaseFormatError(f"{path}: not valid JSON ({e})") from None
    return case_from_dict(doc)


def save_case(case: PowerFlowCase, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(case_to_dict(case), fh, indent=1, sort_keys=False)
        fh.write("\n")
