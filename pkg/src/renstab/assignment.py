"""Statistical assignment of renewable dynamic models.

Given a power-flow case, decide for every renewable generator a WTG type
(wind only), a module combination, a control option, parameter templates,
and headroom status, then emit the dynamics records (including classical
machines for the conventional fleet) and verify the result initializes at
the solved operating point.

Every decision draws from its own keyed stream: the uniform variate is a
hash of (seed, generator or plant identity, purpose).  Draws are therefore
independent of each other, independent of iteration order, and exactly
reproducible for a fixed seed — re-running any single operation yields the
same sub-assignment the full build used.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from renstab.devices import DeviceInitError, GenKey
from renstab.dynamics import (
    MODEL_PARAMS,
    assemble_devices,
    params_from_record,
)
from renstab.network import (
    Generator,
    PowerFlowCase,
    case_from_dict,
    case_to_dict,
)
from renstab.powerflow import solve_powerflow

WTG_TYPES = ("Type3", "Type4")
RESOURCE_TYPES = ("Type3", "Type4", "PV")

#: Unit-level modules by resource type, in record-emission order.
UNIT_MODULES = {
    "Type3": ("regc_a", "reec_a", "wtgt_a", "wtga_a", "wtgp_a", "wtgq_a"),
    "Type4": ("regc_a", "reec_a", "wtgt_a"),
    "PV": ("regc_a", "reec_a"),
}

#: Control-option flag keys routed to the electrical-control record.
_REEC_FLAGS = frozenset({"pf_flag", "v_flag", "q_flag", "p_flag", "pq_flag"})
#: Control-option flag keys routed to the plant-controller record.
_PLANT_FLAGS = frozenset({"ref_flag", "freq_flag", "ddn", "dup"})

#: Classical-machine parameters attached to the conventional fleet.
CLASSICAL_BY_FUEL = {
    "Coal": {"h": 4.0, "d": 2.0, "xdp": 0.25},
    "Gas": {"h": 3.5, "d": 2.0, "xdp": 0.30},
    "Nuclear": {"h": 5.0, "d": 2.0, "xdp": 0.25},
    "Hydro": {"h": 3.0, "d": 2.0, "xdp": 0.30},
}

#: Floor used when a zero-output unit needs a positive power ceiling, MW.
PMAX_FLOOR_MW = 1.0


class AssignmentError(ValueError):
    """Assignment inputs are inconsistent or the result fails to initialize."""


# ---------------------------------------------------------------------------
# Keyed uniform draws
# ---------------------------------------------------------------------------

def _uniform(seed: int, *tokens) -> float:
    """Uniform variate in [0, 1) keyed by (seed, tokens).

    Length-prefixed hashing keeps distinct token tuples distinct even when
    unit ids contain separator-like characters.
    """
    h = hashlib.blake2b(digest_size=8)
    for t in (seed, *tokens):
        b = str(t).encode()
        h.update(len(b).to_bytes(4, "big"))
        h.update(b)
    return int.from_bytes(h.digest(), "big") / 2.0**64


def _pick(weights: Sequence[float], u: float) -> int:
    """Index drawn from relative weights at uniform variate u."""
    total = sum(weights)
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u * total < acc:
            return i
    return len(weights) - 1


# ---------------------------------------------------------------------------
# Template library
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParameterTemplate:
    """One parameter record for a module, with a draw weight and a label."""

    module_name: str
    params: Mapping[str, object]
    weight: float = 1.0
    tag: str = ""

    def validate(self) -> None:
        if self.weight <= 0:
            raise AssignmentError(
                f"template {self.tag or self.module_name!r}: weight must be "
                f"positive, got {self.weight}"
            )
        where = f"library {self.module_name} template {self.tag or '?'}"
        params_from_record({"model": self.module_name, "params": dict(self.params)}, where)


@dataclass(frozen=True)
class ControlOption:
    """One row of the control-option menu (reactive or real side)."""

    kind: str                       # "reactive" or "real"
    name: str
    weight: float
    flags: Mapping[str, object]

    def validate(self) -> None:
        if self.kind not in ("reactive", "real"):
            raise AssignmentError(
                f"control option {self.name!r}: kind must be 'reactive' or "
                f"'real', got {self.kind!r}"
            )
        if self.weight <= 0:
            raise AssignmentError(
                f"control option {self.name!r}: weight must be positive"
            )
        bad = set(self.flags) - (_REEC_FLAGS | _PLANT_FLAGS)
        if bad:
            raise AssignmentError(
                f"control option {self.name!r}: unknown flag {sorted(bad)[0]!r}"
            )


@dataclass
class TemplateLibrary:
    """Per-module template lists plus the option distributions."""

    modules: dict[str, tuple[ParameterTemplate, ...]] = field(default_factory=dict)
    control_options: tuple[ControlOption, ...] = ()
    theta_limits: tuple[tuple[float, float, float], ...] = ()  # (weight, min, max)
    headroom_fraction: float = 0.15
    headroom_depth: float = 0.15

    def validate(self) -> None:
        for name, templates in self.modules.items():
            if name not in MODEL_PARAMS:
                raise AssignmentError(f"library: unknown module {name!r}")
            for t in templates:
                t.validate()
        for opt in self.control_options:
            opt.validate()
        for kind in ("reactive", "real"):
            opts = self.options(kind)
            if opts:
                total = sum(o.weight for o in opts)
                if abs(total - 1.0) > 1e-9:
                    raise AssignmentError(
                        f"{kind} control-option weights sum to {total}, expected 1"
                    )
        if self.theta_limits:
            total = sum(w for w, _, _ in self.theta_limits)
            if abs(total - 1.0) > 1e-9:
                raise AssignmentError(
                    f"theta-limit weights sum to {total}, expected 1"
                )
        for w, lo, hi in self.theta_limits:
            if w <= 0 or hi <= lo:
                raise AssignmentError(f"bad theta-limit entry ({w}, {lo}, {hi})")
        if not 0.0 <= self.headroom_fraction <= 1.0:
            raise AssignmentError(
                f"headroom_fraction must lie in [0, 1], got {self.headroom_fraction}"
            )
        if not 0.0 <= self.headroom_depth < 1.0:
            raise AssignmentError(
                f"headroom_depth must lie in [0, 1), got {self.headroom_depth}"
            )

    def options(self, kind: str) -> list[ControlOption]:
        return [o for o in self.control_options if o.kind == kind]

    def templates_for(self, module: str) -> tuple[ParameterTemplate, ...]:
        templates = self.modules.get(module)
        if not templates:
            raise AssignmentError(f"library has no templates for module {module!r}")
        return templates


def library_from_dict(doc: dict) -> TemplateLibrary:
    if not isinstance(doc, dict):
        raise AssignmentError("template library must be a JSON object")
    known = set(MODEL_PARAMS) | {
        "control_options", "theta_limits", "headroom_fraction", "headroom_depth",
    }
    unknown = set(doc) - known
    if unknown:
        raise AssignmentError(f"library: unknown key {sorted(unknown)[0]!r}")

    modules: dict[str, tuple[ParameterTemplate, ...]] = {}
    for name in MODEL_PARAMS:
        entries = doc.get(name, [])
        templates = []
        for k, raw in enumerate(entries):
            templates.append(ParameterTemplate(
                module_name=name,
                params=dict(raw.get("params", {})),
                weight=float(raw.get("weight", 1.0)),
                tag=str(raw.get("tag", f"{name}-{k}")),
            ))
        if templates:
            modules[name] = tuple(templates)

    options = tuple(
        ControlOption(
            kind=str(raw.get("kind", "")),
            name=str(raw.get("name", f"option-{k}")),
            weight=float(raw.get("weight", 1.0)),
            flags=dict(raw.get("flags", {})),
        )
        for k, raw in enumerate(doc.get("control_options", []))
    )
    theta = tuple(
        (float(raw["weight"]), float(raw["theta_min"]), float(raw["theta_max"]))
        for raw in doc.get("theta_limits", [])
    )
    lib = TemplateLibrary(
        modules=modules,
        control_options=options,
        theta_limits=theta,
        headroom_fraction=float(doc.get("headroom_fraction", 0.15)),
        headroom_depth=float(doc.get("headroom_depth", 0.15)),
    )
    lib.validate()
    return lib


def load_library(path: str | Path) -> TemplateLibrary:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise AssignmentError(f"{path}: not valid JSON ({e})") from None
    return library_from_dict(doc)


def default_library() -> TemplateLibrary:
    """The shipped library: Fixed/Normal drive-train groups (9 + 14
    templates), 7 pitch templates, 8 torque-flag + 1 speed-flag torque
    templates, the three blade-angle-limit pairs, and the control menu."""
    from renstab.cases import data_path

    return load_library(data_path("default_library.json"))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompositionRatio:
    """Wind fleet split between Type 3 and Type 4 machines."""

    p_type3: float = 1.0 / 3.0
    p_type4: float = 2.0 / 3.0

    def validate(self) -> None:
        for name in ("p_type3", "p_type4"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise AssignmentError(f"{name} must lie in [0, 1], got {p}")
        if abs(self.p_type3 + self.p_type4 - 1.0) > 1e-9:
            raise AssignmentError(
                f"type probabilities must sum to 1, got "
                f"{self.p_type3} + {self.p_type4}"
            )


@dataclass
class AssignmentConfig:
    """Seed, composition ratio, library, and optional plant grouping.

    ``plant_grouping`` maps a plant identifier to the member generator
    keys; when None, renewables sharing a bus and fuel form one plant.
    """

    seed: int = 0
    ratio: CompositionRatio = field(default_factory=CompositionRatio)
    library: TemplateLibrary = field(default_factory=default_library)
    plant_grouping: dict[str, tuple[GenKey, ...]] | None = None

    def validate(self) -> None:
        self.ratio.validate()
        self.library.validate()


def default_plant_grouping(
    generators: Iterable[Generator],
) -> dict[str, tuple[GenKey, ...]]:
    """Group in-service renewables into plants by (bus, fuel)."""
    groups: dict[str, list[GenKey]] = {}
    for g in generators:
        if g.on and g.is_renewable:
            groups.setdefault(f"{g.bus}:{g.fuel}", []).append(g.key)
    return {
        pid: tuple(sorted(members))
        for pid, members in sorted(groups.items())
    }


def _resolve_grouping(
    generators: Sequence[Generator], config: AssignmentConfig
) -> dict[str, tuple[GenKey, ...]]:
    """Grouping restricted to the given generators; units not covered by an
    explicit grouping become single-unit plants."""
    keys = {g.key for g in generators}
    if config.plant_grouping is None:
        return default_plant_grouping(generators)
    groups: dict[str, tuple[GenKey, ...]] = {}
    covered: set[GenKey] = set()
    for pid, members in sorted(config.plant_grouping.items()):
        inside = tuple(sorted(tuple(m) for m in members if tuple(m) in keys))
        for m in inside:
            if m in covered:
                raise AssignmentError(
                    f"generator {m[0]}.{m[1]} appears in more than one plant"
                )
            covered.add(m)
        if inside:
            groups[pid] = inside
    for g in sorted(keys - covered):
        groups[f"{g[0]}:{g[1]}"] = (g,)
    return dict(sorted(groups.items()))


# ---------------------------------------------------------------------------
# Assignment operations
# ---------------------------------------------------------------------------

def assign_wtg_types(
    wind_generators: Sequence[Generator], config: AssignmentConfig
) -> dict[GenKey, str]:
    """Independent Type3/Type4 draw per wind generator."""
    config.ratio.validate()
    out: dict[GenKey, str] = {}
    for g in sorted(wind_generators, key=lambda g: g.key):
        if g.fuel != "Wind":
            raise AssignmentError(
                f"generator {g.bus}.{g.unit_id}: fuel {g.fuel!r} is not Wind"
            )
        u = _uniform(config.seed, g.bus, g.unit_id, "wtg-type")
        out[g.key] = "Type3" if u < config.ratio.p_type3 else "Type4"
    return out


def select_module_set(res_type: str, plant_size: int) -> list[str]:
    """Module names for one unit of the given resource type, plant
    controller last (the multi-unit variant when the plant has more than
    one member)."""
    if res_type not in RESOURCE_TYPES:
        raise AssignmentError(f"unknown resource type {res_type!r}")
    if plant_size < 1:
        raise AssignmentError(f"plant size must be at least 1, got {plant_size}")
    plant = "repc_b" if plant_size > 1 else "repc_a"
    return [*UNIT_MODULES[res_type], plant]


@dataclass(frozen=True)
class ControlChoice:
    """Per-plant control decision shared by every member unit."""

    reactive: ControlOption
    real: ControlOption

    @property
    def flags(self) -> dict[str, object]:
        return {**self.reactive.flags, **self.real.flags}


def assign_control_options(
    generators: Sequence[Generator], config: AssignmentConfig
) -> dict[GenKey, ControlChoice]:
    """One reactive-mode and one real-mode draw per plant; all members of
    a plant share the choice."""
    grouping = _resolve_grouping(generators, config)
    choices: dict[GenKey, ControlChoice] = {}
    for pid, members in grouping.items():
        drawn: dict[str, ControlOption] = {}
        for kind in ("reactive", "real"):
            opts = config.library.options(kind)
            if not opts:
                raise AssignmentError(f"library has no {kind} control options")
            u = _uniform(config.seed, pid, "control", kind)
            drawn[kind] = opts[_pick([o.weight for o in opts], u)]
        choice = ControlChoice(reactive=drawn["reactive"], real=drawn["real"])
        for key in members:
            choices[key] = choice
    return choices


def assign_parameter_templates(
    generators: Sequence[Generator],
    config: AssignmentConfig,
    types: Mapping[GenKey, str] | None = None,
) -> dict[GenKey, dict[str, ParameterTemplate]]:
    """Weighted template draw per module per unit.

    ``types`` maps wind generators to Type3/Type4 (solar is always PV);
    omitted, wind types are re-drawn from the same seed, so the result
    matches a separate assign_wtg_types call.  The plant-controller
    template is drawn once per plant and attached to every member.  Blade
    angle limits for Type 3 units are drawn from the library's limit
    distribution and merged into the pitch template.
    """
    if types is None:
        types = assign_wtg_types(
            [g for g in generators if g.fuel == "Wind"], config
        )
    grouping = _resolve_grouping(generators, config)
    plant_of = {key: pid for pid, members in grouping.items() for key in members}
    plant_size = {pid: len(members) for pid, members in grouping.items()}

    out: dict[GenKey, dict[str, ParameterTemplate]] = {}
    plant_template: dict[str, ParameterTemplate] = {}
    for g in sorted(generators, key=lambda g: g.key):
        if not g.is_renewable:
            raise AssignmentError(
                f"generator {g.bus}.{g.unit_id}: fuel {g.fuel!r} is not renewable"
            )
        res_type = "PV" if g.fuel == "Solar" else types[g.key]
        pid = plant_of[g.key]
        modules = select_module_set(res_type, plant_size[pid])
        chosen: dict[str, ParameterTemplate] = {}
        for module in modules:
            templates = config.library.templates_for(module)
            if module in ("repc_a", "repc_b"):
                if pid not in plant_template:
                    u = _uniform(config.seed, pid, "template", module)
                    plant_template[pid] = templates[
                        _pick([t.weight for t in templates], u)
                    ]
                chosen[module] = plant_template[pid]
                continue
            u = _uniform(config.seed, g.bus, g.unit_id, "template", module)
            template = templates[_pick([t.weight for t in templates], u)]
            if module == "wtgp_a" and config.library.theta_limits:
                u = _uniform(config.seed, g.bus, g.unit_id, "theta-limits")
                weights = [w for w, _, _ in config.library.theta_limits]
                _, lo, hi = config.library.theta_limits[_pick(weights, u)]
                template = replace(
                    template,
                    params={**template.params, "theta_min": lo, "theta_max": hi},
                )
            chosen[module] = template
        out[g.key] = chosen
    return out


@dataclass
class HeadroomAssignment:
    """Sub-optimal (curtailed) unit set and the resulting power ceilings."""

    marked: frozenset[GenKey]
    pmax_mw: dict[GenKey, float]
    depth: float


def assign_headroom(
    generators: Sequence[Generator], config: AssignmentConfig
) -> HeadroomAssignment:
    """Mark each unit sub-optimal with probability headroom_fraction and
    lift the marked units' ceiling to P/(1 - depth)."""
    lib = config.library
    marked: set[GenKey] = set()
    pmax: dict[GenKey, float] = {}
    for g in sorted(generators, key=lambda g: g.key):
        u = _uniform(config.seed, g.bus, g.unit_id, "headroom")
        is_marked = u < lib.headroom_fraction
        if is_marked:
            marked.add(g.key)
        if g.p_mw <= 0.0:
            warnings.warn(
                f"generator {g.bus}.{g.unit_id}: p_mw = {g.p_mw}, power "
                f"ceiling floored at {PMAX_FLOOR_MW} MW",
                stacklevel=2,
            )
            pmax[g.key] = PMAX_FLOOR_MW
        elif is_marked:
            pmax[g.key] = g.p_mw / (1.0 - lib.headroom_depth)
        else:
            pmax[g.key] = g.p_mw
    return HeadroomAssignment(frozenset(marked), pmax, lib.headroom_depth)


# ---------------------------------------------------------------------------
# Case building
# ---------------------------------------------------------------------------

def _curtail_theta0(p_pu: float, depth: float, ka: float, theta_max: float) -> float:
    """Initial blade angle giving a curtailed Type 3 unit the mechanical
    margin to reach its lifted ceiling (10% spare), capped below the
    upper blade limit."""
    margin = p_pu * depth / (1.0 - depth)
    theta0 = 2.0 * math.sqrt(1.1 * margin / ka)
    cap = 0.9 * theta_max
    if theta0 > cap:
        warnings.warn(
            f"curtailment blade angle {theta0:.1f} deg capped at {cap:.1f} deg; "
            "mechanical headroom will not cover the full power ceiling",
            stacklevel=2,
        )
        return cap
    return theta0


def _record(model: str, g: Generator, params: dict) -> dict:
    return {"model": model, "bus": g.bus, "unit_id": g.unit_id, "params": params}


def build_dynamic_case(
    case: PowerFlowCase, config: AssignmentConfig
) -> PowerFlowCase:
    """Assigned copy of the case: renewable units get their drawn module
    records, plants their controller, every conventional in-service unit a
    classical machine.  Any existing dynamics records are replaced; raises
    when the power flow fails or any device refuses its operating point.
    """
    config.validate()
    out = case_from_dict(case_to_dict(case))
    out.dynamics = []

    solution = solve_powerflow(out)
    if not solution.converged:
        raise AssignmentError(
            "power flow did not converge; assignment needs a solvable case"
        )

    renewables = [g for g in out.generators if g.on and g.is_renewable]
    wind = [g for g in renewables if g.fuel == "Wind"]
    types = assign_wtg_types(wind, config)
    grouping = _resolve_grouping(renewables, config)
    controls = assign_control_options(renewables, config)
    templates = assign_parameter_templates(renewables, config, types)
    headroom = assign_headroom(renewables, config)

    for g in sorted(renewables, key=lambda g: g.key):
        key = g.key
        flags = controls[key].flags
        pmax_mw = headroom.pmax_mw[key]
        g.p_max = max(g.p_max, pmax_mw)
        chosen = templates[key]
        for module, template in chosen.items():
            if module in ("repc_a", "repc_b"):
                continue
            params = dict(template.params)
            if module == "reec_a":
                params.update(
                    {k: v for k, v in flags.items() if k in _REEC_FLAGS}
                )
                params["pmax"] = pmax_mw / g.mbase
                params["pmin"] = 0.0
            if module == "wtga_a" and key in headroom.marked:
                pitch = chosen.get("wtgp_a")
                theta_max = (
                    float(pitch.params["theta_max"]) if pitch is not None else 27.0
                )
                params["theta0"] = _curtail_theta0(
                    g.p_mw / g.mbase,
                    headroom.depth,
                    float(params.get("ka", 0.007)),
                    theta_max,
                )
            out.dynamics.append(_record(module, g, params))

    gens = {g.key: g for g in out.generators}
    for pid, members in grouping.items():
        lead = gens[members[0]]
        flags = controls[members[0]].flags
        model = "repc_b" if len(members) > 1 else "repc_a"
        params = dict(templates[members[0]][model].params)
        params.update({k: v for k, v in flags.items() if k in _PLANT_FLAGS})
        plant_base = sum(gens[m].mbase for m in members)
        params["pmax"] = sum(headroom.pmax_mw[m] for m in members) / plant_base
        params["pmin"] = 0.0
        if model == "repc_b":
            params["controlled_units"] = [[b, u] for b, u in members]
        out.dynamics.append(_record(model, lead, params))

    for g in sorted(out.generators, key=lambda g: g.key):
        if g.on and not g.is_renewable:
            out.dynamics.append(
                _record("classical", g, dict(CLASSICAL_BY_FUEL[g.fuel]))
            )

    _verify_initialization(out, solution)
    return out


def _verify_initialization(case: PowerFlowCase, solution) -> None:
    """Initialize every device at the solved operating point; initialization
    errors carry the unit name and the binding limit."""
    try:
        devices = assemble_devices(case)
        for dev in (*devices.machines, *devices.units):
            v0 = solution.voltage(dev.bus)
            p0 = solution.p_gen[dev.key] / dev.mbase
            q0 = solution.q_gen[dev.key] / dev.mbase
            dev.init_equilibrium(v0, p0, q0)
        for plant in devices.plants:
            member_pq = {
                u.key: (
                    solution.p_gen[u.key] / u.mbase,
                    solution.q_gen[u.key] / u.mbase,
                )
                for u in plant.members
            }
            plant.init_equilibrium(solution.voltage(plant.bus), member_pq)
    except (DeviceInitError, ValueError) as exc:
        raise AssignmentError(f"assignment failed to initialize: {exc}") from exc
