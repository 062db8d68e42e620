"""Scenario files.

A scenario is a YAML document with a versioned ``format`` header and four
sections: ``topology``, ``control``, ``sim`` and ``outputs``, plus optional
``checks`` run after the simulation. Quantities carry their unit in the key
name (``_V``, ``_ohm``, ``_F``, ``_mm``, ``_s``). The README documents every
field and its default.

Parsing keeps the source line of every field so diagnostics can point at it.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .analog import (CONVERSION_EFFICIENCY, ENVELOPE_RISE_TIME, POWER_COEFFICIENT, WiredLink,
                     WirelessLinkModel)
from .control import AlternatingController, ControlConfig, IdleController, SharingController
from .engine import (DEFAULT_CAPACITANCE, ConfigError, RouterSpec, SimConfig, Topology, WiredEdge,
                     WirelessEdge)
from .packet import Address

FORMAT = "ppdsim-scenario/1"
SECTIONS = {"format", "name", "description", "topology", "control", "sim", "outputs", "checks", "sweep",
            "reference_case"}


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")


class ValidationError(ValueError):
    """A well-formed scenario whose values break a model invariant."""


class UnknownPreset(KeyError):
    pass


# -- YAML with line numbers -------------------------------------------------

def _load_with_lines(text: str, source: str = "<scenario>") -> tuple[Any, dict]:
    lines: dict[tuple, int] = {}
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            if node is None:
                raise ParseError(f"{source} is empty", 1)

            def walk(n, path):
                lines[path] = n.start_mark.line + 1
                if isinstance(n, yaml.MappingNode):
                    out = {}
                    for k, v in n.value:
                        key = loader.construct_object(k, deep=True)
                        if key in out:
                            raise ParseError(f"duplicate key {key!r}", k.start_mark.line + 1, _dotted(path + (key,)))
                        out[key] = walk(v, path + (key,))
                        lines[path + (key,)] = k.start_mark.line + 1
                    return out
                if isinstance(n, yaml.SequenceNode):
                    return [walk(v, path + (i,)) for i, v in enumerate(n.value)]
                return loader.construct_object(n, deep=True)

            data = walk(node, ())
        finally:
            loader.dispose()
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ParseError(exc.problem or str(exc), mark.line + 1 if mark else None) from None
    except yaml.YAMLError as exc:
        raise ParseError(str(exc)) from None
    return data, lines


def _dotted(path: tuple) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


class _Reader:
    """Typed field access with line-aware errors."""

    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, path: tuple, message: str):
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        raise ParseError(message, line, _dotted(path))

    def mapping(self, obj, path, allowed: set, required: set = frozenset()) -> dict:
        if obj is None:
            obj = {}
        if not isinstance(obj, dict):
            self.fail(path, "expected a mapping")
        for k in obj:
            if k not in allowed:
                self.fail(path + (k,), f"unknown field (allowed: {', '.join(sorted(allowed))})")
        for k in required:
            if k not in obj:
                self.fail(path, f"missing required field {k!r}")
        return obj

    def number(self, obj: dict, key: str, path: tuple, default=None, positive=False, nonneg=False):
        if key not in obj:
            if default is None:
                self.fail(path, f"missing required field {key!r}")
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.fail(path + (key,), f"expected a number, got {v!r}")
        if positive and v <= 0:
            self.fail(path + (key,), "must be positive")
        if nonneg and v < 0:
            self.fail(path + (key,), "must be non-negative")
        return float(v)

    def string(self, obj: dict, key: str, path: tuple, default=None) -> str:
        if key not in obj:
            if default is None:
                self.fail(path, f"missing required field {key!r}")
            return default
        v = obj[key]
        if not isinstance(v, str):
            self.fail(path + (key,), f"expected a string, got {v!r}")
        return v


# -- scenario model ---------------------------------------------------------

@dataclass
class Scenario:
    """Parsed scenario: engine configs plus outputs, checks and source data."""

    name: str
    topology: Topology
    control: ControlConfig
    sim: SimConfig
    controller_kind: str = "sharing"
    roles: dict = field(default_factory=dict)
    alternating: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    reference_case: Optional[str] = None
    sweep: Optional[dict] = None
    description: str = ""
    data: dict = field(default_factory=dict)

    def make_controller(self):
        if self.controller_kind == "none":
            return IdleController()
        if self.controller_kind == "alternating":
            a = self.alternating
            seq = [(rid, self.topology.address_of(rid)) for rid in a["sequence"]]
            return AlternatingController(a["transmitter"], seq, a["frames"])
        return SharingController(self.control, self.roles, seed=self.sim.seed, tick=self.sim.bit_width)

    @property
    def window(self) -> float:
        return float(self.outputs.get("window_s", self.sim.duration))


ROUTER_FIELDS = {"id", "kind", "voltage_V", "capacitance_F", "load_ohm", "address"}
WIRED_FIELDS = {"source", "dest", "resistance_ohm", "diode_drop_V", "unidirectional"}
WIRELESS_FIELDS = {"transmitter", "receiver", "gap_mm", "offset_mm", "nominal_drive_V", "power_coefficient",
                   "efficiency", "rise_time_s", "cutoff_mm", "coil_radius_mm", "reference_gap_mm"}
CONTROL_FIELDS = {"mode", "thresholds_V", "supply_V", "output_floor_V", "gamma_timeout_s", "hysteresis_V",
                  "random_demand_probability", "roles", "transmitter", "sequence", "frames"}
SIM_FIELDS = {"dt_s", "duration_s", "seed", "sample_interval_s", "full_rate", "sample_phase"}
OUTPUT_FIELDS = {"trace", "summary", "format", "window_s", "transient_s"}
CHECKS = {"selectivity", "mode_cadence", "near_far", "thresholds", "constraints", "fallback", "gap_table"}


def parse_text(text: str, source: str = "<scenario>") -> Scenario:
    data, lines = _load_with_lines(text, source)
    return from_dict(data, lines)


def parse_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc.strerror}") from None
    return parse_text(text, str(p))


def from_dict(data: dict, lines: Optional[dict] = None) -> Scenario:
    rd = _Reader(lines or {})
    rd.mapping(data, (), SECTIONS, {"format", "topology"})
    if data["format"] != FORMAT:
        rd.fail(("format",), f"unsupported format {data['format']!r}; expected {FORMAT!r}")
    name = rd.string(data, "name", (), default="scenario")

    ctl_raw = rd.mapping(data.get("control"), ("control",), CONTROL_FIELDS)
    supply = _number_map(rd, ctl_raw, "supply_V", ("control",))

    topo_raw = rd.mapping(data["topology"], ("topology",), {"routers", "wired", "wireless"}, {"routers"})
    routers = []
    rlist = topo_raw["routers"]
    if not isinstance(rlist, list):
        rd.fail(("topology", "routers"), "expected a list")
    for i, r in enumerate(rlist):
        path = ("topology", "routers", i)
        rd.mapping(r, path, ROUTER_FIELDS, {"id"})
        rid = rd.string(r, "id", path)
        kind = rd.string(r, "kind", path, default="storage")
        if kind == "source" and "voltage_V" not in r:
            if rid not in supply:
                rd.fail(path, f"source router {rid!r} needs voltage_V or control.supply_V.{rid}")
            voltage = supply[rid]
        else:
            voltage = rd.number(r, "voltage_V", path, default=0.0, nonneg=True)
        addr = None
        if "address" in r:
            try:
                addr = Address.parse(r["address"] if isinstance(r["address"], str) else int(r["address"]))
            except (ValueError, TypeError) as exc:
                rd.fail(path + ("address",), str(exc))
        load = rd.number(r, "load_ohm", path, positive=True) if "load_ohm" in r else None
        cap = rd.number(r, "capacitance_F", path, default=DEFAULT_CAPACITANCE)
        try:
            routers.append(RouterSpec(rid, kind, voltage, cap, load, addr))
        except ConfigError as exc:
            raise ValidationError(str(exc)) from None

    wired = []
    for i, e in enumerate(topo_raw.get("wired") or []):
        path = ("topology", "wired", i)
        rd.mapping(e, path, WIRED_FIELDS, {"source", "dest"})
        try:
            link = WiredLink(rd.number(e, "resistance_ohm", path, default=10.0),
                             rd.number(e, "diode_drop_V", path, default=0.6),
                             bool(e.get("unidirectional", True)))
        except ValueError as exc:
            raise ValidationError(f"wired link {e['source']}->{e['dest']}: {exc}") from None
        wired.append(WiredEdge(rd.string(e, "source", path), rd.string(e, "dest", path), link))

    wireless = []
    for i, e in enumerate(topo_raw.get("wireless") or []):
        path = ("topology", "wireless", i)
        rd.mapping(e, path, WIRELESS_FIELDS, {"transmitter", "receiver"})
        # divide on the way in and multiply on the way out: x / 1000 * 1000 / 1000
        # returns x / 1000 exactly, so files survive repeated round trips
        mm = 1000.0
        try:
            model = WirelessLinkModel(
                axial_gap=rd.number(e, "gap_mm", path, default=50.0) / mm,
                lateral_offset=rd.number(e, "offset_mm", path, default=0.0) / mm,
                envelope_time_constant=rd.number(e, "rise_time_s", path, default=ENVELOPE_RISE_TIME) / math.log(10.0),
                power_coefficient=rd.number(e, "power_coefficient", path, default=POWER_COEFFICIENT),
                coil_radius=rd.number(e, "coil_radius_mm", path, default=50.0) / mm,
                reference_gap=rd.number(e, "reference_gap_mm", path, default=50.0) / mm,
                cutoff_gap=rd.number(e, "cutoff_mm", path, default=250.0) / mm,
                conversion_efficiency=rd.number(e, "efficiency", path, default=CONVERSION_EFFICIENCY))
            wireless.append(WirelessEdge(rd.string(e, "transmitter", path), rd.string(e, "receiver", path), model,
                                         rd.number(e, "nominal_drive_V", path, default=9.0)))
        except (ValueError, ConfigError) as exc:
            raise ValidationError(f"wireless link {e['transmitter']}->{e['receiver']}: {exc}") from None

    topo = Topology(tuple(routers), tuple(wired), tuple(wireless))
    try:
        topo.validate()
    except ConfigError as exc:
        raise ValidationError(str(exc)) from None

    mode = rd.string(ctl_raw, "mode", ("control",), default="sharing")
    if mode not in ("sharing", "alternating", "none"):
        rd.fail(("control", "mode"), "mode must be 'sharing', 'alternating' or 'none'")
    kw = {}
    for key, attr in (("thresholds_V", "thresholds"), ("output_floor_V", "output_floor")):
        if key in ctl_raw:
            kw[attr] = _number_map(rd, ctl_raw, key, ("control",))
    if supply:
        kw["supply_voltages"] = supply
    if "gamma_timeout_s" in ctl_raw:
        kw["gamma_timeout"] = rd.number(ctl_raw, "gamma_timeout_s", ("control",))
    if "hysteresis_V" in ctl_raw:
        kw["hysteresis"] = rd.number(ctl_raw, "hysteresis_V", ("control",))
    if "random_demand_probability" in ctl_raw:
        kw["random_demand_probability"] = rd.number(ctl_raw, "random_demand_probability", ("control",))
    try:
        control = ControlConfig(**kw)
    except ValueError as exc:
        raise ValidationError(f"control: {exc}") from None

    roles = {}
    alternating = {}
    if mode == "sharing":
        roles = dict(ctl_raw.get("roles") or {})
        for role in ("m1", "l1", "tx", "rx", "m2", "l2"):
            rid = roles.get(role, role)
            if rid not in topo.ids:
                raise ValidationError(f"control role {role} refers to undefined router id {rid!r}")
    elif mode == "alternating":
        seq = ctl_raw.get("sequence")
        if not isinstance(seq, list) or not seq:
            rd.fail(("control", "sequence"), "expected a non-empty list of receiver ids")
        tx = rd.string(ctl_raw, "transmitter", ("control",))
        for rid in [tx] + seq:
            if rid not in topo.ids:
                raise ValidationError(f"control refers to undefined router id {rid!r}")
        frames = ctl_raw.get("frames", 1)
        if isinstance(frames, bool) or not isinstance(frames, int) or frames < 0:
            rd.fail(("control", "frames"), "frames must be a non-negative integer")
        alternating = {"transmitter": tx, "sequence": list(seq), "frames": frames}
    else:
        alternating = {"transmitter": None, "sequence": [], "frames": 0}

    sim_raw = rd.mapping(data.get("sim"), ("sim",), SIM_FIELDS)
    full = bool(sim_raw.get("full_rate", False))
    seed = sim_raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        rd.fail(("sim", "seed"), "seed must be an integer")
    try:
        sim = SimConfig(dt=rd.number(sim_raw, "dt_s", ("sim",), default=1e-6),
                        duration=rd.number(sim_raw, "duration_s", ("sim",), default=0.25),
                        seed=seed,
                        sample_interval=None if full else rd.number(sim_raw, "sample_interval_s", ("sim",),
                                                                      default=10e-6),
                        sample_phase=rd.number(sim_raw, "sample_phase", ("sim",), default=0.5))
    except ConfigError as exc:
        raise ValidationError(f"sim: {exc}") from None

    outputs = dict(rd.mapping(data.get("outputs"), ("outputs",), OUTPUT_FIELDS))
    checks = dict(rd.mapping(data.get("checks"), ("checks",), CHECKS))
    ref = data.get("reference_case")
    if ref is not None and str(ref) not in ("i", "ii", "iii"):
        rd.fail(("reference_case",), "reference_case must be one of i, ii, iii")
    sweep = data.get("sweep")
    if sweep is not None:
        rd.mapping(sweep, ("sweep",), {"gap_mm", "reference_cases", "link"}, {"gap_mm"})

    return Scenario(name=name, topology=topo, control=control, sim=sim, controller_kind=mode, roles=roles,
                    alternating=alternating, outputs=outputs, checks=checks,
                    reference_case=None if ref is None else str(ref), sweep=sweep,
                    description=str(data.get("description", "")), data=copy.deepcopy(data))


def _number_map(rd: _Reader, obj: dict, key: str, path: tuple) -> dict:
    raw = obj.get(key)
    if raw is None:
        return {}
    rd.mapping(raw, path + (key,), set(raw) if isinstance(raw, dict) else set())
    return {str(k): rd.number(raw, k, path + (key,)) for k in raw}


# -- serialization ----------------------------------------------------------

def to_dict(sc: Scenario) -> dict:
    """Canonical document for ``sc``; parsing it back yields equal configs."""
    routers = []
    for r in sc.topology.routers:
        d = {"id": r.id, "kind": r.kind, "voltage_V": r.voltage}
        if r.kind != "source":
            d["capacitance_F"] = r.capacitance
        if r.load is not None:
            d["load_ohm"] = r.load
        if r.address is not None:
            d["address"] = str(r.address)
        routers.append(d)
    wired = [{"source": e.source, "dest": e.dest, "resistance_ohm": e.link.series_resistance,
              "diode_drop_V": e.link.diode_drop, "unidirectional": e.link.unidirectional}
             for e in sc.topology.wired]
    wireless = []
    for e in sc.topology.wireless:
        m = e.model
        wireless.append({"transmitter": e.transmitter, "receiver": e.receiver,
                         "gap_mm": m.axial_gap * 1e3, "offset_mm": m.lateral_offset * 1e3,
                         "nominal_drive_V": e.nominal_drive, "power_coefficient": m.power_coefficient,
                         "efficiency": m.conversion_efficiency,
                         "rise_time_s": m.envelope_time_constant * math.log(10.0),
                         "cutoff_mm": m.cutoff_gap * 1e3, "coil_radius_mm": m.coil_radius * 1e3,
                         "reference_gap_mm": m.reference_gap * 1e3})
    c = sc.control
    control: dict = {"mode": sc.controller_kind, "thresholds_V": dict(c.thresholds),
                     "supply_V": dict(c.supply_voltages), "output_floor_V": dict(c.output_floor),
                     "gamma_timeout_s": c.gamma_timeout, "hysteresis_V": c.hysteresis,
                     "random_demand_probability": c.random_demand_probability}
    if sc.roles:
        control["roles"] = dict(sc.roles)
    if sc.controller_kind == "alternating":
        control.update(transmitter=sc.alternating["transmitter"], sequence=list(sc.alternating["sequence"]),
                       frames=sc.alternating["frames"])
    s = sc.sim
    sim = {"dt_s": s.dt, "duration_s": s.duration, "seed": s.seed, "sample_phase": s.sample_phase}
    if s.sample_interval is None:
        sim["full_rate"] = True
    else:
        sim["sample_interval_s"] = s.sample_interval
    doc = {"format": FORMAT, "name": sc.name}
    if sc.description:
        doc["description"] = sc.description
    doc.update(topology={"routers": routers, "wired": wired, "wireless": wireless}, control=control, sim=sim)
    if sc.outputs:
        doc["outputs"] = dict(sc.outputs)
    if sc.checks:
        doc["checks"] = copy.deepcopy(sc.checks)
    if sc.reference_case:
        doc["reference_case"] = sc.reference_case
    if sc.sweep:
        doc["sweep"] = copy.deepcopy(sc.sweep)
    return doc


def serialize(sc: Scenario) -> str:
    return yaml.safe_dump(to_dict(sc), sort_keys=False)


def configs_equal(a: Scenario, b: Scenario) -> bool:
    return (a.topology == b.topology and a.control == b.control and a.sim == b.sim
            and a.controller_kind == b.controller_kind and a.alternating == b.alternating
            and a.roles == b.roles)


# -- presets ----------------------------------------------------------------

def preset_names() -> list[str]:
    root = resources.files("ppdsim") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> Scenario:
    root = resources.files("ppdsim") / "presets"
    f = root / f"{name}.yaml"
    if not f.is_file():
        raise UnknownPreset(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_text(f.read_text(encoding="utf-8"), f"preset {name}")


def with_overrides(sc: Scenario, dt: Optional[float] = None, duration: Optional[float] = None,
                   seed: Optional[int] = None, full_rate: Optional[bool] = None,
                   gap_mm: Optional[float] = None, window: Optional[float] = None) -> Scenario:
    """Copy of ``sc`` with command-line style overrides applied and revalidated."""
    data = copy.deepcopy(to_dict(sc))
    sim = data["sim"]
    if dt is not None:
        sim["dt_s"] = dt
    if duration is not None:
        sim["duration_s"] = duration
    if seed is not None:
        sim["seed"] = seed
    if full_rate:
        sim.pop("sample_interval_s", None)
        sim["full_rate"] = True
    if gap_mm is not None:
        for e in data["topology"]["wireless"]:
            e["gap_mm"] = gap_mm
    if window is not None:
        data.setdefault("outputs", {})["window_s"] = window
    out = from_dict(data)
    if duration is not None and "window_s" in out.outputs and out.outputs["window_s"] > duration:
        out.outputs["window_s"] = duration
    return out
