"""Distributed demand-signal control.

Every router supervises its own storage and raises a demand line to its
upstream neighbour when the voltage drops below threshold. Decisions are
local: a controller sees only its own storage voltage, the demand lines wired
to it, and whether its own ports are busy.

The two-system network is split into three independently managed parts:

* alpha: m1 feeds l1 and tx, l1 first when both ask.
* beta: tx feeds rx over the wireless link while tx is above its floor.
* gamma: l2 asks rx first and falls back to m2 after a timeout.

Two constraints apply throughout: tx and rx never emit below their output
floor, and no router inputs and outputs a packet at the same time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .packet import Address

DEFAULT_THRESHOLDS = {"l1": 10.0, "tx": 9.0, "rx": 7.0, "l2": 5.0}
DEFAULT_SUPPLIES = {"m1": 15.0, "m2": 7.0}
DEFAULT_FLOORS = {"tx": 9.0, "rx": 7.0}
ROLES = ("m1", "l1", "tx", "rx", "m2", "l2")


@dataclass
class ControlConfig:
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    supply_voltages: dict = field(default_factory=lambda: dict(DEFAULT_SUPPLIES))
    output_floor: dict = field(default_factory=lambda: dict(DEFAULT_FLOORS))
    gamma_timeout: float = 0.020
    hysteresis: float = 0.1
    # probability per control tick that each demand line is forced high;
    # only used by randomized constraint-checking scenarios
    random_demand_probability: float = 0.0

    def __post_init__(self) -> None:
        for name, v in self.thresholds.items():
            if v <= 0:
                raise ValueError(f"threshold for {name} must be positive")
        order = [self.thresholds.get(k) for k in ("l1", "tx", "rx", "l2")]
        if None not in order and not order[0] > order[1] > order[2] > order[3]:
            raise ValueError("thresholds must satisfy V_l1 > V_tx > V_rx > V_l2")
        if self.gamma_timeout <= 0:
            raise ValueError("gamma_timeout must be positive")
        if self.hysteresis < 0:
            raise ValueError("hysteresis must be non-negative")
        if not 0 <= self.random_demand_probability <= 1:
            raise ValueError("random_demand_probability must be in [0, 1]")


@dataclass
class DemandLine:
    """A wire from a supervising router to the router expected to supply it.

    Asserts when the supervised voltage falls below ``threshold`` and clears
    once it recovers to ``threshold + hysteresis``.
    """

    source: str
    target: str
    threshold: float
    hysteresis: float = 0.1
    asserted: bool = False
    since: Optional[float] = None

    def update(self, voltage: float, t: float) -> bool:
        if voltage < self.threshold:
            if not self.asserted:
                self.asserted = True
                self.since = t
        elif voltage >= self.threshold + self.hysteresis:
            self.asserted = False
            self.since = None
        return self.asserted

    @property
    def name(self) -> str:
        return f"{self.source}->{self.target}"


def controller_m1(demand_l1: bool, demand_tx: bool) -> Optional[str]:
    """Part alpha: which neighbour m1 serves next."""
    if demand_l1:
        return "l1"
    if demand_tx:
        return "tx"
    return None


def controller_tx(demand_rx: bool, v_tx: float, output_floor: float) -> bool:
    """Part beta: send a wireless packet to rx?"""
    return bool(demand_rx) and v_tx >= output_floor


@dataclass
class GammaSupervisor:
    """Part gamma, run by l2.

    The demand goes to rx first. Time spent demanding while rx delivers no
    payload current is accumulated; once it reaches ``timeout`` the demand is
    also raised to m2. The rx demand stays up so rx can resume when able.
    Both clear when V_l2 recovers past threshold plus hysteresis.
    """

    threshold: float = 5.0
    timeout: float = 0.020
    hysteresis: float = 0.1
    demand_rx: bool = False
    demand_m2: bool = False
    waited: float = 0.0
    since: Optional[float] = None
    since_m2: Optional[float] = None

    def update(self, v_l2: float, rx_delivering: bool, elapsed: float, t: float) -> tuple[bool, bool]:
        if v_l2 < self.threshold:
            if not self.demand_rx:
                self.demand_rx = True
                self.since = t
                self.waited = 0.0
        elif v_l2 >= self.threshold + self.hysteresis:
            self.demand_rx = self.demand_m2 = False
            self.waited = 0.0
            self.since = self.since_m2 = None
        if self.demand_rx and not self.demand_m2:
            if not rx_delivering:
                self.waited += elapsed
            if self.waited >= self.timeout - 1e-12:
                self.demand_m2 = True
                self.since_m2 = t
        return self.demand_rx, self.demand_m2


def controller_l2(supervisor: GammaSupervisor, v_l2: float, rx_delivering: bool,
                  elapsed: float, t: float) -> tuple[bool, bool]:
    return supervisor.update(v_l2, rx_delivering, elapsed, t)


class IoGrant(enum.Enum):
    NONE = "none"
    INPUT = "input"
    OUTPUT = "output"


def enforce_no_simultaneous_io(input_in_flight: bool, output_in_flight: bool,
                               pending_input_since: Optional[float],
                               pending_output_since: Optional[float]) -> IoGrant:
    """Decide which new packet a router may take part in this tick.

    A packet already in flight always finishes first. Between two new
    requests the older one wins; a tie goes to the input.
    """
    if input_in_flight or output_in_flight:
        return IoGrant.NONE
    if pending_input_since is None and pending_output_since is None:
        return IoGrant.NONE
    if pending_output_since is None:
        return IoGrant.INPUT
    if pending_input_since is None:
        return IoGrant.OUTPUT
    return IoGrant.INPUT if pending_input_since <= pending_output_since else IoGrant.OUTPUT


@dataclass(frozen=True)
class Issue:
    """A request to start a packet from ``source`` to ``dest`` this tick."""

    source: str
    dest: str


class NetworkView(Protocol):
    def voltage(self, router: str) -> float: ...
    def sending(self, router: str) -> bool: ...
    def receiving(self, router: str) -> bool: ...
    def delivering(self, source: str, dest: str) -> bool: ...


class SharingController:
    """The alpha/beta/gamma protocol for the two-system network.

    ``roles`` maps the protocol role names to router ids in the topology.
    """

    def __init__(self, cfg: ControlConfig, roles: Optional[dict] = None, seed: int = 0,
                 tick: float = 100e-6):
        self.cfg = cfg
        self.roles = {r: r for r in ROLES}
        self.roles.update(roles or {})
        self.tick = tick
        self.rng = np.random.default_rng(seed)
        th, hy = cfg.thresholds, cfg.hysteresis
        r = self.roles
        self.lines = {
            "l1": DemandLine(r["l1"], r["m1"], th["l1"], hy),
            "tx": DemandLine(r["tx"], r["m1"], th["tx"], hy),
            "rx": DemandLine(r["rx"], r["tx"], th["rx"], hy),
        }
        self.gamma = GammaSupervisor(th["l2"], cfg.gamma_timeout, hy)
        self.state: dict[str, bool] = {}

    def demand_names(self) -> list[str]:
        r = self.roles
        return [f"{r['l1']}->{r['m1']}", f"{r['tx']}->{r['m1']}", f"{r['rx']}->{r['tx']}",
                f"{r['l2']}->{r['rx']}", f"{r['l2']}->{r['m2']}"]

    def output_floors(self) -> dict:
        return {self.roles[k]: v for k, v in self.cfg.output_floor.items() if k in self.roles}

    def _force(self) -> bool:
        p = self.cfg.random_demand_probability
        return p > 0 and self.rng.random() < p

    def decide(self, t: float, net: NetworkView) -> list[Issue]:
        r = self.roles
        floor = self.cfg.output_floor
        v = {role: net.voltage(rid) for role, rid in r.items()}

        d_l1 = self.lines["l1"].update(v["l1"], t)
        d_tx = self.lines["tx"].update(v["tx"], t)
        d_rx = self.lines["rx"].update(v["rx"], t)
        d_l2rx, d_l2m2 = self.gamma.update(v["l2"], net.delivering(r["rx"], r["l2"]), self.tick, t)
        since = {"l1": self.lines["l1"].since, "tx": self.lines["tx"].since,
                 "rx": self.lines["rx"].since, "l2rx": self.gamma.since, "l2m2": self.gamma.since_m2}
        forced = {k: self._force() for k in ("l1", "tx", "rx", "l2rx", "l2m2")}
        d_l1, d_tx, d_rx = d_l1 or forced["l1"], d_tx or forced["tx"], d_rx or forced["rx"]
        d_l2rx, d_l2m2 = d_l2rx or forced["l2rx"], d_l2m2 or forced["l2m2"]
        for k in forced:
            if forced[k] and since[k] is None:
                since[k] = t

        sending = {role: net.sending(rid) for role, rid in r.items()}
        receiving = {role: net.receiving(rid) for role, rid in r.items()}
        # a router that is busy outputting holds its demand line low
        d_tx = d_tx and not sending["tx"] and not receiving["tx"]
        d_rx = d_rx and not sending["rx"] and not receiving["rx"]
        self.state = {self.demand_names()[i]: x for i, x in enumerate((d_l1, d_tx, d_rx, d_l2rx, d_l2m2))}

        issues: dict[str, Issue] = {}
        if not sending["m1"]:
            target = controller_m1(d_l1 and not receiving["l1"], d_tx)
            if target is not None:
                issues["m1"] = Issue(r["m1"], r[target])
        if not sending["tx"] and not receiving["tx"] and controller_tx(d_rx, v["tx"], floor["tx"]):
            issues["tx"] = Issue(r["tx"], r["rx"])
        if not sending["rx"] and not receiving["rx"] and d_l2rx and v["rx"] >= floor["rx"]:
            issues["rx"] = Issue(r["rx"], r["l2"])
        if not sending["m2"] and d_l2m2:
            issues["m2"] = Issue(r["m2"], r["l2"])

        # rx: packet in from tx vs packet out to l2
        if "tx" in issues and "rx" in issues:
            grant = enforce_no_simultaneous_io(False, False, since["rx"], since["l2rx"])
            issues.pop("rx" if grant is IoGrant.INPUT else "tx")
        # tx: packet in from m1 vs packet out to rx
        m1_to_tx = "m1" in issues and issues["m1"].dest == r["tx"]
        if m1_to_tx and "tx" in issues:
            grant = enforce_no_simultaneous_io(False, False, since["tx"], since["rx"])
            issues.pop("m1" if grant is IoGrant.OUTPUT else "tx")
        return list(issues.values())


class AlternatingController:
    """Scripted transmitter sending back-to-back packets to a rotating list of addresses."""

    def __init__(self, transmitter: str, sequence: Sequence[tuple[str, Address]], frames: int):
        if not sequence:
            raise ValueError("sequence must not be empty")
        self.transmitter = transmitter
        self.sequence = list(sequence)
        self.frames = frames
        self.issued = 0
        self.state: dict[str, bool] = {}

    def demand_names(self) -> list[str]:
        return []

    def output_floors(self) -> dict:
        return {}

    def decide(self, t: float, net: NetworkView) -> list[Issue]:
        if self.issued >= self.frames or net.sending(self.transmitter):
            return []
        dest, _ = self.sequence[self.issued % len(self.sequence)]
        self.issued += 1
        return [Issue(self.transmitter, dest)]



class IdleController:
    """Issues nothing; used for passive scenarios."""

    state: dict = {}

    def demand_names(self) -> list[str]:
        return []

    def output_floors(self) -> dict:
        return {}

    def decide(self, t: float, net: NetworkView) -> list[Issue]:
        return []
