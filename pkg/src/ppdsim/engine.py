"""Deterministic fixed-step simulation of a power packet network.

The world advances in control ticks of one bit period. At each tick the
logic layer runs in a fixed order:

1. packets that have completed their 100 bits are retired and their ports freed;
2. the controller reads voltages and demand lines and may start new packets;
3. wired destinations read completed headers and set the payload switches;
4. wireless receivers consume the demodulator sample of the bit that just ended;
5. wireless transmitters set their drive for the coming bit.

Then the analog network is integrated over the bit with all switches held,
and per-bit logic states and energies are recorded. ``World.step`` performs
the same work one ``dt`` at a time and yields bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .analog import DemodulatorConfig, WiredLink, WirelessLinkModel
from .control import Issue
from .kernels import get_integrator
from .packet import BIT_WIDTH, FRAME_BITS, HEADER_BITS, Address, encode_frame
from .router import (Frame, PacketEvent, RouterState, RxMode, payload_gate, wired_input_step,
                     wireless_rx_step, wireless_tx_step)


class ConfigError(ValueError):
    """A topology or simulation setting violates its invariants."""


ROUTER_KINDS = ("source", "storage")
DEFAULT_CAPACITANCE = 1e-3
DEFAULT_LOAD = 47.0


@dataclass(frozen=True)
class RouterSpec:
    id: str
    kind: str = "storage"
    # fixed terminal voltage for sources, initial voltage for storage routers
    voltage: float = 0.0
    capacitance: float = DEFAULT_CAPACITANCE
    load: Optional[float] = None
    address: Optional[Address] = None

    def __post_init__(self) -> None:
        if not self.id or not isinstance(self.id, str):
            raise ConfigError("router id must be a non-empty string")
        if self.kind not in ROUTER_KINDS:
            raise ConfigError(f"router {self.id}: kind must be one of {ROUTER_KINDS}")
        if self.voltage < 0:
            raise ConfigError(f"router {self.id}: voltage must be non-negative")
        if self.capacitance <= 0:
            raise ConfigError(f"router {self.id}: capacitance must be positive")
        if self.load is not None and self.load <= 0:
            raise ConfigError(f"router {self.id}: load resistance must be positive")


@dataclass(frozen=True)
class WiredEdge:
    source: str
    dest: str
    link: WiredLink = WiredLink()


@dataclass(frozen=True)
class WirelessEdge:
    transmitter: str
    receiver: str
    model: WirelessLinkModel = WirelessLinkModel()
    # drive level the receiver's demodulator reference is set for
    nominal_drive: float = 9.0

    def __post_init__(self) -> None:
        if self.nominal_drive <= 0:
            raise ConfigError("nominal_drive must be positive")


@dataclass(frozen=True)
class Topology:
    routers: tuple[RouterSpec, ...] = ()
    wired: tuple[WiredEdge, ...] = ()
    wireless: tuple[WirelessEdge, ...] = ()

    def router(self, rid: str) -> RouterSpec:
        for r in self.routers:
            if r.id == rid:
                return r
        raise ConfigError(f"undefined router id {rid!r}")

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.routers]

    def address_of(self, rid: str) -> Address:
        """Explicit address, or the router's 1-based position."""
        r = self.router(rid)
        if r.address is not None:
            return r.address
        return Address(self.ids.index(rid) + 1)

    def validate(self) -> "Topology":
        ids = self.ids
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate router ids")
        for e in self.wired:
            for rid in (e.source, e.dest):
                if rid not in ids:
                    raise ConfigError(f"wired link references undefined router id {rid!r}")
            if e.source == e.dest:
                raise ConfigError(f"wired link {e.source}->{e.dest} is a self loop")
            if self.router(e.dest).kind == "source":
                raise ConfigError(f"wired link into source router {e.dest!r}")
        txs = {e.transmitter for e in self.wireless}
        rxs = {e.receiver for e in self.wireless}
        for e in self.wireless:
            for rid in (e.transmitter, e.receiver):
                if rid not in ids:
                    raise ConfigError(f"wireless link references undefined router id {rid!r}")
        both = txs & rxs
        if both:
            raise ConfigError(f"router {sorted(both)[0]!r} is both a wireless transmitter and receiver")
        if len(rxs) != len(self.wireless):
            raise ConfigError("a wireless receiver may be paired with one transmitter only")
        for rid in rxs:
            if self.router(rid).kind == "source":
                raise ConfigError(f"wireless receiver {rid!r} cannot be a source")
        addresses = [self.address_of(r) for r in ids]
        if len(set(addresses)) != len(addresses):
            raise ConfigError("router addresses must be unique")
        return self


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-6
    duration: float = 0.25
    seed: int = 0
    bit_width: float = BIT_WIDTH
    # spacing of recorded analog samples; None records every step
    sample_interval: Optional[float] = 10e-6
    # where in each bit the demodulator output is latched
    sample_phase: float = 0.5

    def __post_init__(self) -> None:
        if not self.dt > 0 or self.dt > 10e-6 * (1 + 1e-9):
            raise ConfigError("dt must be in (0, 10 us]")
        if self.duration < 0:
            raise ConfigError("duration must be non-negative")
        if self.bit_width <= 0:
            raise ConfigError("bit_width must be positive")
        n = self.bit_width / self.dt
        if abs(n - round(n)) > 1e-6 * n:
            raise ConfigError("bit_width must be an integer multiple of dt")
        if self.sample_interval is not None:
            k = self.sample_interval / self.dt
            if k < 1 - 1e-9 or abs(k - round(k)) > 1e-6 * k or round(n) % round(k):
                raise ConfigError("sample_interval must be a multiple of dt dividing the bit width")
        if not 0 <= self.sample_phase < 1:
            raise ConfigError("sample_phase must be in [0, 1)")

    @property
    def substeps(self) -> int:
        return int(round(self.bit_width / self.dt))

    @property
    def decimation(self) -> int:
        if self.sample_interval is None:
            return 1
        return int(round(self.sample_interval / self.dt))

    @property
    def n_bits(self) -> int:
        return int(math.floor(self.duration / self.bit_width + 1e-9))


@dataclass
class Trace:
    """Recorded run.

    ``series`` holds uniformly sampled columns aligned with ``time``;
    ``bit_series`` holds per-bit logic states and energies aligned with
    ``bit_time`` (bit start times).
    """

    time: np.ndarray
    series: dict
    bit_time: np.ndarray
    bit_series: dict
    events: list = field(default_factory=list)
    demand_events: list = field(default_factory=list)
    routers: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return len(self.bit_time) * self.meta.get("bit_width", BIT_WIDTH)

    def columns(self) -> list[str]:
        return ["time_s"] + list(self.series)

    def __len__(self) -> int:
        return len(self.time)


class World:
    """Mutable simulation state; build with :func:`build_world`."""

    def __init__(self, topology: Topology, controller, sim: SimConfig, backend: Optional[str] = None,
                 demod: DemodulatorConfig = DemodulatorConfig()):
        self.topo = topology.validate()
        self.ctl = controller
        self.sim = sim
        self.demod = demod
        self.backend, self._integrate = get_integrator(backend)
        ids = self.topo.ids
        self.ids = ids
        self.idx = {rid: i for i, rid in enumerate(ids)}
        n = len(ids)
        specs = self.topo.routers
        self.V = np.array([r.voltage for r in specs], dtype=np.float64)
        self.fixed = np.array([r.kind == "source" for r in specs], dtype=np.bool_)
        self.C = np.array([1.0 if r.kind == "source" else r.capacitance for r in specs], dtype=np.float64)
        self.g_load = np.array([0.0 if r.load is None else 1.0 / r.load for r in specs], dtype=np.float64)

        w = self.topo.wired
        self.e_src = np.array([self.idx[e.source] for e in w], dtype=np.int64)
        self.e_dst = np.array([self.idx[e.dest] for e in w], dtype=np.int64)
        self.e_r = np.array([e.link.series_resistance for e in w], dtype=np.float64)
        self.e_vd = np.array([e.link.diode_drop for e in w], dtype=np.float64)
        self.e_uni = np.array([e.link.unidirectional for e in w], dtype=np.bool_)
        self.e_on = np.zeros(len(w), dtype=np.bool_)
        self.edge_of = {(e.source, e.dest): k for k, e in enumerate(w)}

        wl = self.topo.wireless
        self.tx_ids = list(dict.fromkeys(e.transmitter for e in wl))
        self.w_of = {t: k for k, t in enumerate(self.tx_ids)}
        nw = len(self.tx_ids)
        self.w_node = np.array([self.idx[t] for t in self.tx_ids], dtype=np.int64)
        first = {t: next(e for e in wl if e.transmitter == t) for t in self.tx_ids}
        self.w_eff = np.array([first[t].model.conversion_efficiency for t in self.tx_ids], dtype=np.float64)
        # an unloaded link still costs the conversion loss of driving the coil
        self.w_idle = np.array([first[t].model.power_coefficient * (1.0 / first[t].model.conversion_efficiency - 1.0)
                                for t in self.tx_ids], dtype=np.float64)
        self.env = np.zeros(nw)
        self.env_target = np.zeros(nw)
        self.alpha = np.array([-math.expm1(-sim.dt / first[t].model.envelope_time_constant)
                               for t in self.tx_ids], dtype=np.float64)
        self.r_link = np.array([self.w_of[e.transmitter] for e in wl], dtype=np.int64)
        self.r_node = np.array([self.idx[e.receiver] for e in wl], dtype=np.int64)
        self.r_kp = np.array([e.model.power_gain for e in wl], dtype=np.float64)
        self.r_on = np.zeros(len(wl), dtype=np.bool_)
        self.rx_of = {e.receiver: k for k, e in enumerate(wl)}
        self.rx_states = {e.receiver: RouterState(e.receiver, self.topo.address_of(e.receiver),
                                                  rx_mode=RxMode.HEADER_LISTEN) for e in wl}
        for st in self.rx_states.values():
            st.listen()
        self.demod_env = np.zeros(nw)
        self.demod_vdrive = np.zeros(nw)
        self.have_sample = False

        self.acc_src = np.zeros(len(w))
        self.acc_dst = np.zeros(len(w))
        self.acc_load = np.zeros(n)
        self.acc_draw = np.zeros(nw)
        self.acc_rx = np.zeros(len(wl))

        self.floors = dict(getattr(controller, "output_floors", lambda: {})())
        self.frames: list[Frame] = []
        self.next_frame_id = 0
        self.tick = 0
        self.substep = 0
        self.events: list[PacketEvent] = []
        self.demand_events: list[dict] = []
        self._demand_prev: dict = {}
        self._alloc()

    # -- recording buffers -------------------------------------------------
    def _alloc(self) -> None:
        sim = self.sim
        nb = sim.n_bits
        self.rows_per_bit = sim.substeps // sim.decimation
        rows = nb * self.rows_per_bit
        n, m, nw, nr = len(self.ids), len(self.e_src), len(self.tx_ids), len(self.r_node)
        self.tr_V = np.zeros((rows, n))
        self.tr_I = np.zeros((rows, m))
        self.tr_Ir = np.zeros((rows, nr))
        self.tr_Id = np.zeros((rows, nw))
        self.tr_env = np.zeros((rows, nw))
        self.bit_V0 = np.zeros((nb, n))
        self.bit_S_in = np.zeros((nb, n), dtype=np.int8)
        self.bit_S_out = np.zeros((nb, n), dtype=np.int8)
        self.bit_out = np.zeros((nb, n), dtype=np.int8)
        self.bit_mode = np.zeros((nb, nr), dtype=np.int8)
        self.bit_E_in = np.zeros((nb, n))
        self.bit_E_out = np.zeros((nb, n))
        self.bit_E_load = np.zeros((nb, n))
        self.bit_E_edge_src = np.zeros((nb, m))
        self.bit_E_edge_dst = np.zeros((nb, m))
        self.bit_E_rx = np.zeros((nb, nr))
        self.bit_E_draw = np.zeros((nb, nw))
        names = list(getattr(self.ctl, "demand_names", lambda: [])())
        self.demand_names = names
        self.bit_demand = np.zeros((nb, len(names)), dtype=np.int8)

    # -- views used by controllers ----------------------------------------
    def voltage(self, rid: str) -> float:
        return float(self.V[self.idx[rid]])

    def sending(self, rid: str) -> bool:
        return any(f.source == rid for f in self.frames)

    def receiving(self, rid: str) -> bool:
        return any(f.dest == rid for f in self.frames)

    def delivering(self, source: str, dest: str) -> bool:
        return any(f.source == source and f.dest == dest and not f.blocked for f in self.frames)

    @property
    def time(self) -> float:
        return (self.tick * self.sim.substeps + self.substep) * self.sim.dt

    @property
    def done(self) -> bool:
        return self.tick >= self.sim.n_bits

    # -- logic ------------------------------------------------------------
    def _retire(self, t: float) -> None:
        self.frames = [f for f in self.frames if f.active(self.tick)]
        # a wireless receiver that stopped sending goes back to listening
        for rid, st in self.rx_states.items():
            if st.rx_mode is RxMode.IDLE and not self.sending(rid):
                st.listen()

    def _issue(self, issue: Issue, t: float) -> None:
        src, dst = issue.source, issue.dest
        if self.sending(src):
            return
        medium = "wired" if (src, dst) in self.edge_of else None
        if medium is None:
            if src in self.w_of and any(e.transmitter == src and e.receiver == dst for e in self.topo.wireless):
                medium = "wireless"
            else:
                raise ConfigError(f"no link from {src!r} to {dst!r}")
        addr = self.topo.address_of(dst)
        link = self.edge_of.get((src, dst), self.w_of.get(src, -1))
        f = Frame(self.next_frame_id, encode_frame(addr, self.sim.bit_width), src, dst, medium, link,
                  self.tick, self.voltage(src))
        self.next_frame_id += 1
        self.frames.append(f)
        self.events.append(PacketEvent(t, src, addr, "sent", src, f.frame_id))
        if src in self.rx_states:
            self.rx_states[src].go_idle()

    def _record_demands(self, t: float) -> None:
        state = getattr(self.ctl, "state", {})
        for j, name in enumerate(self.demand_names):
            v = bool(state.get(name, False))
            if v != self._demand_prev.get(name, False):
                self.demand_events.append({"time": t, "line": name, "asserted": v})
                self._demand_prev[name] = v
            if self.tick < len(self.bit_demand):
                self.bit_demand[self.tick, j] = v

    def _begin_bit(self) -> None:
        t = self.tick * self.sim.bit_width
        self._retire(t)
        for issue in self.ctl.decide(t, self):
            self._issue(issue, t)
        self._record_demands(t)

        # wired frames: header is logic only; payload switches follow the header decision
        self.e_on[:] = False
        for f in self.frames:
            if f.medium != "wired":
                continue
            k = f.bit_index(self.tick)
            if k == HEADER_BITS + 1:
                port = RouterState(f.dest, self.topo.address_of(f.dest))
                f.accepted = wired_input_step(port, f.frame.bits[:HEADER_BITS])
                self.events.append(PacketEvent(t, f.source, f.address,
                                               "accepted" if f.accepted else "rejected", f.dest, f.frame_id))
            if k > HEADER_BITS and f.accepted:
                on = payload_gate(k, self.voltage(f.source), self.floors.get(f.source))
                self.e_on[f.link_index] = on
                f.blocked = not on

        # wireless receivers consume the sample latched during the previous bit
        by_tx = {f.source: f for f in self.frames if f.medium == "wireless"}
        for e_k, e in enumerate(self.topo.wireless):
            st = self.rx_states[e.receiver]
            sample = None
            ref = 1.0
            if self.have_sample:
                w = self.w_of[e.transmitter]
                gain = e.model.voltage_gain
                sample = float(self.demod_env[w] * self.demod_vdrive[w] * gain)
                if gain > 0:
                    ref = e.nominal_drive * gain
            _, decision = wireless_rx_step(st, sample, ref, self.demod)
            if decision is not None:
                f = by_tx.get(e.transmitter)
                self.events.append(PacketEvent(t, e.transmitter, st.last_address,
                                               "accepted" if decision else "rejected", e.receiver,
                                               f.frame_id if f is not None else -1))
            self.r_on[e_k] = st.S_R

        # wireless transmitters key the drive with the frame bits
        self.env_target[:] = 0.0
        for f in by_tx.values():
            w = self.w_of[f.source]
            k = f.bit_index(self.tick)
            drive = wireless_tx_step(f.bit(self.tick), k, self.voltage(f.source), self.floors.get(f.source))
            self.env_target[w] = 1.0 if drive > 0 else 0.0
            f.blocked = k > HEADER_BITS and drive == 0.0

        if self.tick < self.sim.n_bits:
            self.bit_V0[self.tick] = self.V
            self._record_switches()

    def _record_switches(self) -> None:
        b = self.tick
        for f in self.frames:
            s = self.idx[f.source]
            self.bit_S_out[b, s] = 1
            if f.medium == "wired":
                if self.e_on[f.link_index]:
                    self.bit_out[b, s] = 1
                    self.bit_S_in[b, self.idx[f.dest]] = 1
                elif f.accepted:
                    self.bit_S_in[b, self.idx[f.dest]] = 1
            elif self.env_target[self.w_of[f.source]] > 0:
                self.bit_out[b, s] = 1
        for rid, st in self.rx_states.items():
            k = self.rx_of[rid]
            self.bit_mode[b, k] = int(st.rx_mode)
            if st.S_R:
                self.bit_S_in[b, self.idx[rid]] = 1

    def _integrate_substeps(self, n_sub: int, s0: int) -> None:
        sim = self.sim
        sample_idx = min(sim.substeps - 1, int(sim.sample_phase * sim.substeps))
        if self.tick < sim.n_bits:
            tr = (self.tr_V, self.tr_I, self.tr_Ir, self.tr_Id, self.tr_env, self.tick * self.rows_per_bit)
        else:  # pragma: no cover - step() past the end
            raise RuntimeError("simulation already finished")
        self._integrate(self.V, self.C, self.fixed, self.g_load, self.e_src, self.e_dst, self.e_r, self.e_vd,
                        self.e_uni, self.e_on, self.w_node, self.w_eff, self.w_idle, self.env, self.env_target,
                        self.alpha, self.r_link, self.r_node, self.r_kp, self.r_on,
                        n_sub, s0, sim.dt, sample_idx, sim.decimation,
                        self.acc_src, self.acc_dst, self.acc_load, self.acc_draw, self.acc_rx,
                        self.demod_env, self.demod_vdrive, *tr)

    def _end_bit(self) -> None:
        b = self.tick
        n = len(self.ids)
        E_in = (np.bincount(self.e_dst, weights=self.acc_dst, minlength=n)
                + np.bincount(self.r_node, weights=self.acc_rx, minlength=n))
        E_out = (np.bincount(self.e_src, weights=self.acc_src, minlength=n)
                 + np.bincount(self.w_node, weights=self.acc_draw, minlength=n))
        self.bit_E_in[b] = E_in
        self.bit_E_out[b] = E_out
        self.bit_E_load[b] = self.acc_load
        self.bit_E_edge_src[b] = self.acc_src
        self.bit_E_edge_dst[b] = self.acc_dst
        self.bit_E_rx[b] = self.acc_rx
        self.bit_E_draw[b] = self.acc_draw
        for a in (self.acc_src, self.acc_dst, self.acc_load, self.acc_draw, self.acc_rx):
            a[:] = 0.0
        self.have_sample = True
        self.tick += 1
        self.substep = 0

    # -- public stepping ---------------------------------------------------
    def advance_bit(self) -> None:
        """Run one full control tick (logic, then the whole bit of analog)."""
        self._begin_bit()
        self._integrate_substeps(self.sim.substeps, 0)
        self._end_bit()

    def trace(self) -> Trace:
        return _build_trace(self)


def step(world: World) -> World:
    """Advance ``world`` by a single ``dt``."""
    if world.done:
        raise ConfigError("simulation duration exhausted")
    if world.substep == 0:
        world._begin_bit()
    world._integrate_substeps(1, world.substep)
    world.substep += 1
    if world.substep == world.sim.substeps:
        world._end_bit()
    return world


def build_world(topology: Topology, controller, sim: SimConfig, backend: Optional[str] = None) -> World:
    return World(topology, controller, sim, backend)


def run(topology: Topology, controller, sim: SimConfig, backend: Optional[str] = None) -> Trace:
    world = World(topology, controller, sim, backend)
    while not world.done:
        world.advance_bit()
    return world.trace()


def _build_trace(world: World) -> Trace:
    sim = world.sim
    nb = world.tick
    rpb = world.rows_per_bit
    rows = nb * rpb
    step_t = sim.dt * sim.decimation
    time = (np.arange(rows) + 1) * step_t
    ids = world.ids
    series: dict[str, np.ndarray] = {}
    bits: dict[str, np.ndarray] = {}

    def per_row(a):
        return np.repeat(a[:nb], rpb)

    I_in = np.zeros((rows, len(ids)))
    I_out = np.zeros((rows, len(ids)))
    for k in range(len(world.e_src)):
        I_out[:, world.e_src[k]] += world.tr_I[:rows, k]
        I_in[:, world.e_dst[k]] += world.tr_I[:rows, k]
    for r in range(len(world.r_node)):
        I_in[:, world.r_node[r]] += world.tr_Ir[:rows, r]
    for w in range(len(world.w_node)):
        I_out[:, world.w_node[w]] += world.tr_Id[:rows, w]

    bw = sim.bit_width
    for i, rid in enumerate(ids):
        series[f"{rid}.V"] = world.tr_V[:rows, i].copy()
        series[f"{rid}.I_in"] = I_in[:, i]
        series[f"{rid}.I_out"] = I_out[:, i]
        series[f"{rid}.S_in"] = per_row(world.bit_S_in[:, i])
        series[f"{rid}.S_out"] = per_row(world.bit_S_out[:, i])
        series[f"{rid}.S_{rid}"] = series[f"{rid}.S_out"]
        series[f"{rid}.out"] = per_row(world.bit_out[:, i])
        bits[f"{rid}.V0"] = world.bit_V0[:nb, i].copy()
        bits[f"{rid}.S_in"] = world.bit_S_in[:nb, i].copy()
        bits[f"{rid}.S_out"] = world.bit_S_out[:nb, i].copy()
        bits[f"{rid}.out"] = world.bit_out[:nb, i].copy()
        bits[f"{rid}.E_in"] = world.bit_E_in[:nb, i].copy()
        bits[f"{rid}.E_out"] = world.bit_E_out[:nb, i].copy()
        bits[f"{rid}.E_load"] = world.bit_E_load[:nb, i].copy()
        bits[f"{rid}.P_in"] = bits[f"{rid}.E_in"] / bw
        bits[f"{rid}.P_out"] = bits[f"{rid}.E_out"] / bw
        bits[f"{rid}.P_load"] = bits[f"{rid}.E_load"] / bw
    for e_k, e in enumerate(world.topo.wireless):
        rid = e.receiver
        mode = world.bit_mode[:nb, e_k]
        bits[f"{rid}.mode"] = mode.copy()
        bits[f"{rid}.S_d"] = (mode == int(RxMode.HEADER_LISTEN)).astype(np.int8)
        bits[f"{rid}.S_R"] = (mode == int(RxMode.PAYLOAD_RECEIVE)).astype(np.int8)
        for sig in ("mode", "S_d", "S_R"):
            series[f"{rid}.{sig}"] = per_row(bits[f"{rid}.{sig}"])
        w = world.w_of[e.transmitter]
        series[f"{rid}.env"] = world.tr_env[:rows, w] * world.tr_V[:rows, world.w_node[w]] * e.model.voltage_gain
        bits[f"{rid}.E_wireless"] = world.bit_E_rx[:nb, e_k].copy()
    for w, tid in enumerate(world.tx_ids):
        series[f"{tid}.drive"] = world.tr_env[:rows, w] * world.tr_V[:rows, world.w_node[w]]
    for k, e in enumerate(world.topo.wired):
        bits[f"{e.source}->{e.dest}.E_src"] = world.bit_E_edge_src[:nb, k].copy()
        bits[f"{e.source}->{e.dest}.E_dst"] = world.bit_E_edge_dst[:nb, k].copy()
    for j, name in enumerate(world.demand_names):
        src, dst = name.split("->")
        col = world.bit_demand[:nb, j].copy()
        bits[f"{src}.D_{dst}"] = col
        series[f"{src}.D_{dst}"] = per_row(col)

    return Trace(time=time, series=series, bit_time=np.arange(nb) * bw, bit_series=bits,
                 events=list(world.events), demand_events=list(world.demand_events), routers=list(ids),
                 meta={"dt": sim.dt, "bit_width": bw, "sample_interval": step_t, "seed": sim.seed,
                       "duration": nb * bw, "backend": world.backend,
                       "receivers": [e.receiver for e in world.topo.wireless],
                       "transmitters": list(world.tx_ids)})


@dataclass
class PowerSummary:
    window: float
    rows: dict  # router -> {"in": W, "out": W, "load": W}
    total_output: float
    total_output_routers: tuple

    def __getitem__(self, rid: str) -> dict:
        return self.rows[rid]


def summarize_power(trace: Trace, window: Optional[float] = None,
                    total_of: Sequence[str] = ("rx", "m2")) -> PowerSummary:
    """Average input, output and load power per router over the trailing ``window``."""
    bw = trace.meta.get("bit_width", BIT_WIDTH)
    nb = len(trace.bit_time)
    if window is None:
        window = nb * bw
    if window > nb * bw + 1e-12:
        raise ValueError(f"window {window} s exceeds trace duration {nb * bw} s")
    k = int(round(window / bw))
    rows = {}
    for rid in trace.routers:
        if k == 0:
            rows[rid] = {"in": 0.0, "out": 0.0, "load": 0.0}
            continue
        sl = slice(nb - k, nb)
        rows[rid] = {key: float(trace.bit_series[f"{rid}.E_{name}"][sl].sum() / (k * bw))
                     for key, name in (("in", "in"), ("out", "out"), ("load", "load"))}
    present = tuple(r for r in total_of if r in rows)
    total = sum(rows[r]["out"] for r in present)
    return PowerSummary(window, rows, total, present)


def iter_frames(events: Iterable[PacketEvent], kind: str, router: Optional[str] = None):
    for ev in events:
        if ev.kind == kind and (router is None or ev.router == router):
            yield ev


FRAME_DURATION = FRAME_BITS * BIT_WIDTH
