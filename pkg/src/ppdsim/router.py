"""Router state machines for wired and wireless power packet ports.

All machines advance once per bit period. A wireless receiver starts in
header-listen mode with its coil on the demodulator (S_d). After seven
header bits it either closes the rectifier switch (S_R) for the payload or
opens the coil entirely, then returns to header-listen when its payload
counter reaches 100.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .analog import CapacitorState, DemodulatorConfig, WiredLink, demodulate_bit, wired_transfer_current
from .packet import (FRAME_BITS, HEADER_BITS, SYNC_PATTERN, Address, BitFrame, SyncError,
                     decode_header, end_of_packet)


class RxMode(enum.IntEnum):
    IDLE = 0
    HEADER_LISTEN = 1
    PAYLOAD_RECEIVE = 2
    DETACHED = 3

    @property
    def S_d(self) -> bool:
        return self is RxMode.HEADER_LISTEN

    @property
    def S_R(self) -> bool:
        return self is RxMode.PAYLOAD_RECEIVE


@dataclass
class PacketEvent:
    time: float
    source: str
    destination: Address
    kind: str  # "sent" | "accepted" | "rejected"
    router: str
    frame_id: int = -1

    def as_dict(self) -> dict:
        return {"time": self.time, "source": self.source, "destination": str(self.destination),
                "kind": self.kind, "router": self.router, "frame_id": self.frame_id}


@dataclass
class RouterState:
    router_id: str
    own_address: Optional[Address] = None
    storage: Optional[CapacitorState] = None
    rx_mode: RxMode = RxMode.IDLE
    bit_counter: int = 0
    output_switch_on: bool = False
    input_switch_on: bool = False
    header: list = field(default_factory=list)
    prev_bit: Optional[int] = None
    sync_errors: int = 0
    last_address: Optional[Address] = None

    @property
    def S_d(self) -> bool:
        return self.rx_mode.S_d

    @property
    def S_R(self) -> bool:
        return self.rx_mode.S_R

    def check(self) -> None:
        assert not (self.S_d and self.S_R), f"{self.router_id}: S_d and S_R both on"
        assert not (self.output_switch_on and self.input_switch_on), \
            f"{self.router_id}: input and output switches both closed"
        assert 0 <= self.bit_counter <= FRAME_BITS

    def listen(self) -> None:
        """Reconnect the demodulator and hunt for the next header."""
        self.rx_mode = RxMode.HEADER_LISTEN
        self.bit_counter = 0
        self.header.clear()
        self.prev_bit = None

    def go_idle(self) -> None:
        self.rx_mode = RxMode.IDLE
        self.bit_counter = 0
        self.header.clear()
        self.prev_bit = None

    @property
    def header_in_progress(self) -> bool:
        return self.rx_mode is RxMode.HEADER_LISTEN and bool(self.header)


def wireless_tx_step(bit: int, bit_index: int, storage_voltage: float,
                     output_floor: Optional[float] = None) -> float:
    """Drive voltage for the inverter during one bit of a frame.

    The inverter input is the packet itself, so the carrier is keyed by the
    frame bits. Payload drive is withheld while the storage sits below its
    output floor.
    """
    if not bit:
        return 0.0
    if bit_index > HEADER_BITS and output_floor is not None and storage_voltage < output_floor:
        return 0.0
    return storage_voltage


def wireless_rx_step(state: RouterState, envelope_sample: Optional[float], reference: float,
                     cfg: DemodulatorConfig = DemodulatorConfig()) -> tuple[RxMode, Optional[bool]]:
    """Advance a wireless receiver by one bit period.

    ``envelope_sample`` is the demodulator output sampled during the bit that
    just ended (ignored unless listening). Returns the mode for the coming bit
    and, on the tick where a header completes, whether it was accepted.
    """
    mode = state.rx_mode
    if mode in (RxMode.PAYLOAD_RECEIVE, RxMode.DETACHED):
        state.bit_counter += 1
        if end_of_packet(state.bit_counter):
            state.listen()
        return state.rx_mode, None
    if mode is not RxMode.HEADER_LISTEN or envelope_sample is None:
        return mode, None

    bit = demodulate_bit(envelope_sample, reference, cfg)
    if not state.header:
        # an idle channel reads low, so a frame announces itself with the 0->1 edge
        if bit == 1 and state.prev_bit == 0:
            state.header.extend((0, 1))
            state.bit_counter = 2
        state.prev_bit = bit
        return mode, None

    state.header.append(bit)
    state.bit_counter += 1
    try:
        if len(state.header) == len(SYNC_PATTERN) and tuple(state.header) != SYNC_PATTERN:
            raise SyncError(f"bad sync {state.header}")
        if len(state.header) < HEADER_BITS:
            return mode, None
        address = decode_header(state.header)
    except SyncError:
        state.sync_errors += 1
        state.header.clear()
        state.bit_counter = 0
        state.prev_bit = bit
        return state.rx_mode, None

    state.header.clear()
    state.prev_bit = None
    state.last_address = address
    accept = address == state.own_address
    state.rx_mode = RxMode.PAYLOAD_RECEIVE if accept else RxMode.DETACHED
    state.bit_counter = HEADER_BITS
    return state.rx_mode, accept


def payload_gate(bit_index: int, storage_voltage: float, output_floor: Optional[float]) -> bool:
    """Whether a wired sender closes its series switch during this bit."""
    if bit_index <= HEADER_BITS:
        return False
    return output_floor is None or storage_voltage >= output_floor


def wired_output_step(bit_index: int, source_v: float, dest_v: float, link: WiredLink,
                      output_floor: Optional[float] = None) -> float:
    """Payload current pushed into the destination during one bit.

    Header bits are a voltage-only tag and carry no current.
    """
    if not payload_gate(bit_index, source_v, output_floor):
        return 0.0
    return wired_transfer_current(source_v, dest_v, link)


def wired_input_step(state: RouterState, header_bits: Sequence[int]) -> bool:
    """Read a wired tag; close the input switch if it is addressed here."""
    accept = decode_header(header_bits) == state.own_address
    state.input_switch_on = accept
    state.bit_counter = HEADER_BITS if accept else 0
    return accept


def wired_input_tick(state: RouterState) -> None:
    """Count one payload bit; the input switch opens when the packet ends."""
    if not state.input_switch_on:
        return
    state.bit_counter += 1
    if end_of_packet(state.bit_counter):
        state.input_switch_on = False
        state.bit_counter = 0


@dataclass
class Frame:
    """A packet in flight on one link."""

    frame_id: int
    frame: BitFrame
    source: str
    dest: str
    medium: str  # "wired" | "wireless"
    link_index: int
    start_tick: int
    issue_voltage: float
    accepted: Optional[bool] = None
    # payload withheld during the current bit by the output floor
    blocked: bool = False

    def bit_index(self, tick: int) -> int:
        return tick - self.start_tick + 1

    def bit(self, tick: int) -> int:
        return self.frame.bits[tick - self.start_tick]

    def active(self, tick: int) -> bool:
        return self.start_tick <= tick < self.start_tick + FRAME_BITS

    @property
    def address(self) -> Address:
        return self.frame.address
