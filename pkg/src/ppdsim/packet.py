"""Bit-level power packet frames.

A frame is 100 bit slots: a 7-bit header (``010`` clock sync followed by a
4-bit destination address, MSB first) and a 93-bit payload during which the
gate is held on. There is no footer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

FRAME_BITS = 100
HEADER_BITS = 7
SYNC_PATTERN = (0, 1, 0)
ADDRESS_BITS = 4
BIT_WIDTH = 100e-6
# sample offset from each slot edge during synchronization, in phase steps
SYNC_GUARD = 0.6


class SyncError(ValueError):
    """The ``010`` sync pattern was not found where it was expected."""


class NoSignal(RuntimeError):
    """The sampled channel stayed low for a whole search cycle."""


@dataclass(frozen=True, order=True)
class Address:
    value: int

    def __post_init__(self) -> None:
        if not isinstance(self.value, int) or not 0 <= self.value < 2**ADDRESS_BITS:
            raise ValueError(f"address must be an integer in [0, 15], got {self.value!r}")

    @classmethod
    def parse(cls, text: str | int) -> "Address":
        """Accept ``"0010"`` style bit strings or plain integers."""
        if isinstance(text, int):
            return cls(text)
        text = str(text).strip()
        if len(text) == ADDRESS_BITS and set(text) <= {"0", "1"}:
            return cls(int(text, 2))
        raise ValueError(f"address must be a 4-bit string such as '0001', got {text!r}")

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.value >> (ADDRESS_BITS - 1 - i)) & 1 for i in range(ADDRESS_BITS))

    def __str__(self) -> str:
        return format(self.value, "04b")


@dataclass(frozen=True)
class BitFrame:
    bits: tuple[int, ...]
    bit_width: float = BIT_WIDTH

    def __post_init__(self) -> None:
        if len(self.bits) != FRAME_BITS:
            raise ValueError(f"frame must have {FRAME_BITS} bits, got {len(self.bits)}")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("frame bits must be 0 or 1")
        if tuple(self.bits[:3]) != SYNC_PATTERN:
            raise ValueError("frame must start with 010")
        if not all(self.bits[HEADER_BITS:]):
            raise ValueError("payload bits 8-100 must all be high")
        if self.bit_width <= 0:
            raise ValueError("bit_width must be positive")

    @property
    def address(self) -> Address:
        return decode_header(self.bits)

    @property
    def duration(self) -> float:
        return FRAME_BITS * self.bit_width

    def __len__(self) -> int:
        return FRAME_BITS

    def __getitem__(self, index: int) -> int:
        return self.bits[index]


@dataclass(frozen=True)
class ClockConfig:
    period: float = BIT_WIDTH
    # a search window must span a whole packet or the header may never be seen
    sync_window: int = FRAME_BITS
    phase_step: float = 0.1

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ValueError("clock period must be positive")
        if not 0 < self.phase_step <= 1:
            raise ValueError("phase_step must be in (0, 1]")
        if self.sync_window < 3:
            raise ValueError("sync_window must be at least 3 bit periods")

    @property
    def n_phases(self) -> int:
        return math.ceil(1.0 / self.phase_step - 1e-9)

    @property
    def max_search_bits(self) -> int:
        return self.n_phases * self.sync_window


def encode_frame(address: Address, bit_width: float = BIT_WIDTH) -> BitFrame:
    bits = SYNC_PATTERN + address.bits + (1,) * (FRAME_BITS - HEADER_BITS)
    return BitFrame(bits, bit_width)


def decode_header(samples: Sequence[int]) -> Address:
    """Recover the destination address from phase-aligned header samples."""
    if len(samples) < HEADER_BITS:
        raise ValueError(f"need at least {HEADER_BITS} samples, got {len(samples)}")
    if tuple(int(s) for s in samples[:3]) != SYNC_PATTERN:
        raise SyncError(f"expected 010 sync, got {tuple(samples[:3])}")
    value = 0
    for bit in samples[3:HEADER_BITS]:
        value = (value << 1) | (1 if bit else 0)
    return Address(value)


def end_of_packet(bit_counter: int) -> bool:
    return bit_counter == FRAME_BITS


def locate_frame_start(samples: Sequence[int]) -> int:
    """Index of the first full frame in a phase-aligned sample stream.

    The sync pattern can also appear inside an address (``0010`` ends in
    ``010``), so a candidate only counts when it is followed by an unbroken
    93-bit payload. Raises SyncError if no complete frame is present.
    """
    n = len(samples)
    for s in range(0, n - FRAME_BITS + 1):
        if tuple(samples[s:s + 3]) != SYNC_PATTERN:
            continue
        if all(samples[s + HEADER_BITS:s + FRAME_BITS]):
            return s
    raise SyncError("no complete frame in sample stream")


def synchronize(sampler: Callable[[float], int], cfg: ClockConfig = ClockConfig(),
                start_time: float = 0.0) -> float:
    """Find the clock phase that lines receiver bit slots up with the stream.

    The receiver clock period is fixed; only its phase is unknown. For each
    candidate phase the receiver watches ``sync_window`` slots, sampling each
    slot near both of its edges. A slot is stable when both samples agree,
    which only happens for every slot of a ``010`` run when the slot edges
    fall within ``guard`` of the true bit edges. The guard is 0.6 phase
    steps: at exactly half a step an edge that lands on a sample instant
    can make both neighbouring candidates look unstable. If no stable ``010``
    is seen the phase is advanced by ``phase_step`` periods.

    Returns the phase offset in ``[0, period)`` seconds. ``sampler(t)`` gives
    the logic level at absolute time ``t``.
    """
    T = cfg.period
    guard = SYNC_GUARD * cfg.phase_step * T
    seen_high = False
    slot = 0
    for i in range(cfg.n_phases):
        phase = i * cfg.phase_step * T
        run: list[int] = []
        for _ in range(cfg.sync_window):
            t0 = start_time + phase + slot * T
            early = 1 if sampler(t0 + guard) else 0
            late = 1 if sampler(t0 + T - guard) else 0
            slot += 1
            seen_high = seen_high or bool(early or late)
            if early != late:
                run.clear()
                continue
            run.append(early)
            if tuple(run[-3:]) == SYNC_PATTERN:
                return phase
    if not seen_high:
        raise NoSignal("channel stayed low for a full synchronization cycle")
    raise SyncError(f"no stable 010 found in {cfg.max_search_bits} bit periods")


def frame_stream_sampler(frames: Sequence[BitFrame], offset: float = 0.0,
                         period: float = BIT_WIDTH) -> Callable[[float], int]:
    """Sampler over an endlessly repeating sequence of frames.

    Bit ``j`` of the stream occupies ``[offset + j*period, offset + (j+1)*period)``.
    """
    stream = [b for f in frames for b in f.bits]
    n = len(stream)

    def sample(t: float) -> int:
        j = math.floor((t - offset) / period)
        return stream[j % n]

    return sample
