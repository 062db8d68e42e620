"""Deterministic simulator of power packet dispatching networks."""

from .engine import ConfigError, RouterSpec, SimConfig, Topology, Trace, WiredEdge, WirelessEdge, run, summarize_power
from .packet import Address, BitFrame, ClockConfig, NoSignal, SyncError, decode_header, encode_frame, synchronize
from .scenario import ParseError, UnknownPreset, ValidationError, load_preset, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "Address", "BitFrame", "ClockConfig", "ConfigError", "NoSignal", "ParseError", "RouterSpec", "SimConfig",
    "SyncError", "Topology", "Trace", "UnknownPreset", "ValidationError", "WiredEdge", "WirelessEdge",
    "decode_header", "encode_frame", "load_preset", "parse_scenario", "run", "summarize_power", "synchronize",
]
