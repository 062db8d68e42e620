"""Summaries, embedded checks and trace files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .engine import Trace, summarize_power
from .packet import FRAME_BITS, HEADER_BITS, Address
from .router import PacketEvent, RxMode

# Measured average powers into and out of the second local system, per coil
# gap, from the hardware experiment the sharing presets reproduce. Values in W.
REFERENCE_TABLE = {
    "i": {"gap_mm": 50.0, "rx_in": 0.50, "rx_out": 0.46, "m2_out": 0.73, "total_out": 1.19},
    "ii": {"gap_mm": 100.0, "rx_in": 0.20, "rx_out": 0.17, "m2_out": 0.94, "total_out": 1.11},
    "iii": {"gap_mm": 250.0, "rx_in": 0.00, "rx_out": 0.00, "m2_out": 1.13, "total_out": 1.13},
}
REFERENCE_SOURCE = "hardware measurement: input/output power of the routers in local system 2 at each gap"

TRACE_FORMAT = "ppdsim-trace/1"


class TraceIOError(OSError):
    pass


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)


@dataclass
class SummaryReport:
    name: str
    window: float
    powers: dict
    total_output: float
    threshold_violations: Optional[int] = None
    selectivity: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    insufficient_window: bool = False
    total_of: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def render(self) -> str:
        out = [f"scenario {self.name}  (averages over the last {self.window * 1e3:.1f} ms)"]
        if self.insufficient_window:
            out.append("  window is empty: no samples to average")
        out.append(f"  {'router':<8}{'in W':>10}{'out W':>10}{'load W':>10}")
        for rid, row in self.powers.items():
            out.append(f"  {rid:<8}{row['in']:>10.3f}{row['out']:>10.3f}{row['load']:>10.3f}")
        if self.total_of:
            out.append(f"  total output ({'+'.join(self.total_of)}): {self.total_output:.3f} W")
        if self.threshold_violations is not None:
            out.append(f"  threshold violations after transient: {self.threshold_violations}")
        for rid, counts in self.selectivity.items():
            out.append(f"  {rid}: accepted {counts['accepted']} rejected {counts['rejected']} "
                       f"of {counts['observed']} frames")
        if self.reference.get("case"):
            ref = self.reference
            out.append(f"  reference case {ref['case']} ({REFERENCE_SOURCE})")
            for key, d in ref["deltas"].items():
                out.append(f"    {key:<10} model {d['model']:.3f}  reference {d['reference']:.2f}  "
                           f"delta {d['delta']:+.3f}")
        for c in self.checks:
            out.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(out)


# -- helpers -------------------------------------------------------------------

def _bits(trace: Trace, key: str) -> np.ndarray:
    return np.asarray(trace.bit_series[key])


def _tick(trace: Trace, t: float) -> int:
    return int(round(t / trace.meta["bit_width"]))


def sent_frames(trace: Trace, source: Optional[str] = None) -> list[PacketEvent]:
    return [e for e in trace.events if e.kind == "sent" and (source is None or e.source == source)]


def selectivity_counts(trace: Trace, topology) -> dict:
    """Per receiver: decisions by address and mismatches against the frames observed."""
    out = {}
    nb = len(trace.bit_time)
    for rid in trace.meta.get("receivers", []):
        own = topology.address_of(rid)
        tx = next(e.transmitter for e in topology.wireless if e.receiver == rid)
        frames = [e for e in sent_frames(trace, tx) if _tick(trace, e.time) + HEADER_BITS < nb]
        decisions = {e.frame_id: e for e in trace.events
                     if e.router == rid and e.kind in ("accepted", "rejected")}
        by_addr: dict = {}
        false_accept = false_reject = missed = 0
        for f in frames:
            d = decisions.get(f.frame_id)
            key = str(f.destination)
            slot = by_addr.setdefault(key, {"accepted": 0, "rejected": 0})
            if d is None:
                missed += 1
                continue
            slot[d.kind] += 1
            if d.kind == "accepted" and f.destination != own:
                false_accept += 1
            if d.kind == "rejected" and f.destination == own:
                false_reject += 1
        out[rid] = {"address": str(own), "observed": len(frames),
                    "accepted": sum(v["accepted"] for v in by_addr.values()),
                    "rejected": sum(v["rejected"] for v in by_addr.values()),
                    "by_address": by_addr, "false_accept": false_accept, "false_reject": false_reject,
                    "missed": missed}
    return out


# -- checks --------------------------------------------------------------------

def check_selectivity(trace: Trace, sc) -> CheckResult:
    counts = selectivity_counts(trace, sc.topology)
    ok = bool(counts)
    parts = []
    for rid, c in counts.items():
        good = (c["false_accept"] == 0 and c["false_reject"] == 0 and c["missed"] == 0
                and c["accepted"] + c["rejected"] == c["observed"])
        ok = ok and good
        parts.append(f"{rid}({c['address']}) accepted {c['accepted']}, rejected {c['rejected']}, "
                     f"false accepts {c['false_accept']}")
    return CheckResult("selectivity", ok, "; ".join(parts) or "no wireless receivers", counts)


def check_mode_cadence(trace: Trace, sc) -> CheckResult:
    nb = len(trace.bit_time)
    ok = True
    parts = []
    data = {}
    for e in sc.topology.wireless:
        rid = e.receiver
        mode = _bits(trace, f"{rid}.mode")
        listen = mode == int(RxMode.HEADER_LISTEN)
        entries = [b for b in range(nb) if listen[b] and (b == 0 or not listen[b - 1])]
        frames = [f for f in sent_frames(trace, e.transmitter) if _tick(trace, f.time) + FRAME_BITS <= nb]
        starts = [_tick(trace, f.time) for f in frames]
        missing = [s for s in starts if not any(abs(b - s) <= 1 for b in entries)]
        payload = [i for i, s in enumerate(starts)
                   if (mode[s + HEADER_BITS:s + FRAME_BITS] == int(RxMode.PAYLOAD_RECEIVE)).any()]
        own = sc.topology.address_of(rid)
        expected = [i for i, f in enumerate(frames) if f.destination == own]
        every_second = bool(payload) and all(b - a == 2 for a, b in zip(payload, payload[1:]))
        good = not missing and payload == expected and every_second
        ok = ok and good
        gaps = np.diff(entries) if len(entries) > 1 else np.array([])
        data[rid] = {"listen_entries": len(entries), "frame_starts": len(starts), "missing": missing,
                     "payload_frames": len(payload)}
        parts.append(f"{rid} listen entries {len(entries)}/{len(starts)} frames"
                     f" (spacing {int(gaps.min()) if gaps.size else 0}-{int(gaps.max()) if gaps.size else 0} bits),"
                     f" payload on {len(payload)} frames, every second: {every_second}")
    return CheckResult("mode_cadence", ok and bool(data), "; ".join(parts), data)


def check_near_far(trace: Trace, sc, near: str, far: str) -> CheckResult:
    p_near = float(_bits(trace, f"{near}.E_in").sum())
    p_far = float(_bits(trace, f"{far}.E_in").sum())
    v_near = float(np.mean(trace.series[f"{near}.V"])) if len(trace) else 0.0
    v_far = float(np.mean(trace.series[f"{far}.V"])) if len(trace) else 0.0
    dur = max(trace.duration, 1e-300)
    ok = p_near > p_far and v_near > v_far
    return CheckResult("near_far", ok,
                       f"{near} {p_near / dur:.3f} W / {v_near:.2f} V vs {far} {p_far / dur:.3f} W / {v_far:.2f} V",
                       {"near_W": p_near / dur, "far_W": p_far / dur, "near_V": v_near, "far_V": v_far})


def supervised(sc) -> dict:
    """router id -> threshold for every supervised storage in a sharing scenario."""
    if sc.controller_kind != "sharing":
        return {}
    roles = {r: sc.roles.get(r, r) for r in ("m1", "l1", "tx", "rx", "m2", "l2")}
    return {roles[k]: v for k, v in sc.control.thresholds.items() if k in roles}


def threshold_violations(trace: Trace, sc, transient: float) -> tuple[int, dict]:
    band = sc.control.hysteresis
    mask = trace.time > transient + 1e-12
    per = {}
    for rid, th in supervised(sc).items():
        v = np.asarray(trace.series[f"{rid}.V"])[mask]
        per[rid] = {"threshold": th, "min_V": float(v.min()) if v.size else math.nan,
                    "violations": int((v < th - band).sum())}
    return sum(p["violations"] for p in per.values()), per


def check_thresholds(trace: Trace, sc, transient: float = 0.05) -> CheckResult:
    total, per = threshold_violations(trace, sc, transient)
    detail = ", ".join(f"{rid} min {p['min_V']:.3f} V (>= {p['threshold'] - sc.control.hysteresis:.1f})"
                       for rid, p in per.items())
    empty = [rid for rid, p in per.items() if math.isnan(p["min_V"])]
    if empty:
        return CheckResult("thresholds", False, f"no samples after the {transient * 1e3:g} ms transient", per)
    return CheckResult("thresholds", total == 0 and bool(per), f"{total} violations; {detail}", per)


def check_constraints(trace: Trace, sc) -> CheckResult:
    both = {}
    for rid in trace.routers:
        n = int((_bits(trace, f"{rid}.S_in").astype(bool) & _bits(trace, f"{rid}.S_out").astype(bool)).sum())
        if n:
            both[rid] = n
    sd_sr = 0
    for rid in trace.meta.get("receivers", []):
        sd_sr += int((_bits(trace, f"{rid}.S_d").astype(bool) & _bits(trace, f"{rid}.S_R").astype(bool)).sum())
    floors = {rid: v for rid, v in (sc.make_controller().output_floors().items())}
    below = []
    for ev in sent_frames(trace):
        if ev.source in floors:
            v0 = float(_bits(trace, f"{ev.source}.V0")[_tick(trace, ev.time)])
            if v0 < floors[ev.source]:
                below.append((ev.time, ev.source, v0))
    ok = not both and not below and sd_sr == 0
    return CheckResult("constraints", ok,
                       f"simultaneous in/out bits {sum(both.values())}, S_d&S_R bits {sd_sr}, "
                       f"frames issued below floor {len(below)}",
                       {"simultaneous": both, "below_floor": below, "sd_sr": sd_sr})


def fallback_intervals(trace: Trace, sc) -> list[tuple[int, int]]:
    """Tick ranges where rx is below its floor and l2 below its threshold for longer than the timeout."""
    roles = {r: sc.roles.get(r, r) for r in ("rx", "l2")}
    floor = sc.control.output_floor["rx"]
    th = sc.control.thresholds["l2"]
    cond = (_bits(trace, f"{roles['rx']}.V0") < floor) & (_bits(trace, f"{roles['l2']}.V0") < th)
    bw = trace.meta["bit_width"]
    out = []
    b = 0
    n = len(cond)
    while b < n:
        if not cond[b]:
            b += 1
            continue
        e = b
        while e < n and cond[e]:
            e += 1
        if (e - b) * bw > sc.control.gamma_timeout + 1e-12:
            out.append((b, e))
        b = e
    return out


def check_fallback(trace: Trace, sc) -> CheckResult:
    m2 = sc.roles.get("m2", "m2")
    intervals = fallback_intervals(trace, sc)
    ticks = [_tick(trace, e.time) for e in sent_frames(trace, m2)]
    unserved = [(b, e) for b, e in intervals if not any(b <= t < e for t in ticks)]
    return CheckResult("fallback", not unserved,
                       f"{len(intervals)} starved intervals longer than the timeout, {len(unserved)} without an "
                       f"{m2} packet; {len(ticks)} {m2} packets in total",
                       {"intervals": intervals, "unserved": unserved, "m2_frames": len(ticks)})


def reference_deltas(summary, case: Optional[str], roles: Optional[dict] = None) -> dict:
    if not case:
        return {}
    roles = roles or {}
    rx, m2 = roles.get("rx", "rx"), roles.get("m2", "m2")
    ref = REFERENCE_TABLE[case]
    model = {"rx_in": summary[rx]["in"], "rx_out": summary[rx]["out"], "m2_out": summary[m2]["out"],
             "total_out": summary.total_output}
    return {"case": case, "source": REFERENCE_SOURCE, "gap_mm": ref["gap_mm"], "total_of": [rx, m2],
            "deltas": {k: {"model": model[k], "reference": ref[k], "delta": model[k] - ref[k]} for k in model}}


def build_report(trace: Trace, sc, window: Optional[float] = None) -> SummaryReport:
    window = min(sc.window if window is None else window, trace.duration)
    roles = sc.roles if sc.controller_kind == "sharing" else {}
    total_of = (roles.get("rx", "rx"), roles.get("m2", "m2"))
    summary = summarize_power(trace, window, total_of)
    transient = float(sc.outputs.get("transient_s", 0.05))
    viol = threshold_violations(trace, sc, transient)[0] if supervised(sc) else None
    checks = []
    c = sc.checks
    if "selectivity" in c:
        checks.append(check_selectivity(trace, sc))
    if "mode_cadence" in c:
        checks.append(check_mode_cadence(trace, sc))
    if "near_far" in c:
        nf = c["near_far"] or {}
        checks.append(check_near_far(trace, sc, nf.get("near", "rx1"), nf.get("far", "rx2")))
    if "thresholds" in c:
        checks.append(check_thresholds(trace, sc, float((c["thresholds"] or {}).get("transient_s", transient))))
    if "constraints" in c:
        checks.append(check_constraints(trace, sc))
    if "fallback" in c and sc.controller_kind == "sharing":
        checks.append(check_fallback(trace, sc))
    empty = len(trace.bit_time) == 0
    if empty and c:
        checks.append(CheckResult("window", False, "trace is empty; nothing to check"))
    ref = reference_deltas(summary, sc.reference_case, roles) if not empty else {}
    return SummaryReport(sc.name, window, summary.rows, summary.total_output, viol,
                         selectivity_counts(trace, sc.topology) if "selectivity" in c else {},
                         ref, checks, insufficient_window=empty or window <= 0,
                         total_of=list(summary.total_output_routers))


def check_gap_table(cases: Sequence[tuple[float, object]], spec: dict, roles: Optional[dict] = None) -> list[CheckResult]:
    """Cross-case checks on summaries ordered by increasing gap."""
    roles = roles or {}
    rx, m2 = roles.get("rx", "rx"), roles.get("m2", "m2")
    gaps = [g for g, _ in cases]
    rx_in = [s[rx]["in"] for _, s in cases]
    m2_out = [s[m2]["out"] for _, s in cases]
    totals = [s.total_output for _, s in cases]
    out = [CheckResult("rx_input_decreasing", all(a > b for a, b in zip(rx_in, rx_in[1:])),
                       " > ".join(f"{v:.3f}" for v in rx_in) + " W")]
    target = float(spec.get("rx_in_100mm_W", 0.20))
    tol = float(spec.get("rx_in_tolerance", 0.25))
    near100 = [v for g, v in zip(gaps, rx_in) if abs(g - 100.0) < 1e-6]
    if near100:
        v = near100[0]
        out.append(CheckResult("rx_input_100mm", abs(v - target) <= tol * target,
                               f"{v:.3f} W vs {target:.2f} W +/- {tol:.0%}"))
    far = [v for g, v in zip(gaps, rx_in) if g >= 250.0]
    if far:
        out.append(CheckResult("rx_input_cutoff_zero", all(v == 0.0 for v in far),
                               ", ".join(f"{v!r} W" for v in far)))
    out.append(CheckResult("m2_output_increasing", all(a < b for a, b in zip(m2_out, m2_out[1:])),
                           " < ".join(f"{v:.3f}" for v in m2_out) + " W"))
    spread = float(spec.get("total_spread", 0.15))
    lo, hi = min(totals), max(totals)
    ok = all(abs(a - b) <= spread * min(a, b) for a in totals for b in totals)
    out.append(CheckResult("total_output_stable", ok,
                           f"rx+m2 totals {', '.join(f'{t:.3f}' for t in totals)} W "
                           f"(spread {(hi - lo) / lo if lo > 0 else math.inf:.1%}, limit {spread:.0%})"))
    return out


# -- trace files ---------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def trace_csv(trace: Trace) -> str:
    cols = list(trace.series)
    data = [trace.time.tolist()] + [np.asarray(trace.series[c]).tolist() for c in cols]
    buf = io.StringIO()
    buf.write(",".join(["time_s"] + cols) + "\n")
    for row in zip(*data):
        buf.write(",".join(map(_fmt, row)) + "\n")
    return buf.getvalue()


def trace_record(trace: Trace) -> dict:
    return {
        "format": TRACE_FORMAT,
        "meta": trace.meta,
        "routers": trace.routers,
        "columns": ["time_s"] + list(trace.series),
        "time_s": trace.time.tolist(),
        "series": {k: np.asarray(v).tolist() for k, v in trace.series.items()},
        "bit_time_s": trace.bit_time.tolist(),
        "bit_series": {k: np.asarray(v).tolist() for k, v in trace.bit_series.items()},
        "events": [e.as_dict() for e in trace.events],
        "demand_events": trace.demand_events,
    }


def export_trace(trace: Trace, fmt: str, path) -> Path:
    """Write ``trace`` as ``csv`` (delimited table) or ``json`` (structured record)."""
    p = Path(path)
    if fmt in ("csv", "delimited-table"):
        text = trace_csv(trace)
    elif fmt in ("json", "structured-record"):
        text = json.dumps(trace_record(trace), separators=(",", ":")) + "\n"
    else:
        raise ValueError(f"unknown trace format {fmt!r}; use csv or json")
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise TraceIOError(f"cannot write {p}: {exc.strerror}") from None
    return p


def load_trace(path) -> Trace:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceIOError(f"cannot read {p}: {exc.strerror}") from None
    if p.suffix == ".json":
        d = json.loads(text)
        if d.get("format") != TRACE_FORMAT:
            raise ValueError(f"{p} is not a {TRACE_FORMAT} record")
        events = [PacketEvent(e["time"], e["source"], Address.parse(e["destination"]), e["kind"], e["router"],
                              e["frame_id"]) for e in d["events"]]
        return Trace(np.asarray(d["time_s"]), {k: np.asarray(v) for k, v in d["series"].items()},
                     np.asarray(d["bit_time_s"]), {k: np.asarray(v) for k, v in d["bit_series"].items()},
                     events, d["demand_events"], d["routers"], d["meta"])
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][0] != "time_s":
        raise ValueError(f"{p} is not a trace table")
    cols = rows[0]
    arr = np.array(rows[1:], dtype=np.float64).reshape(-1, len(cols))
    series = {c: arr[:, i + 1] for i, c in enumerate(cols[1:])}
    routers = list(dict.fromkeys(c.split(".")[0] for c in cols[1:] if c.endswith(".V")))
    step = float(arr[1, 0] - arr[0, 0]) if len(arr) > 1 else 0.0
    return Trace(arr[:, 0], series, np.zeros(0), {}, [], [], routers,
                 {"sample_interval": step, "bit_width": 100e-6, "table_only": True})


def table_power(trace: Trace, window: Optional[float] = None) -> dict:
    """Average powers from a sampled table (V times current), for traces without per-bit energies."""
    t = trace.time
    if window is not None and len(t):
        mask = t > t[-1] - window + 1e-12
    else:
        mask = np.ones(len(t), dtype=bool)
    out = {}
    for rid in trace.routers:
        v = trace.series[f"{rid}.V"][mask]
        out[rid] = {"in": float(np.mean(v * trace.series[f"{rid}.I_in"][mask])) if v.size else 0.0,
                    "out": float(np.mean(v * trace.series[f"{rid}.I_out"][mask])) if v.size else 0.0,
                    "load": math.nan}
    return out
