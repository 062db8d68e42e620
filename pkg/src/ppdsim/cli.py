"""Command line interface: ``ppdsim run|preset|sweep|report``.

Exit status is 0 when every embedded check passes, 1 when a check fails and
2 for configuration or file errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import ConfigError
from .experiments import execute
from .report import TraceIOError, build_report, load_trace, table_power
from .scenario import (ParseError, UnknownPreset, ValidationError, from_dict, load_preset, parse_scenario,
                       preset_names, to_dict, with_overrides)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt", type=float, help="integration step in seconds (<= 1e-5)")
    p.add_argument("--duration", type=float, help="simulated time in seconds")
    p.add_argument("--seed", type=int, help="seed for randomized demand patterns")
    p.add_argument("--full-rate", action="store_true", help="record every integration step")
    p.add_argument("--out", type=Path, help="directory for trace and summary files")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="trace file format")
    p.add_argument("--backend", choices=("numba", "numpy"), help="integration backend")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs for sweeps")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ppdsim", description="Power packet network simulator")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="run a scenario file")
    p.add_argument("scenario", type=Path)
    _common(p)

    p = sub.add_parser("preset", help="run a bundled experiment")
    p.add_argument("name", nargs="?")
    p.add_argument("--list", action="store_true", help="list bundled presets")
    _common(p)

    p = sub.add_parser("sweep", help="run a scenario over a grid of coil gaps or thresholds")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", type=Path)
    src.add_argument("--preset")
    p.add_argument("--gap-mm", type=float, nargs="+", help="coil gaps in mm")
    p.add_argument("--threshold", action="append", default=[], metavar="ROLE=V1,V2",
                   help="threshold values to sweep for one role (repeatable)")
    _common(p)

    p = sub.add_parser("report", help="recompute the summary of a saved trace")
    p.add_argument("trace", type=Path)
    p.add_argument("--window", type=float, help="averaging window in seconds")
    p.add_argument("--json", action="store_true", help="print the summary as JSON")
    return ap


def _overrides(args) -> dict:
    return {"dt": args.dt, "duration": args.duration, "seed": args.seed,
            "full_rate": True if args.full_rate else None}


def _apply(sc, args):
    ov = _overrides(args)
    return with_overrides(sc, **ov) if any(v is not None for v in ov.values()) else sc


def _threshold_grid(sc, specs: list[str]):
    grid = [sc]
    for spec in specs:
        role, _, values = spec.partition("=")
        if not values:
            raise ValidationError(f"--threshold expects ROLE=V1,V2 but got {spec!r}")
        nxt = []
        for base in grid:
            for v in values.split(","):
                doc = to_dict(base)
                doc["control"]["thresholds_V"][role] = float(v)
                one = from_dict(doc)
                one.name = f"{base.name}_{role}{float(v):g}V"
                nxt.append(one)
        grid = nxt
    return grid


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "preset" and (args.list or not args.name):
            print("\n".join(preset_names()))
            return EXIT_OK
        if args.verb == "report":
            return _report(args)
        if args.verb == "run":
            sc = _apply(parse_scenario(args.scenario), args)
            ok, text = execute(sc, args.out, args.format, args.jobs, args.backend)
        elif args.verb == "preset":
            sc = _apply(load_preset(args.name), args)
            ok, text = execute(sc, args.out, args.format, args.jobs, args.backend)
        else:
            sc = _apply(parse_scenario(args.scenario) if args.scenario else load_preset(args.preset), args)
            ok, parts = True, []
            for one in _threshold_grid(sc, args.threshold):
                gaps = args.gap_mm or (one.sweep or {}).get("gap_mm") or [
                    e.model.axial_gap * 1e3 for e in one.topology.wireless][:1]
                o, t = execute(one, args.out, args.format, args.jobs, args.backend, gaps_mm=gaps)
                ok, parts = ok and o, parts + [t]
            text = "\n".join(parts)
    except (ParseError, ValidationError, ConfigError) as exc:
        print(f"ppdsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnknownPreset as exc:
        print(f"ppdsim: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    except (TraceIOError, OSError) as exc:
        print(f"ppdsim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(text)
    return EXIT_OK if ok else EXIT_FAIL


def _report(args) -> int:
    try:
        trace = load_trace(args.trace)
    except (TraceIOError, ValueError) as exc:
        print(f"ppdsim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    doc = trace.meta.get("scenario")
    if doc is None or trace.meta.get("table_only"):
        rows = table_power(trace, args.window)
        if args.json:
            print(json.dumps({"powers": rows}, indent=2))
        else:
            for rid, r in rows.items():
                print(f"{rid:<8} in {r['in']:.3f} W  out {r['out']:.3f} W")
        return EXIT_OK
    sc = from_dict(doc)
    rep = build_report(trace, sc, args.window)
    print(rep.to_json() if args.json else rep.render())
    return EXIT_OK if rep.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
