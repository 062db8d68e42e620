"""Running scenarios, sweeps and presets, and writing their artifacts."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .engine import Trace, run, summarize_power
from .report import (CheckResult, SummaryReport, build_report, check_gap_table, export_trace)
from .scenario import Scenario, load_preset, to_dict, with_overrides

log = logging.getLogger(__name__)


@dataclass
class SweepResult:
    name: str
    runs: list  # (gap_mm, Trace, SummaryReport)
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and all(r.passed for _, _, r in self.runs)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "runs": [{"gap_mm": g, **r.to_dict()} for g, _, r in self.runs],
                "checks": [c.__dict__ for c in self.checks]}

    def render(self) -> str:
        lines = [f"sweep {self.name}"]
        lines.append(f"  {'gap mm':>8}{'rx in W':>10}{'rx out W':>10}{'m2 out W':>10}{'total W':>10}")
        for g, _, r in self.runs:
            rx, m2 = r.powers.get("rx", {}), r.powers.get("m2", {})
            lines.append(f"  {g:>8.0f}{rx.get('in', 0):>10.3f}{rx.get('out', 0):>10.3f}"
                         f"{m2.get('out', 0):>10.3f}{r.total_output:>10.3f}")
        for g, _, r in self.runs:
            for c in r.checks:
                lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {g:.0f} mm {c.name}: {c.detail}")
        for c in self.checks:
            lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(lines)


def run_scenario(sc: Scenario, backend: Optional[str] = None) -> tuple[Trace, SummaryReport]:
    trace = run(sc.topology, sc.make_controller(), sc.sim, backend)
    trace.meta["scenario"] = to_dict(sc)
    return trace, build_report(trace, sc)


def _sweep_one(args):
    sc, backend = args
    trace, report = run_scenario(sc, backend)
    return trace, report


def run_sweep(sc: Scenario, gaps_mm: Sequence[float], reference_cases: Optional[Sequence[str]] = None,
              jobs: int = 1, backend: Optional[str] = None, gap_spec: Optional[dict] = None) -> SweepResult:
    """Run ``sc`` once per coil gap; runs are independent and may execute in parallel."""
    cases = []
    for k, g in enumerate(gaps_mm):
        one = with_overrides(sc, gap_mm=g)
        one.name = f"{sc.name}@{g:g}mm"
        one.sweep = None
        one.checks = {k2: v for k2, v in one.checks.items() if k2 != "gap_table"}
        one.reference_case = reference_cases[k] if reference_cases and k < len(reference_cases) else None
        cases.append(one)
    if jobs > 1 and len(cases) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, [(c, backend) for c in cases]))
    else:
        results = [_sweep_one((c, backend)) for c in cases]
    runs = [(g, t, r) for g, (t, r) in zip(gaps_mm, results)]
    checks: list[CheckResult] = []
    if gap_spec is not None and sc.controller_kind == "sharing":
        summaries = [(g, summarize_power(t, min(sc.window, t.duration),
                                         (sc.roles.get("rx", "rx"), sc.roles.get("m2", "m2")))) for g, t, _ in runs]
        checks = check_gap_table(summaries, gap_spec, sc.roles)
    return SweepResult(sc.name, runs, checks)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def write_run(trace: Trace, report: SummaryReport, sc: Scenario, out: Path, fmt: str = "csv",
              stem: Optional[str] = None) -> list[Path]:
    stem = stem or sc.name
    trace_name = sc.outputs.get("trace", f"{stem}.{fmt}")
    if stem != sc.name or not trace_name.endswith("." + fmt):
        trace_name = f"{stem}.{fmt}"
    summary_name = sc.outputs.get("summary", f"{stem}.summary.json") if stem == sc.name else f"{stem}.summary.json"
    paths = [export_trace(trace, fmt, out / trace_name)]
    p = out / summary_name
    _write(p, report.to_json())
    paths.append(p)
    return paths


def execute(sc: Scenario, out: Optional[Path] = None, fmt: str = "csv", jobs: int = 1,
            backend: Optional[str] = None, gaps_mm: Optional[Sequence[float]] = None) -> tuple[bool, str]:
    """Run a scenario (or its sweep), write artifacts under ``out`` and return (passed, text)."""
    sweep = sc.sweep or {}
    gaps = list(gaps_mm) if gaps_mm else sweep.get("gap_mm")
    if gaps:
        res = run_sweep(sc, gaps, sweep.get("reference_cases") if not gaps_mm else None, jobs, backend,
                        sc.checks.get("gap_table", {}) if "gap_table" in sc.checks else None)
        if out is not None:
            for g, t, r in res.runs:
                write_run(t, r, sc, out, fmt, stem=f"{sc.name}_gap{g:g}mm")
            _write(out / f"{sc.name}.summary.json", json.dumps(res.to_dict(), indent=2) + "\n")
        return res.passed, res.render()
    trace, report = run_scenario(sc, backend)
    if out is not None:
        write_run(trace, report, sc, out, fmt)
    return report.passed, report.render()


def run_preset(name: str, out: Optional[Path] = None, fmt: str = "csv", jobs: int = 1,
               backend: Optional[str] = None, **overrides) -> int:
    """Run a bundled preset; returns the process exit status (0 pass, 1 check failure)."""
    sc = load_preset(name)
    if any(v is not None for v in overrides.values()):
        sc = with_overrides(sc, **overrides)
    passed, text = execute(sc, out, fmt, jobs, backend)
    log.info("%s", text)
    return 0 if passed else 1
