import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from ppdsim.analog import WiredLink, WirelessLinkModel
from ppdsim.control import AlternatingController, IdleController, Issue
from ppdsim.engine import (ConfigError, RouterSpec, SimConfig, Topology, WiredEdge, WirelessEdge, build_world,
                           run, step, summarize_power)
from ppdsim.kernels import get_integrator
from ppdsim.packet import Address
from ppdsim.scenario import load_preset, with_overrides

import oracles
from conftest import OneShot


def rc_topology(r=10.0, c=1e-3, v0=10.0):
    return Topology(routers=(RouterSpec("a", voltage=v0, capacitance=c, load=r),))


def pair_topology(c1=2e-3, c2=1e-3, v1=12.0, v2=4.0, r=5.0):
    link = WiredLink(series_resistance=r, diode_drop=0.0, unidirectional=False)
    return Topology(routers=(RouterSpec("a", voltage=v1, capacitance=c1), RouterSpec("b", voltage=v2, capacitance=c2)),
                    wired=(WiredEdge("a", "b", link),))


def test_empty_topology_runs():
    trace = run(Topology(), IdleController(), SimConfig(duration=0.001))
    assert len(trace.bit_time) == 10
    assert trace.routers == []
    assert trace.events == []


def test_zero_duration():
    trace = run(rc_topology(), IdleController(), SimConfig(duration=0.0))
    assert len(trace) == 0


def test_rc_discharge_through_engine():
    r, c, v0 = 10.0, 1e-3, 10.0
    sim = SimConfig(dt=r * c / 1000, duration=3 * r * c, sample_interval=None)
    trace = run(rc_topology(r, c, v0), IdleController(), sim)
    expected = np.array([oracles.rc_discharge(v0, r, c, t) for t in trace.time])
    err = np.max(np.abs(trace.series["a.V"] - expected) / expected)
    assert err < 5e-3


def test_two_capacitor_transfer_matches_closed_form():
    c1, c2, v1, v2, r = 2e-3, 1e-3, 12.0, 4.0, 5.0
    sim = SimConfig(dt=1e-6, duration=0.012)
    trace = run(pair_topology(c1, c2, v1, v2, r), OneShot(Issue("a", "b")), sim)
    ceq = c1 * c2 / (c1 + c2)
    payload = 93 * sim.bit_width
    diff = trace.series["a.V"][-1] - trace.series["b.V"][-1]
    assert diff == pytest.approx((v1 - v2) * math.exp(-payload / (r * ceq)), rel=5e-3)


@pytest.mark.parametrize("dt", [2e-6, 1e-6])
def test_charge_conservation_dt_order(dt):
    c1, c2, v1, v2, r = 2e-3, 1e-3, 12.0, 4.0, 5.0
    trace = run(pair_topology(c1, c2, v1, v2, r), OneShot(Issue("a", "b")),
                SimConfig(dt=dt, duration=0.012, sample_interval=None))
    q0 = c1 * v1 + c2 * v2
    q = c1 * trace.series["a.V"] + c2 * trace.series["b.V"]
    tau = r * c1 * c2 / (c1 + c2)
    assert np.max(np.abs(q - q0)) <= q0 * dt / tau


def test_one_frame_one_decision_per_receiver():
    sc = load_preset("selectivity_3node")
    ctl = AlternatingController("tx0", [("rx1", Address(1))], frames=1)
    trace = run(sc.topology, ctl, SimConfig(duration=0.012))
    kinds = sorted((e.router, e.kind) for e in trace.events)
    assert kinds == [("rx1", "accepted"), ("rx2", "rejected"), ("tx0", "sent")]
    modes = trace.bit_series["rx1.mode"]
    assert (modes[8:100] == 2).all()
    assert (trace.bit_series["rx2.mode"][8:100] == 3).all()


def test_step_matches_advance_bit():
    sc = with_overrides(load_preset("sharing_case_i"), duration=0.003)
    a = build_world(sc.topology, sc.make_controller(), sc.sim)
    while not a.done:
        a.advance_bit()
    b = build_world(sc.topology, sc.make_controller(), sc.sim)
    while not b.done:
        step(b)
    ta, tb = a.trace(), b.trace()
    for key in ta.series:
        np.testing.assert_array_equal(ta.series[key], tb.series[key], err_msg=key)
    with pytest.raises(ConfigError):
        step(b)


def test_runs_are_deterministic():
    sc = with_overrides(load_preset("random_demand"), duration=0.02)
    t1 = run(sc.topology, sc.make_controller(), sc.sim)
    t2 = run(sc.topology, sc.make_controller(), sc.sim)
    for key in t1.series:
        np.testing.assert_array_equal(t1.series[key], t2.series[key])
    assert [e.as_dict() for e in t1.events] == [e.as_dict() for e in t2.events]


def test_energy_bookkeeping(case_i):
    sc, trace, _ = case_i
    for spec in sc.topology.routers:
        if spec.kind != "storage":
            continue
        rid = spec.id
        v0 = trace.bit_series[f"{rid}.V0"][0]
        v1 = trace.series[f"{rid}.V"][-1]
        stored = 0.5 * spec.capacitance * (v1**2 - v0**2)
        flows = sum(trace.bit_series[f"{rid}.E_{k}"].sum() * s for k, s in (("in", 1), ("out", -1), ("load", -1)))
        scale = trace.bit_series[f"{rid}.E_in"].sum() + trace.bit_series[f"{rid}.E_load"].sum()
        assert abs(flows - stored) <= 0.01 * scale, rid


def test_summary_window_bounds(case_i):
    _, trace, _ = case_i
    with pytest.raises(ValueError):
        summarize_power(trace, window=10.0)
    s = summarize_power(trace, window=0.0)
    assert s.total_output == 0.0


@pytest.mark.slow
def test_halving_dt_changes_averages_little():
    sc = with_overrides(load_preset("sharing_case_i"), duration=0.1, window=0.05)
    fine = with_overrides(sc, dt=0.5e-6)
    a = summarize_power(run(sc.topology, sc.make_controller(), sc.sim), 0.05)
    b = summarize_power(run(fine.topology, fine.make_controller(), fine.sim), 0.05)
    for rid, row in a.rows.items():
        for k, v in row.items():
            assert abs(v - b.rows[rid][k]) <= 0.01 * max(abs(v), 1e-3), (rid, k)


def test_numba_and_numpy_backends_agree():
    if get_integrator("numba")[0] != "numba":
        pytest.skip("numba unavailable")
    sc = with_overrides(load_preset("sharing_case_i"), duration=0.012)
    ta = run(sc.topology, sc.make_controller(), sc.sim, backend="numba")
    tb = run(sc.topology, sc.make_controller(), sc.sim, backend="numpy")
    assert ta.meta["backend"] == "numba" and tb.meta["backend"] == "numpy"
    for key in ta.series:
        np.testing.assert_allclose(ta.series[key], tb.series[key], rtol=1e-9, atol=1e-12, err_msg=key)
    assert [e.as_dict() for e in ta.events] == [e.as_dict() for e in tb.events]


@pytest.mark.parametrize("build, message", [
    (lambda: Topology((RouterSpec("a"), RouterSpec("a"))), "duplicate"),
    (lambda: Topology((RouterSpec("a"),), wired=(WiredEdge("a", "zz"),)), "zz"),
    (lambda: Topology((RouterSpec("a"),), wired=(WiredEdge("a", "a"),)), "self loop"),
    (lambda: Topology((RouterSpec("a"), RouterSpec("s", kind="source", voltage=5)), wired=(WiredEdge("a", "s"),)),
     "source"),
    (lambda: Topology((RouterSpec("t"), RouterSpec("r")),
                      wireless=(WirelessEdge("t", "r"), WirelessEdge("r", "t"))), "both"),
    (lambda: Topology((RouterSpec("a", address=Address(2)), RouterSpec("b"))), "unique"),
])
def test_topology_validation(build, message):
    with pytest.raises(ConfigError, match=message):
        build().validate()


@pytest.mark.parametrize("kwargs", [{"dt": 0}, {"dt": 20e-6}, {"dt": 3e-6}, {"duration": -1},
                                    {"sample_interval": 3e-6}, {"sample_phase": 1.0}])
def test_sim_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SimConfig(**kwargs)


@pytest.mark.parametrize("kwargs", [{"kind": "battery"}, {"voltage": -1}, {"capacitance": 0}, {"load": 0}, {"id": ""}])
def test_router_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        RouterSpec(**{"id": "a", **kwargs})


def test_issue_without_link():
    topo = Topology((RouterSpec("a", voltage=5), RouterSpec("b")))
    with pytest.raises(ConfigError, match="no link"):
        run(topo, OneShot(Issue("a", "b")), SimConfig(duration=0.001))


def test_receiver_beyond_cutoff_never_decides():
    topo = Topology((RouterSpec("t", kind="source", voltage=12.0), RouterSpec("r", load=47.0)),
                    wireless=(WirelessEdge("t", "r", WirelessLinkModel(axial_gap=0.3)),))
    trace = run(topo, AlternatingController("t", [("r", Address(2))], 2), SimConfig(duration=0.02))
    assert [e.kind for e in trace.events] == ["sent", "sent"]
    assert trace.bit_series["r.E_in"].sum() == 0.0


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(st.floats(0.0, 20.0), min_size=2, max_size=4), st.floats(1.0, 50.0))
def test_wired_chain_keeps_voltages_physical(volts, r):
    routers = tuple(RouterSpec(f"n{i}", voltage=v, capacitance=1e-3, load=47.0) for i, v in enumerate(volts))
    wired = tuple(WiredEdge(f"n{i}", f"n{i + 1}", WiredLink(series_resistance=r)) for i in range(len(volts) - 1))
    ctl = OneShot(*(Issue(f"n{i}", f"n{i + 1}") for i in range(len(volts) - 1)))
    trace = run(Topology(routers, wired), ctl, SimConfig(dt=5e-6, duration=0.011))
    total0 = sum(0.5e-3 * v * v for v in volts)
    total1 = sum(0.5e-3 * trace.series[f"n{i}.V"][-1] ** 2 for i in range(len(volts)))
    assert total1 <= total0 + 1e-12
    for i in range(len(volts)):
        v = trace.series[f"n{i}.V"]
        assert (v >= 0).all()
        # diodes only let current flow forward
        assert (trace.series[f"n{i}.I_in"] >= 0).all()


def test_backend_env_flag(monkeypatch):
    monkeypatch.setenv("PPDSIM_BACKEND", "numpy")
    assert get_integrator()[0] == "numpy"
    trace = run(rc_topology(), IdleController(), SimConfig(duration=0.001))
    assert trace.meta["backend"] == "numpy"
    monkeypatch.setenv("PPDSIM_BACKEND", "fortran")
    with pytest.raises(ValueError, match="PPDSIM_BACKEND"):
        get_integrator()
