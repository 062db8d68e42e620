import pytest
from hypothesis import given, strategies as st

from ppdsim.control import (AlternatingController, ControlConfig, DemandLine, GammaSupervisor, IoGrant, Issue,
                            SharingController, controller_m1, controller_tx, enforce_no_simultaneous_io)
from ppdsim.packet import Address

TICK = 100e-6
maybe_time = st.one_of(st.none(), st.floats(0.0, 1.0))


class Net:
    """A frozen network view for exercising controllers without the engine."""

    def __init__(self, volts, sending=(), receiving=(), delivering=()):
        self.volts = dict(volts)
        self._sending, self._receiving, self._delivering = set(sending), set(receiving), set(delivering)

    def voltage(self, rid):
        return self.volts[rid]

    def sending(self, rid):
        return rid in self._sending

    def receiving(self, rid):
        return rid in self._receiving

    def delivering(self, source, dest):
        return (source, dest) in self._delivering


HEALTHY = {"m1": 15.0, "l1": 10.2, "tx": 9.2, "rx": 7.2, "m2": 7.0, "l2": 5.2}


def test_m1_serves_l1_first():
    assert controller_m1(True, True) == "l1"
    assert controller_m1(False, True) == "tx"
    assert controller_m1(False, False) is None


def test_tx_respects_floor():
    assert controller_tx(True, 9.0, 9.0)
    assert not controller_tx(True, 8.99, 9.0)
    assert not controller_tx(False, 12.0, 9.0)


def test_demand_line_hysteresis():
    line = DemandLine("l1", "m1", 10.0, 0.1)
    assert line.update(9.99, 0.0) and line.since == 0.0
    assert line.update(10.05, 0.1) and line.since == 0.0
    assert not line.update(10.1, 0.2) and line.since is None
    assert line.name == "l1->m1"


def test_gamma_escalates_after_timeout():
    g = GammaSupervisor(5.0, 0.020, 0.1)
    ticks = 0
    while True:
        d_rx, d_m2 = g.update(4.9, False, TICK, ticks * TICK)
        assert d_rx
        if d_m2:
            break
        ticks += 1
    assert ticks + 1 == 200
    # the rx demand is kept while m2 is also asked
    assert g.update(4.95, False, TICK, 0.03) == (True, True)
    assert g.update(5.1, False, TICK, 0.04) == (False, False)


def test_gamma_does_not_count_while_rx_delivers():
    g = GammaSupervisor(5.0, 0.020, 0.1)
    for k in range(1000):
        assert g.update(4.9, True, TICK, k * TICK) == (True, False)
    assert g.waited == 0.0


@pytest.mark.parametrize("args, grant", [
    ((True, False, 0.0, 0.0), IoGrant.NONE),
    ((False, True, 0.0, None), IoGrant.NONE),
    ((False, False, None, None), IoGrant.NONE),
    ((False, False, 0.5, None), IoGrant.INPUT),
    ((False, False, None, 0.5), IoGrant.OUTPUT),
    ((False, False, 0.5, 0.5), IoGrant.INPUT),
    ((False, False, 0.6, 0.5), IoGrant.OUTPUT),
    ((False, False, 0.4, 0.5), IoGrant.INPUT),
])
def test_no_simultaneous_io(args, grant):
    assert enforce_no_simultaneous_io(*args) is grant


@given(st.booleans(), st.booleans(), maybe_time, maybe_time)
def test_in_flight_packet_always_finishes(inp, out, pi, po):
    grant = enforce_no_simultaneous_io(inp, out, pi, po)
    if inp or out:
        assert grant is IoGrant.NONE
    elif pi is None and po is None:
        assert grant is IoGrant.NONE
    else:
        assert grant in (IoGrant.INPUT, IoGrant.OUTPUT)


def test_threshold_gradient_enforced():
    with pytest.raises(ValueError, match="V_l1 > V_tx"):
        ControlConfig(thresholds={"l1": 10.0, "tx": 11.0, "rx": 7.0, "l2": 5.0})
    with pytest.raises(ValueError):
        ControlConfig(gamma_timeout=0)
    with pytest.raises(ValueError):
        ControlConfig(random_demand_probability=1.5)


def test_sharing_quiet_when_healthy():
    ctl = SharingController(ControlConfig())
    assert ctl.decide(0.0, Net(HEALTHY)) == []
    assert not any(ctl.state.values())


def test_sharing_serves_each_low_router():
    ctl = SharingController(ControlConfig())
    volts = dict(HEALTHY, l1=9.8, rx=6.9)
    issues = set(ctl.decide(0.0, Net(volts)))
    assert issues == {Issue("m1", "l1"), Issue("tx", "rx")}


def test_busy_sender_masks_its_demand():
    ctl = SharingController(ControlConfig())
    volts = dict(HEALTHY, tx=8.5)
    issues = ctl.decide(0.0, Net(volts, sending={"tx"}))
    assert Issue("m1", "tx") not in issues
    assert ctl.state["tx->m1"] is False


def test_tx_below_floor_does_not_send():
    ctl = SharingController(ControlConfig())
    volts = dict(HEALTHY, rx=6.5, tx=8.9)
    issues = ctl.decide(0.0, Net(volts))
    assert Issue("tx", "rx") not in issues
    assert Issue("m1", "tx") in issues


def low_rx_floor():
    # with the default floor equal to the rx threshold, rx can never want input and output at once
    return ControlConfig(output_floor={"tx": 9.0, "rx": 6.5})


def test_rx_arbitration_older_request_wins():
    ctl = SharingController(low_rx_floor())
    ctl.decide(0.0, Net(dict(HEALTHY, l2=4.9), sending={"rx"}))
    issues = ctl.decide(TICK, Net(dict(HEALTHY, l2=4.9, rx=6.95)))
    assert Issue("rx", "l2") in issues and Issue("tx", "rx") not in issues


def test_rx_arbitration_newer_output_loses():
    ctl = SharingController(low_rx_floor())
    ctl.decide(0.0, Net(dict(HEALTHY, rx=6.95), receiving={"rx"}))
    issues = ctl.decide(TICK, Net(dict(HEALTHY, l2=4.9, rx=6.95)))
    assert Issue("tx", "rx") in issues and Issue("rx", "l2") not in issues


def test_rx_arbitration_tie_goes_to_input():
    ctl = SharingController(low_rx_floor())
    issues = ctl.decide(0.0, Net(dict(HEALTHY, l2=4.9, rx=6.95)))
    assert Issue("tx", "rx") in issues and Issue("rx", "l2") not in issues


def test_m2_fallback_through_controller():
    ctl = SharingController(ControlConfig())
    volts = dict(HEALTHY, l2=4.8, rx=6.5, tx=8.5)
    seen = []
    for k in range(250):
        seen.append(Issue("m2", "l2") in ctl.decide(k * TICK, Net(volts)))
    assert seen.index(True) == 199


@given(st.fixed_dictionaries({k: st.floats(0.0, 16.0) for k in HEALTHY}),
       st.sets(st.sampled_from(sorted(HEALTHY))), st.sets(st.sampled_from(sorted(HEALTHY))))
def test_sharing_never_violates_constraints(volts, sending, receiving):
    ctl = SharingController(ControlConfig())
    issues = ctl.decide(0.0, Net(volts, sending, receiving))
    sources = [i.source for i in issues]
    assert len(sources) == len(set(sources))
    for i in issues:
        assert i.source not in sending
        if i.source in ("tx", "rx"):
            assert volts[i.source] >= ControlConfig().output_floor[i.source]
            assert i.source not in receiving
    # no router is asked to take a new input and a new output at once
    dests = {i.dest for i in issues}
    assert not dests & set(sources)


def test_alternating_sequence():
    ctl = AlternatingController("tx0", [("rx1", Address(1)), ("rx2", Address(2))], frames=3)
    net = Net({"tx0": 12.0})
    out = [ctl.decide(k, net) for k in range(5)]
    assert out[:3] == [[Issue("tx0", "rx1")], [Issue("tx0", "rx2")], [Issue("tx0", "rx1")]]
    assert out[3:] == [[], []]
    assert ctl.decide(0, Net({"tx0": 12.0}, sending={"tx0"})) == []
    with pytest.raises(ValueError):
        AlternatingController("tx0", [], 1)
