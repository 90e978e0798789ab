import random

import pytest

from wsntrust import watchdog as wd
from wsntrust.watchdog import Polarity, Rule, RuleEvent, WatchBuffer, WatchdogConfig

CFG = WatchdogConfig(min_neighbors=4, min_samples=4)


def test_buffer_keeps_newest():
    buf = WatchBuffer(8)
    cfg = WatchdogConfig(p_watch=1.0)
    for k in range(10):
        wd.watch(buf, k, 3, now=k, cfg=cfg, stream=random.Random(0))
    assert len(buf) == 8 and buf.evicted == 2
    assert [e.digest for e in buf.entries()] == list(range(2, 10))


def test_p_watch_zero_never_buffers():
    buf = WatchBuffer(8)
    for k in range(100):
        assert wd.watch(buf, k, 3, 0, WatchdogConfig(p_watch=0.0), random.Random(k)) is None
    assert len(buf) == 0


def test_p_watch_half_binomial():
    buf = WatchBuffer(1)
    rng = random.Random(5)
    cfg = WatchdogConfig(p_watch=0.5)
    n = sum(wd.watch(buf, k, 1, 0, cfg, rng) is not None for k in range(10_000))
    assert abs(n - 5000) <= 150


def test_buffer_expire_and_pop():
    buf = WatchBuffer(4)
    buf.add(wd.WatchEntry("a", 1, deadline=10, own=True))
    buf.add(wd.WatchEntry("b", 1, deadline=20, own=True))
    assert [e.digest for e in buf.expire(15)] == ["a"]
    assert buf.pop("b", 1).digest == "b"
    assert buf.find("b", 1) is None


def test_ack_rule_three_cases():
    ev = wd.resolve_ack(1, 2, True, False, 5, CFG)
    assert ev.polarity is Polarity.POSITIVE and ev.subject == 2 and ev.rule is Rule.ACK
    assert wd.resolve_ack(1, 2, False, True, 5, CFG) is None
    assert wd.resolve_ack(1, 2, False, False, 5, CFG).polarity is Polarity.NEGATIVE


def test_auth_rule_blames_hop_wise_only():
    assert wd.check_auth(1, 2, True, True, 0, CFG) is None
    assert wd.check_auth(0, 2, False, False, 0, CFG) is None
    ev = wd.check_auth(1, 2, False, True, 0, CFG)
    assert ev.rule is Rule.AUTH and ev.polarity is Polarity.NEGATIVE and ev.subject == 2


def test_data_validation():
    flat = {j: [20.0] * 5 for j in range(2, 7)}
    assert wd.validate_reading(1, 9, 20.0, flat, 1.0, 0, CFG).polarity is Polarity.POSITIVE
    rng = random.Random(1)
    noisy = {j: [rng.gauss(20, 1) for _ in range(10)] for j in range(2, 7)}
    assert wd.validate_reading(1, 9, 40.0, noisy, 1.0, 0, CFG).polarity is Polarity.NEGATIVE
    assert wd.validate_reading(1, 9, 20.5, noisy, 1.0, 0, CFG).polarity is Polarity.POSITIVE
    assert wd.validate_reading(1, 9, 40.0, {2: [20.0], 3: [20.0]}, 1.0, 0, CFG) is None


def test_data_validation_excludes_subject():
    others = {j: [20.0] * 5 for j in range(2, 7)}
    others[9] = [1000.0] * 50  # the subject's own window must not widen the band
    ev = wd.validate_reading(1, 9, 1000.0, others, 1.0, 0, CFG)
    assert ev.polarity is Polarity.NEGATIVE
    summary = wd.PoolSummary(others)
    assert wd.judge_readings(1, 9, [1000.0], summary, 1.0, 0, CFG).polarity is Polarity.NEGATIVE


def test_traffic_audit_boundary():
    cfg = WatchdogConfig(delta=0.5)
    assert wd.audit_traffic(1, 2, 10, 10, 0, cfg).polarity is Polarity.POSITIVE
    assert wd.audit_traffic(1, 2, 14, 10, 0, cfg).polarity is Polarity.POSITIVE
    assert wd.audit_traffic(1, 2, 15, 10, 0, cfg).polarity is Polarity.POSITIVE
    assert wd.audit_traffic(1, 2, 30, 10, 0, cfg).polarity is Polarity.NEGATIVE


def test_self_delivery_check():
    cfg = WatchdogConfig(theta_pdr=0.8, pdr_min_packets=5)
    assert wd.self_delivery_check(1, 10, 10, 0, cfg) is None
    assert wd.self_delivery_check(1, 10, 8, 0, cfg) is None  # strict
    ev = wd.self_delivery_check(1, 10, 3, 0, cfg)
    assert ev.subject == wd.SELF and ev.rule is Rule.PDR_SELF
    assert wd.self_delivery_check(1, 4, 0, 0, cfg) is None


def test_beacon_rules():
    cfg = WatchdogConfig(eps_loc=5.0)
    ok = wd.check_beacon(1, 2, (0, 0), 7, (0, 0), 7, 0, cfg)
    assert ok.polarity is Polarity.POSITIVE and ok.weight == cfg.w_beacon
    mem = wd.check_beacon(1, 2, (0, 0), 7, (0, 0), 8, 0, cfg)
    assert (mem.rule, mem.polarity) == (Rule.MEMORY, Polarity.DIRECT_ZERO)
    ins = wd.check_beacon(1, 2, (0, 0), 7, (10, 0), 7, 0, cfg)
    assert (ins.rule, ins.polarity) == (Rule.INSITU, Polarity.DIRECT_ZERO)
    assert wd.check_beacon(1, 2, (0, 0), 7, (5, 0), 7, 0, cfg).polarity is Polarity.POSITIVE


def test_rule_event_invariants():
    with pytest.raises(ValueError):
        RuleEvent(1, Rule.ACK, 2, Polarity.DIRECT_ZERO, 1.0, 0)
    with pytest.raises(ValueError):
        RuleEvent(1, Rule.MEMORY, 2, Polarity.NEGATIVE, 1.0, 0)
    with pytest.raises(ValueError):
        RuleEvent(1, Rule.ACK, 2, Polarity.NEGATIVE, 0.0, 0)
    assert RuleEvent(1, Rule.ACK, 2, Polarity.NEGATIVE, 1.0, 9).csv_row() == "9,1,2,ACK,negative,1.0"
