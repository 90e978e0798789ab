import itertools

import numpy as np
import pytest

from wsntrust.trust import (LocalityError, Status, TrustConfig, TrustTable, Vote, estimate_hops,
                            tally_votes, trust_value)
from wsntrust.watchdog import Polarity, Rule, RuleEvent

NB = frozenset({2, 3, 4})


def neg(subject=2, at=0, w=1.0):
    return RuleEvent(1, Rule.ACK, subject, Polarity.NEGATIVE, w, at)


def pos(subject=2, at=0, w=1.0):
    return RuleEvent(1, Rule.ACK, subject, Polarity.POSITIVE, w, at)


def table(**kw):
    return TrustTable(1, NB, TrustConfig(**kw))


def test_formula_values():
    assert trust_value(0, 0) == 1.0
    assert trust_value(0, 4) == pytest.approx(0.2)
    assert trust_value(9, 0) == 1.0


def test_formula_grid_properties():
    g = np.arange(50, dtype=float)
    P, N = np.meshgrid(g, g, indexing="ij")
    T = trust_value(P, N)
    assert ((T >= 0) & (T <= 1)).all()
    assert (np.diff(T, axis=0) >= 0).all()
    assert (np.diff(T, axis=1) <= 0).all()


def test_aging_neutrality():
    for p, n in itertools.product(np.linspace(0, 30, 13), np.linspace(0.5, 30, 13)):
        for lam in (0.5, 0.9, 0.99):
            assert trust_value(lam * p, lam * n) >= trust_value(p, n) - 1e-12


def test_fresh_record():
    t = table()
    rec = t.get(2)
    assert rec.trust == 1.0 and rec.status is Status.ACTIVE
    assert t.routable(2)


def test_evidence_takes_effect_at_epoch_boundary():
    t = table(aging=1.0)
    for _ in range(4):
        t.record_event(neg(), NB)
    assert t.trust(2) == 1.0
    t.close_epoch()
    assert t.trust(2) == pytest.approx(0.2)


def test_aging_applies_before_new_evidence():
    t = table(aging=0.5)
    for _ in range(4):
        t.record_event(pos(), NB)
    t.close_epoch()
    t.record_event(neg(), NB)
    t.close_epoch()
    rec = t.get(2)
    assert (rec.p, rec.n) == (2.0, 1.0)


def test_direct_zero_is_immediate():
    t = table()
    for _ in range(9):
        t.record_event(pos(), NB)
    t.close_epoch()
    t.record_event(RuleEvent(1, Rule.INSITU, 2, Polarity.DIRECT_ZERO, 1.0, 77), NB)
    assert t.trust(2) == 0.0 and t.is_isolated(2)
    assert t.get(2).isolated_at == 77


def test_locality_and_ownership():
    t = table()
    with pytest.raises(LocalityError):
        t.record_event(neg(subject=9), NB)
    with pytest.raises(ValueError):
        t.record_event(RuleEvent(5, Rule.ACK, 2, Polarity.NEGATIVE, 1.0, 0), NB)


def test_evaluate_threshold_and_dedup():
    t = table(theta_trust=0.25, aging=1.0)
    rec = t.get(2)
    rec.trust = 0.25
    assert not t.evaluate(2)
    for _ in range(4):
        t.record_event(neg(), NB)
    t.close_epoch()
    assert t.evaluate(2)
    assert t.get(2).status is Status.SUSPECTED
    assert not t.evaluate(2)
    t.end_episode(2)
    assert t.evaluate(2)
    t.isolate(2, 5)
    assert not t.evaluate(2)


def test_suspected_gets_no_redemption():
    t = table(aging=0.5)
    for _ in range(9):
        t.record_event(neg(), NB)
    t.close_epoch()
    t.evaluate(2)
    before = t.trust(2)
    for _ in range(20):
        t.record_event(pos(), NB)
    t.close_epoch()
    assert t.trust(2) == before


def test_isolation_is_absorbing():
    t = table()
    assert t.isolate(3, 10)
    assert not t.isolate(3, 20)
    assert t.record_event(pos(subject=3), NB) is None
    t.close_epoch()
    assert t.is_isolated(3) and not t.routable(3)
    assert t.vote_weight(3) == 0.0


def test_vote_weights():
    t = table()
    t.get(2).trust = 0.6
    assert t.vote_weight(2) == 0.6
    assert t.vote_weight(99) == 1.0
    t2 = table(plain_majority=True)
    t2.get(2).trust = 0.6
    assert t2.vote_weight(2) == 1.0


def votes(spec):
    return [Vote(v, 9, iso, 1.0) for v, iso in spec]


def test_tally():
    assert tally_votes(votes([(i, True) for i in range(5)]))
    assert not tally_votes(votes([(0, True), (1, True), (2, True), (3, False), (4, False), (5, False)]))
    w = {0: 1.0, 1: 1.0, 2: 0.9, 3: 0.9, 4: 0.1}
    assert not tally_votes(votes([(0, False), (1, False), (2, True), (3, True), (4, True)]), w)


def test_tally_first_vote_counts_and_suspect_excluded():
    vs = votes([(0, False), (0, True), (0, True), (1, True)])
    assert not tally_votes(vs)  # 1 keep vs 1 isolate
    assert not tally_votes(votes([(9, True), (1, False)]), suspect=9)


def test_estimate_hops():
    assert estimate_hops((0, 0), (95, 0), 30) == 4
    assert estimate_hops((0, 0), (90, 0), 30) == 3
    assert estimate_hops((0, 0), (10, 0), 30) == 1
    assert estimate_hops((0, 0), (0, 0), 30) == 1


def test_config_validation():
    with pytest.raises(ValueError):
        TrustConfig(theta_trust=1.0)
    with pytest.raises(ValueError):
        TrustConfig(aging=0.0)
