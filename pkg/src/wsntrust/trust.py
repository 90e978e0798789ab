"""Per-node reputation store, trust formula, vote tallying and hop estimation.

Trust is ``(p + 1) / (p + n + 1)``: a fresh record (no evidence) has trust
exactly 1 and the value tends to ``p / (p + n)`` as evidence accumulates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .watchdog import Polarity, Rule, RuleEvent


class Status(str, Enum):
    ACTIVE = "active"
    SUSPECTED = "suspected"
    ISOLATED = "isolated"


class LocalityError(ValueError):
    """Evidence about a node that is not a radio neighbour of the observer."""


def trust_value(p: float, n: float) -> float:
    return (p + 1.0) / (p + n + 1.0)


@dataclass
class TrustConfig:
    theta_trust: float = 0.25
    aging: float = 0.9
    vote_window: int = 2000
    activity_weights: dict[Rule, float] = field(default_factory=lambda: {r: 1.0 for r in Rule})
    plain_majority: bool = False
    theta_route: float | None = None
    probe_slack: int = 2

    def __post_init__(self):
        if not 0.0 < self.theta_trust < 1.0:
            raise ValueError("theta_trust must lie in (0, 1)")
        if not 0.0 < self.aging <= 1.0:
            raise ValueError("aging factor must lie in (0, 1]")
        if self.vote_window <= 0:
            raise ValueError("vote_window must be positive")
        if self.probe_slack < 0:
            raise ValueError("probe_slack must be >= 0")

    @property
    def route_floor(self) -> float:
        return self.theta_trust if self.theta_route is None else self.theta_route


@dataclass
class ReputationRecord:
    p: float = 0.0
    n: float = 0.0
    trust: float = 1.0
    status: Status = Status.ACTIVE
    alerted: bool = False
    isolated_at: int | None = None
    # evidence gathered during the current epoch, folded in at the boundary
    dp: float = 0.0
    dn: float = 0.0


def init_record() -> ReputationRecord:
    return ReputationRecord()


class TrustTable:
    """Localised store: one record per radio neighbour of ``owner``.

    Counters change only through :meth:`record_event` (with a RuleEvent the
    owner generated itself) and :meth:`close_epoch`; votes, alerts and notices
    never touch them. Ordinary evidence is buffered and takes effect at the
    next epoch boundary, so trust is constant within an epoch; direct-zero
    evidence acts at once.
    """

    def __init__(self, owner: int, neighbors: Iterable[int], config: TrustConfig):
        self.owner = owner
        self.config = config
        self.records: dict[int, ReputationRecord] = {j: init_record() for j in sorted(neighbors)}

    def get(self, subject: int) -> ReputationRecord | None:
        return self.records.get(subject)

    def trust(self, subject: int) -> float:
        rec = self.records.get(subject)
        return 1.0 if rec is None else rec.trust

    def is_isolated(self, subject: int) -> bool:
        rec = self.records.get(subject)
        return rec is not None and rec.status is Status.ISOLATED

    def add_neighbor(self, subject: int) -> ReputationRecord:
        rec = self.records.get(subject)
        if rec is None:
            rec = self.records[subject] = init_record()
        return rec

    def record_event(self, ev: RuleEvent, neighbors: frozenset[int] | set[int]) -> ReputationRecord | None:
        """Apply one locally observed RuleEvent; returns the record, or None if ignored."""
        if ev.observer != self.owner:
            raise ValueError("a table only accepts events its owner observed")
        if ev.subject not in neighbors:
            raise LocalityError(f"node {self.owner} cannot judge non-neighbour {ev.subject}")
        rec = self.add_neighbor(ev.subject)
        if rec.status is Status.ISOLATED:
            return None
        if ev.polarity is Polarity.DIRECT_ZERO:
            rec.trust = 0.0
            rec.status = Status.ISOLATED
            rec.isolated_at = ev.at
            rec.dp = rec.dn = 0.0
            return rec
        if ev.polarity is Polarity.POSITIVE:
            rec.dp += ev.weight * self.config.activity_weights.get(ev.rule, 1.0)
        else:
            rec.dn += ev.weight
        return rec

    def close_epoch(self) -> None:
        """Epoch boundary: age the counters, fold in the epoch's evidence, recompute trust.

        Isolated records are frozen. Suspected records are not aged and gain
        no positive evidence (no redemption once below threshold).
        """
        lam = self.config.aging
        for rec in self.records.values():
            if rec.status is Status.ISOLATED:
                continue
            if rec.status is Status.ACTIVE:
                if lam != 1.0:
                    rec.p *= lam
                    rec.n *= lam
                rec.p += rec.dp
            rec.n += rec.dn
            rec.dp = rec.dn = 0.0
            rec.trust = trust_value(rec.p, rec.n)

    def evaluate(self, subject: int) -> bool:
        """Mark a sub-threshold neighbour suspected; True means raise an alert.

        One alert per suspicion episode; an episode ends when the alert's own
        vote round keeps the suspect (:meth:`end_episode`), after which a node
        still below threshold alerts again.
        """
        rec = self.records.get(subject)
        if rec is None or rec.status is Status.ISOLATED:
            return False
        if rec.trust < self.config.theta_trust:
            rec.status = Status.SUSPECTED
            if not rec.alerted:
                rec.alerted = True
                return True
        return False

    def end_episode(self, subject: int) -> None:
        rec = self.records.get(subject)
        if rec is not None and rec.status is Status.SUSPECTED:
            rec.alerted = False

    def wants_isolation(self, subject: int) -> bool:
        rec = self.records.get(subject)
        if rec is None:
            return False
        return rec.status is Status.ISOLATED or rec.trust < self.config.theta_trust

    def isolate(self, subject: int, at: int) -> bool:
        """Absorbing transition; returns False if it was already isolated."""
        rec = self.add_neighbor(subject)
        if rec.status is Status.ISOLATED:
            return False
        rec.status = Status.ISOLATED
        rec.isolated_at = at
        rec.dp = rec.dn = 0.0
        return True

    def routable(self, subject: int) -> bool:
        rec = self.records.get(subject)
        if rec is None:
            return True
        return rec.status is not Status.ISOLATED and rec.trust >= self.config.route_floor

    def vote_weight(self, voter: int) -> float:
        if self.config.plain_majority:
            return 0.0 if self.is_isolated(voter) else 1.0
        rec = self.records.get(voter)
        if rec is None:
            return 1.0
        return 0.0 if rec.status is Status.ISOLATED else rec.trust


@dataclass(frozen=True)
class Vote:
    voter: int
    suspect: int
    isolate: bool
    voter_trust_claim: float


@dataclass(frozen=True)
class AlertMsg:
    suspect: int
    reason: Rule
    issuer: int


def tally_votes(votes: Iterable[Vote], weights: Mapping[int, float] | None = None,
                suspect: int | None = None) -> bool:
    """Reputation-weighted majority; True means isolate.

    The first vote per voter counts, the suspect's own vote is dropped, and a
    tie keeps the suspect.
    """
    seen: set[int] = set()
    w_iso = w_keep = 0.0
    for v in votes:
        if v.voter in seen or (suspect is not None and v.voter == suspect):
            continue
        seen.add(v.voter)
        w = 1.0 if weights is None else weights.get(v.voter, 1.0)
        if v.isolate:
            w_iso += w
        else:
            w_keep += w
    return w_iso > w_keep


def estimate_hops(querier_loc: tuple[float, float], remote_loc: tuple[float, float],
                  radio_range: float) -> int:
    d = math.hypot(querier_loc[0] - remote_loc[0], querier_loc[1] - remote_loc[1])
    return max(1, math.ceil(d / radio_range - 1e-12))
