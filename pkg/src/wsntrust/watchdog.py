"""Promiscuous monitoring buffer and the misbehaviour rules.

Rules only see what the radio delivered to the observing node plus its own
state, and they judge radio neighbours only (``SELF`` for the delivery-ratio
self check).
"""
from __future__ import annotations

import math
import random
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Hashable, Sequence

SELF = -1


class Rule(str, Enum):
    ACK = "ACK"
    AUTH = "AUTH"
    DATA_VALID = "DATA_VALID"
    TRAFFIC = "TRAFFIC"
    PDR_SELF = "PDR_SELF"
    MEMORY = "MEMORY"
    INSITU = "INSITU"


RULE_CODES = {r: i for i, r in enumerate(Rule, start=1)}
RULES_BY_CODE = {i: r for r, i in RULE_CODES.items()}


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    DIRECT_ZERO = "direct_zero"


@dataclass(frozen=True)
class RuleEvent:
    observer: int
    rule: Rule
    subject: int
    polarity: Polarity
    weight: float
    at: int

    def __post_init__(self):
        direct = self.polarity is Polarity.DIRECT_ZERO
        if direct != (self.rule in (Rule.MEMORY, Rule.INSITU)):
            raise ValueError("direct_zero is reserved for MEMORY and INSITU, which always carry it")
        if self.weight <= 0:
            raise ValueError("RuleEvent weight must be positive")

    def csv_row(self) -> str:
        return f"{self.at},{self.observer},{self.subject},{self.rule.value},{self.polarity.value},{self.weight!r}"


RULE_EVENT_HEADER = "tick,observer,subject,rule,polarity,weight"


@dataclass
class WatchdogConfig:
    p_watch: float = 0.25
    buffer_size: int = 8
    t_ack: int = 80
    # how long a watched copy waits for the forward to be overheard; longer
    # than t_ack so a queued but honest relay is not mistaken for a drop
    t_watch: int = 500
    k_sigma: float = 3.0
    min_neighbors: int = 4
    min_samples: int = 40
    window: int = 10
    delta: float = 0.5
    theta_pdr: float = 0.8
    pdr_min_packets: int = 5
    eps_loc: float = 5.0
    sigma_floor: float = 0.1
    w_ack: float = 1.0
    w_auth: float = 1.0
    w_data: float = 1.0
    w_traffic: float = 1.0
    w_beacon: float = 0.1
    expected_tx_per_epoch: float | None = None
    bystander_watch: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p_watch <= 1.0:
            raise ValueError("p_watch must be in [0, 1]")
        if self.buffer_size < 1 or self.window < 1 or self.min_neighbors < 1:
            raise ValueError("buffer_size, window and min_neighbors must be >= 1")
        if not 0 < self.t_ack <= self.t_watch:
            raise ValueError("need 0 < t_ack <= t_watch")


@dataclass
class WatchEntry:
    digest: Hashable
    forwarder: int
    deadline: int
    own: bool
    resolved: bool = False


class WatchBuffer:
    """Bounded buffer of packets copied for forwarding checks; oldest evicted first."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._entries: OrderedDict[tuple[Hashable, int], WatchEntry] = OrderedDict()
        self.evicted = 0

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, entry: WatchEntry) -> None:
        key = (entry.digest, entry.forwarder)
        self._entries.pop(key, None)
        self._entries[key] = entry
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)
            self.evicted += 1

    def find(self, digest: Hashable, forwarder: int) -> WatchEntry | None:
        return self._entries.get((digest, forwarder))

    def pop(self, digest: Hashable, forwarder: int) -> WatchEntry | None:
        return self._entries.pop((digest, forwarder), None)

    def expire(self, now: int) -> list[WatchEntry]:
        gone = [e for e in self._entries.values() if e.deadline < now]
        for e in gone:
            del self._entries[(e.digest, e.forwarder)]
        return gone

    def entries(self) -> list[WatchEntry]:
        return list(self._entries.values())


def watch(buffer: WatchBuffer, digest: Hashable, forwarder: int, now: int, cfg: WatchdogConfig,
          stream: random.Random, own: bool = True) -> WatchEntry | None:
    """Copy a unicast packet into the buffer with probability ``p_watch``."""
    p = cfg.p_watch
    if p <= 0.0:
        return None
    if p < 1.0 and stream.random() >= p:
        return None
    entry = WatchEntry(digest, forwarder, now + cfg.t_watch, own)
    buffer.add(entry)
    return entry


@dataclass
class NeighborObservation:
    window: int
    readings: deque = field(init=False)
    epoch_readings: list = field(default_factory=list)
    tx_counts: deque = field(init=False)
    tx_this_epoch: int = 0
    forwarded: int = 0
    dropped: int = 0

    def __post_init__(self):
        self.readings = deque(maxlen=self.window)
        self.tx_counts = deque(maxlen=self.window)

    def close_epoch(self) -> None:
        self.readings.extend(self.epoch_readings)
        self.epoch_readings = []
        self.tx_counts.append(self.tx_this_epoch)
        self.tx_this_epoch = 0


# ---------------------------------------------------------------------------
# rules

def resolve_ack(observer: int, next_hop: int, ack_received: bool, overheard_forward: bool,
                now: int, cfg: WatchdogConfig) -> RuleEvent | None:
    """Three-case acknowledgment rule for a packet handed to ``next_hop``."""
    if ack_received:
        return RuleEvent(observer, Rule.ACK, next_hop, Polarity.POSITIVE, cfg.w_ack, now)
    if overheard_forward:
        return None
    return RuleEvent(observer, Rule.ACK, next_hop, Polarity.NEGATIVE, cfg.w_ack, now)


def check_auth(observer: int, transmitter: int, verified: bool, hop_wise: bool, now: int,
               cfg: WatchdogConfig) -> RuleEvent | None:
    """Only hop-wise failures blame a neighbour; end-to-end ones are just counted."""
    if verified or not hop_wise:
        return None
    return RuleEvent(observer, Rule.AUTH, transmitter, Polarity.NEGATIVE, cfg.w_auth, now)


class PoolSummary:
    """Per-neighbour sums of windowed readings, for leave-one-out statistics."""

    def __init__(self, windows: dict[int, Sequence[float]]):
        self.parts = {}
        n = s = s2 = 0.0
        contributors = 0
        for j, vals in windows.items():
            if not vals:
                continue
            cj = len(vals)
            sj = math.fsum(vals)
            s2j = math.fsum(v * v for v in vals)
            self.parts[j] = (cj, sj, s2j)
            n += cj
            s += sj
            s2 += s2j
            contributors += 1
        self.total = (n, s, s2)
        self.contributors = contributors

    def excluding(self, subject: int, cfg: WatchdogConfig) -> tuple[float, float] | None:
        n, s, s2 = self.total
        contributors = self.contributors
        part = self.parts.get(subject)
        if part is not None:
            n, s, s2 = n - part[0], s - part[1], s2 - part[2]
            contributors -= 1
        n = int(round(n))
        if contributors < cfg.min_neighbors or n < max(cfg.min_neighbors, cfg.min_samples, 2):
            return None
        mu = s / n
        var = max(0.0, (s2 - s * mu) / (n - 1))
        return mu, math.sqrt(var)


def pool_stats(others: dict[int, Sequence[float]], subject: int,
               cfg: WatchdogConfig) -> tuple[float, float] | None:
    """Mean and sample std of the other neighbours' readings, or None if too thin."""
    return PoolSummary({j: v for j, v in others.items() if j != subject}).excluding(subject, cfg)


def judge_readings(observer: int, subject: int, values: Sequence[float],
                   others: dict[int, Sequence[float]] | PoolSummary, sigma_field: float, now: int,
                   cfg: WatchdogConfig) -> RuleEvent | None:
    """One verdict for a batch of readings: negative if any falls outside k sigma.

    ``others`` may be a prebuilt :class:`PoolSummary` of the whole
    neighbourhood; the subject's own readings are left out either way.
    """
    if not values:
        return None
    if isinstance(others, PoolSummary):
        stats = others.excluding(subject, cfg)
    else:
        stats = pool_stats(others, subject, cfg)
    if stats is None:
        return None
    mu, sd = stats
    bound = cfg.k_sigma * max(sd, cfg.sigma_floor * sigma_field)
    if any(abs(v - mu) > bound for v in values):
        return RuleEvent(observer, Rule.DATA_VALID, subject, Polarity.NEGATIVE, cfg.w_data, now)
    return RuleEvent(observer, Rule.DATA_VALID, subject, Polarity.POSITIVE, 1.0, now)


def validate_reading(observer: int, subject: int, value: float,
                     others: dict[int, Sequence[float]], sigma_field: float, now: int,
                     cfg: WatchdogConfig) -> RuleEvent | None:
    """z-test of ``value`` against the other neighbours' windowed readings."""
    return judge_readings(observer, subject, [value], others, sigma_field, now, cfg)


def audit_traffic(observer: int, subject: int, observed: int, expected: float, now: int,
                  cfg: WatchdogConfig) -> RuleEvent:
    if observed > expected * (1.0 + cfg.delta):
        return RuleEvent(observer, Rule.TRAFFIC, subject, Polarity.NEGATIVE, cfg.w_traffic, now)
    return RuleEvent(observer, Rule.TRAFFIC, subject, Polarity.POSITIVE, 1.0, now)


def self_delivery_check(observer: int, sent: int, delivered: int, now: int,
                        cfg: WatchdogConfig) -> RuleEvent | None:
    """Self-evaluation; a returned event means "raise the jamming alarm"."""
    if sent < cfg.pdr_min_packets:
        return None
    if delivered / sent < cfg.theta_pdr:
        return RuleEvent(observer, Rule.PDR_SELF, SELF, Polarity.NEGATIVE, 1.0, now)
    return None


def check_beacon(observer: int, subject: int, prev_loc: tuple[float, float], prev_digest: int,
                 loc: tuple[float, float], digest: int, now: int,
                 cfg: WatchdogConfig) -> RuleEvent:
    if digest != prev_digest:
        return RuleEvent(observer, Rule.MEMORY, subject, Polarity.DIRECT_ZERO, 1.0, now)
    if math.hypot(loc[0] - prev_loc[0], loc[1] - prev_loc[1]) > cfg.eps_loc:
        return RuleEvent(observer, Rule.INSITU, subject, Polarity.DIRECT_ZERO, 1.0, now)
    # MEMORY/INSITU only ever carry direct_zero, so a consistent beacon is
    # booked as on-schedule traffic
    return RuleEvent(observer, Rule.TRAFFIC, subject, Polarity.POSITIVE, cfg.w_beacon, now)
