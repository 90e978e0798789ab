"""Behaviour overrides for compromised and faulty nodes."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, fields
from enum import Enum


class ScheduleError(ValueError):
    pass


class Action(str, Enum):
    FORWARD = "forward"
    DROP = "drop"
    ALTER = "alter"
    DELAY = "delay"
    REPLAY = "replay"


class CollusionMode(str, Enum):
    BAD_MOUTH = "bad_mouth"
    FALSE_PRAISE = "false_praise"


# named in the taxonomy but not simulated (need identity/out-of-band machinery)
UNSIMULATED_ATTACKS = ("wormhole", "hello_flood", "sybil", "node_replication")


def _check_rate(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ScheduleError(f"{name}={v} must lie in [0, 1]")


@dataclass(frozen=True)
class AttackProfile:
    drop_rate: float = 0.0
    delay_ticks: int = 0
    alter_rate: float = 0.0
    replay_rate: float = 0.0
    sinkhole: bool = False
    jam_rate: float = 0.0
    data_bias: float = 0.0
    data_sigma: float = 0.0
    bogus_query_rate: float = 0.0
    byzantine_duty: float = 0.0
    relocate: tuple[float, float] | None = None
    code_delta: bool = False
    collusion_group: int | None = None

    def __post_init__(self):
        for name in ("drop_rate", "alter_rate", "replay_rate", "jam_rate", "bogus_query_rate",
                     "byzantine_duty"):
            _check_rate(name, getattr(self, name))
        if self.delay_ticks < 0 or self.data_sigma < 0:
            raise ScheduleError("delay_ticks and data_sigma must be >= 0")

    @property
    def is_honest(self) -> bool:
        return self == AttackProfile()


class FaultPattern(str, Enum):
    PERSISTENT = "persistent"
    TRANSIENT = "transient"
    PROBABILISTIC = "probabilistic"


@dataclass(frozen=True)
class FaultProfile:
    alter_rate: float = 0.0
    broadcast_rate: float = 0.0
    sense_error_sigma: float = 0.0
    drop_rate: float = 0.0
    pattern: FaultPattern = FaultPattern.PERSISTENT
    duration_ticks: int = 0       # transient: how long the fault lasts
    active_prob: float = 1.0      # probabilistic: chance a given epoch is faulty

    def __post_init__(self):
        for name in ("alter_rate", "broadcast_rate", "drop_rate", "active_prob"):
            _check_rate(name, getattr(self, name))
        if self.sense_error_sigma < 0:
            raise ScheduleError("sense_error_sigma must be >= 0")


@dataclass(frozen=True)
class ScheduleEntry:
    node: int
    profile: AttackProfile | FaultProfile
    activate_at: int


@dataclass
class CompromiseSchedule:
    entries: list[ScheduleEntry] = field(default_factory=list)

    def validate(self, node_count: int, sink: int = 0) -> None:
        seen = set()
        for e in self.entries:
            if e.activate_at <= 0:
                raise ScheduleError(
                    f"node {e.node}: activation at {e.activate_at}; nothing may be compromised at bootstrap")
            if e.node == sink:
                raise ScheduleError("the sink is trusted infrastructure and cannot be compromised")
            if not 0 <= e.node < node_count:
                raise ScheduleError(f"node {e.node} is not deployed (node count {node_count})")
            if e.node in seen:
                raise ScheduleError(f"node {e.node} appears twice in the compromise schedule")
            seen.add(e.node)


def misbehaving_epoch(duty_honest: float, epoch: int) -> bool:
    """True when ``epoch`` is a misbehaving one for a Byzantine duty cycle.

    ``duty_honest`` is the fraction of epochs spent honest, spread evenly
    (0.5 alternates honest/misbehaving).
    """
    if duty_honest <= 0.0:
        return True
    if duty_honest >= 1.0:
        return False
    honest = math.floor((epoch + 1) * duty_honest) - math.floor(epoch * duty_honest)
    return honest == 0


def misbehave_forward(profile: AttackProfile | FaultProfile, stream: random.Random,
                      has_history: bool = True) -> Action:
    """Sample a relay action; precedence drop > alter > delay > replay > forward."""
    if profile.drop_rate > 0.0 and stream.random() < profile.drop_rate:
        return Action.DROP
    if profile.alter_rate > 0.0 and stream.random() < profile.alter_rate:
        return Action.ALTER
    if getattr(profile, "delay_ticks", 0) > 0:
        return Action.DELAY
    rr = getattr(profile, "replay_rate", 0.0)
    if rr > 0.0 and has_history and stream.random() < rr:
        return Action.REPLAY
    return Action.FORWARD


def fabricate_reading(profile: AttackProfile, true_value: float, stream: random.Random) -> float:
    value = true_value + profile.data_bias
    if profile.data_sigma > 0.0:
        value += stream.gauss(0.0, profile.data_sigma)
    return value


def cast_colluding_vote(mode: CollusionMode) -> bool:
    """A colluder's vote ignores evidence: True (isolate) when bad-mouthing."""
    return mode is CollusionMode.BAD_MOUTH


def flip_bit(data: bytes, stream: random.Random) -> bytes:
    if not data:
        return data
    pos = stream.randrange(len(data) * 8)
    b = bytearray(data)
    b[pos // 8] ^= 1 << (pos % 8)
    return bytes(b)


def profile_fields(cls) -> list[str]:
    return [f.name for f in fields(cls)]
