"""Discrete-event engine: integer clock, (fire_at, seq) ordered queue, split random streams."""
from __future__ import annotations

import hashlib
import heapq
import random
from enum import Enum
from typing import Any, Callable, Hashable


class ClockViolation(ValueError):
    """Raised when an event is scheduled before the current clock."""


class EventKind(str, Enum):
    TX_START = "transmission-start"
    DELIVERY = "delivery"
    ACK_TIMEOUT = "ack-timeout"
    WATCH_TIMEOUT = "watch-timeout"
    BEACON_TICK = "beacon-tick"
    SENSING_TICK = "sensing-tick"
    EPOCH_TICK = "epoch-tick"
    VOTE_DEADLINE = "vote-deadline"
    ACTIVATION = "activation"
    JAM_TICK = "jam-tick"
    QUERY_TICK = "query-tick"
    PROBE_TIMEOUT = "probe-timeout"
    CUSTOM = "custom"


class SimEvent:
    __slots__ = ("fire_at", "seq", "kind", "subject", "action", "args", "cancelled")

    def __init__(self, fire_at: int, seq: int, kind: EventKind, subject: Any,
                 action: Callable[..., Any] | None, args: tuple):
        self.fire_at = fire_at
        self.seq = seq
        self.kind = kind
        self.subject = subject
        self.action = action
        self.args = args
        self.cancelled = False

    def __repr__(self) -> str:
        return f"SimEvent({self.fire_at}, {self.seq}, {self.kind.value}, {self.subject})"


def derive_seed(master_seed: int, label: Hashable) -> int:
    """Stable 64-bit seed for ``label`` under ``master_seed`` (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(f"{master_seed}/{label!r}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Simulator:
    """Single-threaded event loop with 1 ms ticks.

    Events fire in strict ``(fire_at, seq)`` order, where ``seq`` is a global
    insertion counter, so same-tick events keep insertion order.
    """

    def __init__(self, seed: int = 0, trace: bool = False):
        self.now = 0
        self.seed = seed
        self._queue: list[tuple[int, int, SimEvent]] = []
        self._seq = 0
        self._streams: dict[Hashable, random.Random] = {}
        self.dispatched = 0
        self.trace: list[str] | None = [] if trace else None

    def schedule(self, fire_at: int, kind: EventKind, action: Callable[..., Any] | None = None,
                 *args: Any, subject: Any = "-") -> SimEvent:
        if fire_at < self.now:
            raise ClockViolation(f"cannot schedule at {fire_at}, clock is {self.now}")
        ev = SimEvent(int(fire_at), self._seq, kind, subject, action, args)
        self._seq += 1
        heapq.heappush(self._queue, (ev.fire_at, ev.seq, ev))
        return ev

    def after(self, delay: int, kind: EventKind, action: Callable[..., Any] | None = None,
              *args: Any, subject: Any = "-") -> SimEvent:
        return self.schedule(self.now + delay, kind, action, *args, subject=subject)

    @staticmethod
    def cancel(handle: SimEvent | None) -> None:
        if handle is not None:
            handle.cancelled = True

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def run_until(self, t: int) -> int:
        """Dispatch every event with ``fire_at <= t``; leaves the clock at ``t``."""
        if t < self.now:
            raise ClockViolation(f"run_until({t}) is behind the clock ({self.now})")
        queue = self._queue
        trace = self.trace
        count = 0
        while queue and queue[0][0] <= t:
            fire_at, seq, ev = heapq.heappop(queue)
            if ev.cancelled:
                continue
            self.now = fire_at
            if trace is not None:
                trace.append(f"{fire_at},{seq},{ev.kind.value},{ev.subject}")
            if ev.action is not None:
                ev.action(*ev.args)
            count += 1
        self.now = t
        self.dispatched += count
        return count

    def stream_for(self, stream_id: Hashable) -> random.Random:
        """Per-entity generator seeded from (master seed, stream id); idempotent lookup."""
        stream = self._streams.get(stream_id)
        if stream is None:
            stream = random.Random(derive_seed(self.seed, stream_id))
            self._streams[stream_id] = stream
        return stream

    def trace_text(self) -> str:
        if self.trace is None:
            return ""
        return "tick,seq,kind,subject\n" + "".join(line + "\n" for line in self.trace)
