"""Static deployment, unit-disk connectivity and the shared broadcast medium."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

AIRTIME_30B = 24  # ticks for a 30-byte frame at 10 kbit/s


def airtime(nbytes: int, bandwidth_bps: int = 10_000) -> int:
    """Ticks (ms) to clock ``nbytes`` onto the air."""
    return max(1, math.ceil(nbytes * 8 * 1000 / bandwidth_bps))


@dataclass
class Topology:
    positions: dict[int, tuple[float, float]]
    radio_range: float
    field_w: float
    field_h: float
    _nbrs: dict[int, frozenset[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for i, (x, y) in self.positions.items():
            if not (0 <= x <= self.field_w and 0 <= y <= self.field_h):
                raise ValueError(f"node {i} at ({x}, {y}) lies outside the field")
        self._rebuild()

    def _rebuild(self) -> None:
        ids = sorted(self.positions)
        if not ids:
            self._nbrs = {}
            return
        pts = np.array([self.positions[i] for i in ids], dtype=float)
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        adj = d2 <= self.radio_range ** 2  # closed boundary
        np.fill_diagonal(adj, False)
        self._nbrs = {i: frozenset(ids[k] for k in np.flatnonzero(adj[row]))
                      for row, i in enumerate(ids)}

    def neighbors(self, node_id: int) -> frozenset[int]:
        try:
            return self._nbrs[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id}") from None

    def distance(self, a: int, b: int) -> float:
        (xa, ya), (xb, yb) = self.positions[a], self.positions[b]
        return math.hypot(xa - xb, ya - yb)

    def move(self, node_id: int, loc: tuple[float, float]) -> None:
        """Relocate one node (attack models only) and refresh connectivity."""
        x = min(max(loc[0], 0.0), self.field_w)
        y = min(max(loc[1], 0.0), self.field_h)
        self.positions[node_id] = (x, y)
        self._rebuild()

    def in_field(self, loc: tuple[float, float]) -> bool:
        return 0 <= loc[0] <= self.field_w and 0 <= loc[1] <= self.field_h

    def mean_degree(self) -> float:
        return sum(len(v) for v in self._nbrs.values()) / max(1, len(self._nbrs))

    def dumps(self) -> str:
        return "".join(f"{i},{x!r},{y!r}\n" for i, (x, y) in sorted(self.positions.items()))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str, radio_range: float, field_w: float, field_h: float) -> "Topology":
        positions = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected node_id,x,y")
            positions[int(parts[0])] = (float(parts[1]), float(parts[2]))
        return cls(positions, radio_range, field_w, field_h)

    @classmethod
    def load(cls, path: str | Path, radio_range: float, field_w: float, field_h: float) -> "Topology":
        return cls.loads(Path(path).read_text(), radio_range, field_w, field_h)


def place_uniform(n: int, field_w: float, field_h: float, stream: random.Random,
                  radio_range: float = 50.0,
                  region: tuple[float, float, float, float] | None = None,
                  ids: Iterable[int] | None = None) -> Topology:
    """``n`` independent uniform positions inside ``region`` (default: the whole field)."""
    if n < 1 or field_w <= 0 or field_h <= 0:
        raise ValueError("need n >= 1 and positive field dimensions")
    x0, y0, x1, y1 = region if region is not None else (0.0, 0.0, field_w, field_h)
    ids = list(range(n)) if ids is None else list(ids)
    positions = {i: (stream.uniform(x0, x1), stream.uniform(y0, y1)) for i in ids}
    return Topology(positions, radio_range, field_w, field_h)


@dataclass(frozen=True)
class ChannelModel:
    loss_prob: float = 0.0
    collision_window: int = AIRTIME_30B
    bandwidth_bps: int = 10_000

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.collision_window < 0:
            raise ValueError("collision_window must be >= 0")


class Frame:
    """One transmission on the air. ``packet`` is None for jamming bursts."""
    __slots__ = ("sender", "packet", "nbytes", "start", "end", "collided", "receivers")

    def __init__(self, sender: int, packet, nbytes: int, start: int, end: int):
        self.sender = sender
        self.packet = packet
        self.nbytes = nbytes
        self.start = start
        self.end = end
        self.collided: set[int] | None = None
        self.receivers: tuple[int, ...] = ()


class Medium:
    """Unit-disk broadcast channel with per-receiver loss and overlap collisions.

    Every neighbour of the sender (addressee or not) gets the same treatment;
    two frames that overlap in time at a common receiver and whose starts are
    closer than the collision window destroy each other there (no capture).
    A frame starting the tick another ends does not collide with it.
    """

    def __init__(self, topology: Topology, channel: ChannelModel):
        self.topology = topology
        self.channel = channel
        self._recent: dict[int, list[Frame]] = {}
        self.busy_until: dict[int, int] = {}

    def start(self, sender: int, packet, nbytes: int, now: int) -> Frame:
        end = now + airtime(nbytes, self.channel.bandwidth_bps)
        frame = Frame(sender, packet, nbytes, now, end)
        receivers = tuple(sorted(self.topology.neighbors(sender)))
        frame.receivers = receivers
        window = self.channel.collision_window
        busy = self.busy_until
        for r in receivers:
            if busy.get(r, 0) < end:
                busy[r] = end
            if window > 0:
                recent = self._recent.setdefault(r, [])
                keep = []
                for other in recent:
                    if now - other.start < window:
                        keep.append(other)
                        if other.sender != sender and now < other.end:
                            other.collided = (other.collided or set()) | {r}
                            frame.collided = (frame.collided or set()) | {r}
                keep.append(frame)
                self._recent[r] = keep
        return frame

    def outcomes(self, frame: Frame, streams) -> list[int]:
        """Receivers that decode ``frame``; loss draws come from ``streams(r)``."""
        loss = self.channel.loss_prob
        out = []
        collided = frame.collided
        for r in frame.receivers:
            if collided is not None and r in collided:
                continue
            if loss > 0.0 and streams(r).random() < loss:
                continue
            out.append(r)
        return out

    def is_busy(self, node: int, now: int) -> bool:
        return self.busy_until.get(node, 0) > now
