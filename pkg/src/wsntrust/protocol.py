"""30-byte packet wire format, payload layouts and greedy geographic next-hop choice."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Iterable, Mapping

from .crypto import ExpandedKey, MAC_BYTES, open_sealed, seal

HEADER_BYTES = 8
MAX_PAYLOAD = 14
MAX_PACKET = HEADER_BYTES + MAX_PAYLOAD + MAC_BYTES  # 30
BROADCAST = 0xFFFF
_HEADER = struct.Struct(">HHBHB")


class CodecError(ValueError):
    """Malformed wire bytes (distinct from an authentication failure)."""


class Handler(IntEnum):
    DATA = 1
    ACK = 2
    ALERT = 3
    VOTE = 4
    BEACON = 5
    QUERY = 6
    TRUST_PROBE = 7
    ISOLATION_NOTICE = 8


CONTROL_HANDLERS = frozenset({Handler.ALERT, Handler.VOTE, Handler.BEACON, Handler.TRUST_PROBE,
                              Handler.ISOLATION_NOTICE})


@dataclass(frozen=True)
class Packet:
    src: int
    dst: int
    handler: int
    seq: int
    payload: bytes
    mac: bytes

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD:
            raise CodecError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")
        if len(self.mac) != MAC_BYTES:
            raise CodecError("MAC must be 8 bytes")
        for name in ("src", "dst", "seq"):
            v = getattr(self, name)
            if not 0 <= v <= 0xFFFF:
                raise CodecError(f"{name}={v} does not fit in 2 bytes")
        if not 0 <= self.handler <= 0xFF:
            raise CodecError("handler must fit in 1 byte")

    @property
    def wire_len(self) -> int:
        return HEADER_BYTES + len(self.payload) + MAC_BYTES

    @property
    def key(self) -> tuple[int, int]:
        return self.src, self.seq

    def redirect(self, dst: int) -> "Packet":
        # dst is outside the MAC, so relays may rewrite it
        return replace(self, dst=dst)


def encode(p: Packet) -> bytes:
    return _HEADER.pack(p.src, p.dst, p.handler, p.seq, len(p.payload)) + p.payload + p.mac


def decode(data: bytes) -> Packet:
    if len(data) < HEADER_BYTES + MAC_BYTES:
        raise CodecError(f"truncated packet: {len(data)} bytes")
    if len(data) > MAX_PACKET:
        raise CodecError(f"oversized packet: {len(data)} bytes")
    src, dst, handler, seq, plen = _HEADER.unpack_from(data)
    if plen > MAX_PAYLOAD:
        raise CodecError(f"payload_len {plen} exceeds {MAX_PAYLOAD}")
    if len(data) != HEADER_BYTES + plen + MAC_BYTES:
        raise CodecError(f"payload_len {plen} disagrees with frame length {len(data)}")
    return Packet(src, dst, handler, seq, bytes(data[8:8 + plen]), bytes(data[8 + plen:]))


def seal_packet(ek: ExpandedKey, src: int, dst: int, handler: int, seq: int, payload: bytes) -> Packet:
    if len(payload) > MAX_PAYLOAD:
        raise CodecError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    ct, mac = seal(ek, src, seq, int(handler), payload)
    return Packet(src, dst, int(handler), seq, ct, mac)


def open_packet(ek: ExpandedKey, p: Packet) -> bytes | None:
    """Plaintext payload, or ``None`` on authentication failure."""
    return open_sealed(ek, p.src, p.seq, p.handler, p.payload, p.mac)


# ---------------------------------------------------------------------------
# payload layouts

COORD_SCALE = 10  # decimetres
VALUE_SCALE = 1000


def _coord(v: float) -> int:
    return max(0, min(0xFFFF, int(round(v * COORD_SCALE))))


@dataclass(frozen=True)
class SensorReading:
    value: float
    x: float
    y: float
    sensed_at: int  # truncated seconds
    origin: int

    _fmt = struct.Struct(">iHHHH")

    def pack(self) -> bytes:
        v = max(-2**31, min(2**31 - 1, int(round(self.value * VALUE_SCALE))))
        return self._fmt.pack(v, _coord(self.x), _coord(self.y), self.sensed_at & 0xFFFF, self.origin)

    @classmethod
    def unpack(cls, b: bytes) -> "SensorReading":
        v, x, y, t, o = cls._fmt.unpack(b[:12])
        return cls(v / VALUE_SCALE, x / COORD_SCALE, y / COORD_SCALE, t, o)


@dataclass(frozen=True)
class StatusBeacon:
    x: float
    y: float
    code_digest: int
    self_pdr: float

    _fmt = struct.Struct(">HHIH")

    def pack(self) -> bytes:
        pdr = max(0, min(10000, int(round(self.self_pdr * 10000))))
        return self._fmt.pack(_coord(self.x), _coord(self.y), self.code_digest & 0xFFFFFFFF, pdr)

    @classmethod
    def unpack(cls, b: bytes) -> "StatusBeacon":
        x, y, d, pdr = cls._fmt.unpack(b[:10])
        return cls(x / COORD_SCALE, y / COORD_SCALE, d, pdr / 10000)


ACK_HOP, ACK_E2E = 0, 1


def pack_ack(origin: int, seq: int, kind: int = ACK_HOP) -> bytes:
    return struct.pack(">HHB", origin, seq, kind)


def unpack_ack(b: bytes) -> tuple[int, int, int]:
    return struct.unpack(">HHB", b[:5])


NO_SUSPECT = 0xFFFF


def pack_alert(suspect: int, reason: int, round_no: int) -> bytes:
    return struct.pack(">HBB", suspect, reason, round_no & 0xFF)


def unpack_alert(b: bytes) -> tuple[int, int, int]:
    return struct.unpack(">HBB", b[:4])


VOTE_KEEP, VOTE_ISOLATE = 0, 1


def pack_vote(suspect: int, direction: int, claim: float, initiator: int, round_no: int) -> bytes:
    return struct.pack(">HBBHB", suspect, direction, int(round(max(0.0, min(1.0, claim)) * 255)),
                       initiator, round_no & 0xFF)


def unpack_vote(b: bytes) -> tuple[int, int, float, int, int]:
    suspect, direction, claim, initiator, round_no = struct.unpack(">HBBHB", b[:7])
    return suspect, direction, claim / 255, initiator, round_no


PROBE_REQ, PROBE_CONFIRM, PROBE_NACK = 0, 1, 2


def pack_probe(kind: int, querier: int, probe_id: int, remote: int, x: float, y: float,
               budget: int) -> bytes:
    return struct.pack(">BHHHHHB", kind, querier, probe_id, remote, _coord(x), _coord(y), budget)


def unpack_probe(b: bytes) -> tuple[int, int, int, int, float, float, int]:
    kind, q, pid, remote, x, y, budget = struct.unpack(">BHHHHHB", b[:12])
    return kind, q, pid, remote, x / COORD_SCALE, y / COORD_SCALE, budget


# ---------------------------------------------------------------------------
# routing

def next_hop(self_id: int, self_loc: tuple[float, float], dst_loc: tuple[float, float],
             neighbor_locs: Mapping[int, tuple[float, float]],
             eligible: Iterable[int] | None = None) -> int | None:
    """Greedy geographic forwarding.

    Picks the neighbour strictly closer to ``dst_loc`` than ``self`` with the
    largest progress, lowest id on ties. ``eligible`` restricts candidates
    (trust filtering happens in the caller). ``None`` means a routing void.
    """
    dx, dy = dst_loc
    own = math.hypot(self_loc[0] - dx, self_loc[1] - dy)
    best, best_d = None, own
    ids = neighbor_locs.keys() if eligible is None else eligible
    for j in sorted(ids):
        if j == self_id:
            continue
        x, y = neighbor_locs[j]
        d = math.hypot(x - dx, y - dy)
        if d < best_d:
            best, best_d = j, d
    return best
