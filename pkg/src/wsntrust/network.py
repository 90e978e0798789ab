"""The simulated network: per-node protocol state machines over one shared medium.

A :class:`World` owns the simulator, the topology, the medium and every
node.  Everything a node learns arrives through frames the medium delivered
to it; rule evidence is produced locally and only ever fed to the observing
node's own :class:`~wsntrust.trust.TrustTable`.
"""
from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass, field

from . import protocol as proto
from .adversary import (Action, AttackProfile, CollusionMode, FaultPattern, FaultProfile,
                        cast_colluding_vote, fabricate_reading, flip_bit, misbehave_forward,
                        misbehaving_epoch)
from .crypto import expand_key
from .protocol import BROADCAST, Handler, Packet
from .scenario import Scenario
from .sim import EventKind, Simulator
from .topology import Frame, Medium, Topology, airtime, place_uniform
from .trust import Status, TrustTable, Vote, estimate_hops, tally_votes
from .watchdog import (SELF, NeighborObservation, PoolSummary, Polarity, Rule, RuleEvent, WatchBuffer,
                       WatchEntry, audit_traffic, check_auth, check_beacon, resolve_ack,
                       judge_readings, self_delivery_check, watch)

SEEN_WINDOW = 32
HISTORY = 8
CODE_DIGEST = 0x5EED_C0DE
ROUND_QUIET = 4  # vote windows during which a tallied round key stays closed
PROBE_HOP_ALLOWANCE = 250  # ticks per hop, each way
CONTROL = frozenset({Handler.ALERT, Handler.VOTE, Handler.BEACON, Handler.TRUST_PROBE,
                     Handler.ISOLATION_NOTICE})


class ProbeResult:
    TRUSTED = "trusted"
    UNTRUSTED = "untrusted"
    UNDECIDED = "undecided"


@dataclass
class Round:
    suspect: int
    initiator: int
    round_no: int
    votes: list = field(default_factory=list)
    deadline: object = None


@dataclass
class Probe:
    probe_id: int
    remote: int
    remote_loc: tuple[float, float]
    budget: int
    started: int
    attempts: int = 1
    timer: object = None
    result: str | None = None


class Node:
    __slots__ = ("id", "is_sink", "ek", "seq", "table", "wbuf", "obs", "beacons", "nbr_locs",
                 "pending", "seen", "seen_set", "history", "profile", "active_from", "queue",
                 "tx_busy", "epoch_sent", "prev_sent", "e2e_acked", "rounds", "isolated_notice",
                 "probe_reverse", "probes", "next_round", "next_probe", "closed_rounds",
                 "relayed_votes", "pdr")

    def __init__(self, nid: int, is_sink: bool, ek):
        self.id = nid
        self.is_sink = is_sink
        self.ek = ek
        self.seq = 0
        self.table: TrustTable | None = None
        self.wbuf: WatchBuffer | None = None
        self.obs: dict[int, NeighborObservation] = {}
        self.beacons: dict[int, tuple[tuple[float, float], int]] = {}
        self.nbr_locs: dict[int, tuple[float, float]] = {}
        self.pending: dict[tuple[int, int], list] = {}
        self.seen: deque = deque()
        self.seen_set: set = set()
        self.history: deque = deque(maxlen=HISTORY)
        self.profile: AttackProfile | FaultProfile | None = None
        self.active_from: int | None = None
        self.queue: deque = deque()
        self.tx_busy = False
        self.epoch_sent: set = set()
        self.prev_sent: set = set()
        self.e2e_acked: set = set()
        self.rounds: dict[tuple[int, int, int], Round] = {}
        self.isolated_notice: set = set()
        self.probe_reverse: dict[tuple[int, int], int] = {}
        self.probes: dict[int, Probe] = {}
        self.next_round = 0
        self.next_probe = 0
        self.closed_rounds: dict[tuple[int, int, int], int] = {}
        self.relayed_votes: set = set()
        self.pdr = 1.0

    def next_seq(self) -> int:
        self.seq = (self.seq + 1) & 0xFFFF
        return self.seq


@dataclass
class Counters:
    generated: int = 0
    generated_counted: int = 0
    delivered: int = 0
    delivered_counted: int = 0
    routing_voids: int = 0
    e2e_auth_failures: int = 0
    hop_auth_failures: int = 0
    bytes_total: int = 0
    bytes_control: int = 0
    frames: int = 0
    jam_frames: int = 0
    alerts: int = 0
    vote_rounds: int = 0
    pdr_alarms: int = 0
    notices: int = 0
    dropped_isolated: int = 0
    duplicates: int = 0


def node_key(seed: int, nid: int) -> bytes:
    return hashlib.sha256(f"{seed}/node-key/{nid}".encode()).digest()[:16]


def build_topology(sc: Scenario, seed: int) -> Topology:
    stream = Simulator(seed).stream_for("placement")
    free = [i for i in range(sc.node_count) if i not in sc.positions]
    topo = place_uniform(max(1, len(free)), sc.field_w, sc.field_h, stream, sc.radio_range,
                         region=sc.region, ids=free or [0])
    positions = {i: topo.positions[i] for i in free}
    positions.update(sc.positions)
    return Topology(dict(sorted(positions.items())), sc.radio_range, sc.field_w, sc.field_h)


class World:
    """One replica: ``World(scenario, seed).run()`` executes the whole scenario."""

    def __init__(self, sc: Scenario, seed: int | None = None, trace: bool = False,
                 topology: Topology | None = None):
        self.sc = sc
        self.seed = sc.seed if seed is None else seed
        self.sim = Simulator(self.seed, trace=trace)
        self.topo = topology if topology is not None else build_topology(sc, self.seed)
        self.true_pos = dict(self.topo.positions)
        self.medium = Medium(self.topo, sc.channel)
        self.wd = sc.watchdog
        self.tc = sc.trust
        self.sink = sc.sink
        self.counters = Counters()
        self.rule_log: list[RuleEvent] = []
        self.trajectory: list[tuple] = []
        self.isolations: list[tuple[int, int, int, str]] = []  # (tick, observer, subject, how)
        self.pdr_alarm_log: list[tuple[int, int]] = []
        self.epoch = 0
        self.expected_tx = sc.expected_tx_per_epoch
        self.nodes: dict[int, Node] = {}
        for i in sorted(self.topo.positions):
            n = Node(i, i == self.sink, expand_key(node_key(self.seed, i), sc.rounds))
            self.nodes[i] = n
        # bootstrap: keys, neighbour tables and neighbour positions (localisation)
        self.keys = {i: n.ek for i, n in self.nodes.items()}
        for i, n in self.nodes.items():
            nbrs = self.topo.neighbors(i)
            n.nbr_locs = {j: self.true_pos[j] for j in nbrs}
            if not n.is_sink:
                n.table = TrustTable(i, [j for j in nbrs if j != self.sink], self.tc)
                n.wbuf = WatchBuffer(self.wd.buffer_size)
                n.obs = {j: NeighborObservation(self.wd.window) for j in nbrs if j != self.sink}
        self._collusion_of: dict[int, object] = {}
        for g in sc.collusion.values():
            for m in g.members:
                self._collusion_of[m] = g
        self._uniform_half = math.sqrt(3.0) * sc.sigma_field
        self._started = False
        self._counted: set = set()
        self._loss_stream = lambda r: self.sim.stream_for(("loss", r))

    # ------------------------------------------------------------------ helpers
    def stream(self, kind: str, nid: int):
        return self.sim.stream_for((kind, nid))

    def neighbors(self, nid: int) -> frozenset[int]:
        return self.topo.neighbors(nid)

    def compromised(self, n: Node) -> bool:
        return n.profile is not None and n.active_from is not None and self.sim.now >= n.active_from

    def misbehaving(self, n: Node) -> bool:
        if not self.compromised(n):
            return False
        p = n.profile
        if isinstance(p, AttackProfile):
            if p.byzantine_duty > 0.0:
                ep = (self.sim.now - n.active_from) // self.sc.epoch_len
                return misbehaving_epoch(p.byzantine_duty, ep)
            return True
        if p.pattern is FaultPattern.TRANSIENT:
            return self.sim.now < n.active_from + p.duration_ticks
        if p.pattern is FaultPattern.PROBABILISTIC:
            ep = (self.sim.now - n.active_from) // self.sc.epoch_len
            r = self.sim.stream_for(("fault-epoch", n.id, ep)).random()
            return r < p.active_prob
        return True

    def emit(self, n: Node, ev: RuleEvent | None) -> None:
        """Feed one locally generated RuleEvent into the observer's own table."""
        if ev is None or n.table is None:
            return
        if ev.subject == SELF:
            self.rule_log.append(ev)
            return
        if ev.subject == self.sink:
            return
        nbrs = self.topo._nbrs[n.id]
        if ev.subject not in nbrs:
            return
        self.rule_log.append(ev)
        before = n.table.get(ev.subject)
        was_isolated = before is not None and before.status is Status.ISOLATED
        rec = n.table.record_event(ev, nbrs)
        if rec is not None and ev.polarity is Polarity.DIRECT_ZERO and not was_isolated:
            self._on_isolated(n, ev.subject, "direct_zero")

    def _on_isolated(self, n: Node, suspect: int, how: str) -> None:
        self.isolations.append((self.sim.now, n.id, suspect, how))
        if suspect not in n.isolated_notice:
            n.isolated_notice.add(suspect)
            self.counters.notices += 1
            self.send(n, BROADCAST, Handler.ISOLATION_NOTICE, proto.pack_alert(suspect, 0, 0))

    def eligible_hops(self, n: Node) -> list[int]:
        t = n.table
        if t is None:
            return list(n.nbr_locs)
        return [j for j in n.nbr_locs if t.routable(j)]

    def route(self, n: Node) -> int | None:
        loc = self.true_pos[n.id]
        return proto.next_hop(n.id, loc, self.true_pos[self.sink], n.nbr_locs, self.eligible_hops(n))

    # ------------------------------------------------------------------ MAC
    def send(self, n: Node, dst: int, handler: Handler, payload: bytes, seq: int | None = None) -> Packet:
        seq = n.next_seq() if seq is None else seq
        p = proto.seal_packet(n.ek, n.id, dst, handler, seq, payload)
        self.enqueue(n, p)
        return p

    def enqueue(self, n: Node, p: Packet) -> None:
        n.queue.append(p)
        if not n.tx_busy:
            n.tx_busy = True
            self._schedule_attempt(n)

    def _schedule_attempt(self, n: Node) -> None:
        bmax = self.sc.backoff_max
        delay = self.stream("mac", n.id).randrange(bmax) if bmax > 0 else 0
        busy = self.medium.busy_until.get(n.id, 0)
        at = max(self.sim.now, busy) + delay
        self.sim.schedule(at, EventKind.TX_START, self._tx_start, n, subject=n.id)

    def _tx_start(self, n: Node) -> None:
        if not n.queue:
            n.tx_busy = False
            return
        if self.medium.is_busy(n.id, self.sim.now):
            self._schedule_attempt(n)
            return
        p = n.queue.popleft()
        frame = self._transmit(n, p)
        self._on_transmitted(n, p)
        self.sim.schedule(frame.end, EventKind.CUSTOM, self._tx_idle, n, subject=n.id)

    def _tx_idle(self, n: Node) -> None:
        if n.queue:
            self._schedule_attempt(n)
        else:
            n.tx_busy = False

    def _transmit(self, n: Node, p: Packet | None, nbytes: int | None = None) -> Frame:
        nbytes = p.wire_len if p is not None else (nbytes or proto.MAX_PACKET)
        frame = self.medium.start(n.id, p, nbytes, self.sim.now)
        c = self.counters
        if p is None:
            c.jam_frames += 1
        else:
            c.frames += 1
            c.bytes_total += nbytes
            if p.handler in CONTROL:
                c.bytes_control += nbytes
        self.sim.schedule(frame.end, EventKind.DELIVERY, self._deliver, frame, subject=n.id)
        return frame

    def _on_transmitted(self, n: Node, p: Packet) -> None:
        """Start the hop-wise ACK timer for unicast DATA/QUERY leaving ``n``."""
        if p.dst == BROADCAST or p.handler != Handler.DATA or n.is_sink:
            return
        key = p.key
        entry = None
        if n.wbuf is not None:
            entry = watch(n.wbuf, key, p.dst, self.sim.now, self.wd, self.stream("watch", n.id), own=True)
        timer = self.sim.after(self.wd.t_ack, EventKind.ACK_TIMEOUT, self._ack_timeout, n, key,
                               subject=n.id)
        n.pending[key] = [p.dst, timer, entry]

    # ------------------------------------------------------------------ delivery
    def _deliver(self, frame: Frame) -> None:
        p = frame.packet
        if p is None:
            return
        receivers = self.medium.outcomes(frame, self._loss_stream)
        if not receivers:
            return
        t = frame.sender
        dst = p.dst
        h = p.handler
        pt = None
        verified = True
        if self.sc.hop_auth or dst == self.sink or dst == BROADCAST or h == Handler.ACK:
            pt = proto.open_packet(self.keys[p.src], p)
            verified = pt is not None
        nodes = self.nodes
        if not verified or h not in (Handler.ACK, Handler.DATA):
            for r in receivers:
                self._receive(nodes[r], t, p, pt, verified)
            return
        # hot paths: every neighbour hears every DATA and ACK frame
        ISO = Status.ISOLATED
        if h == Handler.ACK:
            origin, seq, _ = proto.unpack_ack(pt)
            key = (origin, seq)
            for r in receivers:
                n = nodes[r]
                table = n.table
                if table is None:
                    continue
                rec = table.records.get(t)
                if rec is not None and rec.status is ISO:
                    self.counters.dropped_isolated += 1
                    continue
                if r == dst:
                    self._ack_addressed(n, t, key)
                else:
                    e = n.wbuf.find(key, t)
                    if e is not None and not e.own and not e.resolved:
                        self._watch_ok(n, e)
            return
        key = p.key
        origination = t == p.src
        value = None
        bystander = self.wd.bystander_watch and dst != self.sink
        for r in receivers:
            n = nodes[r]
            table = n.table
            if table is None:
                if r == dst:
                    self._sink_receive(n, t, p, pt, verified)
                continue
            rec = table.records.get(t)
            if rec is not None and rec.status is ISO:
                self.counters.dropped_isolated += 1
                continue
            if r == dst:
                self._relay(n, t, p, pt)
                continue
            # promiscuous overhearing of a frame addressed to someone else
            wbuf = n.wbuf
            if len(wbuf):
                e = wbuf.find(key, t)
                if e is not None and not e.resolved:
                    self._watch_ok(n, e)
            if origination:
                obs = n.obs.get(t)
                if obs is not None:
                    obs.tx_this_epoch += 1
                    if value is None:
                        if pt is None:
                            pt = proto.open_packet(self.keys[p.src], p)
                        value = proto.SensorReading.unpack(pt).value if pt is not None and len(pt) >= 12 else False
                    if value is not False:
                        obs.epoch_readings.append(value)
            if bystander and dst in n.obs and not self.compromised(n):
                entry = watch(wbuf, key, dst, self.sim.now, self.wd, self.stream("watch", r), own=False)
                if entry is not None:
                    self.sim.schedule(entry.deadline, EventKind.WATCH_TIMEOUT, self._watch_timeout, n,
                                      entry, subject=r)

    def _receive(self, n: Node, t: int, p: Packet, pt: bytes | None, verified: bool) -> None:
        table = n.table
        if table is not None and table.is_isolated(t):
            self.counters.dropped_isolated += 1
            return
        if n.is_sink:
            self._sink_receive(n, t, p, pt, verified)
            return
        h = p.handler
        addressed = p.dst == n.id
        if addressed or p.dst == BROADCAST:
            if not verified:
                self.counters.hop_auth_failures += 1
                self.emit(n, check_auth(n.id, t, False, self.sc.hop_auth, self.sim.now, self.wd))
                return
        if h == Handler.BEACON:
            self._on_beacon(n, t, p, pt)
        elif h == Handler.ALERT or h == Handler.VOTE:
            self._on_vote_msg(n, t, p, pt)
        elif h == Handler.TRUST_PROBE:
            if addressed:
                self._on_probe(n, t, p, pt)
        elif h == Handler.QUERY:
            if t == p.src and t in n.obs:
                n.obs[t].tx_this_epoch += 1
        # ISOLATION_NOTICE is informational: it never changes counters or status

    # ------------------------------------------------------------------ data path
    def _sense(self, n: Node, nominal: int) -> None:
        now = self.sim.now
        nxt = nominal + self.sc.sensing_period
        self.sim.schedule(nxt + self._jitter("jitter-sense", n.id), EventKind.SENSING_TICK, self._sense,
                          n, nxt, subject=n.id)
        s = self.stream("sense", n.id)
        value = self.sc.field_value + s.uniform(-self._uniform_half, self._uniform_half)
        if self.compromised(n):
            prof = n.profile
            if isinstance(prof, AttackProfile):
                if (prof.data_bias or prof.data_sigma) and self.misbehaving(n):
                    value = fabricate_reading(prof, value, self.stream("adv", n.id))
            elif prof.sense_error_sigma > 0 and self.misbehaving(n):
                value += self.stream("adv", n.id).gauss(0.0, prof.sense_error_sigma)
        x, y = self.true_pos[n.id]
        reading = proto.SensorReading(value, x, y, (now // 1000) & 0xFFFF, n.id)
        c = self.counters
        c.generated += 1
        # readings sensed in the last second may still be in flight at the end
        counted = now + 1000 <= self.sc.run_ticks
        if counted:
            c.generated_counted += 1
        nh = self.route(n)
        if nh is None:
            c.routing_voids += 1
            return
        p = self.send(n, nh, Handler.DATA, reading.pack())
        if self.sc.end_to_end_ack:
            n.epoch_sent.add(p.seq)
        if counted:
            self._counted.add(p.key)

    def _relay(self, n: Node, t: int, p: Packet, pt: bytes | None) -> None:
        key = p.key
        if key in n.seen_set:
            self.counters.duplicates += 1
            self.emit(n, RuleEvent(n.id, Rule.TRAFFIC, t, Polarity.NEGATIVE, self.wd.w_traffic, self.sim.now))
            return
        n.seen.append(key)
        n.seen_set.add(key)
        if len(n.seen) > SEEN_WINDOW:
            n.seen_set.discard(n.seen.popleft())
        action = Action.FORWARD
        if self.misbehaving(n):
            action = misbehave_forward(n.profile, self.stream("adv", n.id), bool(n.history))
        if action is Action.DROP:
            return
        if action is Action.DELAY:
            self.sim.after(n.profile.delay_ticks, EventKind.CUSTOM, self._ack_and_forward, n, t, p,
                           subject=n.id)
            return
        if action is Action.ALTER:
            p = Packet(p.src, p.dst, p.handler, p.seq, flip_bit(p.payload, self.stream("adv", n.id)), p.mac)
        if action is Action.REPLAY:
            old = n.history[self.stream("adv", n.id).randrange(len(n.history))]
            self._ack_and_forward(n, t, p)
            nh = self.route(n)
            if nh is not None:
                self.enqueue(n, old.redirect(nh))
            return
        self._ack_and_forward(n, t, p)

    def _ack_and_forward(self, n: Node, t: int, p: Packet) -> None:
        # hop-wise ACK goes out immediately (SIFS-like), bypassing carrier sense
        ack = proto.seal_packet(n.ek, n.id, t, Handler.ACK, n.next_seq(), proto.pack_ack(p.src, p.seq))
        self._transmit(n, ack)
        nh = self.route(n)
        if nh is None:
            self.counters.routing_voids += 1
            return
        fwd = p.redirect(nh)
        n.history.append(fwd)
        self.enqueue(n, fwd)

    def _sink_receive(self, n: Node, t: int, p: Packet, pt: bytes | None, verified: bool) -> None:
        if p.dst != n.id or p.handler != Handler.DATA:
            return
        if not verified:
            # end-to-end failure: counted, nobody blamed
            self.counters.e2e_auth_failures += 1
            return
        ack = proto.seal_packet(n.ek, n.id, t, Handler.ACK, n.next_seq(), proto.pack_ack(p.src, p.seq))
        self._transmit(n, ack)
        key = p.key
        if key in n.seen_set:
            return
        n.seen_set.add(key)
        self.counters.delivered += 1
        if key in self._counted:
            self.counters.delivered_counted += 1
        if self.sc.end_to_end_ack:
            # the base station's confirmation travels outside the sensor
            # channel (reliable downlink), so only the uplink can fail
            self.nodes[p.src].e2e_acked.add(p.seq)

    def _watch_ok(self, n: Node, e: WatchEntry) -> None:
        e.resolved = True
        if not e.own:
            n.wbuf.pop(e.digest, e.forwarder)
            self.emit(n, RuleEvent(n.id, Rule.ACK, e.forwarder, Polarity.POSITIVE, self.wd.w_ack, self.sim.now))

    def _watch_timeout(self, n: Node, e: WatchEntry) -> None:
        cur = n.wbuf.find(e.digest, e.forwarder)
        if cur is not e:
            return  # resolved or evicted
        n.wbuf.pop(e.digest, e.forwarder)
        self.emit(n, resolve_ack(n.id, e.forwarder, False, e.resolved, self.sim.now, self.wd))

    def _ack_addressed(self, n: Node, t: int, key: tuple[int, int]) -> None:
        pend = n.pending.get(key)
        if pend is None or pend[0] != t:
            return
        del n.pending[key]
        Simulator.cancel(pend[1])
        if pend[2] is not None:
            n.wbuf.pop(key, t)
        self.emit(n, resolve_ack(n.id, t, True, False, self.sim.now, self.wd))

    def _ack_timeout(self, n: Node, key: tuple[int, int]) -> None:
        pend = n.pending.get(key)
        if pend is None:
            return
        nh, _, entry = pend
        if entry is not None and not entry.resolved and n.wbuf.find(key, nh) is entry \
                and entry.deadline > self.sim.now:
            # no ACK yet, but the watched copy may still catch a late forward;
            # the ACK itself no longer counts (timer replaced, pend[0] = None)
            pend[0] = None
            pend[1] = self.sim.schedule(entry.deadline, EventKind.ACK_TIMEOUT, self._watch_verdict,
                                        n, key, nh, subject=n.id)
            return
        del n.pending[key]
        overheard = False
        if entry is not None:
            cur = n.wbuf.pop(key, nh)
            overheard = cur is entry and entry.resolved
        self.emit(n, resolve_ack(n.id, nh, False, overheard, self.sim.now, self.wd))

    def _watch_verdict(self, n: Node, key: tuple[int, int], nh: int) -> None:
        pend = n.pending.pop(key, None)
        if pend is None:
            return
        entry = pend[2]
        cur = n.wbuf.pop(key, nh)
        self.emit(n, resolve_ack(n.id, nh, False, cur is entry and entry.resolved, self.sim.now, self.wd))

    # ------------------------------------------------------------------ beacons
    def _jitter(self, label: str, nid: int) -> int:
        j = self.sc.tx_jitter
        return self.stream(label, nid).randrange(j) if j > 0 else 0

    def _beacon(self, n: Node, nominal: int) -> None:
        nxt = nominal + self.sc.beacon_period
        self.sim.schedule(nxt + self._jitter("jitter-beacon", n.id), EventKind.BEACON_TICK, self._beacon,
                          n, nxt, subject=n.id)
        loc = self.true_pos[n.id]
        digest = CODE_DIGEST
        if self.compromised(n) and isinstance(n.profile, AttackProfile):
            prof = n.profile
            if prof.code_delta:
                digest = CODE_DIGEST ^ 0x00FF_0000
            if prof.sinkhole:
                sx, sy = self.true_pos[self.sink]
                loc = (sx + 0.5, sy + 0.5) if self.topo.in_field((sx + 0.5, sy + 0.5)) else (sx, sy)
        b = proto.StatusBeacon(loc[0], loc[1], digest, n.pdr)
        self.send(n, BROADCAST, Handler.BEACON, b.pack())

    def _on_beacon(self, n: Node, t: int, p: Packet, pt: bytes | None) -> None:
        if pt is None or t != p.src:
            return
        b = proto.StatusBeacon.unpack(pt)
        loc = (b.x, b.y)
        prev = n.beacons.get(t)
        n.beacons[t] = (loc, b.code_digest)
        if t != self.sink:
            n.nbr_locs[t] = loc
        if n.table is None or prev is None or t not in self.topo.neighbors(n.id):
            return
        self.emit(n, check_beacon(n.id, t, prev[0], prev[1], loc, b.code_digest, self.sim.now, self.wd))

    # ------------------------------------------------------------------ epochs
    def _epoch_tick(self) -> None:
        now = self.sim.now
        self.epoch += 1
        ep = self.epoch
        if now + self.sc.epoch_len <= self.sc.run_ticks:
            self.sim.after(self.sc.epoch_len, EventKind.EPOCH_TICK, self._epoch_tick)
        wd = self.wd
        sigma_field = self.sc.sigma_field
        for nid, n in self.nodes.items():
            if n.is_sink:
                continue
            table = n.table
            honest_monitor = not self.compromised(n)
            if honest_monitor:
                obs = n.obs
                pool = PoolSummary({j: list(o.readings) + o.epoch_readings for j, o in obs.items()
                                    if not table.is_isolated(j)})
                for j in sorted(obs):
                    o = obs[j]
                    if table.is_isolated(j):
                        continue
                    if o.epoch_readings:
                        self.emit(n, judge_readings(nid, j, o.epoch_readings, pool, sigma_field,
                                                    now, wd))
                    if self.expected_tx > 0:
                        counts = list(o.tx_counts) + [o.tx_this_epoch]
                        self.emit(n, audit_traffic(nid, j, sum(counts), self.expected_tx * len(counts),
                                                   now, wd))
            for o in n.obs.values():
                o.close_epoch()
            if self.sc.end_to_end_ack:
                self._pdr_check(n)
            table.close_epoch()
            if honest_monitor or not self._collusion_of.get(nid):
                for j in sorted(table.records):
                    if table.evaluate(j) and j in self.topo.neighbors(nid):
                        rec = table.get(j)
                        self._start_round(n, j, rec)
            self._bad_mouth(n)
            if self.sc.trajectories:
                for j, rec in table.records.items():
                    self.trajectory.append((ep, nid, j, rec.p, rec.n, rec.trust, rec.status.value))

    def _pdr_check(self, n: Node) -> None:
        sent = n.prev_sent
        delivered = sum(1 for s in sent if s in n.e2e_acked)
        if sent:
            n.pdr = delivered / len(sent)
        ev = self_delivery_check(n.id, len(sent), delivered, self.sim.now, self.wd)
        if ev is not None:
            self.rule_log.append(ev)
            self.counters.pdr_alarms += 1
            self.pdr_alarm_log.append((self.sim.now, n.id))
            self.send(n, BROADCAST, Handler.ALERT,
                      proto.pack_alert(proto.NO_SUSPECT, 5, n.next_round))
        n.e2e_acked.difference_update(sent)
        n.prev_sent = n.epoch_sent
        n.epoch_sent = set()

    # ------------------------------------------------------------------ voting
    def _start_round(self, n: Node, suspect: int, rec) -> None:
        self.counters.alerts += 1
        rn = n.next_round
        n.next_round = (rn + 1) & 0xFF
        reason = 1
        self.send(n, BROADCAST, Handler.ALERT, proto.pack_alert(suspect, reason, rn))
        self._open_round(n, suspect, n.id, rn)

    def _bad_mouth(self, n: Node) -> None:
        g = self._collusion_of.get(n.id)
        if g is None or g.mode is not CollusionMode.BAD_MOUTH or not self.compromised(n):
            return
        if g.target not in self.topo.neighbors(n.id):
            return
        self._start_round(n, g.target, None)

    def _my_vote(self, n: Node, suspect: int) -> bool:
        g = self._collusion_of.get(n.id)
        if g is not None and g.target == suspect and self.compromised(n):
            return cast_colluding_vote(g.mode)
        return n.table.wants_isolation(suspect)

    def _open_round(self, n: Node, suspect: int, initiator: int, rn: int) -> Round:
        key = (suspect, initiator, rn)
        rnd = n.rounds.get(key)
        if rnd is not None:
            return rnd
        rnd = Round(suspect, initiator, rn)
        n.rounds[key] = rnd
        if initiator == n.id:
            self.counters.vote_rounds += 1
        iso = self._my_vote(n, suspect)
        claim = n.table.trust(suspect)
        rnd.votes.append(Vote(n.id, suspect, iso, claim))
        self.send(n, BROADCAST, Handler.VOTE,
                  proto.pack_vote(suspect, proto.VOTE_ISOLATE if iso else proto.VOTE_KEEP, claim,
                                  initiator, rn))
        rnd.deadline = self.sim.after(self.tc.vote_window, EventKind.VOTE_DEADLINE, self._tally, n, key,
                                      subject=n.id)
        return rnd

    def _on_vote_msg(self, n: Node, t: int, p: Packet, pt: bytes | None) -> None:
        if pt is None:
            return
        if p.handler == Handler.ALERT:
            suspect, reason, rn = proto.unpack_alert(pt)
            initiator = p.src
            vote = None
        else:
            suspect, direction, claim, initiator, rn = proto.unpack_vote(pt)
            vote = Vote(p.src, suspect, direction == proto.VOTE_ISOLATE, claim)
        if suspect == proto.NO_SUSPECT:
            return  # self-diagnosed jamming alarm: counted, no attribution
        if n.id == suspect or suspect == self.sink:
            return
        nbrs = self.topo.neighbors(n.id)
        if suspect not in nbrs:
            return
        key = (suspect, initiator, rn)
        rnd = n.rounds.get(key)
        if rnd is None:
            closed = n.closed_rounds.get(key)
            if closed is not None and self.sim.now - closed < ROUND_QUIET * self.tc.vote_window:
                return  # straggler from a round already tallied here
            rnd = self._open_round(n, suspect, initiator, rn)
        if vote is not None:
            rnd.votes.append(vote)
        # re-broadcast once, and only if it reaches a neighbour of the suspect the
        # sender cannot; in a dense clique everyone already heard the original
        rkey = (p.src, p.seq, p.handler)
        if t == p.src and rkey not in n.relayed_votes:
            n.relayed_votes.add(rkey)
            topo = self.topo
            unreached = (nbrs & topo.neighbors(suspect)) - topo.neighbors(t) - {t, self.sink}
            if unreached:
                self.enqueue(n, p.redirect(BROADCAST))

    def _tally(self, n: Node, key) -> None:
        rnd = n.rounds.pop(key, None)
        if rnd is None:
            return
        n.closed_rounds[key] = self.sim.now
        table = n.table
        weights = {v.voter: table.vote_weight(v.voter) if v.voter != n.id else 1.0 for v in rnd.votes}
        if tally_votes(rnd.votes, weights, suspect=rnd.suspect):
            if table.isolate(rnd.suspect, self.sim.now):
                self._on_isolated(n, rnd.suspect, "vote")
        elif rnd.initiator == n.id:
            table.end_episode(rnd.suspect)

    # ------------------------------------------------------------------ remote trust
    def remote_trust_query(self, querier: int, remote: int, remote_loc: tuple[float, float] | None = None) -> Probe:
        """Start a distance-aware trust probe; the result lands on the returned Probe."""
        if remote_loc is None:
            remote_loc = self.true_pos[remote]
        if not self.topo.in_field(remote_loc):
            raise ValueError(f"remote location {remote_loc} lies outside the field")
        n = self.nodes[querier]
        pid = n.next_probe
        n.next_probe = (pid + 1) & 0xFFFF
        h = estimate_hops(self.true_pos[querier], remote_loc, self.sc.radio_range)
        pr = Probe(pid, remote, remote_loc, h + self.tc.probe_slack, self.sim.now)
        n.probes[pid] = pr
        if remote in self.topo.neighbors(querier):
            pr.result = ProbeResult.TRUSTED if n.table.trust(remote) >= self.tc.theta_trust \
                and not n.table.is_isolated(remote) else ProbeResult.UNTRUSTED
            return pr
        self._probe_send(n, pr)
        return pr

    def _probe_send(self, n: Node, pr: Probe) -> None:
        nh = self._probe_next(n, pr.remote, pr.remote_loc)
        if nh is None:
            pr.result = ProbeResult.UNTRUSTED
            return
        x, y = pr.remote_loc
        self.send(n, nh, Handler.TRUST_PROBE,
                  proto.pack_probe(proto.PROBE_REQ, n.id, pr.probe_id, pr.remote, x, y, pr.budget - 1))
        pr.timer = self.sim.after(2 * pr.budget * PROBE_HOP_ALLOWANCE, EventKind.PROBE_TIMEOUT,
                                  self._probe_timeout, n, pr, subject=n.id)

    def _probe_next(self, n: Node, remote: int, remote_loc) -> int | None:
        t = n.table
        ok = [j for j in n.nbr_locs if j != self.sink and t.trust(j) >= self.tc.theta_trust
              and not t.is_isolated(j)]
        if remote in ok:
            return remote
        return proto.next_hop(n.id, self.true_pos[n.id], remote_loc, n.nbr_locs, ok)

    def _probe_timeout(self, n: Node, pr: Probe) -> None:
        if pr.result is not None:
            return
        if pr.attempts <= self.sc.probe_retries:
            pr.attempts += 1
            self._probe_send(n, pr)
            return
        pr.result = ProbeResult.UNDECIDED

    def _on_probe(self, n: Node, t: int, p: Packet, pt: bytes | None) -> None:
        if pt is None or n.table is None:
            return
        kind, q, pid, remote, x, y, budget = proto.unpack_probe(pt)
        table = n.table
        if kind == proto.PROBE_REQ:
            key = (q, pid)
            trusted_sender = table.trust(t) >= self.tc.theta_trust and not table.is_isolated(t)
            if not trusted_sender:
                self._probe_reply(n, t, proto.PROBE_NACK, q, pid, remote)
                return
            n.probe_reverse[key] = t
            if n.id == remote:
                self._probe_reply(n, t, proto.PROBE_CONFIRM, q, pid, remote)
                return
            nh = self._probe_next(n, remote, (x, y)) if budget > 0 else None
            if nh is None:
                self._probe_reply(n, t, proto.PROBE_NACK, q, pid, remote)
                return
            self.send(n, nh, Handler.TRUST_PROBE,
                      proto.pack_probe(proto.PROBE_REQ, q, pid, remote, x, y, budget - 1))
            return
        # confirmations / refusals travel the reverse path
        if n.id == q:
            pr = n.probes.get(pid)
            if pr is not None and pr.result is None:
                pr.result = ProbeResult.TRUSTED if kind == proto.PROBE_CONFIRM else ProbeResult.UNTRUSTED
                Simulator.cancel(pr.timer)
            return
        back = n.probe_reverse.pop((q, pid), None)
        if back is not None:
            self.send(n, back, Handler.TRUST_PROBE, proto.pack_probe(kind, q, pid, remote, x, y, 0))

    def _probe_reply(self, n: Node, to: int, kind: int, q: int, pid: int, remote: int) -> None:
        self.send(n, to, Handler.TRUST_PROBE, proto.pack_probe(kind, q, pid, remote, 0.0, 0.0, 0))

    # ------------------------------------------------------------------ adversary
    def _activate(self, n: Node) -> None:
        prof = n.profile
        if isinstance(prof, AttackProfile):
            if prof.relocate is not None:
                x, y = self.true_pos[n.id]
                dx, dy = prof.relocate
                self.topo.move(n.id, (x + dx, y + dy))
                self.true_pos[n.id] = self.topo.positions[n.id]
                self._refresh_links()
            if prof.jam_rate > 0:
                self._jam(n)
            if prof.bogus_query_rate > 0:
                self._bogus_query(n)
        elif isinstance(prof, FaultProfile) and prof.broadcast_rate > 0:
            self._fault_broadcast(n)

    def _refresh_links(self) -> None:
        for i, n in self.nodes.items():
            nbrs = self.topo.neighbors(i)
            for j in list(n.nbr_locs):
                if j not in nbrs:
                    del n.nbr_locs[j]
            for j in nbrs:
                if j not in n.nbr_locs:
                    n.nbr_locs[j] = self.true_pos[j]
                    if n.table is not None and j != self.sink:
                        n.table.add_neighbor(j)
                        n.obs.setdefault(j, NeighborObservation(self.wd.window))

    def _geometric(self, rate: float, stream) -> int:
        if rate >= 1.0:
            return 1
        u = stream.random()
        return 1 + int(math.log(1.0 - u) / math.log(1.0 - rate))

    def _jam(self, n: Node) -> None:
        if self.misbehaving(n):
            self._transmit(n, None, proto.MAX_PACKET)
        gap = max(self._geometric(n.profile.jam_rate, self.stream("jam", n.id)), 1)
        # a jammer cannot start a new burst while its previous one is on the air
        gap = max(gap, airtime(proto.MAX_PACKET, self.sc.channel.bandwidth_bps))
        self.sim.after(gap, EventKind.JAM_TICK, self._jam, n, subject=n.id)

    def _bogus_query(self, n: Node) -> None:
        if self.misbehaving(n):
            self.send(n, BROADCAST, Handler.QUERY, b"\x00" * 4)
        # bogus_query_rate is queries per tick
        gap = self._geometric(n.profile.bogus_query_rate, self.stream("query", n.id))
        self.sim.after(gap, EventKind.QUERY_TICK, self._bogus_query, n, subject=n.id)

    def _fault_broadcast(self, n: Node) -> None:
        if self.misbehaving(n):
            self.send(n, BROADCAST, Handler.QUERY, b"\x00" * 4)
        gap = self._geometric(n.profile.broadcast_rate, self.stream("query", n.id))
        self.sim.after(gap, EventKind.QUERY_TICK, self._fault_broadcast, n, subject=n.id)

    # ------------------------------------------------------------------ run
    def start(self) -> None:
        if self._started:
            return
        self._started = True
        sc = self.sc
        for e in sc.schedule.entries:
            n = self.nodes[e.node]
            if e.profile == type(e.profile)():
                continue  # a no-op profile leaves the node fully honest
            n.profile = e.profile
            n.active_from = e.activate_at
            prof = e.profile
            needs_hook = (isinstance(prof, AttackProfile) and (prof.relocate is not None or prof.jam_rate > 0
                                                                or prof.bogus_query_rate > 0)) or \
                         (isinstance(prof, FaultProfile) and prof.broadcast_rate > 0)
            if needs_hook:
                self.sim.schedule(e.activate_at, EventKind.ACTIVATION, self._activate, n, subject=n.id)
        for i, n in self.nodes.items():
            if n.is_sink:
                continue
            if sc.beacon_period > 0:
                ph = self.stream("phase-beacon", i).randrange(sc.beacon_period)
                self.sim.schedule(ph + self._jitter("jitter-beacon", i), EventKind.BEACON_TICK,
                                  self._beacon, n, ph, subject=i)
            if sc.sensing_period > 0:
                ph = self.stream("phase-sense", i).randrange(sc.sensing_period)
                self.sim.schedule(ph + self._jitter("jitter-sense", i), EventKind.SENSING_TICK,
                                  self._sense, n, ph, subject=i)
        self.sim.schedule(sc.epoch_len, EventKind.EPOCH_TICK, self._epoch_tick)

    def run(self, until: int | None = None) -> "World":
        self.start()
        self.sim.run_until(self.sc.run_ticks if until is None else until)
        return self
