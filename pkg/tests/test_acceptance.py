"""Acceptance suite: one test per criterion, each reported as a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (or ``python tests/test_acceptance.py``);
the summary lines appear at the end of the pytest output.
"""
import ast
import math
import random
import re
import subprocess
import sys
import time
from collections import defaultdict
from pathlib import Path

import pytest

import wsntrust
from wsntrust import World, harness, load_preset, loads_scenario
from wsntrust import crypto, protocol as pr
from wsntrust.metrics import honest_neighbors, isolated_by, majority_isolated
from wsntrust.network import ProbeResult
from wsntrust.scenario import PRESETS, preset_text
from wsntrust.trust import Status, TrustTable, estimate_hops, trust_value

import rc5_reference as ref

# pinned tolerances
ORACLE_PAIRS = 1000
ORACLE_SECONDS = 1.0
FUZZ_TRIALS = 10_000
BENCH_MIN_PPS = 100_000
BASELINE_SECONDS = 30.0
BLACKHOLE_SEEDS = range(1, 11)
ISOLATION_SHARE = 0.9
ISOLATION_EPOCHS = 30
SWEEP_RATES = ["0.25", "0.5", "0.75", "1.0"]
SWEEP_REPLICAS = 10
VOTE_SEEDS = range(1, 21)
THETA = 0.25


def _detail(record_property, text):
    record_property("detail", text)
    print(text)


# ---------------------------------------------------------------------------

@pytest.mark.criterion(1, "RC5-32/12/16 matches an independent reference")
def test_c01_crypto_oracle(record_property):
    rng = random.Random(20240601)
    t0 = time.perf_counter()
    zero = ref.VECTORS_32_12_16[0]
    ek = crypto.expand_key(bytes.fromhex(zero[0]), 12)
    vector_ok = crypto.encrypt_block(ek, bytes.fromhex(zero[1])).hex() == zero[2]
    mismatches = 0
    for _ in range(ORACLE_PAIRS):
        key = rng.randbytes(16)
        block = rng.randbytes(8)
        S = ref.key_schedule(key, 12)
        ek = crypto.expand_key(key, 12)
        if list(ek.words) != S or crypto.encrypt_block(ek, block) != ref.encrypt(S, 12, block):
            mismatches += 1
    dt = time.perf_counter() - t0
    _detail(record_property, f"{ORACLE_PAIRS} pairs, {mismatches} mismatches, zero-key vector "
                             f"{'ok' if vector_ok else 'WRONG'}, {dt:.3f} s")
    assert vector_ok and mismatches == 0 and dt < ORACLE_SECONDS


@pytest.mark.criterion(2, "72-byte key table, 30-byte packets, MAC covers payload/handler/seq/src")
def test_c02_crypto_structure(record_property):
    ek = crypto.expand_key(bytes(range(16)))
    table = ek.size_bytes
    full = len(pr.encode(pr.seal_packet(ek, 1, 2, pr.Handler.DATA, 3, bytes(pr.MAX_PAYLOAD))))
    rng = random.Random(77)
    missed = 0
    for _ in range(FUZZ_TRIALS):
        payload = rng.randbytes(rng.randrange(1, pr.MAX_PAYLOAD + 1))
        p = pr.seal_packet(ek, rng.randrange(1 << 16), rng.randrange(1 << 16),
                           rng.choice(list(pr.Handler)), rng.randrange(1 << 16), payload)
        wire = bytearray(pr.encode(p))
        # src (0-1), handler (4), seq (5-6), ciphertext and tag; dst and length are outside
        pos = rng.choice([0, 1, 4, 5, 6] + list(range(8, len(wire))))
        wire[pos] ^= 1 << rng.randrange(8)
        if pr.open_packet(ek, pr.decode(bytes(wire))) is not None:
            missed += 1
    _detail(record_property, f"table {table} B, full packet {full} B, {missed}/{FUZZ_TRIALS} flips undetected")
    assert table == 72 and full == 30 and missed == 0


@pytest.mark.criterion(3, "bench-crypto seal+open throughput")
def test_c03_bench(record_property):
    out = subprocess.run([sys.executable, "-m", "wsntrust", "bench-crypto"],
                         capture_output=True, text=True, check=True).stdout
    m = re.search(r"([\d,]+) packets/s", out)
    pps = int(m.group(1).replace(",", ""))
    _detail(record_property, f"measured {pps:,} packets/s (floor {BENCH_MIN_PPS:,}); {out.strip()}")
    assert "roundtrip ok" in out and pps >= BENCH_MIN_PPS


@pytest.mark.criterion(4, "honest-baseline: cooperative neighbour keeps trust 1.0")
def test_c04_honest_baseline(record_property):
    sc = load_preset("honest-baseline")
    t0 = time.perf_counter()
    w = World(sc).run()
    dt = time.perf_counter() - t0
    # the monitored neighbour: the node watched by the most observers
    watchers = defaultdict(set)
    for ep, obs, subj, p, n, t, st in w.trajectory:
        watchers[subj].add(obs)
    node = max(sorted(watchers), key=lambda j: len(watchers[j]))
    rows = [r for r in w.trajectory if r[2] == node]
    epochs = {r[0] for r in rows}
    exact = all(r[5] == 1.0 for r in rows)
    everyone = all(r[5] == 1.0 for r in w.trajectory)
    _detail(record_property, f"node {node}: {len(watchers[node])} observers x {len(epochs)} epochs all 1.0={exact} "
                             f"(every pair 1.0={everyone}); alerts {w.counters.alerts}, "
                             f"isolations {len(w.isolations)}, {sc.node_count} nodes, {dt:.1f} s")
    assert sc.node_count == 50 and sc.epochs == 500 and sc.channel.loss_prob == 0
    assert len(epochs) == 500 and exact
    assert w.counters.alerts == 0 and not w.isolations
    assert dt < BASELINE_SECONDS


@pytest.mark.criterion(5, "blackhole: trust falls, crosses theta, isolation within 30 epochs")
def test_c05_blackhole(record_property):
    worst_share, violations, uncrossed, fpr = 1.0, 0, 0, 0.0
    for seed in BLACKHOLE_SEEDS:
        sc = load_preset("blackhole", {"scenario.seed": str(seed)})
        w = World(sc).run()
        bad = sc.bad_nodes()[0]
        act = sc.activation_of(bad)
        hn = honest_neighbors(w, bad)
        by = isolated_by(w).get(bad, {})
        within = [o for o in hn if o in by and by[o] - act <= ISOLATION_EPOCHS * sc.epoch_len]
        worst_share = min(worst_share, len(within) / len(hn))
        last, crossed = {}, set()
        for ep, obs, subj, p, n, t, st in w.trajectory:
            if subj != bad or obs not in hn or ep * sc.epoch_len < act:
                continue
            if obs in last and t > last[obs]:
                violations += 1
            last[obs] = t
            if t < THETA:
                crossed.add(obs)
        uncrossed += len(hn - crossed)
        honest = [i for i in w.nodes if i != w.sink and i != bad]
        fpr = max(fpr, sum(majority_isolated(w, h) for h in honest) / len(honest))
    _detail(record_property, f"{len(BLACKHOLE_SEEDS)} seeds: worst isolation share {worst_share:.2f} within "
                             f"{ISOLATION_EPOCHS} epochs, {violations} trust increases, {uncrossed} "
                             f"trajectories never below theta, max FPR {fpr}")
    assert worst_share >= ISOLATION_SHARE and violations == 0 and uncrossed == 0 and fpr == 0.0


def _strictly_decreasing(values):
    defined = [v for v in values if not math.isnan(v)]
    return len(defined) >= 2 and all(a > b for a, b in zip(defined, defined[1:])), defined


@pytest.mark.criterion(6, "graduated drop: TTI and steady-state trust fall with drop rate")
def test_c06_graduated_sweep(record_property):
    sc = load_preset("graduated-drop")
    assert sc.epochs == 500
    rows = harness.sweep(sc, "attack.1.drop_rate", SWEEP_RATES, replicas=SWEEP_REPLICAS)
    tti = [r.mean["mean_time_to_isolation"] for r in rows]
    trust = [r.mean["attacker_trust"] for r in rows]
    tti_ok, _ = _strictly_decreasing(tti)
    trust_ok, _ = _strictly_decreasing(trust)
    fmt = lambda xs: "[" + ", ".join("nan" if math.isnan(x) else f"{x:.4g}" for x in xs) + "]"
    _detail(record_property, f"drop {SWEEP_RATES} x {SWEEP_REPLICAS}: TTI ticks {fmt(tti)}, "
                             f"steady trust (epochs 400-500, not isolated) {fmt(trust)}")
    assert tti_ok and trust_ok


def _bad_mouth_with(extra_colluders):
    text = preset_text("bad-mouth")
    for node in extra_colluders:
        text += f"\n[attack.{node}]\nnode = {node}\nactivate_epoch = 5\ncollusion_group = 1\n"
    return text


@pytest.mark.criterion(7, "bad-mouthing minority cannot isolate an honest node; a majority can")
def test_c07_vote_safety(record_property):
    minority = loads_scenario(_bad_mouth_with([]))
    target = minority.collusion[1].target
    w0 = World(minority)
    nbrs = w0.topo.neighbors(target) - {w0.sink}
    share_min = len(minority.collusion[1].members) / len(nbrs)
    isolated_runs = 0
    for seed in VOTE_SEEDS:
        w = World(minority, seed).run()
        if any(subj == target for _, obs, subj, _ in w.isolations if obs not in minority.bad_nodes()):
            isolated_runs += 1
    majority = loads_scenario(_bad_mouth_with([5]))
    share_maj = len(majority.collusion[1].members) / len(nbrs)
    maj_runs = sum(majority_isolated(World(majority, seed).run(), target) for seed in VOTE_SEEDS)
    _detail(record_property, f"colluders {share_min:.0%} of the neighbourhood: target isolated in "
                             f"{isolated_runs}/{len(VOTE_SEEDS)} seeds; colluders {share_maj:.0%}: isolated "
                             f"in {maj_runs}/{len(VOTE_SEEDS)} seeds")
    assert minority.trust.plain_majority and share_min < 0.5 < share_maj
    assert isolated_runs == 0 and maj_runs == len(VOTE_SEEDS)


_COUNTER_ATTRS = {"p", "n", "dp", "dn"}
_ALLOWED_WRITERS = {"record_event", "close_epoch", "isolate"}


def _counter_writers():
    """(module, function) pairs that assign to a .p/.n/.dp/.dn attribute."""
    found = set()
    for path in Path(wsntrust.__file__).parent.glob("*.py"):
        tree = ast.parse(path.read_text())
        for fn in ast.walk(tree):
            if not isinstance(fn, (ast.FunctionDef, ast.AsyncFunctionDef)):
                continue
            for node in ast.walk(fn):
                targets = []
                if isinstance(node, ast.Assign):
                    targets = node.targets
                elif isinstance(node, (ast.AugAssign, ast.AnnAssign)):
                    targets = [node.target]
                for t in targets:
                    for sub in ast.walk(t):
                        if isinstance(sub, ast.Attribute) and sub.attr in _COUNTER_ATTRS:
                            found.add((path.stem, fn.name))
    return found


@pytest.mark.criterion(8, "false-praise cannot save a blackhole; counters move only on local evidence")
def test_c08_false_praise(record_property):
    writers = _counter_writers()
    structural = writers <= {("trust", f) for f in _ALLOWED_WRITERS}
    # dynamic check: handling any vote, alert or notice leaves every counter untouched
    sc = load_preset("false-praise")
    bad = [e.node for e in sc.schedule.entries if e.profile.drop_rate > 0][0]
    touched = 0
    handled = 0
    isolated = 0
    for seed in BLACKHOLE_SEEDS:
        w = World(sc, seed)
        real_vote, real_receive = w._on_vote_msg, w._receive

        def snapshot():
            return {(i, j): (r.p, r.n, r.dp, r.dn) for i, nd in w.nodes.items() if nd.table
                    for j, r in nd.table.records.items()}

        def vote_spy(*a, real=real_vote):
            nonlocal touched, handled
            before = snapshot()
            real(*a)
            handled += 1
            touched += snapshot() != before

        def receive_spy(n, t, p, pt, verified, real=real_receive):
            nonlocal touched, handled
            if p.handler != pr.Handler.ISOLATION_NOTICE:
                return real(n, t, p, pt, verified)
            before = snapshot()
            real(n, t, p, pt, verified)
            handled += 1
            touched += snapshot() != before

        w._on_vote_msg, w._receive = vote_spy, receive_spy
        w.run()
        isolated += majority_isolated(w, bad)
    _detail(record_property, f"blackhole majority-isolated in {isolated}/{len(BLACKHOLE_SEEDS)} seeds despite "
                             f"{len(sc.collusion[1].members)} praising colluders; counter writers "
                             f"{sorted(f for _, f in writers)}; {handled} vote/alert/notice messages, "
                             f"{touched} touched counters")
    assert isolated == len(BLACKHOLE_SEEDS) and structural and touched == 0 and handled > 0


def _first_beacon_window(trace, node, after):
    ticks = [int(line.split(",")[0]) for line in trace.splitlines()[1:]
             if line.split(",")[2] == "beacon-tick" and line.split(",")[3] == str(node)]
    later = [t for t in ticks if t >= after]
    return later[0], later[1] if len(later) > 1 else math.inf


@pytest.mark.criterion(9, "relocation and code change: direct zero at the first beacon, no vote")
def test_c09_direct_zero(record_property):
    notes, ok = [], True
    for name in ("relocation", "byzantine"):
        sc = load_preset(name)
        w = World(sc, trace=True).run()
        bad = sc.bad_nodes()[0]
        hn = honest_neighbors(w, bad)
        lo, hi = _first_beacon_window(w.sim.trace_text(), bad, sc.activation_of(bad))
        hits = {obs: (tick, how) for tick, obs, subj, how in w.isolations if subj == bad}
        zero = all(w.nodes[o].table.get(bad).trust == 0.0 and w.nodes[o].table.is_isolated(bad) for o in hn)
        timely = all(o in hits and hits[o][1] == "direct_zero" and lo < hits[o][0] < hi for o in hn)
        no_vote = w.counters.alerts == 0 and w.counters.vote_rounds == 0
        ok &= zero and timely and no_vote
        notes.append(f"{name}: {len(hn)} honest neighbours, trust 0 at all={zero}, isolated between "
                     f"beacon-tick {lo} and {hi}={timely}, alerts {w.counters.alerts}, "
                     f"vote rounds {w.counters.vote_rounds}")
    _detail(record_property, "; ".join(notes))
    assert ok


def _short(name):
    """Presets cut to a length that still covers their attack."""
    sc = load_preset(name)
    epochs = min(sc.epochs, 80)
    return load_preset(name, {"scenario.run_epochs": str(epochs), "scenario.replicas": "1"})


_EXPORTS: dict[str, Path] = {}


@pytest.fixture(scope="module")
def exports(tmp_path_factory):
    if not _EXPORTS:
        base = tmp_path_factory.mktemp("determinism")
        for name in PRESETS:
            for k in ("a", "b"):
                harness.export(harness.run(_short(name), trace=True), base / name / k)
            _EXPORTS[name] = base / name
    return _EXPORTS


@pytest.mark.criterion(10, "same seed, byte-identical outputs")
def test_c10_determinism(record_property, exports):
    files = ("summary.csv", "trust_trajectories.csv", "event_trace.txt")
    differing = [f"{name}/{f}" for name, d in exports.items() for f in files
                 if (d / "a" / f).read_bytes() != (d / "b" / f).read_bytes()]
    size = sum((d / "a" / "event_trace.txt").stat().st_size for d in exports.values())
    _detail(record_property, f"{len(exports)} presets x {len(files)} files compared "
                             f"({size / 1e6:.1f} MB of traces); differing: {differing or 'none'}")
    assert not differing


@pytest.mark.criterion(11, "trust function properties; isolation is absorbing")
def test_c11_trust_properties(record_property, exports):
    grid_ok = trust_value(0, 0) == 1.0 and trust_value(0, 4) == pytest.approx(0.2)
    for p in range(50):
        for n in range(50):
            t = trust_value(p, n)
            grid_ok &= 0.0 <= t <= 1.0
            grid_ok &= trust_value(p + 1, n) >= t and trust_value(p, n + 1) <= t
    rows = out_of_range = reversals = 0
    for d in exports.values():
        status = {}
        for line in (d / "a" / "trust_trajectories.csv").read_text().splitlines()[1:]:
            ep, obs, subj, p, n, t, st = line.split(",")
            rows += 1
            out_of_range += not 0.0 <= float(t) <= 1.0
            key = (obs, subj)
            if status.get(key) == Status.ISOLATED.value and st != Status.ISOLATED.value:
                reversals += 1
            status[key] = st
    _detail(record_property, f"50x50 grid ok={grid_ok}; {rows} trajectory rows across {len(exports)} presets, "
                             f"{out_of_range} out of [0,1], {reversals} exits from isolated")
    assert grid_ok and rows > 0 and out_of_range == 0 and reversals == 0


LINE = """
[scenario]
run_epochs = 5
epoch_len = 10000
sensing_period = 2000
[topology]
node_count = 5
field_w = 100
field_h = 40
radio_range = 30
sink = 0
positions = 0:0,30; 1:0,0; 2:30,0; 3:60,0; 4:90,0
"""


def _probe(isolate_middle):
    w = World(loads_scenario(LINE), 1)
    w.run(until=25_000)  # beacons have refreshed every neighbour table
    if isolate_middle:
        for o in (1, 3):
            w.nodes[o].table.isolate(2, w.sim.now)
    pairs = [(1, 2), (2, 1), (2, 3), (3, 2), (3, 4), (4, 3)]
    trusted = all(w.nodes[a].table.trust(b) >= THETA and not w.nodes[a].table.is_isolated(b) for a, b in pairs)
    probe = w.remote_trust_query(1, 4)
    w.run(until=40_000)
    return probe, trusted


@pytest.mark.criterion(12, "remote trust probe on a four-node line")
def test_c12_remote_probe(record_property):
    h = estimate_hops((0, 0), (90, 0), 30)
    h95 = estimate_hops((0, 0), (95, 0), 30)
    clean, clean_trusted = _probe(False)
    cut, cut_trusted = _probe(True)
    _detail(record_property, f"h(90 m)={h}, h(95 m)={h95}; all pairs trusted -> {clean.result} "
                             f"(budget {clean.budget}); middle isolated -> {cut.result}")
    assert h == 3 and h95 == 4
    assert clean_trusted and clean.result == ProbeResult.TRUSTED and h <= clean.budget <= h + 2
    assert not cut_trusted and cut.result == ProbeResult.UNTRUSTED


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
