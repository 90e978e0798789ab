"""Experiment execution: replicas, sweeps, atomic CSV export and the crypto bench."""
from __future__ import annotations

import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import crypto
from .metrics import METRIC_FIELDS, MetricsReport, aggregate, compute, fmt
from .network import World
from .protocol import MAX_PAYLOAD, Handler
from .scenario import ConfigError, Scenario, loads_scenario, split_path
from .sim import derive_seed
from .watchdog import RULE_EVENT_HEADER

TRAJECTORY_HEADER = "epoch,observer,subject,p,n,trust,status"
SUMMARY_HEADER = ",".join(["replica", "seed"] + METRIC_FIELDS)


def replica_seed(master: int, replica: int) -> int:
    """Replica 0 runs on the scenario seed itself; others on derived sub-seeds."""
    if replica == 0:
        return master
    return derive_seed(master, ("replica", replica)) & 0x7FFF_FFFF


@dataclass
class ReplicaResult:
    replica: int
    report: MetricsReport
    trajectory: list = field(default_factory=list)
    rule_events: list = field(default_factory=list)
    trace: str = ""
    world: World | None = None


@dataclass
class RunResult:
    scenario: Scenario
    replicas: list[ReplicaResult]

    @property
    def reports(self) -> list[MetricsReport]:
        return [r.report for r in self.replicas]

    def aggregate(self) -> tuple[dict, dict]:
        return aggregate(self.reports)


def run_replica(sc: Scenario, replica: int, trace: bool = False, keep_world: bool = False,
                keep_rows: bool = True) -> ReplicaResult:
    world = World(sc, replica_seed(sc.seed, replica), trace=trace).run()
    res = ReplicaResult(replica, compute(world))
    if keep_rows:
        res.trajectory = world.trajectory
        res.rule_events = world.rule_log
    if trace:
        res.trace = world.sim.trace_text()
    if keep_world:
        res.world = world
    return res


def _run_one(args) -> ReplicaResult:
    text, replica, trace, keep_rows = args
    return run_replica(loads_scenario(text), replica, trace=trace, keep_rows=keep_rows)


def run(sc: Scenario, jobs: int = 1, trace: bool = False, keep_worlds: bool = False,
        keep_rows: bool = True) -> RunResult:
    """Run every replica; ``jobs > 1`` spreads them over worker processes."""
    if jobs > 1 and sc.replicas > 1 and not keep_worlds:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, [(sc.source_text, r, trace, keep_rows)
                                               for r in range(sc.replicas)]))
        return RunResult(sc, results)
    return RunResult(sc, [run_replica(sc, r, trace, keep_worlds, keep_rows) for r in range(sc.replicas)])


# ---------------------------------------------------------------------------
# export

_UMASK = os.umask(0)
os.umask(_UMASK)

def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        os.chmod(tmp, 0o666 & ~_UMASK)  # mkstemp creates 0600; exports are ordinary files
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def summary_csv(result: RunResult) -> str:
    lines = [SUMMARY_HEADER]
    for r in result.replicas:
        rep = r.report
        lines.append(",".join([str(r.replica), str(rep.seed)] + [fmt(getattr(rep, f)) for f in METRIC_FIELDS]))
    mean, std = result.aggregate()
    lines.append(",".join(["mean", ""] + [fmt(mean[f]) for f in METRIC_FIELDS]))
    lines.append(",".join(["std", ""] + [fmt(std[f]) for f in METRIC_FIELDS]))
    return "\n".join(lines) + "\n"


def trajectory_csv(rows) -> str:
    out = [TRAJECTORY_HEADER]
    out.extend(f"{ep},{o},{s},{fmt(p)},{fmt(n)},{fmt(t)},{st}" for ep, o, s, p, n, t, st in rows)
    return "\n".join(out) + "\n"


def rule_events_csv(events) -> str:
    out = [RULE_EVENT_HEADER]
    out.extend(ev.csv_row() for ev in events)
    return "\n".join(out) + "\n"


def export(result: RunResult, out_dir: str | Path) -> list[Path]:
    """Write all files to temporaries first, then rename them into place.

    Top-level files describe replica 0 (summary.csv covers every replica);
    further replicas get ``replica-XX/`` subdirectories.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged: list[tuple[Path, str]] = [(out / "summary.csv", summary_csv(result)),
                                      (out / "scenario.ini", result.scenario.source_text)]
    for r in result.replicas:
        d = out if r.replica == 0 else out / f"replica-{r.replica:02d}"
        staged.append((d / "trust_trajectories.csv", trajectory_csv(r.trajectory)))
        staged.append((d / "rule_events.csv", rule_events_csv(r.rule_events)))
        if r.trace:
            staged.append((d / "event_trace.txt", r.trace))
    # render everything before touching the filesystem so a failure leaves nothing half-written
    written = []
    for path, text in staged:
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, text)
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# sweeps

@dataclass
class SweepRow:
    value: str
    reports: list[MetricsReport]

    @property
    def mean(self) -> dict:
        return aggregate(self.reports)[0]

    @property
    def std(self) -> dict:
        return aggregate(self.reports)[1]


def sweep(sc: Scenario, path: str, values: Sequence, replicas: int | None = None,
          jobs: int = 1) -> list[SweepRow]:
    """One aggregated row per value, in the order given."""
    if len(values) < 2:
        raise ConfigError("sweep: need at least two values")
    split_path(path)
    rows = []
    for v in values:
        over = {path: str(v)}
        if replicas is not None:
            over["scenario.replicas"] = str(replicas)
        sv = loads_scenario(sc.source_text, over)
        res = run(sv, jobs=jobs, keep_rows=False)
        rows.append(SweepRow(str(v), res.reports))
    return rows


def sweep_csv(path: str, rows: list[SweepRow]) -> str:
    head = [path, "replicas"] + [f"{f}_mean" for f in METRIC_FIELDS] + [f"{f}_std" for f in METRIC_FIELDS]
    lines = [",".join(head)]
    for r in rows:
        mean, std = aggregate(r.reports)
        lines.append(",".join([r.value, str(len(r.reports))] + [fmt(mean[f]) for f in METRIC_FIELDS]
                              + [fmt(std[f]) for f in METRIC_FIELDS]))
    return "\n".join(lines) + "\n"


def export_sweep(path: str, rows: list[SweepRow], out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "sweep.csv"
    _atomic_write(target, sweep_csv(path, rows))
    return target


# ---------------------------------------------------------------------------
# crypto bench

@dataclass
class BenchResult:
    packets: int
    seconds: float
    ok: bool

    @property
    def packets_per_second(self) -> float:
        return self.packets / self.seconds if self.seconds > 0 else float("inf")


def bench_crypto(packets: int = 200_000, nkeys: int = 64, rounds: int = crypto.DEFAULT_ROUNDS,
                 seed: int = 7) -> BenchResult:
    """Seal then open ``packets`` full-size (14-byte payload) packets, vectorised."""
    rng = np.random.default_rng(seed)
    keys = [crypto.expand_key(rng.bytes(crypto.KEY_BYTES), rounds) for _ in range(nkeys)]
    table = crypto.key_table(keys)
    src = rng.integers(0, nkeys, packets)
    seq = rng.integers(0, 0x10000, packets)
    handler = np.full(packets, int(Handler.DATA), dtype=np.int64)
    payload = rng.integers(0, 256, (packets, MAX_PAYLOAD), dtype=np.uint8)
    t0 = time.perf_counter()
    ct, mac = crypto.seal_batch(table, src, src, seq, handler, payload)
    ok, pt = crypto.open_batch(table, src, src, seq, handler, ct, mac)
    dt = time.perf_counter() - t0
    return BenchResult(packets, dt, bool(ok.all() and np.array_equal(pt, payload)))
