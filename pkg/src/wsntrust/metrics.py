"""Per-replica metrics computed from a finished World, plus NaN-aware aggregation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from itertools import combinations

import numpy as np

from .trust import Status


@dataclass
class MetricsReport:
    seed: int
    detection_rate: float
    false_positive_rate: float
    mean_time_to_isolation: float
    delivery_ratio: float
    control_overhead: float
    attacker_trust: float
    disagreement: float
    bad_nodes: int
    isolated_bad: int
    isolated_honest: int
    alerts: int
    vote_rounds: int
    isolations: int
    pdr_alarms: int
    routing_voids: int
    hop_auth_failures: int
    e2e_auth_failures: int
    frames: int
    events: int

    def as_dict(self) -> dict:
        return asdict(self)


METRIC_FIELDS = [f.name for f in fields(MetricsReport) if f.name != "seed"]


def honest_neighbors(world, node: int) -> set[int]:
    bad = set(world.sc.bad_nodes())
    return {j for j in world.topo.neighbors(node) if j != world.sink and j not in bad}


def isolated_by(world) -> dict[int, dict[int, int]]:
    """subject -> {observer: first isolation tick}."""
    out: dict[int, dict[int, int]] = {}
    for tick, obs, subj, _how in world.isolations:
        out.setdefault(subj, {}).setdefault(obs, tick)
    return out


def majority_isolated(world, node: int, by: dict[int, dict[int, int]] | None = None) -> bool:
    by = isolated_by(world) if by is None else by
    hn = honest_neighbors(world, node)
    if not hn:
        return False
    return len(hn & set(by.get(node, {}))) * 2 > len(hn)


def isolation_fraction(world, node: int) -> float:
    """Share of ``node``'s honest neighbours that isolated it."""
    hn = honest_neighbors(world, node)
    if not hn:
        return float("nan")
    return len(hn & set(isolated_by(world).get(node, {}))) / len(hn)


def compute(world) -> MetricsReport:
    sc = world.sc
    c = world.counters
    by = isolated_by(world)
    bad = sc.bad_nodes()
    honest = [i for i in world.nodes if i != world.sink and i not in set(bad)]
    iso_bad = [b for b in bad if majority_isolated(world, b, by)]
    iso_honest = [h for h in honest if majority_isolated(world, h, by)]

    ttis = []
    for b in bad:
        hn = honest_neighbors(world, b)
        ticks = [t for o, t in by.get(b, {}).items() if o in hn]
        if ticks:
            ttis.append(min(ticks) - sc.activation_of(b))

    # steady state = the last fifth of the run, records not (yet) isolated
    last = world.epoch - world.epoch // 5
    badset = set(bad)
    honest_set = set(honest)
    tr = [row[5] for row in world.trajectory
          if row[0] >= last and row[2] in badset and row[1] in honest_set
          and row[6] != Status.ISOLATED.value]
    attacker_trust = float(np.mean(tr)) if tr else float("nan")

    conflicts = pairs = 0
    for subj, obs in by.items():
        hn = sorted(honest_neighbors(world, subj))
        if not any(o in obs for o in hn):
            continue
        for a, b in combinations(hn, 2):
            pairs += 1
            conflicts += (a in obs) != (b in obs)

    return MetricsReport(
        seed=world.seed,
        detection_rate=len(iso_bad) / len(bad) if bad else float("nan"),
        false_positive_rate=len(iso_honest) / len(honest) if honest else float("nan"),
        mean_time_to_isolation=float(np.mean(ttis)) if ttis else float("nan"),
        delivery_ratio=c.delivered_counted / c.generated_counted if c.generated_counted else float("nan"),
        control_overhead=c.bytes_control / c.bytes_total if c.bytes_total else 0.0,
        attacker_trust=attacker_trust,
        disagreement=conflicts / pairs if pairs else 0.0,
        bad_nodes=len(bad),
        isolated_bad=len(iso_bad),
        isolated_honest=len(iso_honest),
        alerts=c.alerts,
        vote_rounds=c.vote_rounds,
        isolations=len(world.isolations),
        pdr_alarms=c.pdr_alarms,
        routing_voids=c.routing_voids,
        hop_auth_failures=c.hop_auth_failures,
        e2e_auth_failures=c.e2e_auth_failures,
        frames=c.frames,
        events=world.sim.dispatched,
    )


def aggregate(reports: list[MetricsReport]) -> tuple[dict[str, float], dict[str, float]]:
    """Mean and population std per metric, ignoring undefined (NaN) replicas."""
    mean, std = {}, {}
    for f in METRIC_FIELDS:
        vals = np.array([getattr(r, f) for r in reports], dtype=float)
        vals = vals[~np.isnan(vals)]
        mean[f] = float(vals.mean()) if vals.size else float("nan")
        std[f] = float(vals.std()) if vals.size else float("nan")
    return mean, std


def fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.10g}"
    return str(v)
