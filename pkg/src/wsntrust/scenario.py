"""Scenario configuration: a strict INI dialect plus the built-in presets.

Grammar (every key optional unless noted, unknown sections/keys are errors)::

    [scenario]   name, seed, replicas, epoch_len, sensing_period, beacon_period,
                 run_epochs | run_ticks (exactly one, required), field_value,
                 sigma_field, rounds, backoff_max, tx_jitter
    [topology]   node_count, field_w, field_h, radio_range, sink,
                 positions = "id:x,y; id:x,y", region = "x0,y0,x1,y1"
    [channel]    loss_prob, collision_window, bandwidth_bps
    [watchdog]   any WatchdogConfig field
    [trust]      theta_trust, aging, vote_window, plain_majority, theta_route,
                 probe_slack, probe_retries, weight.<RULE>
    [toggles]    end_to_end_ack, hop_auth, trajectories
    [attack.K]   node, activate_epoch | activate_at, AttackProfile fields
    [fault.K]    node, activate_epoch | activate_at, FaultProfile fields
    [collusion.G] mode (bad_mouth | false_praise), target

Times are ticks (1 ms) except ``*_epoch(s)`` keys.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .adversary import (AttackProfile, CollusionMode, CompromiseSchedule, FaultPattern,
                        FaultProfile, ScheduleEntry, ScheduleError)
from .topology import ChannelModel
from .trust import TrustConfig
from .watchdog import Rule, WatchdogConfig

PRESETS = ("honest-baseline", "blackhole", "graduated-drop", "bad-mouth", "false-praise",
           "jammer", "byzantine", "relocation")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CollusionGroup:
    gid: int
    mode: CollusionMode
    target: int
    members: tuple[int, ...] = ()


@dataclass
class Scenario:
    name: str = "custom"
    seed: int = 1
    replicas: int = 1
    node_count: int = 50
    field_w: float = 200.0
    field_h: float = 200.0
    radio_range: float = 50.0
    sink: int = 0
    positions: dict[int, tuple[float, float]] = field(default_factory=dict)
    region: tuple[float, float, float, float] | None = None
    channel: ChannelModel = field(default_factory=lambda: ChannelModel(0.0, 0))
    epoch_len: int = 10_000
    sensing_period: int = 10_000
    beacon_period: int = 10_000
    run_ticks: int = 1_000_000
    field_value: float = 20.0
    sigma_field: float = 1.0
    rounds: int = 8
    backoff_max: int = 16
    # reports and beacons leave a uniform [0, tx_jitter) ticks after their nominal
    # time, so two hidden senders with close phases do not collide every period
    tx_jitter: int = 500
    watchdog: WatchdogConfig = field(default_factory=WatchdogConfig)
    trust: TrustConfig = field(default_factory=TrustConfig)
    end_to_end_ack: bool = False
    hop_auth: bool = True
    trajectories: bool = True
    probe_retries: int = 0
    schedule: CompromiseSchedule = field(default_factory=CompromiseSchedule)
    collusion: dict[int, CollusionGroup] = field(default_factory=dict)
    source_text: str = ""

    @property
    def epochs(self) -> int:
        return self.run_ticks // self.epoch_len

    @property
    def expected_tx_per_epoch(self) -> float:
        if self.watchdog.expected_tx_per_epoch is not None:
            return self.watchdog.expected_tx_per_epoch
        if self.sensing_period <= 0:
            return 0.0
        return self.epoch_len / self.sensing_period

    def bad_nodes(self) -> list[int]:
        return sorted(e.node for e in self.schedule.entries)

    def activation_of(self, node: int) -> int | None:
        for e in self.schedule.entries:
            if e.node == node:
                return e.activate_at
        return None

    def validate(self) -> None:
        if self.node_count < 1:
            raise ConfigError("topology.node_count: must be >= 1")
        if self.run_ticks <= 0:
            raise ConfigError("scenario.run_ticks: run length must be > 0")
        if self.epoch_len <= 0:
            raise ConfigError("scenario.epoch_len: must be > 0")
        if self.replicas < 1:
            raise ConfigError("scenario.replicas: must be >= 1")
        for k in ("sensing_period", "beacon_period"):
            period = getattr(self, k)
            if period > 0 and not 0 <= self.tx_jitter < period:
                raise ConfigError(f"scenario.tx_jitter: must lie in [0, {k}={period})")
        if self.backoff_max < 0:
            raise ConfigError("scenario.backoff_max: must be >= 0")
        if not 0 <= self.sink < self.node_count:
            raise ConfigError(f"topology.sink: {self.sink} is not a deployed node id")
        for i, (x, y) in self.positions.items():
            if not 0 <= i < self.node_count:
                raise ConfigError(f"topology.positions: node {i} >= node_count {self.node_count}")
            if not (0 <= x <= self.field_w and 0 <= y <= self.field_h):
                raise ConfigError(f"topology.positions: node {i} lies outside the field")
        if self.region is not None:
            x0, y0, x1, y1 = self.region
            if not (0 <= x0 <= x1 <= self.field_w and 0 <= y0 <= y1 <= self.field_h):
                raise ConfigError("topology.region: must lie inside the field with x0<=x1, y0<=y1")
        try:
            self.schedule.validate(self.node_count, self.sink)
        except ScheduleError as exc:
            raise ConfigError(f"attack: {exc}") from None
        for g in self.collusion.values():
            if not 0 <= g.target < self.node_count:
                raise ConfigError(f"collusion.{g.gid}.target: {g.target} is not a deployed node id")


# ---------------------------------------------------------------------------
# parsing

_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _conv(section: str, key: str, raw: str, kind: Any) -> Any:
    where = f"{section}.{key}"
    raw = raw.strip()
    try:
        if kind is bool:
            v = _BOOL.get(raw.lower())
            if v is None:
                raise ValueError
            return v
        if kind is int:
            try:
                return int(raw)
            except ValueError:
                f = float(raw)
                if not f.is_integer():
                    raise
                return int(f)
        if kind is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "opt_float":
            return None if raw.lower() in ("", "none") else float(raw)
        if kind == "opt_int":
            return None if raw.lower() in ("", "none") else int(raw)
        if kind == "pair":
            if raw.lower() in ("", "none"):
                return None
            a, b = raw.split(",")
            return float(a), float(b)
        if kind == "box":
            vals = tuple(float(v) for v in raw.split(","))
            if len(vals) != 4:
                raise ValueError
            return vals
        if kind == "positions":
            out = {}
            for item in raw.replace("\n", ";").split(";"):
                item = item.strip()
                if not item:
                    continue
                nid, xy = item.split(":")
                x, y = xy.split(",")
                out[int(nid)] = (float(x), float(y))
            return out
        if isinstance(kind, type) and issubclass(kind, Enum):
            return kind(raw.lower())
        return raw
    except (ValueError, TypeError):
        label = getattr(kind, "__name__", kind)
        raise ConfigError(f"{where}: cannot parse {raw!r} as {label}") from None


_SCENARIO_KEYS = {"name": str, "seed": int, "replicas": int, "epoch_len": int,
                  "sensing_period": int, "beacon_period": int, "run_epochs": int,
                  "run_ticks": int, "field_value": float, "sigma_field": float, "rounds": int,
                  "backoff_max": int, "tx_jitter": int}
_TOPOLOGY_KEYS = {"node_count": int, "field_w": float, "field_h": float, "radio_range": float,
                  "sink": int, "positions": "positions", "region": "box"}
_CHANNEL_KEYS = {"loss_prob": float, "collision_window": int, "bandwidth_bps": int}
_WATCHDOG_KEYS = {"p_watch": float, "buffer_size": int, "t_ack": int, "t_watch": int, "k_sigma": float,
                  "min_neighbors": int, "min_samples": int, "window": int, "delta": float,
                  "theta_pdr": float, "pdr_min_packets": int, "eps_loc": float,
                  "sigma_floor": float, "w_ack": float, "w_auth": float, "w_data": float,
                  "w_traffic": float, "w_beacon": float, "expected_tx_per_epoch": "opt_float",
                  "bystander_watch": bool}
_TRUST_KEYS = {"theta_trust": float, "aging": float, "vote_window": int, "plain_majority": bool,
               "theta_route": "opt_float", "probe_slack": int, "probe_retries": int}
_TOGGLE_KEYS = {"end_to_end_ack": bool, "hop_auth": bool, "trajectories": bool}
_ATTACK_KEYS = {"drop_rate": float, "delay_ticks": int, "alter_rate": float, "replay_rate": float,
                "sinkhole": bool, "jam_rate": float, "data_bias": float, "data_sigma": float,
                "bogus_query_rate": float, "byzantine_duty": float, "relocate": "pair",
                "code_delta": bool, "collusion_group": "opt_int"}
_FAULT_KEYS = {"alter_rate": float, "broadcast_rate": float, "sense_error_sigma": float,
               "drop_rate": float, "pattern": FaultPattern, "duration_ticks": int,
               "active_prob": float}
_ENTRY_KEYS = {"node": int, "activate_epoch": int, "activate_at": int}
_COLLUSION_KEYS = {"mode": CollusionMode, "target": int}

assert set(_WATCHDOG_KEYS) == {f.name for f in fields(WatchdogConfig)}
assert set(_ATTACK_KEYS) == {f.name for f in fields(AttackProfile)}
assert set(_FAULT_KEYS) == {f.name for f in fields(FaultProfile)}


def _section(cp: configparser.ConfigParser, name: str, schema: Mapping[str, Any],
             extra_prefix: str | None = None) -> dict[str, Any]:
    if not cp.has_section(name):
        return {}
    out = {}
    for key, raw in cp.items(name):
        if key in schema:
            out[key] = _conv(name, key, raw, schema[key])
        elif extra_prefix and key.startswith(extra_prefix):
            out[key] = raw
        else:
            allowed = ", ".join(sorted(schema))
            raise ConfigError(f"{name}.{key}: unknown key (allowed: {allowed})")
    return out


def _parser(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";;"),
                                   strict=True, default_section="__none__")
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax: {exc}") from None
    return cp


def _build(cp: configparser.ConfigParser, text: str) -> Scenario:
    for name in cp.sections():
        head = name.split(".")[0]
        if name not in _FIXED_SECTIONS and \
                head not in ("attack", "fault", "collusion"):
            raise ConfigError(f"[{name}]: unknown section")
    sc_kv = _section(cp, "scenario", _SCENARIO_KEYS)
    topo = _section(cp, "topology", _TOPOLOGY_KEYS)
    chan = _section(cp, "channel", _CHANNEL_KEYS)
    wd = _section(cp, "watchdog", _WATCHDOG_KEYS)
    tr = _section(cp, "trust", _TRUST_KEYS, extra_prefix="weight.")
    tog = _section(cp, "toggles", _TOGGLE_KEYS)

    sc = Scenario(source_text=text)
    for k in ("name", "seed", "replicas", "epoch_len", "sensing_period", "beacon_period",
              "field_value", "sigma_field", "rounds", "backoff_max", "tx_jitter"):
        if k in sc_kv:
            setattr(sc, k, sc_kv[k])
    if ("run_epochs" in sc_kv) == ("run_ticks" in sc_kv):
        raise ConfigError("scenario.run_epochs/run_ticks: give exactly one run length")
    sc.run_ticks = sc_kv["run_ticks"] if "run_ticks" in sc_kv else sc_kv["run_epochs"] * sc.epoch_len
    for k, v in topo.items():
        setattr(sc, k, v)
    try:
        sc.channel = ChannelModel(**{"loss_prob": 0.0, "collision_window": 0, **chan})
        sc.watchdog = WatchdogConfig(**wd)
        weights = {r: 1.0 for r in Rule}
        for k in [k for k in tr if k.startswith("weight.")]:
            rule_name = k.split(".", 1)[1].upper()
            if rule_name not in Rule.__members__:
                raise ConfigError(f"trust.{k}: unknown rule {rule_name!r}")
            weights[Rule[rule_name]] = _conv("trust", k, tr.pop(k), float)
        sc.probe_retries = tr.pop("probe_retries", 0)
        sc.trust = TrustConfig(activity_weights=weights, **tr)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"constraint: {exc}") from None
    for k, v in tog.items():
        setattr(sc, k, v)

    entries = []
    for name in sorted(s for s in cp.sections() if s.split(".")[0] in ("attack", "fault")):
        head = name.split(".")[0]
        schema = {**_ENTRY_KEYS, **(_ATTACK_KEYS if head == "attack" else _FAULT_KEYS)}
        kv = _section(cp, name, schema)
        if "node" not in kv:
            raise ConfigError(f"{name}.node: required")
        if ("activate_epoch" in kv) == ("activate_at" in kv):
            raise ConfigError(f"{name}.activate_epoch/activate_at: give exactly one activation time")
        at = kv.pop("activate_at") if "activate_at" in kv else kv.pop("activate_epoch") * sc.epoch_len
        node = kv.pop("node")
        try:
            profile = AttackProfile(**kv) if head == "attack" else FaultProfile(**kv)
        except ScheduleError as exc:
            raise ConfigError(f"{name}: {exc}") from None
        entries.append(ScheduleEntry(node, profile, at))
    sc.schedule = CompromiseSchedule(entries)

    for name in sorted(s for s in cp.sections() if s.startswith("collusion")):
        kv = _section(cp, name, _COLLUSION_KEYS)
        try:
            gid = int(name.split(".", 1)[1])
        except (IndexError, ValueError):
            raise ConfigError(f"[{name}]: collusion sections are named collusion.<int>") from None
        if "mode" not in kv or "target" not in kv:
            raise ConfigError(f"{name}: mode and target are required")
        members = tuple(sorted(e.node for e in entries if isinstance(e.profile, AttackProfile)
                               and e.profile.collusion_group == gid))
        sc.collusion[gid] = CollusionGroup(gid, kv["mode"], kv["target"], members)
    for e in entries:
        g = getattr(e.profile, "collusion_group", None)
        if g is not None and g not in sc.collusion:
            raise ConfigError(f"attack on node {e.node}: collusion_group {g} has no [collusion.{g}] section")
    sc.validate()
    return sc


_FIXED_SECTIONS = ("scenario", "topology", "channel", "watchdog", "trust", "toggles")


def loads_scenario(text: str, overrides: Mapping[str, str] | None = None) -> Scenario:
    """Parse scenario text; ``overrides`` maps ``section.key`` paths to raw values."""
    cp = _parser(text)
    for path, value in (overrides or {}).items():
        section, key = split_path(path)
        if not cp.has_section(section):
            if section not in _FIXED_SECTIONS:
                raise ConfigError(f"{path}: no [{section}] section to override")
            cp.add_section(section)
        cp.set(section, key, str(value))
    if overrides:
        # keep the effective text so exported copies reproduce the run
        buf = io.StringIO()
        cp.write(buf)
        text = buf.getvalue()
    return _build(cp, text)


def split_path(path: str) -> tuple[str, str]:
    """``attack.1.drop_rate`` -> (``attack.1``, ``drop_rate``).

    Fixed sections take the rest as the key, so ``trust.weight.ack`` works.
    """
    head, _, rest = path.partition(".")
    if head in _FIXED_SECTIONS:
        section, key = head, rest
    else:
        section, _, key = path.rpartition(".")
    if not section or not key:
        raise ConfigError(f"{path}: parameter paths look like section.key")
    return section, key


def load_scenario(path: str | Path, overrides: Mapping[str, str] | None = None) -> Scenario:
    text = Path(path).read_text()
    return loads_scenario(text, overrides)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("wsntrust.presets").joinpath(f"{name}.ini").read_text()


def load_preset(name: str, overrides: Mapping[str, str] | None = None) -> Scenario:
    return loads_scenario(preset_text(name), overrides)
