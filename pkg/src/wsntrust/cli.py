"""Command-line entry point: ``python -m wsntrust`` or the ``wsntrust`` script."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .metrics import METRIC_FIELDS, fmt
from .scenario import PRESETS, ConfigError, load_scenario, loads_scenario, preset_text


def _resolve(source: str, overrides: dict[str, str]):
    """A path to an .ini file, or the name of a built-in preset."""
    p = Path(source)
    if p.exists():
        return load_scenario(p, overrides)
    if source in PRESETS:
        return loads_scenario(preset_text(source), overrides)
    raise ConfigError(f"{source}: no such scenario file or preset")


def _overrides(args) -> dict[str, str]:
    over = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        over[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        over["scenario.seed"] = str(args.seed)
    if getattr(args, "replicas", None) is not None:
        over["scenario.replicas"] = str(args.replicas)
    return over


def cmd_run(args) -> int:
    sc = _resolve(args.scenario, _overrides(args))
    result = harness.run(sc, jobs=args.jobs, trace=args.trace)
    mean, std = result.aggregate()
    print(f"scenario {sc.name}: {sc.replicas} replica(s), seed {sc.seed}, {sc.epochs} epochs")
    for f in METRIC_FIELDS:
        print(f"  {f:24s} {fmt(mean[f]):>14s}  ± {fmt(std[f])}")
    if args.out:
        written = harness.export(result, args.out)
        print(f"wrote {len(written)} files to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    sc = _resolve(args.scenario, _overrides(args))
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    rows = harness.sweep(sc, args.param, values, replicas=args.replicas, jobs=args.jobs)
    print(harness.sweep_csv(args.param, rows), end="")
    if args.out:
        path = harness.export_sweep(args.param, rows, args.out)
        print(f"wrote {path}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    res = harness.bench_crypto(args.packets, rounds=args.rounds)
    print(f"sealed+opened {res.packets} packets in {res.seconds:.3f} s: "
          f"{res.packets_per_second:,.0f} packets/s (roundtrip {'ok' if res.ok else 'FAILED'})")
    return 0 if res.ok else 1


def cmd_preset(args) -> int:
    if args.list or args.name is None:
        print("\n".join(PRESETS))
        return 0
    text = preset_text(args.name)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wsntrust", description="Trust-management WSN simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run a scenario file or preset and report metrics")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--replicas", type=int)
    r.add_argument("--out", help="directory for CSV exports")
    r.add_argument("--jobs", type=int, default=1, help="worker processes (1 = fully serial)")
    r.add_argument("--trace", action="store_true", help="also write event_trace.txt")
    r.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config key")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="vary one config key over a list of values")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, help="e.g. attack.1.drop_rate")
    s.add_argument("--values", required=True, help="comma separated")
    s.add_argument("--replicas", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench-crypto", help="RC5/OFB/CBC-MAC seal+open throughput")
    b.add_argument("--packets", type=int, default=200_000)
    b.add_argument("--rounds", type=int, default=8)
    b.set_defaults(func=cmd_bench)

    p = sub.add_parser("preset", help="print a built-in scenario")
    p.add_argument("name", nargs="?", choices=PRESETS)
    p.add_argument("--list", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_preset)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
