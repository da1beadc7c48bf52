"""Command-line entry point: run, monte-carlo, compare, catalog."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import _schema as sch
from .catalog import format_catalog
from .cross import AnalysisConfig
from .errors import DarumaError, ParseError, SchemaError, UnknownScenario
from .fusion import ArbiterConfig, FusionConfig
from .harness import Mode, compare, monte_carlo, run
from .scenario import Scenario, builtin_scenario, config_from_dict, load_scenario, load_scenario_file
from .traceio import emit

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(Exception):
    pass


def resolve_scenario(spec: str) -> Scenario:
    if spec.startswith("builtin:"):
        return builtin_scenario(spec[len("builtin:"):])
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {spec}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return load_scenario_file(path)  # let the loader report the error
    if isinstance(doc, dict) and set(doc) == {"metadata", "scenario"}:
        return load_scenario(doc["scenario"])  # config.json written by a previous run
    return load_scenario_file(path)


def apply_overrides(sc: Scenario, path: Optional[str]) -> Scenario:
    """Merge fusion/arbiter/analysis overrides from a JSON file into the scenario."""
    if not path:
        return sc
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed config JSON: {exc}") from None
    doc = sch.require_mapping(doc, "config")
    sch.check_keys(doc, ("fusion", "arbiter", "analysis"), "config")
    changes = {}
    for key, cls, cur in (
        ("fusion", FusionConfig, sc.fusion),
        ("arbiter", ArbiterConfig, sc.arbiter),
        ("analysis", AnalysisConfig, sc.analysis),
    ):
        if key in doc:
            merged = {f: getattr(cur, f) for f in cur.__dataclass_fields__}
            merged.update(sch.require_mapping(doc[key], f"config.{key}"))
            changes[key] = config_from_dict(cls, merged, f"config.{key}")
    return replace(sc, **changes)


def _load(args) -> Scenario:
    sc = apply_overrides(resolve_scenario(args.scenario), args.config)
    if getattr(args, "seed", None) is not None:
        sc = sc.with_seed(args.seed)
    return sc


def _mode(text: str) -> Mode:
    try:
        return Mode.parse(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _write_rows(rows, path: Path) -> None:
    if not rows:
        return
    keys = [k for k in rows[0] if k != "oi_histogram"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys + [f"oi_{i}" for i in range(1, 17)])
        for r in rows:
            w.writerow([r[k] for k in keys] + [r["oi_histogram"][str(i)] for i in range(1, 17)])


def cmd_run(args) -> int:
    mode = _mode(args.mode)
    sc = _load(args)
    trace, metrics = run(sc, mode)
    if args.out:
        emit(trace, metrics, args.out, sc)
    print(json.dumps({"metadata": trace.metadata, "metrics": metrics.to_dict()}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_monte_carlo(args) -> int:
    mode = _mode(args.mode)
    sc = _load(args)
    res = monte_carlo(sc, args.runs, args.seed0, mode, args.threads)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "aggregate.json").write_text(json.dumps(res.aggregate, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        _write_rows(res.per_run, out / "runs.csv")
    print(json.dumps({"mode": res.mode, "aggregate": res.aggregate}, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    sc = _load(args)
    rep = compare(sc, args.runs, args.seed0, args.threads)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.json").write_text(json.dumps(rep.aggregates, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        _write_rows(rep.rows, out / "compare.csv")
    sys.stdout.write(rep.table())
    return EXIT_OK


def cmd_catalog(args) -> int:
    sys.stdout.write(format_catalog())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="path to a scenario JSON or builtin:NAME")
    common.add_argument("--config", help="JSON with fusion/arbiter/analysis overrides")
    common.add_argument("--out", help="output directory")

    p = argparse.ArgumentParser(prog="daruma-sim", description="Multi-channel driving arbitration simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="simulate one scenario")
    r.add_argument("--mode", default="daruma", help="daruma | single:<k> | open-loop")
    r.add_argument("--seed", type=_seed)
    r.set_defaults(func=cmd_run)

    mc = sub.add_parser("monte-carlo", parents=[common], help="run seeds seed0..seed0+N-1")
    mc.add_argument("--runs", type=_positive_int, required=True)
    mc.add_argument("--seed0", type=_seed, default=0)
    mc.add_argument("--mode", default="daruma")
    mc.add_argument("--threads", type=int, help="worker processes (default: DARUMA_SIM_THREADS, 0 = auto)")
    mc.set_defaults(func=cmd_monte_carlo)

    c = sub.add_parser("compare", parents=[common], help="daruma against each single-channel baseline")
    c.add_argument("--runs", type=_positive_int, required=True)
    c.add_argument("--seed0", type=_seed, default=0)
    c.add_argument("--threads", type=int)
    c.set_defaults(func=cmd_compare)

    cat = sub.add_parser("catalog", help="print the output-insufficiency taxonomy")
    cat.set_defaults(func=cmd_catalog)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, SchemaError, ParseError, UnknownScenario) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DarumaError, ValueError, OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
