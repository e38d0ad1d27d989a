"""Command-line front end: ``race``, ``quantile`` and ``gen``.

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data import Dataset, generate_synthetic, load_csv, write_csv
from .exceptions import ConfigError, ConvergenceError, DataError
from .metrics import parse_metric
from .models import expand_grid
from .race import (ACTIVES_FIRST, SPLITS_ONLY, CompareResult, RaceConfig, race,
                   simultaneous_race, tune_then_compare)
from .report import write_outputs
from .stats import studentized_range_quantile

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MODES = ("tune", "compare", "simultaneous")

logger = logging.getLogger("cvrace")


@dataclass
class Group:
    name: str
    specs: list


@dataclass
class RunConfig:
    data: dict
    groups: list
    race: RaceConfig
    mode: str = "tune"
    out: Path = Path("results")
    threads: int = 1
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def specs(self) -> list:
        return [s for g in self.groups for s in g.specs]


_RACE_KEYS = {"alpha", "p0", "max_splits", "folds", "metric", "blocking", "seed", "stratified",
              "cache"}


def _default_threads():
    return os.cpu_count() or 1


def parse_run_config(doc, base_dir=".", overrides=None) -> RunConfig:
    """Validate a config document (already parsed YAML) into a :class:`RunConfig`."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(doc) - {"data", "race", "groups", "mode", "out", "threads"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    base_dir = Path(base_dir)
    data = doc.get("data")
    if not isinstance(data, dict):
        raise ConfigError("'data' section is required")
    if not any(k in data for k in ("path", "sets", "synthetic")):
        raise ConfigError("'data' needs one of 'path', 'sets' or 'synthetic'")
    if "synthetic" not in data and "response" not in data:
        raise ConfigError("'data.response' is required for CSV input")

    rc = doc.get("race") or {}
    if not isinstance(rc, dict):
        raise ConfigError("'race' must be a mapping")
    bad = set(rc) - _RACE_KEYS
    if bad:
        raise ConfigError(f"unknown race keys {sorted(bad)}")
    rc = dict(rc)
    for key in ("alpha", "p0", "max_splits", "folds", "metric", "seed"):
        if key in overrides:
            rc[key] = overrides[key]
    try:
        metric = parse_metric(str(rc.get("metric", "hits@300")))
        p0 = rc.get("p0")
        race_cfg = RaceConfig(
            alpha=float(rc.get("alpha", 0.05)),
            p0=None if p0 is None else float(p0),
            max_splits=int(rc.get("max_splits", 100)),
            v=int(rc.get("folds", 10)),
            metric=metric,
            blocking=str(rc.get("blocking", ACTIVES_FIRST if metric.decomposable else SPLITS_ONLY)),
            base_seed=int(rc.get("seed", 0)),
            stratified=bool(rc.get("stratified", False)),
            threads=int(overrides.get("threads", doc.get("threads", _default_threads()))),
            use_cache=bool(rc.get("cache", True)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid race settings: {exc}") from None

    mode = overrides.get("mode", doc.get("mode", "tune"))
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    raw_groups = doc.get("groups")
    if not isinstance(raw_groups, list) or not raw_groups:
        raise ConfigError("'groups' must be a non-empty list")
    groups = []
    for i, g in enumerate(raw_groups):
        if not isinstance(g, dict) or "family" not in g:
            raise ConfigError(f"group {i + 1}: needs a 'family'")
        grid = g.get("grid") or {}
        if not isinstance(grid, dict) or not grid:
            raise ConfigError(f"group {i + 1}: 'grid' must be a non-empty mapping")
        specs = expand_grid(str(g["family"]), grid, g.get("descriptor_set"))
        if not specs:
            raise ConfigError(f"group {i + 1}: grid expands to no models")
        groups.append(Group(str(g.get("name", f"group{i + 1}")), specs))
    if mode == "tune" and len(groups) != 1:
        raise ConfigError("mode 'tune' takes exactly one group")
    if mode == "compare" and len(groups) < 2:
        raise ConfigError("mode 'compare' needs at least 2 groups")
    if len({s.model_id for g in groups for s in g.specs}) < 2:
        raise ConfigError("at least 2 distinct models are required")
    out = Path(overrides.get("out", doc.get("out", "results")))
    if not out.is_absolute():
        out = (base_dir / out) if "out" not in overrides else out
    return RunConfig(data, groups, race_cfg, mode, out, race_cfg.threads, base_dir)


def load_run_config(path, overrides=None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: malformed YAML: {exc}") from None
    return parse_run_config(doc, path.parent, overrides)


def load_data(cfg: RunConfig):
    """Dataset, or mapping of descriptor-set label to dataset."""
    d = cfg.data
    if "synthetic" in d:
        params = dict(d["synthetic"] or {})
        try:
            ds = generate_synthetic(int(params.get("n", 500)), int(params.get("d", 5)),
                                    float(params.get("rate", 0.1)),
                                    float(params.get("signal", 1.0)),
                                    int(params.get("seed", 0)),
                                    str(d.get("descriptor_set", "synthetic")))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise ConfigError(f"invalid synthetic data settings: {exc}") from None
        return _by_set(ds, cfg)
    response = str(d["response"])
    if "sets" in d:
        sets = d["sets"]
        if not isinstance(sets, dict) or not sets:
            raise ConfigError("'data.sets' must map labels to {path: ...}")
        out = {}
        for label, entry in sets.items():
            p = entry["path"] if isinstance(entry, dict) else entry
            out[str(label)] = load_csv(cfg.base_dir / p, response, str(label))
        return out
    ds = load_csv(cfg.base_dir / d["path"], response, d.get("descriptor_set"))
    return _by_set(ds, cfg)


def _by_set(ds: Dataset, cfg: RunConfig):
    labels = {s.descriptor_set for s in cfg.specs}
    if labels == {None}:
        return ds
    return {label: ds for label in labels}


def execute(cfg: RunConfig):
    data = load_data(cfg)
    if cfg.mode == "compare":
        return tune_then_compare([g.specs for g in cfg.groups], data, cfg.race,
                                 [g.name for g in cfg.groups])
    if cfg.mode == "simultaneous":
        return simultaneous_race(cfg.specs, data, cfg.race)
    trace = race(cfg.specs, data, cfg.race)
    trace.label = "tune"
    return trace


def _cmd_race(args) -> int:
    overrides = {"alpha": args.alpha, "p0": args.p0, "max_splits": args.max_splits,
                 "folds": args.folds, "metric": args.metric, "seed": args.seed,
                 "threads": args.threads, "mode": args.mode, "out": args.out}
    cfg = load_run_config(args.config, overrides)
    result = execute(cfg)
    paths = write_outputs(result, cfg.out)
    winner = result.final.winner if isinstance(result, CompareResult) else result.winner
    print(f"winner: {winner}")
    for p in paths.values():
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_quantile(args) -> int:
    if not 0.0 < args.alpha < 1.0:
        raise ConfigError(f"--alpha must lie strictly between 0 and 1, got {args.alpha}")
    if args.m < 2:
        raise ConfigError("--m must be at least 2")
    if not (args.df >= 1):
        raise ConfigError("--df must be at least 1 (or inf)")
    q = studentized_range_quantile(args.alpha, args.m, args.df)
    print(f"{q:.6g}")
    return EXIT_OK


def _cmd_gen(args) -> int:
    try:
        ds = generate_synthetic(args.n, args.d, args.rate, args.signal, args.seed)
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    tmp = out.with_name(f".{out.name}.tmp")
    write_csv(ds, tmp, args.response)
    os.replace(tmp, out)
    print(f"wrote {out} (n={ds.n}, d={ds.d}, actives={ds.A})")
    return EXIT_OK


def _df(text):
    v = float(text)
    if math.isnan(v):
        raise argparse.ArgumentTypeError("df must be a number or inf")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvrace",
                                description="Race models through repeated cross-validation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("race", help="run a race described by a YAML config")
    r.add_argument("--config", required=True)
    r.add_argument("--alpha", type=float)
    r.add_argument("--p0", type=float)
    r.add_argument("--max-splits", type=int)
    r.add_argument("--folds", type=int)
    r.add_argument("--metric")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--out")
    r.set_defaults(func=_cmd_race)

    q = sub.add_parser("quantile", help="studentized range critical value")
    q.add_argument("--alpha", type=float, default=0.05)
    q.add_argument("--m", type=int, required=True)
    q.add_argument("--df", type=_df, required=True)
    q.set_defaults(func=_cmd_quantile)

    g = sub.add_parser("gen", help="write a synthetic assay CSV")
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--d", type=int, default=5)
    g.add_argument("--rate", type=float, default=0.1)
    g.add_argument("--signal", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--response", default="active")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
