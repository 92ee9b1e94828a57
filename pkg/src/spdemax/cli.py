"""Command-line runner for the registered experiments."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .csvout import fmt, write_rows
from .experiments import REGISTRY, ExperimentConfig, list_experiments, run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
_GLOBAL_KEYS = ("experiment", "seed", "out", "paths", "quick")


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for num, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{num}: expected key = value")
        key = key.strip()
        if key in out:
            raise ValueError(f"{path}:{num}: duplicate key {key}")
        out[key] = val.strip()
    return out


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if hasattr(v, "item"):
        return v.item()
    return v


def write_outputs(result, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in sorted(result.tables.items()):
        with open(out / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            write_rows(fh, header, rows)
    summary = {
        "experiment": result.name,
        "seed": result.seed,
        "passed": result.passed,
        "params": {k: _jsonable(v) for k, v in result.params.items()},
        "numbers": {k: _jsonable(v) for k, v in result.numbers.items()},
        "checks": [{
            "name": c.name,
            "verdict": c.verdict,
            "max_violation": fmt(c.max_violation),
            "tolerance": fmt(c.tolerance),
            "location": None if c.location is None else [None if v is None else fmt(v) for v in c.location],
            "context": c.context,
            "line": c.line(),
        } for c in result.checks],
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spdemax", description=__doc__)
    ap.add_argument("--experiment", help="registered experiment name")
    ap.add_argument("--config", help="flat key = value file")
    ap.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--paths", type=int, help="Monte Carlo paths or seeds for the main study")
    ap.add_argument("--quick", action="store_true", help="reduced desk scale")
    ap.add_argument("--list", action="store_true", help="list experiments and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.list:
        print(list_experiments())
        return EXIT_PASS
    try:
        file_cfg = read_config(args.config) if args.config else {}
        name = args.experiment or file_cfg.get("experiment")
        if name is None:
            raise ValueError("no experiment given")
        if name not in REGISTRY:
            print(f"unknown experiment {name!r}; registered:", file=sys.stderr)
            print(list_experiments(), file=sys.stderr)
            return EXIT_CONFIG
        seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 7))
        paths = args.paths if args.paths is not None else (
            int(file_cfg["paths"]) if "paths" in file_cfg else None)
        quick = args.quick or file_cfg.get("quick", "false").lower() in ("1", "true", "yes", "on")
        out = Path(args.out or file_cfg.get("out", f"runs/{name}"))
        params = {k: v for k, v in file_cfg.items() if k not in _GLOBAL_KEYS}
        cfg = ExperimentConfig(name, seed, quick, params, paths)
        cfg.resolved()
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(cfg)
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_outputs(result, out)
    for c in result.checks:
        print(c.line())
    print(f"{name}: {'pass' if result.passed else 'fail'} -> {out}")
    return EXIT_PASS if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
