"""Command-line experiment runner.

Verbs:
  gen-data   materialize benchmark datasets as JSON Lines
  run        train the configured model per seed and write metrics
  sweep      budget-allocation sweep over low-fidelity fractions
  report     aggregate metrics under a run directory; render figures

Exit codes: 0 success, 2 invalid configuration, 3 training divergence,
4 I/O failure.  Runs are bitwise reproducible for a fixed config and seed;
seeds may execute in parallel (--jobs) without changing any output, as
long as MFVEB_DETERMINISTIC (default on) keeps row order fixed.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, Experiment, config_hash, load_config
from .multifidelity import BudgetSpec, total_cost
from .training import DivergenceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4


def _deterministic() -> bool:
    return os.environ.get("MFVEB_DETERMINISTIC", "1") != "0"


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _load(args) -> tuple:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["experiment"]["seeds"] = [args.seed]
    out_dir = Path(args.out) if args.out else Path(cfg["experiment"]["out_dir"])
    return cfg, out_dir


def _print_resolution(cfg: dict) -> None:
    exp = Experiment(cfg)
    d = cfg["data"]
    n_lf = d["n_lf"] if exp.is_multifidelity else 0
    budget = BudgetSpec(n_hf=d["n_hf"], n_lf=n_lf,
                        c_hf=d["cost_hf"], c_lf=d["cost_lf"])
    print(f"suite={exp.suite} pairing={exp.pairing} variant={exp.variant.value}")
    print(f"n_hf={d['n_hf']} n_lf={n_lf} T_c={total_cost(budget):.6g}")
    print(f"seeds={exp.seeds}")


def _run_parallel(task, cfg, seeds, out_dir, jobs):
    args = [(cfg, seed, str(out_dir)) for seed in seeds]
    if jobs <= 1 or len(seeds) <= 1:
        return [task(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(task, *a) for a in args]
        return [f.result() for f in futures]


def _write_manifest(out_dir: Path, cfg: dict, wall_seconds: dict) -> None:
    from . import __version__
    manifest = {
        "config_hash": config_hash(cfg),
        "config": cfg,
        "git_describe": _git_describe(),
        "package_version": __version__,
        "wall_seconds": wall_seconds,
        "deterministic": _deterministic(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                      sort_keys=True) + "\n")


def cmd_gen_data(args) -> int:
    from .experiments import generate_data
    cfg, out_dir = _load(args)
    if args.dry_run:
        _print_resolution(cfg)
        return EXIT_OK
    seeds = cfg["experiment"]["seeds"]
    for seed in seeds:
        written = generate_data(cfg, seed, out_dir)
        for path in written:
            print(f"wrote {path}")
    _write_manifest(out_dir, cfg, {})
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiments import run_seed
    from .reporting import write_metrics_csv
    cfg, out_dir = _load(args)
    if args.dry_run:
        _print_resolution(cfg)
        return EXIT_OK
    seeds = cfg["experiment"]["seeds"]
    started = time.time()
    rows = _run_parallel(run_seed, cfg, seeds, out_dir, args.jobs)
    wall = {}
    for seed, row in zip(seeds, rows):
        wall[str(seed)] = row.pop("_wall_seconds", None)
    if _deterministic():
        rows.sort(key=lambda r: r["seed"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "metrics.csv", rows)
    wall["total"] = time.time() - started
    _write_manifest(out_dir, cfg, wall)
    print(f"wrote {out_dir / 'metrics.csv'} ({len(rows)} rows)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import sweep_seed
    from .reporting import write_metrics_csv
    cfg, out_dir = _load(args)
    if args.dry_run:
        _print_resolution(cfg)
        print(f"sweep total_cost={cfg['sweep']['total_cost']} "
              f"fractions={cfg['sweep']['lf_fractions']}")
        return EXIT_OK
    seeds = cfg["experiment"]["seeds"]
    started = time.time()
    nested = _run_parallel(sweep_seed, cfg, seeds, out_dir, args.jobs)
    rows = [row for batch in nested for row in batch]
    if _deterministic():
        rows.sort(key=lambda r: (r["n_lf"], r["seed"]))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "metrics.csv", rows)
    _write_manifest(out_dir, cfg, {"total": time.time() - started})
    print(f"wrote {out_dir / 'metrics.csv'} ({len(rows)} rows)")
    return EXIT_OK


def cmd_report(args) -> int:
    from .reporting import (LONG_COLUMNS, SUMMARY_COLUMNS, aggregate_rows,
                            long_format_rows, read_metrics_csv, render_figures,
                            write_rows_csv)
    run_dir = Path(args.run_dir)
    files = sorted(run_dir.rglob("metrics.csv"))
    if not files:
        print(f"error: no metrics.csv found under {run_dir}", file=sys.stderr)
        return EXIT_IO
    rows = []
    for path in files:
        rows.extend(read_metrics_csv(path))
    c_lf = None
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        c_lf = manifest.get("config", {}).get("data", {}).get("cost_lf")
    out_dir = Path(args.out) if args.out else run_dir
    summary = aggregate_rows(rows)
    write_rows_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, summary)
    write_rows_csv(out_dir / "long.csv", LONG_COLUMNS, long_format_rows(rows, c_lf))
    figures = render_figures(summary, out_dir / "figures")
    print(f"wrote {out_dir / 'summary.csv'} ({len(summary)} configurations)")
    print(f"wrote {out_dir / 'long.csv'}")
    for path in figures:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfveb",
        description="Multi-fidelity recurrent surrogates with uncertainty "
                    "disentanglement: experiment runner.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="TOML config path")
        p.add_argument("--seed", type=int, default=None,
                       help="run a single seed, overriding the config list")
        p.add_argument("--jobs", type=int, default=1,
                       help="max concurrent seed jobs")
        p.add_argument("--dry-run", action="store_true",
                       help="validate config and print resolved sizes only")
        p.add_argument("--out", default=None, help="output directory override")

    common(sub.add_parser("gen-data", help="write benchmark datasets"))
    common(sub.add_parser("run", help="train and evaluate per seed"))
    common(sub.add_parser("sweep", help="budget-allocation sweep"))
    rep = sub.add_parser("report", help="aggregate metrics and render figures")
    rep.add_argument("run_dir", help="directory containing metrics.csv files")
    rep.add_argument("--out", default=None, help="output directory override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"gen-data": cmd_gen_data, "run": cmd_run,
                "sweep": cmd_sweep, "report": cmd_report}
    try:
        return handlers[args.verb](args)
    except ConfigError as err:
        print(f"error: invalid config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
