"""Per-seed experiment execution: data, training, evaluation, artifacts.

These functions are process-safe (plain-dict configs in, row dicts out), so
the CLI can fan seeds out to worker processes.  Every random choice derives
from the experiment seed, which makes any run bitwise reproducible.
"""

from __future__ import annotations

import csv
import time
from pathlib import Path

from .bayes import CooperativeModel
from .config import Experiment
from .datagen import BenchmarkSuite, build_benchmark, load_dataset, save_dataset
from .modelio import save_model
from .multifidelity import (BudgetSpec, MfModel, budget_sweep, evaluate_on,
                            fit_single_fidelity, metrics_row, mf_train,
                            total_cost)
from .numerics import RngStream

__all__ = ["build_suite", "generate_data", "run_seed", "sweep_seed"]


def build_suite(cfg: dict, seed: int) -> BenchmarkSuite:
    exp = Experiment(cfg)
    data_dir = cfg["data"].get("data_dir", "")
    if data_dir:
        base = Path(data_dir) / f"seed_{seed}"
        lf_path = base / "lf.jsonl"
        return BenchmarkSuite(
            suite=exp.suite,
            hf=load_dataset(base / "hf.jsonl"),
            lf=load_dataset(lf_path) if lf_path.exists() else None,
            id_test=load_dataset(base / "id_test.jsonl"),
            ood_test=load_dataset(base / "ood_test.jsonl"),
            config=exp.oracle_config(), seed=seed)
    return build_benchmark(exp.suite, seed, **exp.benchmark_kwargs())


def generate_data(cfg: dict, seed: int, out_dir) -> list:
    """Materialize one seed's datasets as JSON Lines; returns written paths."""
    suite = build_suite(cfg, seed)
    base = Path(out_dir) / f"seed_{seed}"
    written = []
    pairs = [("hf", suite.hf), ("id_test", suite.id_test),
             ("ood_test", suite.ood_test)]
    if suite.lf is not None:
        pairs.insert(1, ("lf", suite.lf))
    for name, ds in pairs:
        path = base / f"{name}.jsonl"
        save_dataset(ds, path)
        written.append(path)
    return written


def _write_training_log(model, out_dir: Path) -> None:
    logs = []
    if isinstance(model, MfModel):
        logs = [("lf_training_log.csv", model.lf_model),
                ("hf_training_log.csv", model.hf_model)]
    else:
        logs = [("training_log.csv", model)]
    for fname, m in logs:
        rows = getattr(m, "log", None)
        if rows is None and isinstance(m, CooperativeModel):
            rows = m.mean_log
        if not rows:
            continue
        with (out_dir / fname).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss"])
            for row in rows:
                writer.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])


def _save_artifacts(model, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(model, MfModel):
        save_model(model.lf_model, out_dir / "lf_model.bin")
        save_model(model.hf_model, out_dir / "hf_model.bin")
        (out_dir / "mf.json").write_text(
            '{"variant": "%s", "pairing": "%s"}\n'
            % (model.variant.value, "+".join(model.pairing)))
    else:
        save_model(model, out_dir / "model.bin")
    _write_training_log(model, out_dir)


def run_seed(cfg: dict, seed: int, out_dir) -> dict:
    """Train and evaluate one seed; returns its metrics row."""
    exp = Experiment(cfg)
    started = time.time()
    suite = build_suite(cfg, seed)
    rng = RngStream(seed)
    d = cfg["data"]
    if exp.is_multifidelity:
        model = mf_train(suite.lf.strain, suite.lf.stress,
                         suite.hf.strain, suite.hf.stress,
                         exp.variant, exp.lf_spec(), exp.hf_spec(), rng)
        n_lf = suite.lf.n_paths
    else:
        model = fit_single_fidelity(exp.hf_spec(), suite.hf.strain,
                                    suite.hf.stress, rng.substream(1))
        n_lf = 0
    budget = BudgetSpec(n_hf=suite.hf.n_paths, n_lf=n_lf,
                        c_hf=d["cost_hf"], c_lf=d["cost_lf"])
    row = metrics_row(exp.budget_row_label(), n_lf, suite.hf.n_paths,
                      total_cost(budget), seed,
                      evaluate_on(model, suite.id_test, exp.alpha_conf),
                      evaluate_on(model, suite.ood_test, exp.alpha_conf))
    seed_dir = Path(out_dir) / f"seed_{seed}"
    _save_artifacts(model, seed_dir)
    row["_wall_seconds"] = time.time() - started
    return row


def sweep_seed(cfg: dict, seed: int, out_dir) -> list:
    """Budget-allocation sweep for one seed; returns rows for all fractions."""
    exp = Experiment(cfg)
    d = cfg["data"]
    total = cfg["sweep"]["total_cost"]
    if total <= 0:
        raise ValueError("sweep.total_cost must be positive")
    fractions = sorted(float(f) for f in cfg["sweep"]["lf_fractions"])
    c_hf, c_lf = d["cost_hf"], d["cost_lf"]
    n_lf_max = int(round(total / c_lf))
    n_hf_max = int(round(total / c_hf))
    pool_cfg = dict(cfg)
    pool_cfg["data"] = dict(d, n_hf=max(n_hf_max, 1), n_lf=max(n_lf_max, 1))
    suite = build_suite(pool_cfg, seed)
    lf = suite.lf

    def builder(n_hf, n_lf):
        lf_x = lf.strain[:n_lf] if lf is not None else None
        lf_y = lf.stress[:n_lf] if lf is not None else None
        return (lf_x, lf_y, suite.hf.strain[:n_hf], suite.hf.stress[:n_hf],
                suite.id_test, suite.ood_test)

    rows = budget_sweep(total, fractions, c_hf, c_lf, builder, exp.variant,
                        exp.lf_spec() if exp.is_multifidelity else exp.hf_spec(),
                        exp.hf_spec(), seed, exp.alpha_conf)
    return rows
