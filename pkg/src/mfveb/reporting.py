"""Aggregation of metrics files into summary tables, long-format CSV,
and rendered figures.

CSV cells hold repr() of floats (shortest round-trip form), empty strings
for absent metrics; a re-run with identical config and seed reproduces the
file byte for byte.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

from .multifidelity import SWEEP_COLUMNS

__all__ = [
    "aggregate_rows",
    "long_format_rows",
    "read_metrics_csv",
    "render_figures",
    "write_metrics_csv",
    "write_rows_csv",
]

METRIC_NAMES = ("eps_r", "tll", "wa", "picp", "mpiw")
SUMMARY_COLUMNS = ("variant", "n_lf", "n_hf", "T_c", "n_seeds") + tuple(
    f"{m}_{split}_{stat}" for m in METRIC_NAMES for split in ("id", "ood")
    for stat in ("mean", "std"))
LONG_COLUMNS = ("variant", "n_lf", "n_hf", "T_c", "lf_fraction", "seed",
                "split", "metric", "value")


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def write_rows_csv(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row.get(c)) for c in columns])


def write_metrics_csv(path, rows) -> None:
    write_rows_csv(path, SWEEP_COLUMNS, rows)


def read_metrics_csv(path) -> list:
    rows = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {k: (_parse_cell(v) if k != "variant" else v)
                   for k, v in rec.items()}
            rows.append(row)
    return rows


def _mean_std(values):
    values = [v for v in values if v is not None]
    if not values:
        return None, None
    mean = sum(values) / len(values)
    if len(values) == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


def _sort_key(group_key):
    variant, n_lf, n_hf, t_c = group_key
    return (n_lf, n_hf if n_hf is not None else -1, variant, t_c)


def aggregate_rows(rows) -> list:
    """Per-configuration mean and sample std of every metric over seeds.

    Rows group by (variant, n_lf, n_hf, T_c); output is ordered by the
    low-fidelity allocation, so sweep reports read bottom-up in budget.
    """
    groups = defaultdict(list)
    for row in rows:
        groups[(row["variant"], row["n_lf"], row["n_hf"], row["T_c"])].append(row)
    out = []
    for key in sorted(groups, key=_sort_key):
        variant, n_lf, n_hf, t_c = key
        bucket = groups[key]
        rec = {"variant": variant, "n_lf": n_lf, "n_hf": n_hf, "T_c": t_c,
               "n_seeds": len(bucket)}
        for metric in METRIC_NAMES:
            for split in ("id", "ood"):
                mean, std = _mean_std([r.get(f"{metric}_{split}") for r in bucket])
                rec[f"{metric}_{split}_mean"] = mean
                rec[f"{metric}_{split}_std"] = std
        out.append(rec)
    return out


def _lf_fraction(row, c_lf):
    t_c = row.get("T_c")
    n_lf = row.get("n_lf")
    if t_c in (None, 0) or n_lf is None:
        return None
    if n_lf == 0:
        return 0.0
    if c_lf is None:
        return 1.0 if not row.get("n_hf") else None
    return round(n_lf * c_lf / t_c, 6)


def long_format_rows(rows, c_lf: float | None = None) -> list:
    """One (configuration, seed, split, metric) observation per output row."""
    out = []
    for row in sorted(rows, key=lambda r: (r["n_lf"], r.get("n_hf") or -1,
                                           r["variant"], r.get("seed") or 0)):
        t_c = row.get("T_c")
        frac = _lf_fraction(row, c_lf)
        for metric in METRIC_NAMES:
            for split in ("id", "ood"):
                value = row.get(f"{metric}_{split}")
                if value is None:
                    continue
                out.append({
                    "variant": row["variant"], "n_lf": row["n_lf"],
                    "n_hf": row["n_hf"], "T_c": t_c,
                    "lf_fraction": frac, "seed": row.get("seed"),
                    "split": split, "metric": metric, "value": value,
                })
    return out


def render_figures(summary_rows, out_dir) -> list:
    """One figure per metric: mean with std band versus total cost.

    Returns the written file paths.  Rendering uses the Agg backend and
    never opens a window.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    variants = sorted({r["variant"] for r in summary_rows})
    for metric in METRIC_NAMES:
        has_data = any(r.get(f"{metric}_{split}_mean") is not None
                       for r in summary_rows for split in ("id", "ood"))
        if not has_data:
            continue
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for variant in variants:
            rows = [r for r in summary_rows if r["variant"] == variant]
            for split, style in (("id", "-o"), ("ood", "--s")):
                pts = [(r["T_c"], r[f"{metric}_{split}_mean"],
                        r[f"{metric}_{split}_std"] or 0.0)
                       for r in rows if r.get(f"{metric}_{split}_mean") is not None]
                if not pts:
                    continue
                pts.sort()
                xs = [p[0] for p in pts]
                ys = [p[1] for p in pts]
                es = [p[2] for p in pts]
                label = f"{variant} ({split})"
                ax.errorbar(xs, ys, yerr=es, fmt=style, capsize=2.5,
                            markersize=3.5, label=label)
        ax.set_xlabel("total data-generation cost")
        ax.set_ylabel(metric)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out_dir / f"{metric}.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)
    return written
