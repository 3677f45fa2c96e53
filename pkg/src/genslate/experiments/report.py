"""CSV and plot output for experiment results."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional, Sequence

SUMMARY_COLUMNS = ("setting_id", "beta", "delta", "gamma", "mu", "mode", "variant", "mean_utility",
                   "bottom10_utility", "violations", "max_guarantee_ratio", "n_seeds")
CURVE_COLUMNS = ("setting_id", "variant", "b", "mean_max_d", "n_seeds")
SCAN_COLUMNS = ("param", "value", "metric", "mean", "n_seeds")
EVAL_COLUMNS = ("method", "mean", "q1", "p_value", "violation_rate", "slate_cost", "statements",
                "assignment_budget")


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(text: str):
    if text in ("True", "False"):
        return text == "True"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def render_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def emit_report(rows: Sequence[dict], out_dir, name: str, columns: Optional[Sequence[str]] = None) -> Path:
    """Write ``rows`` to ``out_dir/name.csv``; same rows give the same bytes.

    Floats are written with ``repr`` so reading the file back returns
    identical values. Columns default to the keys of the first row.
    """
    if columns is None:
        if not rows:
            raise ValueError("columns are required for an empty report")
        columns = list(rows[0])
    path = Path(out_dir) / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_csv(rows, columns), encoding="utf-8")
    return path


def read_report(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def plot_curves(curve_rows: Sequence[dict], path, title: str = "") -> Path:
    """Mean max-d against b, one line per (setting, variant)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    keys = sorted({(r["setting_id"], r["variant"]) for r in curve_rows})
    for key in keys:
        pts = sorted((r["b"], r["mean_max_d"]) for r in curve_rows if (r["setting_id"], r["variant"]) == key)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, label=f"{key[1]} (setting {key[0]})")
    ax.set_xlabel("c")
    ax.set_ylabel("mean max d")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_scan(points: Sequence[dict], param: str, path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot([p["value"] for p in points], [p["mean"] for p in points], marker="o")
    ax.set_xlabel(param)
    ax.set_ylabel(points[0]["metric"] if points else "")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)
