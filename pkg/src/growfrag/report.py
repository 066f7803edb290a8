"""Report emission: delimited output, JSON, and companion figures."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.17g}"
    if isinstance(x, (np.floating,)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


# -- figures -----------------------------------------------------------------


def fig_kappa(report, path):
    header, rows = report["header"], np.array(report["rows"], dtype=float)
    q = rows[:, 0]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    finite = np.isfinite(rows[:, 1])
    ax.plot(q[finite], rows[finite, 1], "k-", lw=1.8, label="kappa")
    for j, name in enumerate(header[3:], start=3):
        ax.plot(q, rows[:, j], lw=0.9, alpha=0.7, label=name)
    if report.get("omega_bar") is not None:
        ax.axvline(report["omega_bar"], color="crimson", ls="--", lw=0.9, label="omega_bar")
    ax.set_xlabel("q")
    ax.set_ylabel("cumulant")
    ax.legend(fontsize=7)
    ax.set_title(f"cumulant and truncations: {report['scenario']}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def fig_test_panel(report, path):
    tests = report["tests"]
    names = [t["name"] for t in tests]
    fig, ax = plt.subplots(figsize=(7.0, 0.42 * len(tests) + 1.2))
    vals, colors = [], []
    for t in tests:
        if t.get("p_value") is not None:
            v = -math.log10(max(t["p_value"], 1e-300))
        elif t.get("z") is not None:
            v = abs(t["z"])
        elif isinstance(t.get("estimate"), (int, float)):
            v = abs(t["estimate"])
        else:
            v = 0.0
        vals.append(v)
        colors.append("tab:green" if t["pass"] else "tab:red")
    y = np.arange(len(tests))
    ax.barh(y, vals, color=colors)
    ax.set_yticks(y)
    ax.set_yticklabels(names, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("|z| or -log10 p")
    ax.set_title(f"{report['suite']} [{report['scenario']}]: " + ("PASS" if report["pass"] else "FAIL"))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def fig_trace_quantiles(report, path):
    td = report["trace_data"]
    times = np.array(td["times"])
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for ax, key, label in ((axes[0], "W_quantiles", "W"), (axes[1], "dW_quantiles", "dW")):
        qs = td[key]
        ax.fill_between(times, qs["0.05"], qs["0.95"], alpha=0.2, color="tab:blue")
        ax.fill_between(times, qs["0.25"], qs["0.75"], alpha=0.35, color="tab:blue")
        ax.plot(times, qs["0.5"], color="tab:blue", lw=1.6)
        if label == "dW":
            ax.axhline(0.0, color="k", lw=0.6)
        ax.set_xlabel("t")
        ax.set_ylabel(label)
    fig.suptitle(f"martingale trace quantiles at the critical point [{report['scenario']}]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def fig_heavy_tail(report, path):
    pts = report["heavy_tail_running_mean"]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot([p["n"] for p in pts], [p["mean"] for p in pts], "o-")
    ax.set_xscale("log")
    ax.set_xlabel("replicas")
    ax.set_ylabel("running mean of -dW terminal")
    ax.set_title("heavy-tail diagnostic (non-stabilizing mean)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def fig_simulate(report, path):
    rows = np.array([[r[1], r[2], r[5]] for r in report["trace_rows"]], dtype=float)
    times = np.unique(rows[:, 0])
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for ax, col, label in ((axes[0], 1, "W"), (axes[1], 2, "max position")):
        qs = np.array(
            [np.quantile(rows[rows[:, 0] == t, col], [0.05, 0.5, 0.95]) for t in times]
        )
        ax.fill_between(times, qs[:, 0], qs[:, 2], alpha=0.25, color="tab:orange")
        ax.plot(times, qs[:, 1], color="tab:orange", lw=1.6)
        ax.set_xlabel("t")
        ax.set_ylabel(label)
    fig.suptitle(f"simulation traces [{report['scenario']}], omega={report['omega']:.4g}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
