"""Figure rendering for the replication reports.

Renders summary charts next to the delimited outputs: per-estimator bias of
the peer-effect coefficient across designs, and confidence-interval coverage
across misspecification scenarios.
"""

import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

ESTIMATOR_LABELS = {"ols": "Reg", "sar": "SAR", "exp": "Exp"}


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


def plot_bias_table(csv_path, out_path) -> str:
    """Grouped bar chart of peer-coefficient bias by (group size, delta)."""
    rows = [r for r in _read_csv(csv_path) if r["param"] == "delta"]
    cells = sorted({(float(r["n_b"]), float(r["delta"])) for r in rows})
    by_est = defaultdict(dict)
    for r in rows:
        by_est[r["estimator"]][(float(r["n_b"]), float(r["delta"]))] = (
            float(r["bias"]), float(r["mc_se"])
        )
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.8 / max(len(by_est), 1)
    for k, est in enumerate(sorted(by_est)):
        xs = [i + k * width for i in range(len(cells))]
        vals = [by_est[est].get(c, (float("nan"), 0.0)) for c in cells]
        ax.bar(
            xs,
            [v[0] for v in vals],
            width=width,
            yerr=[2 * v[1] for v in vals],
            label=ESTIMATOR_LABELS.get(est, est),
            capsize=2,
        )
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(cells))])
    ax.set_xticklabels([f"$n_b$={int(nb)}\n$\\delta$={d:g}" for nb, d in cells])
    ax.set_ylabel("bias of peer coefficient")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_coverage_table(csv_path, out_path) -> str:
    """Bar chart of 95% CI coverage by scenario and estimator."""
    rows = _read_csv(csv_path)
    scenarios = []
    for r in rows:
        if r["scenario"] not in scenarios:
            scenarios.append(r["scenario"])
    by_est = defaultdict(dict)
    for r in rows:
        by_est[r["estimator"]][r["scenario"]] = (
            float(r["coverage"]), float(r["coverage_mc_se"])
        )
    fig, ax = plt.subplots(figsize=(9, 4))
    width = 0.8 / max(len(by_est), 1)
    for k, est in enumerate(sorted(by_est)):
        xs = [i + k * width for i in range(len(scenarios))]
        vals = [by_est[est].get(s, (float("nan"), 0.0)) for s in scenarios]
        ax.bar(
            xs,
            [v[0] for v in vals],
            width=width,
            yerr=[2 * v[1] for v in vals],
            label=ESTIMATOR_LABELS.get(est, est),
            capsize=2,
        )
    ax.axhline(0.95, color="black", linewidth=0.8, linestyle="--")
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(scenarios))])
    ax.set_xticklabels(scenarios, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("95% CI coverage")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
