"""Figure rendering for benchmark reports.

Writes a rule-setting-time chart next to the CSV output: mean total seconds
per repetition against the device count, one curve per report (with UPS
overlays vs. the matched baseline), with min/max whiskers.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .bench import LatencyReport  # noqa: E402


def plot_rule_setting_time(reports: dict[str, LatencyReport],
                           out_path: str | Path) -> Path:
    """Render mean/min/max rep totals per pair for each labelled report."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    markers = ["o", "s", "^", "d"]
    for idx, (label, report) in enumerate(reports.items()):
        rows = report.aggregates()
        xs = [r["pair_b"] for r in rows]
        means = [r["mean_s"] for r in rows]
        lower = [r["mean_s"] - r["min_s"] for r in rows]
        upper = [r["max_s"] - r["mean_s"] for r in rows]
        ax.errorbar(xs, means, yerr=[lower, upper],
                    marker=markers[idx % len(markers)], capsize=3, label=label)
    ax.set_xlabel("MUD devices joining at boot")
    ax.set_ylabel("rule setting time per boot (s)")
    ax.set_title("ACL rule setting time")
    ax.grid(True, alpha=0.3)
    ax.legend()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
