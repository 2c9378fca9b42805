"""Matplotlib figures drawn from experiment summaries (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# summary columns to draw for each experiment: (column stem, legend label)
SERIES = {
    "hit_vs_radius": [("hit_clustered_raw", "clustered"), ("hit_unclustered", "unclustered")],
    "ee_vs_cache": [("ee_clustered_nats_per_joule", "clustered"), ("ee_unclustered_nats_per_joule", "unclustered")],
    "aic_trace": [("found_clusters", "found clusters")],
    "allocation_gain": [("ee_greedy", "greedy allocation"), ("ee_random", "random allocation")],
    "validate_analytics": [("estimate", "simulation"), ("analytic", "closed form")],
    "optimize_density": [("ee_opt_nats_per_joule", "optimized EE")],
}

YLABEL = {
    "hit_vs_radius": "hit probability",
    "ee_vs_cache": "EE (nats/J)",
    "aic_trace": "clusters",
    "allocation_gain": "EE (nats/J)",
    "validate_analytics": "value",
    "optimize_density": "EE (nats/J)",
}


def _split(summary, key):
    groups = {}
    for r in summary:
        groups.setdefault(r.get(key), []).append(r)
    return groups


def plot_experiment(name: str, rows, summary, sweep_col: str, out_dir) -> Path:
    """Mean curves with standard-error bars against the swept parameter."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    split_key = "quantity" if name == "validate_analytics" else "lambda_s_per_km2"
    for tag, group in _split(summary, split_key).items():
        group = sorted(group, key=lambda r: r[sweep_col])
        x = [r[sweep_col] for r in group]
        for stem, label in SERIES[name]:
            if f"{stem}_mean" not in group[0]:
                continue
            y = [r[f"{stem}_mean"] for r in group]
            e = [r[f"{stem}_stderr"] for r in group]
            suffix = "" if tag is None else (f", {tag}" if isinstance(tag, str) else f", λs={tag:g}")
            ax.errorbar(x, y, yerr=e, marker="o", ms=3, capsize=2, label=label + suffix)
    if name == "aic_trace":
        xs = sorted({r[sweep_col] for r in summary})
        ax.plot(xs, xs, "k--", lw=0.8, label="true clusters")
    ax.set_xlabel(sweep_col)
    ax.set_ylabel(YLABEL[name])
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(out_dir) / f"{name}.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
