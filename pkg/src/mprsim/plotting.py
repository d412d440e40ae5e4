"""Figure rendering for sweep results.

Renders the three headline metrics (throughput, MAC delay, transmission
efficiency) against the swept parameter, with one-standard-deviation error
bars, to an image file.  Works headless.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import ReplicationSummary


def render_sweep_figure(
    rows: Sequence[tuple[float, ReplicationSummary]],
    path: str,
    xlabel: str = "swept value",
    title: str | None = None,
) -> None:
    """Write a three-panel summary figure for one sweep."""
    if not rows:
        raise ValueError("nothing to plot: empty sweep")
    x = [value for value, _ in rows]
    fig, axes = plt.subplots(3, 1, figsize=(6.4, 8.0), sharex=True)

    panels = (
        ("normalized throughput", 1.0, "throughput_mean", "throughput_std"),
        ("mean MAC delay [ms]", 1e-3, "delay_mean_us", "delay_std_us"),
        ("transmission efficiency", 1.0, "eta_mean", "eta_std"),
    )
    for ax, (label, scale, mean_key, std_key) in zip(axes, panels):
        means = [getattr(s, mean_key) * scale for _, s in rows]
        stds = [getattr(s, std_key) * scale for _, s in rows]
        ax.errorbar(x, means, yerr=stds, marker="o", capsize=3, lw=1.2)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.4)
    axes[-1].set_xlabel(xlabel)
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
