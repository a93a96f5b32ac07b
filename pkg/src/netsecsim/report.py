"""Matplotlib summary figure for a scenario run."""

from __future__ import annotations

from collections import Counter

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_figure(result, path) -> None:
    """Two panels: trace events per tick by action, and numeric metrics per step."""
    fig, (ax_events, ax_metrics) = plt.subplots(1, 2, figsize=(11, 4))
    trace = result.trace
    actions = ("SEND", "RECV", "DROP", "NOTE")
    ticks = sorted({e.time for e in trace})
    bottom = [0] * len(ticks)
    for action in actions:
        counts = Counter(e.time for e in trace if e.action.value == action)
        heights = [counts.get(t, 0) for t in ticks]
        ax_events.bar(ticks, heights, bottom=bottom, label=action)
        bottom = [b + h for b, h in zip(bottom, heights)]
    ax_events.set_xlabel("tick")
    ax_events.set_ylabel("events")
    ax_events.set_title(f"{result.scenario.name}: trace events")
    if ticks:
        ax_events.legend()

    labels, values = [], []
    for r in result.reports:
        for k, v in r.metrics.items():
            labels.append(f"{r.action}.{k}")
            values.append(v)
    ax_metrics.barh(range(len(values)), values, color="tab:gray")
    ax_metrics.set_yticks(range(len(values)), labels, fontsize=7)
    ax_metrics.invert_yaxis()
    ax_metrics.set_title("metrics")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
