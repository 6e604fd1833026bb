"""Per-frame metric timeline figures.

Figures are built on a bare ``Figure`` + Agg canvas so that plotting from
worker threads never touches pyplot's global state.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .errors import WriteFailure
from .evaluation import HIGHER_IS_BETTER, LABELS, MetricTimeline

STYLE = {
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
}
COLORS = {
    "deid_level": "#d62728",
    "identity_consistency": "#1f77b4",
    "expression_preservation": "#2ca02c",
}


def timeline_arrays(tl: MetricTimeline) -> tuple[np.ndarray, np.ndarray]:
    """(frame indices, values) with NaN at skipped frames so lines break there."""
    y = np.array([np.nan if v is None else v for v in tl.values], dtype=np.float64)
    return np.arange(len(y)), y


def plot_timeline(timelines: Sequence[MetricTimeline], out_path, title: str = "") -> Path:
    """One chart, one labelled curve per metric, x = frame index."""
    if not timelines:
        raise ValueError("no timelines to plot")
    lengths = {len(tl) for tl in timelines}
    if len(lengths) != 1 or 0 in lengths:
        raise ValueError("timelines must be non-empty and of equal length")

    import matplotlib

    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(8, 3.2), dpi=100)
        FigureCanvasAgg(fig)
        ax = fig.add_subplot(1, 1, 1)
        for tl in timelines:
            x, y = timeline_arrays(tl)
            arrow = "↑" if HIGHER_IS_BETTER[tl.metric_kind] else "↓"
            ax.plot(x, y, marker=".", markersize=3, color=COLORS[tl.metric_kind.value],
                    label=f"{LABELS[tl.metric_kind]} {arrow}")
        distances = sorted({tl.distance.value for tl in timelines})
        ax.set_xlabel("frame")
        ax.set_ylabel(f"{'/'.join(distances)} distance")
        if title:
            ax.set_title(title)
        ax.set_xlim(-0.5, lengths.pop() - 0.5)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        out_path = Path(out_path)
        try:
            out_path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out_path, metadata={"Software": None})
        except OSError as exc:
            raise WriteFailure(f"cannot write plot {out_path}: {exc}") from exc
    return out_path
