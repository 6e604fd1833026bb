"""Per-video metric CSVs, dataset summary CSV and the report bundle index."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .core import DistanceMetric
from .errors import WriteFailure
from .evaluation import (
    CELLS,
    HIGHER_IS_BETTER,
    LABELS,
    DatasetSummary,
    FramePairObservation,
    MetricKind,
    MetricTimeline,
    VideoSummary,
)

COLUMN = {
    (MetricKind.DEID_LEVEL, DistanceMetric.COSINE): "deid_cosine",
    (MetricKind.DEID_LEVEL, DistanceMetric.EUCLIDEAN): "deid_euclid",
    (MetricKind.IDENTITY_CONSISTENCY, DistanceMetric.COSINE): "consist_cosine",
    (MetricKind.IDENTITY_CONSISTENCY, DistanceMetric.EUCLIDEAN): "consist_euclid",
    (MetricKind.EXPRESSION_PRESERVATION, DistanceMetric.COSINE): "expr_cosine",
    (MetricKind.EXPRESSION_PRESERVATION, DistanceMetric.EUCLIDEAN): "expr_euclid",
}
VIDEO_HEADER = ["frame_index"] + [COLUMN[c] for c in CELLS] + ["skip_reason"]
SUMMARY_HEADER = ["distance", "criterion", "direction", "mean", "variance", "num_videos"]
VIDEO_SUMMARY_HEADER = ["clip_id", "frames_evaluated", "frames_skipped"] + [
    f"{COLUMN[c]}_{stat}" for c in CELLS for stat in ("mean", "variance")
]


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def video_csv_text(obs: Sequence[FramePairObservation], timelines: Sequence[MetricTimeline]) -> str:
    by_cell = {(tl.metric_kind, tl.distance): tl for tl in timelines}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VIDEO_HEADER)
    for t, o in enumerate(obs):
        row = [o.frame_index] + [_fmt(by_cell[c].values[t]) for c in CELLS]
        row.append(o.skip_reason.value if o.skip_reason else "")
        w.writerow(row)
    return buf.getvalue()


def parse_video_csv(text: str) -> list[MetricTimeline]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [
        MetricTimeline(k, d, tuple(float(r[COLUMN[(k, d)]]) if r[COLUMN[(k, d)]] else None for r in rows))
        for k, d in CELLS
    ]


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise WriteFailure(f"cannot write {path}: {exc}") from exc
    return path


def write_video_csv(path, obs, timelines) -> Path:
    return _write_text(Path(path), video_csv_text(obs, timelines))


def read_video_csv(path) -> list[MetricTimeline]:
    return parse_video_csv(Path(path).read_text(encoding="utf-8"))


def write_summary_csv(path, summary: DatasetSummary) -> Path:
    """Dataset summary with one row per (distance family, criterion)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for distance in (DistanceMetric.COSINE, DistanceMetric.EUCLIDEAN):
        for kind in MetricKind:
            mean, var = summary.cells[(kind, distance)]
            direction = "higher_is_better" if HIGHER_IS_BETTER[kind] else "lower_is_better"
            w.writerow([distance.value, LABELS[kind], direction, _fmt(mean), _fmt(var), summary.num_videos])
    return _write_text(Path(path), buf.getvalue())


def read_summary_csv(path) -> dict:
    """{(distance, criterion label): (mean, variance)}"""
    with open(path, encoding="utf-8", newline="") as fh:
        return {(r["distance"], r["criterion"]): (float(r["mean"]), float(r["variance"])) for r in csv.DictReader(fh)}


def write_video_summaries_csv(path, rows: Sequence[tuple[str, VideoSummary]]) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VIDEO_SUMMARY_HEADER)
    for clip_id, s in rows:
        row = [clip_id, s.frames_evaluated, s.frames_skipped]
        for c in CELLS:
            row += [_fmt(s.cells[c][0]), _fmt(s.cells[c][1])]
        w.writerow(row)
    return _write_text(Path(path), buf.getvalue())


@dataclass
class ReportBundle:
    """Paths are relative to ``root``."""

    root: Path
    video_csvs: dict = field(default_factory=dict)
    summary_csv: Optional[str] = None
    video_summary_csv: Optional[str] = None
    plots: dict = field(default_factory=dict)
    run_records: Optional[str] = None
    missing: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)

    def paths(self) -> list[Path]:
        rels = list(self.video_csvs.values()) + [p for ps in self.plots.values() for p in ps]
        rels += [p for p in (self.summary_csv, self.video_summary_csv, self.run_records) if p]
        return [Path(self.root) / p for p in rels]

    def to_dict(self) -> dict:
        return {
            "video_csvs": self.video_csvs,
            "summary_csv": self.summary_csv,
            "video_summary_csv": self.video_summary_csv,
            "plots": self.plots,
            "run_records": self.run_records,
            "missing": self.missing,
            "errors": self.errors,
        }

    def write(self, name: str = "report.json") -> Path:
        return _write_text(Path(self.root) / name, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
