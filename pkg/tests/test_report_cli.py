import json
import shutil

import numpy as np
import pytest
from PIL import Image

from dtwin.cli import main
from dtwin.core import DistanceMetric
from dtwin.evaluation import CELLS, MetricKind, MetricTimeline
from dtwin.plotting import plot_timeline, timeline_arrays
from dtwin.report import SUMMARY_HEADER, VIDEO_HEADER, parse_video_csv, read_summary_csv


def timelines(values_per_kind, distance=DistanceMetric.COSINE):
    return [MetricTimeline(k, distance, tuple(v)) for k, v in zip(MetricKind, values_per_kind)]


def test_plot_three_flat_curves(tmp_path):
    out = plot_timeline(timelines([[0.8] * 10, [0.1] * 10, [0.05] * 10]), tmp_path / "p.png", "flat")
    with Image.open(out) as im:
        assert im.size == (800, 320)


def test_plot_gap_at_skipped_frame(tmp_path):
    vals = [0.5] * 10
    vals[5] = None
    tls = timelines([vals, vals, vals])
    x, y = timeline_arrays(tls[0])
    assert np.isnan(y[5]) and not np.isnan(y[4])
    plot_timeline(tls, tmp_path / "gap.png")


def test_plot_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        plot_timeline([], tmp_path / "x.png")
    with pytest.raises(ValueError):
        plot_timeline(timelines([[1.0], [1.0, 2.0], [1.0]]), tmp_path / "x.png")


def test_plot_deterministic(tmp_path):
    tls = timelines([[0.1, 0.4, 0.2], [0.0, 0.1, 0.0], [0.3, None, 0.2]])
    a = plot_timeline(tls, tmp_path / "a.png").read_bytes()
    b = plot_timeline(tls, tmp_path / "b.png").read_bytes()
    assert a == b


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    code = main(["synth-dataset", "--out", str(root), "--identities", "1", "--frames", "6",
                 "--behaviors", "gaze_variation", "speech_head_motion", "rapid_pose_change"])
    assert code == 0
    return root / "manifest.tsv"


def test_run_ok(tmp_path, dataset):
    assert main(["run", "--manifest", str(dataset), "--out", str(tmp_path / "o")]) == 0
    records = json.loads((tmp_path / "o" / "run_records.json").read_text())
    assert [r["status"] for r in records] == ["ok"] * 3
    assert len(list((tmp_path / "o" / "videos").iterdir())) == 3
    assert (tmp_path / "o" / "cache" / "deid_video").is_dir()


def test_run_partial(tmp_path, dataset):
    data = tmp_path / "data"
    shutil.copytree(dataset.parent, data)
    shutil.rmtree(data / "clips" / "subject00_speech_head_motion")
    assert main(["run", "--manifest", str(data / "manifest.tsv"), "--out", str(tmp_path / "o")]) == 1
    records = json.loads((tmp_path / "o" / "run_records.json").read_text())
    assert [r["status"] for r in records] == ["ok", "failed", "ok"]
    assert len(list((tmp_path / "o" / "videos").iterdir())) == 2


def test_run_bad_backend(tmp_path, dataset):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"inpainter": "stable-diffusion"}))
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--manifest", str(dataset), "--out", str(out)]) == 2
    assert not out.exists()


def test_flag_overrides_config(tmp_path, dataset):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"inpainter": "stable-diffusion"}))
    args = ["run", "--config", str(cfg), "--inpainter", "synthetic", "--manifest", str(dataset),
            "--out", str(tmp_path / "o")]
    assert main(args) == 0


def test_synth_dataset_cardinality(tmp_path):
    assert main(["synth-dataset", "--out", str(tmp_path), "--frames", "2", "--size", "32", "32"]) == 0
    lines = (tmp_path / "manifest.tsv").read_text().splitlines()
    assert len(lines) == 1 + 8
    assert len(list((tmp_path / "clips").iterdir())) == 8


def test_synth_dataset_zero_identities(tmp_path):
    assert main(["synth-dataset", "--out", str(tmp_path / "x"), "--identities", "0"]) == 2
    assert not (tmp_path / "x").exists()


def test_evaluate_bundle(tmp_path, dataset):
    main(["run", "--manifest", str(dataset), "--out", str(tmp_path / "o")])
    report = tmp_path / "r"
    assert main(["evaluate", "--manifest", str(dataset), "--deid-dir", str(tmp_path / "o"),
                 "--report-dir", str(report)]) == 0
    bundle = json.loads((report / "report.json").read_text())
    assert len(bundle["video_csvs"]) == 3 and bundle["missing"] == []
    for rel in bundle["video_csvs"].values():
        text = (report / rel).read_text()
        assert text.splitlines()[0] == ",".join(VIDEO_HEADER)
        assert len(parse_video_csv(text)) == len(CELLS)
    assert all(len(p) == 2 for p in bundle["plots"].values())
    for ps in bundle["plots"].values():
        assert all((report / p).is_file() for p in ps)
    assert (report / "summary.csv").read_text().splitlines()[0] == ",".join(SUMMARY_HEADER)
    summary = read_summary_csv(report / "summary.csv")
    assert len(summary) == 6
    assert summary[("cosine", "Expression Preservation")][0] <= 4 / 255
    assert summary[("euclidean", "De-identification Level")][0] >= 0.5


def test_evaluate_single_family(tmp_path, dataset):
    main(["run", "--manifest", str(dataset), "--out", str(tmp_path / "o")])
    main(["evaluate", "--manifest", str(dataset), "--deid-dir", str(tmp_path / "o"),
          "--report-dir", str(tmp_path / "r"), "--distance", "euclidean"])
    plots = json.loads((tmp_path / "r" / "report.json").read_text())["plots"]
    assert all(p == [f"plots/{cid}_euclidean.png"] for cid, p in plots.items())


def test_evaluate_self_pair(tmp_path, dataset):
    # evaluating the sources against themselves: de-identification level is 0
    (tmp_path / "self").mkdir()
    shutil.copytree(dataset.parent / "clips", tmp_path / "self" / "videos")
    main(["evaluate", "--manifest", str(dataset), "--deid-dir", str(tmp_path / "self"),
          "--report-dir", str(tmp_path / "r")])
    summary = read_summary_csv(tmp_path / "r" / "summary.csv")
    assert summary[("cosine", "De-identification Level")][0] == 0.0
    assert summary[("euclidean", "De-identification Level")][0] == 0.0


def test_evaluate_missing_output(tmp_path, dataset):
    main(["run", "--manifest", str(dataset), "--out", str(tmp_path / "o")])
    shutil.rmtree(tmp_path / "o" / "videos" / "subject00_speech_head_motion")
    code = main(["evaluate", "--manifest", str(dataset), "--deid-dir", str(tmp_path / "o"),
                 "--report-dir", str(tmp_path / "r")])
    assert code == 1
    bundle = json.loads((tmp_path / "r" / "report.json").read_text())
    assert bundle["missing"] == ["subject00_speech_head_motion"]
    assert sorted(bundle["video_csvs"]) == ["subject00_gaze_variation", "subject00_rapid_pose_change"]
