"""Command-line entry point: ``dtwin run | evaluate | synth-dataset``.

Exit status: 0 when every clip succeeded, 1 when some clip failed or was
missing (partial results are kept), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import synthworld
from .backends import CATEGORIES, default_registry, resolve_backends
from .errors import DTwinError, MediaNotFound, MissingOutput
from .evaluation import DISTANCES, evaluate_pair, summarize_dataset, summarize_video
from .media_io import BEHAVIORS, ArtifactKey, Stage, load_clip, load_manifest
from .pipeline import CACHE_ENV, PipelineConfig, resolve_cache, run_batch
from .plotting import plot_timeline
from .report import (
    ReportBundle,
    parse_video_csv,
    video_csv_text,
    write_summary_csv,
    write_video_summaries_csv,
)

log = logging.getLogger("dtwin")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
RUN_RECORDS = "run_records.json"


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", type=Path, help="flat JSON config file; flags override its keys")
    g.add_argument("--cache-dir", help=f"artifact cache root (default: ${CACHE_ENV}, then a per-command default)")
    g.add_argument("--seed", type=int)
    for category in CATEGORIES:
        g.add_argument(f"--{category.replace('_', '-')}", dest=category, metavar="NAME",
                       help=f"{category.replace('_', ' ')} backend (default: synthetic)")
    g.add_argument("--prompt-prefix")
    g.add_argument("--max-retries", type=int)
    g.add_argument("--dilation-px", type=int, help="mask dilation; default is 3%% of the face bbox diagonal")
    g.add_argument("--caption-override")
    g.add_argument("--normalize-identity", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="dtwin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="de-identify every clip in a manifest")
    run.add_argument("--manifest", type=Path, required=True)
    run.add_argument("--out", type=Path, required=True)

    ev = sub.add_parser("evaluate", parents=[common], help="metrics, summary CSV and timeline plots")
    ev.add_argument("--manifest", type=Path, required=True, help="manifest of the source clips")
    ev.add_argument("--deid-dir", type=Path, required=True, help="output directory of a previous run")
    ev.add_argument("--report-dir", type=Path, required=True)
    ev.add_argument("--distance", choices=["cosine", "euclidean", "both"], default="both",
                    help="distance family to plot (both families are always computed)")

    sd = sub.add_parser("synth-dataset", parents=[common], help="write a synthetic avatar dataset")
    sd.add_argument("--out", type=Path, required=True)
    sd.add_argument("--identities", type=int, default=2)
    sd.add_argument("--behaviors", nargs="+", choices=[b.value for b in BEHAVIORS],
                    default=[b.value for b in BEHAVIORS])
    sd.add_argument("--frames", type=int, default=50, help="frames per clip (T)")
    sd.add_argument("--size", type=int, nargs=2, default=(64, 64), metavar=("W", "H"))
    sd.add_argument("--fps", type=float, default=25.0)
    return parser


def config_from_args(args) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {f.name: getattr(args, f.name, None) for f in fields(PipelineConfig)}
    config = config.with_overrides(**overrides)
    config.check(default_registry())
    return config


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_run(args) -> int:
    try:
        config = config_from_args(args)
        manifest = load_manifest(args.manifest)
    except (DTwinError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    out = Path(args.out)
    cache = resolve_cache(config, default=out / "cache")
    records = run_batch(manifest, config, cache=cache, output_dir=out, workers=args.workers)
    _dump_json(out / RUN_RECORDS, [r.to_dict() for r in records])
    # wall-clock timings vary between runs, so they live outside the records
    _dump_json(out / "timings.json", {r.clip_id: r.timings for r in records})
    failed = [r for r in records if not r.ok]
    for r in failed:
        stage = r.failed_stage
        log.error("%s failed at %s: %s", r.clip_id, stage, r.stages[stage].error)
    print(f"{len(records) - len(failed)}/{len(records)} clips de-identified -> {out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _deid_path(deid_dir: Path, clip_id: str) -> Path:
    for candidate in (deid_dir / "videos" / clip_id, deid_dir / clip_id):
        if candidate.exists():
            return candidate
    raise MissingOutput(f"no de-identified video for {clip_id} under {deid_dir}")


def evaluate_dataset(manifest, deid_dir: Path, report_dir: Path, config: PipelineConfig, distance="both",
                     cache=None) -> ReportBundle:
    """Evaluate every manifest entry that has a de-identified output and
    write the report bundle under ``report_dir``."""
    backends = resolve_backends(default_registry(), config.backend_names())
    bundle = ReportBundle(report_dir)
    families = [d for d in DISTANCES if distance in ("both", d.value)]
    summaries = []
    for entry in manifest.entries:
        try:
            deid = load_clip(_deid_path(deid_dir, entry.clip_id))
            source = load_clip(manifest.resolve(entry))
        except (MissingOutput, MediaNotFound) as exc:
            bundle.missing.append(entry.clip_id)
            log.warning("%s", exc)
            continue
        except DTwinError as exc:
            bundle.errors[entry.clip_id] = f"{type(exc).__name__}: {exc}"
            continue
        key = None
        text = None
        if cache is not None:
            digest = config.stage_digest(Stage.METRICS, source.content_digest() + deid.content_digest())
            key = ArtifactKey(Stage.METRICS, entry.clip_id, digest)
            payload = cache.fetch(key)
            text = payload.decode("utf-8") if payload is not None else None
        try:
            if text is None:
                obs, timelines, summary = evaluate_pair(source, deid, backends, config.normalize_identity)
                text = video_csv_text(obs, timelines)
                if key is not None:
                    cache.store(key, text.encode("utf-8"))
            else:
                timelines = parse_video_csv(text)
                summary = summarize_video(timelines)
        except DTwinError as exc:
            bundle.errors[entry.clip_id] = f"{type(exc).__name__}: {exc}"
            continue
        rel = f"metrics/{entry.clip_id}.csv"
        (report_dir / "metrics").mkdir(parents=True, exist_ok=True)
        (report_dir / rel).write_text(text, encoding="utf-8", newline="")
        bundle.video_csvs[entry.clip_id] = rel
        plots = []
        for fam in families:
            prel = f"plots/{entry.clip_id}_{fam.value}.png"
            plot_timeline([tl for tl in timelines if tl.distance is fam], report_dir / prel,
                          title=f"{entry.clip_id} ({fam.value})")
            plots.append(prel)
        bundle.plots[entry.clip_id] = plots
        summaries.append((entry.clip_id, summary))
    if summaries:
        write_video_summaries_csv(report_dir / "video_summary.csv", summaries)
        bundle.video_summary_csv = "video_summary.csv"
        write_summary_csv(report_dir / "summary.csv", summarize_dataset([s for _, s in summaries]))
        bundle.summary_csv = "summary.csv"
    records = deid_dir / RUN_RECORDS
    if records.exists():
        bundle.run_records = os.path.relpath(records, report_dir)
    bundle.write()
    return bundle


def cmd_evaluate(args) -> int:
    try:
        config = config_from_args(args)
        manifest = load_manifest(args.manifest)
    except (DTwinError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    if not args.deid_dir.is_dir():
        log.error("no such output directory: %s", args.deid_dir)
        return EXIT_CONFIG
    args.report_dir.mkdir(parents=True, exist_ok=True)
    bundle = evaluate_dataset(manifest, args.deid_dir, args.report_dir, config, args.distance,
                              cache=resolve_cache(config))
    n = len(bundle.video_csvs)
    print(f"evaluated {n}/{len(manifest)} clips -> {args.report_dir}")
    if bundle.missing:
        print("missing de-identified output: " + ", ".join(bundle.missing))
    return EXIT_OK if n == len(manifest) else EXIT_PARTIAL


def cmd_synth_dataset(args) -> int:
    if args.identities < 1 or args.frames < 1:
        log.error("--identities and --frames must be >= 1")
        return EXIT_CONFIG
    try:
        path = synthworld.make_dataset(
            args.out, args.identities, args.behaviors, args.frames, args.seed or 0, tuple(args.size), args.fps
        )
    except (DTwinError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_PARTIAL
    print(path)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "evaluate": cmd_evaluate, "synth-dataset": cmd_synth_dataset}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
