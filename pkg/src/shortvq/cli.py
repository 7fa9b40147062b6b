"""Command-line surface binding the pipeline end to end.

Subcommands mirror the pipeline stages: trials -> aggregate ->
(train-ensemble) -> blend -> evaluate / analyze, plus fixture for the
synthetic dataset.  Exit codes: 0 success, 1 config/data error,
2 backend unreachable, 3 degenerate metric.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import aggregate as agg
from . import ensemble as ens
from .config import RunConfig
from .datamodel import (
    PredictionTriple,
    load_manifest,
    normalize_rating,
    normalize_score,
    read_jsonl,
    write_jsonl,
)
from .embeddings import load_embeddings, pool_features
from .errors import (
    DegenerateMetricError,
    ShortvqError,
)
from .fixtures import synth_fixture
from .gateway import TrialCache, run_trial_batch
from .metrics import metric_pair

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_BACKEND_UNREACHABLE = 2
EXIT_DEGENERATE_METRIC = 3


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def cmd_trials(cfg: RunConfig) -> int:
    entries = load_manifest(cfg.manifest_path)
    backend = cfg.backend()
    cache = TrialCache(cfg.path("cache"))
    summary = run_trial_batch(
        entries,
        backend,
        cfg.prompt(),
        cfg.sampler(),
        cache,
        preprocessing=cfg["preprocessing"],
        key_frames=int(cfg["key_frames"]),
        crops_per_frame=int(cfg["crops_per_frame"]),
        trials_per_image=int(cfg["trials_per_image"]),
        input_size=int(cfg["input_size"]),
        seed=cfg.seed,
        max_in_flight=int(cfg["max_in_flight"]),
    )
    print(
        f"videos: {summary.videos}  new trials: {summary.new_trials}  "
        f"cached: {summary.skipped_cached}  kept: {summary.kept}"
    )
    for reason, count in summary.rejected_by_reason.items():
        print(f"  rejected [{reason}]: {count}")
    if summary.new_trials > 0 and summary.transport_failures == summary.new_trials:
        print("backend unreachable: every attempted trial failed in transport")
        return EXIT_BACKEND_UNREACHABLE
    return EXIT_OK


def cmd_aggregate(cfg: RunConfig) -> int:
    entries = load_manifest(cfg.manifest_path)
    cache = TrialCache(cfg.path("cache"))
    records = cache.records()
    by_video: dict[str, list] = {}
    for rec in records:
        by_video.setdefault(rec.key.video_id, []).append(rec)

    scores, problems = [], []
    for entry in entries:
        recs = by_video.get(entry.video_id)
        if not recs:
            problems.append(f"{entry.video_id}: not present in trial cache")
            continue
        try:
            scores.append(agg.aggregate_video(entry.video_id, recs))
        except ShortvqError as exc:
            problems.append(str(exc))
    if problems:
        for line in problems:
            print(f"error: {line}")
        return EXIT_DATA_ERROR

    write_jsonl(cfg.path("scores"), [s.to_json_obj() for s in scores])
    print(f"wrote {len(scores)} video scores -> {cfg.path('scores')}")

    min_pool = agg.min_kept_per_frame(records)
    requested = [int(t) for t in cfg["profile.trials"]]
    feasible = [t for t in requested if t <= min_pool]
    for t in requested:
        if t not in feasible:
            print(f"profile: skipping T={t} (smallest frame pool has {min_pool} kept trials)")
    profiles = agg.stddev_profile(
        records, feasible, resamples=int(cfg["profile.resamples"]), seed=cfg.seed
    ) if feasible else []
    _write_text(
        cfg.path("profile"),
        json.dumps([p.summary() for p in profiles], indent=2) + "\n",
    )
    for p in profiles:
        s = p.summary()
        print(
            f"T={s['trials_per_frame']:>4}  std min/median/max: "
            f"{s['std_min']:.4f} / {s['std_median']:.4f} / {s['std_max']:.4f}"
        )
    return EXIT_OK


def _load_triples(path: Path) -> list[PredictionTriple]:
    return [PredictionTriple.from_json_obj(obj) for obj in read_jsonl(path)]


def cmd_evaluate(cfg: RunConfig, predictions: Path | None, split: str = "all") -> int:
    entries = load_manifest(cfg.manifest_path)
    if split != "all":
        entries = [e for e in entries if e.split == split]
    mos_by_id = {e.video_id: e.mos_norm for e in entries}
    triples = [t for t in _load_triples(predictions or cfg.path("predictions"))
               if t.video_id in mos_by_id]
    if len(triples) < 2:
        print(f"error: only {len(triples)} predictions overlap the manifest (need >= 2)")
        return EXIT_DATA_ERROR
    triples.sort(key=lambda t: t.video_id)
    mos = [mos_by_id[t.video_id] for t in triples]

    columns = [("q_p", [t.q_p for t in triples]), ("q_l", [t.q_l for t in triples])]
    if all(t.q_naive is not None for t in triples):
        columns.append(("naive", [t.q_naive for t in triples]))
    else:
        columns.append(("naive", [ens.naive_blend(t.q_p, t.q_l) for t in triples]))
    if all(t.q_e is not None for t in triples):
        columns.append(("ensemble", [t.q_e for t in triples]))

    lines = [f"n={len(triples)} split={split}  (SRCC / PLCC)"]
    for name, values in columns:
        pair = metric_pair(values, mos)
        lines.append(f"{name:<10} {pair.format()}")
    report = "\n".join(lines) + "\n"
    _write_text(cfg.path("report"), report)
    print(report, end="")
    return EXIT_OK


def _load_prediction_maps(cfg: RunConfig):
    qp_path = cfg.resolve(cfg["qp_file"]) if cfg["qp_file"] else cfg.path("scores")
    q_p = {
        row["video_id"]: normalize_rating(float(row["q_p_raw"]))
        for row in read_jsonl(qp_path)
    }
    lo, hi = float(cfg["ql.min"]), float(cfg["ql.max"])
    q_l = {
        row["video_id"]: normalize_score(float(row["score"]), lo, hi)
        for row in read_jsonl(cfg.resolve(cfg["ql.file"]))
    }
    return q_p, q_l


def _pooled_features(cfg: RunConfig, video_id: str) -> np.ndarray:
    path = cfg.resolve(cfg["embeddings_dir"]) / f"{video_id}.vqef"
    if not path.is_file():
        raise ShortvqError(f"missing embeddings for {video_id}: {path}")
    return pool_features(load_embeddings(path, video_id))


def cmd_train_ensemble(cfg: RunConfig) -> int:
    entries = [e for e in load_manifest(cfg.manifest_path) if e.split == "train"]
    if not entries:
        print("error: manifest has no train split")
        return EXIT_DATA_ERROR
    q_p, q_l = _load_prediction_maps(cfg)
    records = []
    for entry in entries:
        if entry.video_id not in q_p or entry.video_id not in q_l:
            print(f"error: {entry.video_id}: missing q_p or q_l prediction")
            return EXIT_DATA_ERROR
        records.append(
            ens.TrainingRecord(
                video_id=entry.video_id,
                features=_pooled_features(cfg, entry.video_id),
                q_p=q_p[entry.video_id],
                q_l=q_l[entry.video_id],
                mos_norm=entry.mos_norm,
            )
        )
    train_cfg = ens.TrainConfig(
        hidden=int(cfg["ensemble.hidden"]),
        epochs=int(cfg["ensemble.epochs"]),
        batch_size=int(cfg["ensemble.batch_size"]),
        base_lr=float(cfg["ensemble.lr"]),
        lr_decay=float(cfg["ensemble.lr_decay"]),
        decay_every_epochs=int(cfg["ensemble.decay_every_epochs"]),
        seed=cfg.seed,
    )
    model, losses = ens.train(records, train_cfg)
    ens.save_checkpoint(model, cfg.path("checkpoint"))
    _write_text(cfg.path("loss_log"), json.dumps(losses) + "\n")
    print(
        f"trained on {len(records)} videos, {train_cfg.epochs} epochs; "
        f"loss {losses[0]:.6f} -> {losses[-1]:.6f}"
    )
    print(f"checkpoint -> {cfg.path('checkpoint')}")
    return EXIT_OK


def cmd_blend(cfg: RunConfig, checkpoint: Path | None) -> int:
    entries = load_manifest(cfg.manifest_path)
    model = ens.load_checkpoint(checkpoint or cfg.path("checkpoint"))
    q_p, q_l = _load_prediction_maps(cfg)
    triples = []
    for entry in entries:
        if entry.video_id not in q_p or entry.video_id not in q_l:
            print(f"error: {entry.video_id}: missing q_p or q_l prediction")
            return EXIT_DATA_ERROR
        alpha = ens.predict_alpha(model, _pooled_features(cfg, entry.video_id))
        p, l = q_p[entry.video_id], q_l[entry.video_id]
        triples.append(
            PredictionTriple(
                video_id=entry.video_id,
                q_p=p,
                q_l=l,
                mos_norm=entry.mos_norm,
                alpha=alpha,
                q_e=ens.blend(alpha, p, l),
                q_naive=ens.naive_blend(p, l),
            )
        )
    write_jsonl(cfg.path("predictions"), [t.to_json_obj() for t in triples])
    print(f"wrote {len(triples)} prediction triples -> {cfg.path('predictions')}")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, predictions: Path | None) -> int:
    triples = _load_triples(predictions or cfg.path("predictions"))
    rows = ens.analyze_weights(
        triples,
        alpha_min=float(cfg["analysis.alpha_min"]),
        delta_min=float(cfg["analysis.delta_min"]),
    )
    lines = [
        f"alpha >= {cfg['analysis.alpha_min']}, |q_p - q_l| >= {cfg['analysis.delta_min']}: "
        f"{len(rows)} of {len(triples)} videos",
        f"{'video_id':<12} {'alpha':>6} {'q_p':>6} {'q_l':>6} {'|diff|':>6}  direction",
    ]
    for r in rows:
        lines.append(
            f"{r.video_id:<12} {r.alpha:>6.3f} {r.q_p:>6.3f} {r.q_l:>6.3f} "
            f"{r.delta:>6.3f}  {r.direction}"
        )
    report = "\n".join(lines) + "\n"
    _write_text(cfg.path("analysis"), report)
    print(report, end="")
    return EXIT_OK


def cmd_fixture(out_dir: Path, seed: int, videos: int) -> int:
    info = synth_fixture(out_dir, seed=seed, n_videos=videos)
    print(f"fixture with {info['videos']} videos -> {info['dir']}")
    print(f"config: {info['config']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shortvq",
        description="Short-form video quality: robust model elicitation and a "
        "content-aware learned ensemble.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("-c", "--config", required=True, help="config JSON path")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY.PATH=VALUE",
            help="override a config value (repeatable)",
        )

    add_config_args(sub.add_parser("trials", help="run the zero-shot trial batch"))
    add_config_args(sub.add_parser("aggregate", help="average trials into video scores"))

    p = sub.add_parser("evaluate", help="SRCC / PLCC of predictions against MOS")
    add_config_args(p)
    p.add_argument("--predictions", type=Path, help="prediction triples JSONL")
    p.add_argument("--split", default="all", choices=["all", "train", "val", "test"])

    add_config_args(sub.add_parser("train-ensemble", help="fit the gate on the train split"))

    p = sub.add_parser("blend", help="apply a trained gate to produce ensemble scores")
    add_config_args(p)
    p.add_argument("--checkpoint", type=Path, help="gate checkpoint (VQGM)")

    p = sub.add_parser("analyze", help="rank videos by learned-weight leverage")
    add_config_args(p)
    p.add_argument("--predictions", type=Path, help="prediction triples JSONL")

    p = sub.add_parser("fixture", help="generate the synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--videos", type=int, default=40)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fixture":
            return cmd_fixture(args.out, args.seed, args.videos)
        cfg = RunConfig.load(args.config, overrides=args.set)
        if args.command == "trials":
            return cmd_trials(cfg)
        if args.command == "aggregate":
            return cmd_aggregate(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.predictions, args.split)
        if args.command == "train-ensemble":
            return cmd_train_ensemble(cfg)
        if args.command == "blend":
            return cmd_blend(cfg, args.checkpoint)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.predictions)
        raise AssertionError(f"unhandled command {args.command}")
    except DegenerateMetricError as exc:
        print(f"error: {exc}")
        return EXIT_DEGENERATE_METRIC
    except (ShortvqError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}")
        return EXIT_DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
