"""Desk-scale synthetic dataset with known ground truth.

Builds everything the pipeline consumes: frame files, a manifest, VQEF
embeddings, score files for both predictors, a mock-rater latent file, and
a ready-to-run config.  Videos alternate between two content clusters with
well-separated embedding means; in cluster A the MOS coincides with q_p
and in cluster B with q_l, so a working content-aware gate must learn to
send alpha toward 1 on A and 0 on B.  Exact noise offsets are chosen so
the noisy predictor (and the fixed-0.5 blend) provably mis-rank some
neighboring videos while the oracle blend never does.  All outputs are a
pure function of the seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import write_config
from .datamodel import denormalize_score, write_jsonl
from .embeddings import EmbeddingBlock, write_embeddings
from .frames import FrameImage, save_frame_raw
from .rng import CounterRng

FRAMES_PER_VIDEO = 5
FRAME_SIZE = 64
EMBED_GRID = 4
EMBED_DIM = 8
EMBED_NOISE = 0.05
CLUSTER_MEANS = {"A": 1.0, "B": -1.0}
_NOISE_AMPS = (0.10, 0.15, 0.20)


@dataclass(frozen=True)
class FixtureVideo:
    video_id: str
    cluster: str
    split: str
    mos_norm: float
    q_p: float
    q_l: float


def _plan(seed: int, n_videos: int) -> list[FixtureVideo]:
    videos = []
    for i in range(n_videos):
        mos = 0.5 if n_videos == 1 else 0.1 + 0.8 * i / (n_videos - 1)
        cluster = "A" if i % 2 == 0 else "B"
        split = "test" if i % 5 == 2 else "train"
        amp = _NOISE_AMPS[i % 3]
        sign = 1.0 if (i // 2) % 2 == 0 else -1.0
        noisy = float(np.clip(mos + sign * amp, 0.02, 0.98))
        q_p, q_l = (mos, noisy) if cluster == "A" else (noisy, mos)
        videos.append(
            FixtureVideo(
                video_id=f"vid{i:03d}",
                cluster=cluster,
                split=split,
                mos_norm=round(mos, 6),
                q_p=round(q_p, 6),
                q_l=round(q_l, 6),
            )
        )
    return videos


def _frame_pixels(video_index: int, frame_index: int) -> np.ndarray:
    rows = np.arange(FRAME_SIZE)[:, None]
    cols = np.arange(FRAME_SIZE)[None, :]
    base = rows * 3 + cols * 5 + video_index * 17 + frame_index * 29
    channels = [(base + 41 * c) % 256 for c in range(3)]
    return np.stack(channels, axis=-1).astype(np.uint8)


def _embedding_block(video: FixtureVideo, seed: int) -> EmbeddingBlock:
    rng = CounterRng(seed, "embed", video.video_id)
    mean = CLUSTER_MEANS[video.cluster]
    shape = (FRAMES_PER_VIDEO, EMBED_GRID, EMBED_GRID, EMBED_DIM)
    noise = np.array([rng.gauss() for _ in range(int(np.prod(shape)))])
    data = (mean + EMBED_NOISE * noise).reshape(shape).astype(np.float32)
    return EmbeddingBlock(video.video_id, data)


def synth_fixture(out_dir: str | Path, seed: int = 0, n_videos: int = 40) -> dict:
    """Generate the fixture tree under out_dir; returns the key paths."""
    out = Path(out_dir)
    if n_videos < 1:
        raise ValueError("n_videos must be >= 1")
    out.mkdir(parents=True, exist_ok=True)
    (out / "embeddings").mkdir(exist_ok=True)
    videos = _plan(seed, n_videos)

    manifest_lines = ["video_id,frames_dir,mos,mos_min,mos_max,split"]
    qp_rows, ql_rows, truth_rows = [], [], []
    mock_mu = {}
    for i, video in enumerate(videos):
        frames_dir = out / "frames" / video.video_id
        frames_dir.mkdir(parents=True, exist_ok=True)
        for j in range(FRAMES_PER_VIDEO):
            save_frame_raw(
                FrameImage(_frame_pixels(i, j)), frames_dir / f"frame{j}.raw"
            )
        mos = denormalize_score(video.mos_norm, 1.0, 5.0)
        manifest_lines.append(
            f"{video.video_id},frames/{video.video_id},{mos},1.0,5.0,{video.split}"
        )
        write_embeddings(
            _embedding_block(video, seed), out / "embeddings" / f"{video.video_id}.vqef"
        )
        qp_rows.append(
            {
                "video_id": video.video_id,
                "q_p_raw": denormalize_score(video.q_p, 1.0, 5.0),
                "kept": FRAMES_PER_VIDEO * 200,
                "rejected": 0,
            }
        )
        ql_rows.append({"video_id": video.video_id, "score": video.q_l})
        mock_mu[video.video_id] = denormalize_score(video.q_p, 1.0, 5.0)
        truth_rows.append(
            {
                "video_id": video.video_id,
                "cluster": video.cluster,
                "split": video.split,
                "mos_norm": video.mos_norm,
                "q_p": video.q_p,
                "q_l": video.q_l,
            }
        )

    (out / "manifest.csv").write_text("\n".join(manifest_lines) + "\n")
    write_jsonl(out / "qp.jsonl", qp_rows)
    write_jsonl(out / "ql.jsonl", ql_rows)
    (out / "mock_mu.json").write_text(json.dumps(mock_mu, indent=2) + "\n")
    write_jsonl(out / "truth.jsonl", truth_rows)

    config = {
        "manifest": "manifest.csv",
        "seed": seed,
        "preprocessing": "crop",
        "key_frames": FRAMES_PER_VIDEO,
        "crops_per_frame": 10,
        "trials_per_image": 20,
        "input_size": 32,
        "prompt": "level_related",
        "sampler": {"kind": "nucleus", "p": 0.9},
        "backend": {
            "kind": "mock",
            "mock": {"mu_file": "mock_mu.json", "sigma": 0.7, "nonsense_rate": 0.0},
        },
        "qp_file": "qp.jsonl",
        "ql": {"file": "ql.jsonl", "min": 0.0, "max": 1.0},
        "embeddings_dir": "embeddings",
        # Desk-scale gate schedule: the tiny fixture needs a hotter, longer
        # run than the full-dataset defaults to reach its optimum.
        "ensemble": {
            "hidden": 16,
            "epochs": 200,
            "batch_size": 8,
            "lr": 0.02,
        },
        "paths": {"out_dir": "out"},
    }
    write_config(out / "config.json", config)
    return {
        "dir": out,
        "config": out / "config.json",
        "manifest": out / "manifest.csv",
        "truth": out / "truth.jsonl",
        "videos": len(videos),
    }
