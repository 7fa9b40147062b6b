"""Per-video score aggregation and the std-dev-vs-trial-count study.

A video's score is the flat arithmetic mean of every kept trial across all
of its frames and crops.  The robustness profile resamples T trials per
frame (without replacement) from the cache and reports how the spread of
the resulting video scores shrinks as T grows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AggregationError, InsufficientTrialsError
from .parsing import filter_valid
from .rng import CounterRng


@dataclass(frozen=True)
class VideoScore:
    video_id: str
    q_p_raw: float  # mean parsed rating, on the 1-5 prompt scale
    kept_trials: int
    rejected_trials: int

    def to_json_obj(self) -> dict:
        return {
            "video_id": self.video_id,
            "q_p_raw": self.q_p_raw,
            "kept": self.kept_trials,
            "rejected": self.rejected_trials,
        }


@dataclass(frozen=True)
class StdDevProfile:
    """Distribution of per-video score std at one trials-per-frame count."""

    trials_per_frame: int
    per_video_std: tuple[float, ...]  # ordered by video_id
    resamples: int

    def summary(self) -> dict:
        stds = np.asarray(self.per_video_std)
        q1, med, q3 = np.percentile(stds, [25, 50, 75])
        return {
            "trials_per_frame": self.trials_per_frame,
            "resamples": self.resamples,
            "std_min": float(stds.min()),
            "std_q1": float(q1),
            "std_median": float(med),
            "std_q3": float(q3),
            "std_max": float(stds.max()),
        }


def aggregate_video(video_id: str, records: list) -> VideoScore:
    """Average all kept trials of one video into its final prediction."""
    kept, rejected = filter_valid(records)
    if not kept:
        raise AggregationError(
            f"video {video_id}: no kept trials to aggregate "
            f"(rejections: {rejected or 'none'})"
        )
    values = [rec.value for rec in kept]
    return VideoScore(
        video_id=video_id,
        q_p_raw=float(np.mean(values)),
        kept_trials=len(kept),
        rejected_trials=sum(rejected.values()),
    )


def aggregate_all(records: list) -> list[VideoScore]:
    """One VideoScore per video present in the records, sorted by id."""
    by_video: dict[str, list] = {}
    for rec in records:
        by_video.setdefault(rec.key.video_id, []).append(rec)
    return [aggregate_video(vid, recs) for vid, recs in sorted(by_video.items())]


def _kept_by_frame(records: list) -> dict[str, dict[int, list[float]]]:
    """video_id -> frame_index -> parsed values of kept trials, in key order."""
    pools: dict[str, dict[int, list[float]]] = {}
    kept, _ = filter_valid(records)
    for rec in sorted(kept, key=lambda r: r.key.sort_key()):
        pools.setdefault(rec.key.video_id, {}).setdefault(
            rec.key.frame_index, []
        ).append(rec.value)
    return pools


def min_kept_per_frame(records: list) -> int:
    """Size of the smallest per-frame pool of kept trials (0 if none)."""
    pools = _kept_by_frame(records)
    if not pools:
        return 0
    return min(len(vals) for frames in pools.values() for vals in frames.values())


def stddev_profile(
    records: list,
    trials_list: list[int],
    resamples: int = 30,
    seed: int = 0,
) -> list[StdDevProfile]:
    """Resampled score spread for each requested trials-per-frame count T.

    For every video and resample, T kept trials are drawn per frame without
    replacement (one seeded stream per (video, T, resample)) and averaged
    into a score; the per-video entry is the population std of those scores
    over the resamples.  Requires every frame pool to hold at least max(T)
    kept trials.
    """
    pools = _kept_by_frame(records)
    if not pools:
        raise AggregationError("no kept trials in cache")
    min_pool = min(
        len(values) for frames in pools.values() for values in frames.values()
    )
    profiles = []
    for t in trials_list:
        if t < 1:
            raise InsufficientTrialsError(f"trials-per-frame must be >= 1, got {t}")
        if t > min_pool:
            raise InsufficientTrialsError(
                f"requested {t} trials per frame but smallest frame pool has {min_pool}"
            )
        per_video_std = []
        for video_id in sorted(pools):
            frames = pools[video_id]
            scores = []
            for j in range(resamples):
                rng = CounterRng(seed, "profile", video_id, t, j)
                drawn: list[float] = []
                for frame_index in sorted(frames):
                    values = frames[frame_index]
                    # sorted so the mean is a function of the drawn set, not
                    # the draw order (full-pool draws then give exactly 0 std)
                    indices = sorted(rng.sample_indices(len(values), t))
                    drawn.extend(values[i] for i in indices)
                scores.append(float(np.mean(drawn)))
            # identical scores (e.g. a full-pool draw) have exactly zero
            # spread; np.std would report the mean's last-ulp noise instead
            spread = 0.0 if len(set(scores)) == 1 else float(np.std(scores))
            per_video_std.append(spread)
        profiles.append(StdDevProfile(t, tuple(per_video_std), resamples))
    return profiles
