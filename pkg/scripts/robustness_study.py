#!/usr/bin/env python3
"""Offline robustness study on the mock rater.

Reproduces the two qualitative trends the pipeline is built around:
response spread grows with the nucleus mass p, and per-video score spread
shrinks as the number of trials per frame grows.  Prints both tables.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from shortvq.aggregate import stddev_profile
from shortvq.frames import FrameImage
from shortvq.gateway import MockBackend, PROMPTS, SamplerConfig, TrialKey, TrialRecord
from shortvq.parsing import parse_level_response

P_SWEEP = (0.0, 0.2, 0.5, 0.9)
TRIAL_SWEEP = (10, 50, 200)


def mock_trials(mock, video_id, frames, trials, p):
    image = FrameImage(np.zeros((4, 4, 3), dtype=np.uint8))
    prompt = PROMPTS["level_related"]
    sampler = SamplerConfig("nucleus", p)
    records = []
    for frame in range(frames):
        for trial in range(trials):
            key = TrialKey(video_id, frame, None, trial)
            text = mock.infer(image, prompt, sampler, key)
            parsed = parse_level_response(text)
            records.append(
                TrialRecord(key, sampler, prompt.id, text, parsed.value,
                            parsed.rejection)
            )
    return records


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--videos", type=int, default=6)
    parser.add_argument("--frames", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--resamples", type=int, default=30)
    args = parser.parse_args()

    mus = {
        f"vid{i:02d}": 1.5 + 3.0 * i / max(args.videos - 1, 1)
        for i in range(args.videos)
    }
    mock = MockBackend(mu_by_video=mus, sigma=0.7, seed=args.seed)

    print("response std per video vs nucleus mass p "
          f"({args.frames * 200} trials each)")
    header = "video      mu   " + "".join(f"  p={p:<4}" for p in P_SWEEP)
    print(header)
    for vid, mu in mus.items():
        stds = []
        for p in P_SWEEP:
            values = [r.value for r in
                      mock_trials(mock, vid, args.frames, 200, p) if r.value]
            stds.append(np.std(values))
        print(f"{vid}  {mu:4.2f} " + "".join(f"  {s:6.3f}" for s in stds))

    print()
    print(f"per-video score std vs trials per frame (p=0.9, "
          f"{args.resamples} resamples)")
    records = []
    for vid in mus:
        records += mock_trials(mock, vid, args.frames, 200, 0.9)
    profiles = stddev_profile(records, list(TRIAL_SWEEP),
                              resamples=args.resamples, seed=args.seed)
    print("trials   min      q1      median  q3      max")
    for profile in profiles:
        s = profile.summary()
        print(f"{s['trials_per_frame']:>6}   "
              f"{s['std_min']:.4f}  {s['std_q1']:.4f}  {s['std_median']:.4f}  "
              f"{s['std_q3']:.4f}  {s['std_max']:.4f}")


if __name__ == "__main__":
    main()
