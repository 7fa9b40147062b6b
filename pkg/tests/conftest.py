import numpy as np
import pytest

from shortvq.frames import FrameImage
from shortvq.gateway import SamplerConfig, TrialKey, TrialRecord


@pytest.fixture
def tiny_image():
    return FrameImage(np.zeros((8, 8, 3), dtype=np.uint8))


def make_record(video_id="v0", frame_index=0, crop_index=None, trial_index=0,
                value=3.0, rejection="none", p=0.9):
    return TrialRecord(
        key=TrialKey(video_id, frame_index, crop_index, trial_index),
        sampler=SamplerConfig("nucleus", p),
        prompt_id="level_related",
        raw_text="" if value is None else f"value {value}",
        value=value,
        rejection=rejection if value is None else "none",
    )


def make_frame_records(video_id, frame_index, values):
    """One kept record per value, trial-indexed in order."""
    return [
        make_record(video_id, frame_index, None, i, float(v))
        for i, v in enumerate(values)
    ]


def write_video_frames(directory, n_frames, height=16, width=16, seed=0):
    """Write deterministic raw frames; returns the directory."""
    from shortvq.frames import save_frame_raw

    directory.mkdir(parents=True, exist_ok=True)
    for j in range(n_frames):
        base = (np.arange(height * width * 3, dtype=np.int64) * (seed + 3) + j * 11) % 256
        pixels = base.reshape(height, width, 3).astype(np.uint8)
        save_frame_raw(FrameImage(pixels), directory / f"frame{j}.raw")
    return directory


def write_manifest(path, rows):
    """rows: (video_id, frames_dir, mos, mos_min, mos_max, split)."""
    lines = ["video_id,frames_dir,mos,mos_min,mos_max,split"]
    for row in rows:
        lines.append(",".join(str(x) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path
