"""Key-frame selection and the two pre-processing strategies (resize, crop).

The resize here is plain bilinear interpolation that deliberately ignores
aspect ratio, using the half-pixel-center convention with edge clamping
(the behavior shared by the common image libraries).  Cropping draws
uniform patch offsets from a counter-based PRNG keyed by
``(seed, video_id, frame_index)``, so a given patch set is reproducible
regardless of processing order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import CounterRng

RAW_DIMS_SUFFIX = ".dims"


@dataclass(frozen=True)
class FrameImage:
    """One decoded frame: H x W x 3 array of 8-bit channel values."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValueError(f"expected HxWx3 uint8 array, got {p.shape} {p.dtype}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("empty frame")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class KeyFrameSet:
    """M uniformly sampled frames plus their original indices."""

    frames: tuple[FrameImage, ...]
    source_indices: tuple[int, ...]

    def __post_init__(self):
        if len(self.frames) < 1 or len(self.frames) != len(self.source_indices):
            raise ValueError("frames and source_indices must be non-empty and aligned")
        # Strictly increasing whenever enough source frames exist; repeats
        # only occur in the short-video edge case (fewer frames than M).
        if any(b < a for a, b in zip(self.source_indices, self.source_indices[1:])):
            raise ValueError("source_indices must be non-decreasing")


def key_frame_indices(n_frames: int, m: int) -> list[int]:
    """Uniform sampling indices: floor(k*(N-1)/(m-1)) for k = 0..m-1.

    m=1 picks the middle frame; if the video has fewer than m frames the
    formula repeats indices (duplicates allowed).
    """
    if n_frames < 1:
        raise ValueError("empty video")
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return [(n_frames - 1) // 2]
    return [k * (n_frames - 1) // (m - 1) for k in range(m)]


def select_key_frames(video: list[FrameImage], m: int) -> KeyFrameSet:
    indices = key_frame_indices(len(video), m)
    return KeyFrameSet(
        frames=tuple(video[i] for i in indices),
        source_indices=tuple(indices),
    )


def resize_bilinear(frame: FrameImage, out_h: int, out_w: int) -> FrameImage:
    """Resize to out_h x out_w, not preserving aspect ratio.

    Source coordinate for output pixel d along an axis is
    ``(d + 0.5) * (src / dst) - 0.5``, clamped to [0, src-1]; the output is
    the bilinear blend of the 4 neighbors, rounded half-up per channel.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("zero-sized output")
    src = frame.pixels.astype(np.float64)
    src_h, src_w = frame.height, frame.width

    ys = np.clip((np.arange(out_h) + 0.5) * (src_h / out_h) - 0.5, 0.0, src_h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (src_w / out_w) - 0.5, 0.0, src_w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    out = (
        src[y0][:, x0] * (1.0 - wy) * (1.0 - wx)
        + src[y0][:, x1] * (1.0 - wy) * wx
        + src[y1][:, x0] * wy * (1.0 - wx)
        + src[y1][:, x1] * wy * wx
    )
    return FrameImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def random_crops(
    frame: FrameImage, k: int, size: int, seed: int, video_id: str, frame_index: int
) -> list[FrameImage]:
    """k square patches with offsets uniform over all valid positions.

    Patches may overlap.  Rejects frames smaller than the crop size: the
    caller must resize up first or skip.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if frame.height < size or frame.width < size:
        raise ValueError(
            f"frame {frame.height}x{frame.width} smaller than crop size {size}"
        )
    rng = CounterRng(seed, "crops", video_id, frame_index)
    crops = []
    for _ in range(k):
        top = rng.randint(frame.height - size + 1)
        left = rng.randint(frame.width - size + 1)
        crops.append(FrameImage(frame.pixels[top : top + size, left : left + size].copy()))
    return crops


def load_frame(path: str | Path) -> FrameImage:
    """Decode a frame file: PNG, or 8-bit RGB raw with a .dims sidecar.

    The sidecar sits next to the .raw file (frame.raw -> frame.raw.dims or
    frame.dims) and holds two integers: ``height width``.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        from PIL import Image

        with Image.open(path) as img:
            return FrameImage(np.asarray(img.convert("RGB"), dtype=np.uint8))
    if suffix == ".raw":
        dims_path = path.with_suffix(path.suffix + RAW_DIMS_SUFFIX)
        if not dims_path.is_file():
            dims_path = path.with_suffix(RAW_DIMS_SUFFIX)
        if not dims_path.is_file():
            raise FileNotFoundError(f"missing dimensions sidecar for {path}")
        h, w = (int(tok) for tok in dims_path.read_text().split())
        data = np.fromfile(path, dtype=np.uint8)
        if data.size != h * w * 3:
            raise ValueError(
                f"{path}: expected {h * w * 3} bytes for {h}x{w} RGB, got {data.size}"
            )
        return FrameImage(data.reshape(h, w, 3))
    raise ValueError(f"unsupported image format: {path}")


def save_frame_raw(frame: FrameImage, path: str | Path) -> None:
    """Write an 8-bit RGB raw file plus its .dims sidecar."""
    path = Path(path)
    path.write_bytes(frame.pixels.tobytes())
    dims_path = path.with_suffix(path.suffix + RAW_DIMS_SUFFIX)
    dims_path.write_text(f"{frame.height} {frame.width}\n")
