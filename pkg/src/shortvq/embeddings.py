"""VQEF embedding blocks: binary format and spatial pooling.

A block holds the visual-encoder features of one video's M key frames as
an M x grid_h x grid_w x dim float32 tensor.  Files are little-endian:
magic "VQEF", version u32, four shape u32s, then the row-major payload
(frame, row, col, channel)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TensorFormatError

VQEF_MAGIC = b"VQEF"
VQEF_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")


@dataclass(frozen=True)
class EmbeddingBlock:
    video_id: str
    data: np.ndarray  # (m, grid_h, grid_w, dim) float32

    def __post_init__(self):
        d = self.data
        if d.ndim != 4:
            raise TensorFormatError(f"expected 4-D block, got shape {d.shape}")
        if d.shape[0] < 1 or d.shape[3] < 1:
            raise TensorFormatError(f"degenerate block shape {d.shape}")
        if not np.isfinite(d).all():
            raise TensorFormatError(f"{self.video_id}: non-finite embedding values")

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[3]


def write_embeddings(block: EmbeddingBlock, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    m, gh, gw, dim = block.data.shape
    payload = np.ascontiguousarray(block.data, dtype="<f4").tobytes()
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(VQEF_MAGIC, VQEF_VERSION, m, gh, gw, dim))
        fh.write(payload)
    tmp.replace(path)


def load_embeddings(path: str | Path, video_id: str | None = None) -> EmbeddingBlock:
    """Read a VQEF file; the video id defaults to the file stem."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TensorFormatError(f"{path}: truncated header")
    magic, version, m, gh, gw, dim = _HEADER.unpack_from(raw)
    if magic != VQEF_MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != VQEF_VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    expected = m * gh * gw * dim * 4
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise TensorFormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(m, gh, gw, dim)
    return EmbeddingBlock(video_id or path.stem, data.astype(np.float32))


def pool_features(block: EmbeddingBlock) -> np.ndarray:
    """Global average over each frame's spatial grid, concatenated in frame
    order into a single (m * dim,) float64 vector."""
    pooled = block.data.astype(np.float64).mean(axis=(1, 2))
    return pooled.reshape(-1)
