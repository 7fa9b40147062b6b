import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shortvq.embeddings import (
    EmbeddingBlock,
    load_embeddings,
    pool_features,
    write_embeddings,
)
from shortvq.errors import TensorFormatError


def block_of(data, video_id="v"):
    return EmbeddingBlock(video_id, np.asarray(data, dtype=np.float32))


class TestFileFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.standard_normal((5, 16, 16, 8)).astype(np.float32)
        path = tmp_path / "v.vqef"
        write_embeddings(block_of(data), path)
        loaded = load_embeddings(path)
        assert loaded.video_id == "v"
        assert loaded.data.shape == (5, 16, 16, 8)
        assert loaded.data.size == 10240
        assert np.array_equal(loaded.data, data)

    def test_video_id_from_stem(self, tmp_path):
        path = tmp_path / "vid042.vqef"
        write_embeddings(block_of(np.ones((1, 2, 2, 3))), path)
        assert load_embeddings(path).video_id == "vid042"

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "v.vqef"
        write_embeddings(block_of(np.ones((2, 2, 2, 2))), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])
        with pytest.raises(TensorFormatError, match="header implies"):
            load_embeddings(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "v.vqef"
        write_embeddings(block_of(np.ones((1, 1, 1, 1))), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(TensorFormatError, match="bad magic"):
            load_embeddings(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.vqef"
        write_embeddings(block_of(np.ones((1, 1, 1, 1))), path)
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(TensorFormatError, match="version"):
            load_embeddings(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "v.vqef"
        write_embeddings(block_of(np.ones((1, 1, 1, 2))), path)
        raw = bytearray(path.read_bytes())
        raw[-4:] = np.asarray([np.inf], dtype="<f4").tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(TensorFormatError, match="non-finite"):
            load_embeddings(path)

    def test_degenerate_shape_rejected(self):
        with pytest.raises(TensorFormatError):
            EmbeddingBlock("v", np.ones((2, 2), dtype=np.float32))


class TestPooling:
    def test_constant_block(self):
        vec = pool_features(block_of(np.full((3, 4, 4, 2), 1.5)))
        assert vec.shape == (6,)
        assert np.allclose(vec, 1.5)

    def test_single_frame_mean(self):
        data = np.array([[[[1.0], [2.0]], [[3.0], [4.0]]]])  # m=1, 2x2 grid, dim=1
        assert pool_features(block_of(data)).tolist() == [2.5]

    def test_frame_order_preserved(self):
        data = np.concatenate(
            [np.full((1, 2, 2, 3), 7.0), np.full((1, 2, 2, 3), -2.0)], axis=0
        )
        vec = pool_features(block_of(data))
        assert vec.tolist() == [7.0, 7.0, 7.0, -2.0, -2.0, -2.0]

    @given(st.floats(min_value=-100, max_value=100))
    def test_pooling_linearity(self, a):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((2, 3, 3, 4)).astype(np.float32)
        scaled = pool_features(block_of(np.asarray(a, dtype=np.float32) * data))
        assert np.allclose(scaled, a * pool_features(block_of(data)), atol=1e-4)
