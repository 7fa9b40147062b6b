import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from shortvq.datamodel import load_manifest
from shortvq.errors import BackendProtocolError, BackendTransportError, ConfigError
from shortvq.gateway import (
    HttpBackend,
    MockBackend,
    PROMPTS,
    PROMPT_LEVEL,
    PROMPT_SCORE,
    SamplerConfig,
    TrialCache,
    TrialKey,
    TrialRecord,
    run_trial_batch,
)
from shortvq.parsing import parse_level_response, parse_score_response

from conftest import write_manifest, write_video_frames

LEVEL = PROMPTS["level_related"]
SCORE = PROMPTS["score_related"]


def key(video="v", frame=0, crop=None, trial=0):
    return TrialKey(video, frame, crop, trial)


class TestSamplerConfig:
    def test_valid(self):
        assert SamplerConfig("nucleus", 0.9).randomness == 0.9
        assert SamplerConfig("greedy", 0.7).randomness == 0.0

    def test_invalid(self):
        with pytest.raises(ConfigError):
            SamplerConfig("temperature", 0.5)
        with pytest.raises(ConfigError):
            SamplerConfig("nucleus", 1.5)


class TestPrompts:
    def test_texts_pinned(self):
        assert PROMPT_SCORE.startswith("Describe the quality characteristics")
        assert "scale of 1 to 5" in PROMPT_SCORE
        assert PROMPT_LEVEL.endswith(
            "Is it of low, medium low, medium, medium high, or high quality?"
        )


class TestMockBackend:
    def test_deterministic_at_zero_randomness(self, tiny_image):
        mock = MockBackend(default_mu=3.0, seed=1)
        s = SamplerConfig("nucleus", 0.0)
        assert mock.infer(tiny_image, LEVEL, s, key()) == mock.infer(
            tiny_image, LEVEL, s, key()
        )

    def test_deterministic_at_any_p(self, tiny_image):
        mock = MockBackend(default_mu=3.0, sigma=0.7, seed=1)
        s = SamplerConfig("nucleus", 0.9)
        texts = {mock.infer(tiny_image, LEVEL, s, key(trial=7)) for _ in range(5)}
        assert len(texts) == 1

    def test_mode_response_for_high_latent(self, tiny_image):
        mock = MockBackend(mu_by_video={"v": 4.8}, seed=0)
        text = mock.infer(tiny_image, LEVEL, SamplerConfig("nucleus", 0.0), key())
        assert "high quality" in text
        assert "medium" not in text

    def test_score_prompt_yields_numeral(self, tiny_image):
        mock = MockBackend(default_mu=2.0, seed=0)
        text = mock.infer(tiny_image, SCORE, SamplerConfig("nucleus", 0.0), key())
        assert parse_score_response(text).value == 2.0

    def test_mean_tracks_latent_quality(self, tiny_image):
        mock = MockBackend(default_mu=4.0, sigma=0.7, seed=7)
        s = SamplerConfig("nucleus", 0.9)
        values = [
            parse_level_response(mock.infer(tiny_image, LEVEL, s, key(trial=i))).value
            for i in range(10_000)
        ]
        assert np.mean(values) == pytest.approx(4.0, abs=0.1)

    def test_nonsense_rate(self, tiny_image):
        mock = MockBackend(default_mu=3.0, nonsense_rate=0.1, seed=5)
        s = SamplerConfig("nucleus", 0.9)
        rejected = sum(
            parse_level_response(mock.infer(tiny_image, LEVEL, s, key(trial=i))).value
            is None
            for i in range(10_000)
        )
        assert rejected / 10_000 == pytest.approx(0.1, abs=0.01)

    def test_spread_nondecreasing_in_p(self, tiny_image):
        mock = MockBackend(default_mu=3.0, sigma=0.7, seed=3)
        stds = []
        for p in (0.0, 0.2, 0.5, 0.9):
            s = SamplerConfig("nucleus", p)
            values = [
                parse_level_response(
                    mock.infer(tiny_image, LEVEL, s, key(trial=i))
                ).value
                for i in range(10_000)
            ]
            stds.append(float(np.std(values)))
        assert stds[0] == 0.0
        assert all(b >= a for a, b in zip(stds, stds[1:]))

    def test_invalid_configuration(self):
        with pytest.raises(ConfigError):
            MockBackend(sigma=-0.1)
        with pytest.raises(ConfigError):
            MockBackend(nonsense_rate=1.0)
        with pytest.raises(ConfigError):
            MockBackend(mu_by_video={"v": 7.0})


class _ScriptedHandler(BaseHTTPRequestHandler):
    script = []
    requests_seen = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        _ScriptedHandler.requests_seen.append(json.loads(self.rfile.read(length)))
        status, body = _ScriptedHandler.script.pop(0)
        payload = body if isinstance(body, bytes) else json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def scripted_server():
    server = HTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _ScriptedHandler.script = []
    _ScriptedHandler.requests_seen = []
    yield f"http://127.0.0.1:{server.server_port}", _ScriptedHandler
    server.shutdown()


@pytest.fixture
def fast_backoff(monkeypatch):
    monkeypatch.setattr(HttpBackend, "BACKOFF_BASE_S", 0.01)


class TestHttpBackend:
    def test_happy_path_and_wire_format(self, scripted_server, tiny_image):
        url, handler = scripted_server
        handler.script.append((200, {"text": "medium quality"}))
        backend = HttpBackend(url, model="m1", input_size=8)
        text = backend.infer(tiny_image, LEVEL, SamplerConfig("nucleus", 0.9), key())
        assert text == "medium quality"
        sent = handler.requests_seen[0]
        assert sent["model"] == "m1"
        assert sent["prompt"] == PROMPT_LEVEL
        assert sent["sampler"] == {"kind": "nucleus", "p": 0.9}
        assert sent["max_tokens"] == 128
        assert isinstance(sent["image_b64"], str) and sent["image_b64"]

    def test_retry_on_500_then_success(self, scripted_server, tiny_image, fast_backoff):
        url, handler = scripted_server
        handler.script += [(500, {"error": "busy"}), (200, {"text": "high quality"})]
        backend = HttpBackend(url, input_size=8)
        assert backend.infer(tiny_image, LEVEL, SamplerConfig(), key()) == "high quality"
        assert backend.stats["retries"] == 1

    def test_persistent_http_error_fails_after_retries(
        self, scripted_server, tiny_image, fast_backoff
    ):
        url, handler = scripted_server
        handler.script += [(500, {})] * 3
        backend = HttpBackend(url, input_size=8)
        with pytest.raises(BackendTransportError, match="3 attempts"):
            backend.infer(tiny_image, LEVEL, SamplerConfig(), key())

    def test_missing_text_field_is_protocol_error(self, scripted_server, tiny_image):
        url, handler = scripted_server
        handler.script.append((200, {"answer": "nope"}))
        backend = HttpBackend(url, input_size=8)
        with pytest.raises(BackendProtocolError, match='"text"'):
            backend.infer(tiny_image, LEVEL, SamplerConfig(), key())

    def test_malformed_json_is_protocol_error(self, scripted_server, tiny_image):
        url, handler = scripted_server
        handler.script.append((200, b"{not json"))
        backend = HttpBackend(url, input_size=8)
        with pytest.raises(BackendProtocolError, match="malformed"):
            backend.infer(tiny_image, LEVEL, SamplerConfig(), key())

    def test_unreachable_host_surfaces_attempts(self, tiny_image, fast_backoff):
        # bind then close a socket to get a port that refuses connections
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        s.close()
        backend = HttpBackend(f"http://127.0.0.1:{port}", timeout_s=1.0, input_size=8)
        with pytest.raises(BackendTransportError, match="2 retries"):
            backend.infer(tiny_image, LEVEL, SamplerConfig(), key())

    def test_wrong_image_size_rejected(self, tiny_image):
        backend = HttpBackend("http://example.invalid", input_size=448)
        with pytest.raises(ConfigError, match="448x448"):
            backend.infer(tiny_image, LEVEL, SamplerConfig(), key())


class TestTrialRecordIO:
    def test_json_round_trip_kept(self):
        rec = TrialRecord(key("v", 2, 3, 7), SamplerConfig("nucleus", 0.5),
                          "level_related", "medium quality", 3.0, "none")
        assert TrialRecord.from_json_obj(rec.to_json_obj()) == rec

    def test_json_round_trip_rejected_and_cropless(self):
        rec = TrialRecord(key("v", 1, None, 0), SamplerConfig("greedy", 0.0),
                          "score_related", "no idea", None, "no_match")
        obj = rec.to_json_obj()
        assert "crop_index" not in obj
        assert obj["parsed"] == "no_match"
        assert TrialRecord.from_json_obj(obj) == rec


def _manifest(tmp_path, n_videos=1, n_frames=6, size=16):
    rows = []
    for i in range(n_videos):
        write_video_frames(tmp_path / "clips" / f"v{i}", n_frames, size, size, seed=i)
        rows.append((f"v{i}", f"clips/v{i}", 3.0, 1.0, 5.0, "train"))
    return load_manifest(write_manifest(tmp_path / "manifest.csv", rows))


class TestRunTrialBatch:
    def test_crop_mode_counts(self, tmp_path):
        entries = _manifest(tmp_path)
        cache = TrialCache(tmp_path / "cache.jsonl")
        summary = run_trial_batch(
            entries, MockBackend(seed=0), LEVEL, SamplerConfig("nucleus", 0.9), cache,
            preprocessing="crop", key_frames=5, crops_per_frame=10,
            trials_per_image=20, input_size=8, seed=0,
        )
        assert summary.new_trials == 5 * 10 * 20
        assert len(cache) == 1000

    def test_resize_mode_counts(self, tmp_path):
        entries = _manifest(tmp_path)
        cache = TrialCache(tmp_path / "cache.jsonl")
        summary = run_trial_batch(
            entries, MockBackend(seed=0), LEVEL, SamplerConfig("nucleus", 0.9), cache,
            preprocessing="resize", key_frames=5, trials_per_image=20,
            input_size=8, seed=0,
        )
        assert summary.new_trials == 5 * 20
        assert all(rec.key.crop_index is None for rec in cache.records())

    def test_rerun_is_idempotent(self, tmp_path):
        entries = _manifest(tmp_path)
        cache = TrialCache(tmp_path / "cache.jsonl")
        kwargs = dict(preprocessing="crop", key_frames=3, crops_per_frame=4,
                      trials_per_image=5, input_size=8, seed=0)
        run_trial_batch(entries, MockBackend(seed=0), LEVEL, SamplerConfig(), cache,
                        **kwargs)
        again = run_trial_batch(
            entries, MockBackend(seed=0), LEVEL, SamplerConfig(),
            TrialCache(tmp_path / "cache.jsonl"), **kwargs
        )
        assert again.new_trials == 0
        assert again.skipped_cached == 3 * 4 * 5

    def test_worker_count_does_not_change_output(self, tmp_path):
        entries = _manifest(tmp_path, n_videos=2)
        files = []
        for workers in (1, 4):
            path = tmp_path / f"cache{workers}.jsonl"
            run_trial_batch(
                entries, MockBackend(seed=0, sigma=0.7), LEVEL,
                SamplerConfig("nucleus", 0.9), TrialCache(path),
                preprocessing="crop", key_frames=3, crops_per_frame=4,
                trials_per_image=5, input_size=8, seed=0, max_in_flight=workers,
            )
            files.append(path.read_bytes())
        assert files[0] == files[1]

    def test_backend_failures_degrade_to_rejections(self, tmp_path):
        entries = _manifest(tmp_path)

        class FlakyBackend(MockBackend):
            def infer(self, image, prompt, sampler, key):
                if key.trial_index % 2 == 0:
                    raise BackendTransportError("boom")
                return super().infer(image, prompt, sampler, key)

        cache = TrialCache(tmp_path / "cache.jsonl")
        summary = run_trial_batch(
            entries, FlakyBackend(seed=0), LEVEL, SamplerConfig(), cache,
            preprocessing="resize", key_frames=2, trials_per_image=10,
            input_size=8, seed=0,
        )
        assert summary.new_trials == 20
        assert summary.rejected_by_reason == {"backend_error": 10}
        assert summary.kept == 10

    def test_short_video_collapses_duplicate_key_frames(self, tmp_path):
        entries = _manifest(tmp_path, n_frames=3)
        cache = TrialCache(tmp_path / "cache.jsonl")
        summary = run_trial_batch(
            entries, MockBackend(seed=0), LEVEL, SamplerConfig(), cache,
            preprocessing="resize", key_frames=5, trials_per_image=4,
            input_size=8, seed=0,
        )
        # only 3 distinct source frames exist
        assert summary.new_trials == 3 * 4

    def test_backend_input_size_mismatch_is_config_error(self, tmp_path):
        entries = _manifest(tmp_path)
        backend = MockBackend(seed=0, input_size=448)
        with pytest.raises(ConfigError, match="input size"):
            run_trial_batch(
                entries, backend, LEVEL, SamplerConfig(), TrialCache(tmp_path / "c"),
                preprocessing="resize", key_frames=2, trials_per_image=1,
                input_size=8, seed=0,
            )

    def test_cache_replay_equals_fresh_run(self, tmp_path):
        entries = _manifest(tmp_path)
        kwargs = dict(preprocessing="crop", key_frames=3, crops_per_frame=4,
                      trials_per_image=5, input_size=8, seed=0)
        c1 = TrialCache(tmp_path / "a.jsonl")
        run_trial_batch(entries, MockBackend(seed=0, sigma=0.7), LEVEL,
                        SamplerConfig("nucleus", 0.9), c1, **kwargs)
        reloaded = TrialCache(tmp_path / "a.jsonl")
        assert reloaded.records() == c1.records()
