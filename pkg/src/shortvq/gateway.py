"""Inference backends and the repeated zero-shot trial driver.

A backend turns (image, prompt, sampler) into one text response.  Two are
provided: a generic JSON-over-HTTP client for any served model, and a
deterministic mock whose response distribution widens with the nucleus
mass p, making the robustness experiments runnable offline.  The driver
fans each video's key frames out into resized images or random patches,
collects ``trials_per_image`` responses per image into an append-only
JSONL cache, and is idempotent over (video, frame, crop, trial) keys.
"""

from __future__ import annotations

import base64
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import BackendProtocolError, BackendTransportError, ConfigError
from .frames import FrameImage, key_frame_indices, load_frame, random_crops, resize_bilinear
from .parsing import (
    PARSERS,
    REJECTION_BACKEND_ERROR,
    LEVEL_SCORES,
)
from .rng import CounterRng


@dataclass(frozen=True)
class SamplerConfig:
    """Token sampling strategy: greedy, or nucleus with mass p."""

    kind: str = "nucleus"
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("greedy", "nucleus"):
            raise ConfigError(f"unknown sampler kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"nucleus mass p={self.p} outside [0, 1]")

    @property
    def randomness(self) -> float:
        """Effective randomness factor: 0 for greedy, else p."""
        return 0.0 if self.kind == "greedy" else self.p


PROMPT_SCORE = (
    "Describe the quality characteristics of the image. Rate the image "
    "quality on a scale of 1 to 5, with 1 being the lowest quality and 5 "
    "being the highest quality."
)
PROMPT_LEVEL = (
    "Describe the quality characteristics of the image. Is it of low, "
    "medium low, medium, medium high, or high quality?"
)


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    text: str


PROMPTS = {
    "score_related": PromptTemplate("score_related", PROMPT_SCORE),
    "level_related": PromptTemplate("level_related", PROMPT_LEVEL),
}


@dataclass(frozen=True)
class TrialKey:
    """Provenance of one inference: which image of which video, which round."""

    video_id: str
    frame_index: int
    crop_index: int | None  # None = resized whole frame
    trial_index: int

    def sort_key(self):
        return (self.video_id, self.frame_index,
                -1 if self.crop_index is None else self.crop_index,
                self.trial_index)


@dataclass(frozen=True)
class TrialRecord:
    """One zero-shot response, parsed or rejected."""

    key: TrialKey
    sampler: SamplerConfig
    prompt_id: str
    raw_text: str
    value: float | None
    rejection: str

    def to_json_obj(self) -> dict:
        obj = {
            "video_id": self.key.video_id,
            "frame_index": self.key.frame_index,
        }
        if self.key.crop_index is not None:
            obj["crop_index"] = self.key.crop_index
        obj.update(
            trial_index=self.key.trial_index,
            sampler={"kind": self.sampler.kind, "p": self.sampler.p},
            prompt_id=self.prompt_id,
            raw_text=self.raw_text,
            parsed=self.value if self.value is not None else self.rejection,
        )
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TrialRecord":
        parsed = obj["parsed"]
        if isinstance(parsed, str):
            value, rejection = None, parsed
        else:
            value, rejection = float(parsed), "none"
        return cls(
            key=TrialKey(
                video_id=obj["video_id"],
                frame_index=int(obj["frame_index"]),
                crop_index=int(obj["crop_index"]) if "crop_index" in obj else None,
                trial_index=int(obj["trial_index"]),
            ),
            sampler=SamplerConfig(obj["sampler"]["kind"], float(obj["sampler"]["p"])),
            prompt_id=obj["prompt_id"],
            raw_text=obj["raw_text"],
            value=value,
            rejection=rejection,
        )


class Backend:
    """Inference backend contract.

    ``input_size`` declares the expected square image side (None = any);
    greedy / nucleus p=0 calls must be deterministic for identical inputs.
    The trial key carries provenance for backends (like the mock) whose
    behavior is keyed per trial; network backends ignore it.
    """

    input_size: int | None = None

    def infer(self, image: FrameImage, prompt: PromptTemplate,
              sampler: SamplerConfig, key: TrialKey) -> str:
        raise NotImplementedError

    def check_image(self, image: FrameImage) -> None:
        if self.input_size is not None and (
            image.height != self.input_size or image.width != self.input_size
        ):
            raise ConfigError(
                f"backend expects {self.input_size}x{self.input_size} input, "
                f"got {image.height}x{image.width}"
            )


_LEVEL_PHRASES = {v: k for k, v in LEVEL_SCORES.items()}

_LEVEL_TEMPLATES = (
    "The image is of {} quality.",
    "This appears to be a {} quality image.",
    "Overall the image shows {} quality with typical artifacts.",
)
_SCORE_TEMPLATES = (
    "I would rate the image quality {} out of 5.",
    "Quality rating: {}.",
    "The image deserves a {} on the 1 to 5 scale.",
)
# Free of level phrases and standalone integers, so both parsers reject.
_NONSENSE_RESPONSES = (
    "A cat sitting on a windowsill.",
    "The colors remind me of autumn leaves.",
    "There appears to be a building in the background.",
    "I am unable to say more about this picture.",
)


class MockBackend(Backend):
    """Deterministic simulated rater.

    Each video has a latent quality mu in [1, 5].  A response level is drawn
    from the discretized distribution over {1..5} with weights
    ``exp(-(level - mu)^2 / (2 * (sigma * p)^2))``; p = 0 collapses to the
    mode (the level nearest mu).  With probability ``nonsense_rate`` the
    response is a non-answer instead.  Everything is a pure function of
    (seed, video_id, frame_index, crop_index, trial_index, p).
    """

    def __init__(
        self,
        mu_by_video: dict[str, float] | None = None,
        default_mu: float = 3.0,
        sigma: float = 0.7,
        nonsense_rate: float = 0.0,
        seed: int = 0,
        input_size: int | None = None,
    ):
        if sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {sigma}")
        if not 0.0 <= nonsense_rate < 1.0:
            raise ConfigError(f"nonsense rate must be in [0, 1), got {nonsense_rate}")
        for vid, mu in (mu_by_video or {}).items():
            if not 1.0 <= mu <= 5.0:
                raise ConfigError(f"latent quality for {vid} outside [1, 5]: {mu}")
        self.mu_by_video = dict(mu_by_video or {})
        self.default_mu = default_mu
        self.sigma = sigma
        self.nonsense_rate = nonsense_rate
        self.seed = seed
        self.input_size = input_size

    def _draw_level(self, mu: float, spread: float, rng: CounterRng) -> int:
        if spread <= 0.0:
            return min(5, max(1, int(math.floor(mu + 0.5))))
        weights = [math.exp(-((lvl - mu) ** 2) / (2.0 * spread * spread))
                   for lvl in range(1, 6)]
        total = sum(weights)
        u = rng.uniform() * total
        acc = 0.0
        for lvl, w in zip(range(1, 6), weights):
            acc += w
            if u < acc:
                return lvl
        return 5

    def infer(self, image, prompt, sampler, key):
        self.check_image(image)
        rng = CounterRng(
            self.seed, "mock", key.video_id, key.frame_index,
            key.crop_index, key.trial_index, sampler.randomness,
        )
        if rng.uniform() < self.nonsense_rate:
            return _NONSENSE_RESPONSES[rng.randint(len(_NONSENSE_RESPONSES))]
        mu = self.mu_by_video.get(key.video_id, self.default_mu)
        level = self._draw_level(mu, self.sigma * sampler.randomness, rng)
        if prompt.id == "score_related":
            template = _SCORE_TEMPLATES[rng.randint(len(_SCORE_TEMPLATES))]
            return template.format(level)
        template = _LEVEL_TEMPLATES[rng.randint(len(_LEVEL_TEMPLATES))]
        return template.format(_LEVEL_PHRASES[level])


class HttpBackend(Backend):
    """JSON-over-HTTP client for a served model.

    POST ``{"model", "prompt", "image_b64", "sampler": {"kind", "p"},
    "max_tokens"}`` and expect ``{"text": ...}`` back.  Transport failures
    and HTTP >= 400 responses retry with exponential backoff (base 0.5 s,
    factor 2, max 3 attempts); a 200 with a bad payload is a protocol
    error and is not retried.
    """

    MAX_ATTEMPTS = 3
    BACKOFF_BASE_S = 0.5

    def __init__(self, url: str, model: str = "default", timeout_s: float = 30.0,
                 max_tokens: int = 128, auth_token: str | None = None,
                 input_size: int | None = 448):
        self.url = url
        self.model = model
        self.timeout_s = timeout_s
        self.max_tokens = max_tokens
        self.auth_token = auth_token
        self.input_size = input_size
        self.stats = {"calls": 0, "retries": 0, "failures": 0}

    @staticmethod
    def _encode_image(image: FrameImage) -> str:
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(image.pixels).save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")

    def infer(self, image, prompt, sampler, key):
        import requests

        self.check_image(image)
        self.stats["calls"] += 1
        payload = {
            "model": self.model,
            "prompt": prompt.text,
            "image_b64": self._encode_image(image),
            "sampler": {"kind": sampler.kind, "p": sampler.p},
            "max_tokens": self.max_tokens,
        }
        headers = {}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        last_err = None
        for attempt in range(self.MAX_ATTEMPTS):
            if attempt > 0:
                time.sleep(self.BACKOFF_BASE_S * 2 ** (attempt - 1))
                self.stats["retries"] += 1
            try:
                resp = requests.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout_s
                )
            except requests.RequestException as exc:
                last_err = f"transport: {exc}"
                continue
            if resp.status_code >= 400:
                last_err = f"HTTP {resp.status_code}"
                continue
            try:
                body = resp.json()
            except ValueError as exc:
                self.stats["failures"] += 1
                raise BackendProtocolError(f"malformed response JSON: {exc}") from exc
            if not isinstance(body, dict) or not isinstance(body.get("text"), str):
                self.stats["failures"] += 1
                raise BackendProtocolError('response missing "text" field')
            return body["text"]
        self.stats["failures"] += 1
        raise BackendTransportError(
            f"{last_err} after {self.MAX_ATTEMPTS} attempts "
            f"({self.MAX_ATTEMPTS - 1} retries): {self.url}"
        )


class TrialCache:
    """Append-only JSONL store of trial records, keyed for idempotent re-runs."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records: dict[TrialKey, TrialRecord] = {}
        if self.path.is_file():
            with open(self.path) as fh:
                for line in fh:
                    if line.strip():
                        rec = TrialRecord.from_json_obj(json.loads(line))
                        self._records[rec.key] = rec

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key: TrialKey) -> bool:
        return key in self._records

    def records(self) -> list[TrialRecord]:
        return [self._records[k] for k in sorted(self._records, key=TrialKey.sort_key)]

    def add_all(self, records: list[TrialRecord]) -> None:
        for rec in records:
            self._records[rec.key] = rec

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(self.path.name + ".tmp")
        with open(tmp, "w") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec.to_json_obj()) + "\n")
        tmp.replace(self.path)


@dataclass
class BatchSummary:
    videos: int
    new_trials: int
    skipped_cached: int
    kept: int
    rejected_by_reason: dict[str, int]

    @property
    def transport_failures(self) -> int:
        return self.rejected_by_reason.get(REJECTION_BACKEND_ERROR, 0)


def _trial_images(entry, preprocessing, key_frames, crops_per_frame, input_size, seed):
    """Yield (frame_index, crop_index, image) for one video.

    Resize mode yields one image per key frame (crop_index None); crop mode
    yields ``crops_per_frame`` random patches per key frame.  Duplicate key
    frame indices (videos shorter than M) collapse to one entry each.
    """
    n = len(entry.frame_paths)
    for frame_index in sorted(set(key_frame_indices(n, key_frames))):
        frame = load_frame(entry.frame_paths[frame_index])
        if preprocessing == "resize":
            yield frame_index, None, resize_bilinear(frame, input_size, input_size)
        elif preprocessing == "crop":
            patches = random_crops(
                frame, crops_per_frame, input_size, seed, entry.video_id, frame_index
            )
            for crop_index, patch in enumerate(patches):
                yield frame_index, crop_index, patch
        else:
            raise ConfigError(f"unknown preprocessing mode {preprocessing!r}")


def run_trial_batch(
    entries,
    backend: Backend,
    prompt: PromptTemplate,
    sampler: SamplerConfig,
    cache: TrialCache,
    *,
    preprocessing: str = "crop",
    key_frames: int = 5,
    crops_per_frame: int = 10,
    trials_per_image: int = 20,
    input_size: int = 448,
    seed: int = 0,
    max_in_flight: int = 4,
) -> BatchSummary:
    """Run the repeated zero-shot protocol over a manifest.

    Per-trial backend errors degrade to rejected records; the batch itself
    fails only on manifest/config errors.  Results are keyed and sorted, so
    output is identical for any ``max_in_flight``.
    """
    if backend.input_size is not None and backend.input_size != input_size:
        raise ConfigError(
            f"configured input size {input_size} does not match backend's "
            f"declared {backend.input_size}"
        )
    parse = PARSERS[prompt.id]
    entries = list(entries)

    def run_one(job):
        key, image = job
        try:
            text = backend.infer(image, prompt, sampler, key)
        except Exception:
            return TrialRecord(key, sampler, prompt.id, "", None,
                               REJECTION_BACKEND_ERROR)
        parsed = parse(text)
        return TrialRecord(key, sampler, prompt.id, text,
                           parsed.value, parsed.rejection)

    new_records = []
    skipped = 0
    # one video's images in memory at a time; record keys make the final
    # sorted output independent of scheduling
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        for entry in entries:
            jobs = []
            for frame_index, crop_index, image in _trial_images(
                entry, preprocessing, key_frames, crops_per_frame, input_size, seed
            ):
                for trial_index in range(trials_per_image):
                    key = TrialKey(entry.video_id, frame_index, crop_index,
                                   trial_index)
                    if key in cache:
                        skipped += 1
                    else:
                        jobs.append((key, image))
            new_records.extend(pool.map(run_one, jobs))
    new_records.sort(key=lambda r: r.key.sort_key())
    cache.add_all(new_records)
    cache.save()

    rejected: dict[str, int] = {}
    kept = 0
    for rec in new_records:
        if rec.value is None:
            rejected[rec.rejection] = rejected.get(rec.rejection, 0) + 1
        else:
            kept += 1
    return BatchSummary(
        videos=len(entries),
        new_trials=len(new_records),
        skipped_cached=skipped,
        kept=kept,
        rejected_by_reason=dict(sorted(rejected.items())),
    )
