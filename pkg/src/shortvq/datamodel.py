"""Manifests, score normalization, and prediction records.

All cross-model arithmetic (gate training, blending, correlation input)
happens in normalized [0, 1] score space; dataset MOS scales and the
1-5 rating scale used by the language model are mapped in and out at the
boundaries.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError, ScoreRangeError

SPLITS = ("train", "val", "test")

# Rating scale the model is prompted for ("a scale of 1 to 5").
RATING_MIN = 1.0
RATING_MAX = 5.0

IMAGE_EXTENSIONS = (".png", ".raw")

MANIFEST_COLUMNS = ("video_id", "frames_dir", "mos", "mos_min", "mos_max", "split")


@dataclass(frozen=True)
class VideoManifestEntry:
    """One video: its extracted frames (chronological), MOS, and split tag."""

    video_id: str
    frame_paths: tuple[str, ...]
    mos: float
    mos_min: float
    mos_max: float
    split: str

    @property
    def mos_norm(self) -> float:
        return normalize_score(self.mos, self.mos_min, self.mos_max)


@dataclass(frozen=True)
class PredictionTriple:
    """Per-video evaluation unit: both predictions, the gate weight, the blend.

    All scores live in normalized [0, 1] space.  ``alpha``/``q_e`` are absent
    until a blend has been computed; ``q_naive`` is the fixed-0.5 reference
    blend carried along for evaluation.
    """

    video_id: str
    q_p: float
    q_l: float
    mos_norm: float
    alpha: float | None = None
    q_e: float | None = None
    q_naive: float | None = None

    def __post_init__(self):
        for name in ("q_p", "q_l", "mos_norm"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ScoreRangeError(f"{self.video_id}: {name}={v} outside [0, 1]")
        for name in ("alpha", "q_e", "q_naive"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ScoreRangeError(f"{self.video_id}: {name}={v} outside [0, 1]")
        if self.alpha is not None and self.q_e is not None:
            expect = self.alpha * self.q_p + (1.0 - self.alpha) * self.q_l
            if abs(self.q_e - expect) > 1e-12:
                raise ScoreRangeError(
                    f"{self.video_id}: q_e={self.q_e} inconsistent with "
                    f"alpha*q_p + (1-alpha)*q_l = {expect}"
                )

    def to_json_obj(self) -> dict:
        obj = {
            "video_id": self.video_id,
            "q_p": self.q_p,
            "q_l": self.q_l,
            "mos_norm": self.mos_norm,
        }
        if self.alpha is not None:
            obj["alpha"] = self.alpha
        if self.q_e is not None:
            obj["q_e"] = self.q_e
        if self.q_naive is not None:
            obj["q_naive"] = self.q_naive
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PredictionTriple":
        return cls(
            video_id=obj["video_id"],
            q_p=float(obj["q_p"]),
            q_l=float(obj["q_l"]),
            mos_norm=float(obj["mos_norm"]),
            alpha=None if obj.get("alpha") is None else float(obj["alpha"]),
            q_e=None if obj.get("q_e") is None else float(obj["q_e"]),
            q_naive=None if obj.get("q_naive") is None else float(obj["q_naive"]),
        )


def normalize_score(s: float, lo: float, hi: float) -> float:
    """Map s from [lo, hi] to [0, 1]."""
    if not lo < hi:
        raise ScoreRangeError(f"degenerate score range [{lo}, {hi}]")
    if not lo <= s <= hi:
        raise ScoreRangeError(f"score {s} outside [{lo}, {hi}]")
    return (s - lo) / (hi - lo)


def denormalize_score(u: float, lo: float, hi: float) -> float:
    """Inverse of normalize_score: map u from [0, 1] back to [lo, hi]."""
    if not lo < hi:
        raise ScoreRangeError(f"degenerate score range [{lo}, {hi}]")
    if not 0.0 <= u <= 1.0:
        raise ScoreRangeError(f"normalized score {u} outside [0, 1]")
    return lo + u * (hi - lo)


def normalize_rating(s: float) -> float:
    """Normalize a 1-5 rating (the prompt scale) to [0, 1]."""
    return normalize_score(s, RATING_MIN, RATING_MAX)


def validate_manifest(entries: list[VideoManifestEntry]) -> list[VideoManifestEntry]:
    """Return entries unchanged iff every invariant holds.

    Otherwise raises ManifestError listing each violating row and reason.
    The verdict is order-independent: all entries are checked, nothing
    short-circuits.
    """
    violations = []
    seen: dict[str, int] = {}
    for entry in entries:
        seen[entry.video_id] = seen.get(entry.video_id, 0) + 1
    for vid, count in sorted(seen.items()):
        if count > 1:
            violations.append(f"{vid}: duplicate id ({count} rows)")
    for entry in entries:
        vid = entry.video_id
        if not entry.frame_paths:
            violations.append(f"{vid}: no frames")
        if not entry.mos_min < entry.mos_max:
            violations.append(
                f"{vid}: degenerate bounds [{entry.mos_min}, {entry.mos_max}]"
            )
        elif not entry.mos_min <= entry.mos <= entry.mos_max:
            violations.append(
                f"{vid}: mos out of range ({entry.mos} not in "
                f"[{entry.mos_min}, {entry.mos_max}])"
            )
        if entry.split not in SPLITS:
            violations.append(f"{vid}: unknown split {entry.split!r}")
        for path in entry.frame_paths:
            if not Path(path).is_file():
                violations.append(f"{vid}: missing frame file {path}")
    if violations:
        raise ManifestError(violations)
    return entries


def list_frame_files(frames_dir: str | Path) -> tuple[str, ...]:
    """Lexicographically sorted image files in a directory."""
    d = Path(frames_dir)
    if not d.is_dir():
        return ()
    names = sorted(
        p.name for p in d.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
    )
    return tuple(str(d / n) for n in names)


def load_manifest(path: str | Path) -> list[VideoManifestEntry]:
    """Load and validate a manifest CSV.

    One row per video with header ``video_id,frames_dir,mos,mos_min,mos_max,split``;
    ``frames_dir`` is resolved relative to the manifest file and expanded to the
    lexicographically sorted image files inside it.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError([f"manifest file not found: {path}"])
    base = path.parent
    entries = []
    violations = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(reader.fieldnames) != set(MANIFEST_COLUMNS):
            raise ManifestError(
                [f"bad header {reader.fieldnames}; expected columns {list(MANIFEST_COLUMNS)}"]
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                entries.append(
                    VideoManifestEntry(
                        video_id=row["video_id"],
                        frame_paths=list_frame_files(base / row["frames_dir"]),
                        mos=float(row["mos"]),
                        mos_min=float(row["mos_min"]),
                        mos_max=float(row["mos_max"]),
                        split=row["split"],
                    )
                )
            except (TypeError, ValueError) as exc:
                violations.append(f"line {lineno}: unparseable row ({exc})")
    if violations:
        raise ManifestError(violations)
    return validate_manifest(entries)


def write_jsonl(path: str | Path, objs: list[dict]) -> None:
    """Write JSON-lines atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")
    tmp.replace(path)


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
