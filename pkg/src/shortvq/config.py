"""Run configuration: one JSON file, dotted-path flag overrides.

Every stochastic stage draws from the single ``seed``; per-command output
paths live under ``paths`` and default relative to ``paths.out_dir``.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .gateway import HttpBackend, MockBackend, PROMPTS, SamplerConfig

AUTH_TOKEN_ENV = "SHORTVQ_AUTH_TOKEN"

DEFAULTS = {
    "manifest": "manifest.csv",
    "seed": 0,
    "preprocessing": "crop",
    "key_frames": 5,
    "crops_per_frame": 10,
    "trials_per_image": 20,
    "input_size": 448,
    "max_in_flight": 4,
    "prompt": "level_related",
    "sampler": {"kind": "nucleus", "p": 0.9},
    "backend": {
        "kind": "mock",
        "url": "",
        "timeout_s": 30.0,
        "model": "default",
        "max_tokens": 128,
        "mock": {
            "mu_file": "",
            "default_mu": 3.0,
            "sigma": 0.7,
            "nonsense_rate": 0.0,
        },
    },
    "profile": {"trials": [10, 50, 200], "resamples": 30},
    "ql": {"file": "ql.jsonl", "min": 0.0, "max": 1.0},
    "qp_file": "",  # empty -> the aggregate command's score output
    "embeddings_dir": "embeddings",
    "ensemble": {
        "hidden": 128,
        "epochs": 10,
        "batch_size": 32,
        "lr": 3e-4,
        "lr_decay": 0.95,
        "decay_every_epochs": 2,
    },
    "analysis": {"alpha_min": 0.6, "delta_min": 0.1},
    "paths": {
        "out_dir": "out",
        "cache": "",        # default <out_dir>/trials.jsonl
        "scores": "",       # default <out_dir>/scores.jsonl
        "profile": "",      # default <out_dir>/profile.json
        "checkpoint": "",   # default <out_dir>/gate.vqgm
        "predictions": "",  # default <out_dir>/predictions.jsonl
        "loss_log": "",     # default <out_dir>/losses.json
        "report": "",       # default <out_dir>/report.txt
        "analysis": "",     # default <out_dir>/analysis.txt
    },
}

_PATH_DEFAULTS = {
    "cache": "trials.jsonl",
    "scores": "scores.jsonl",
    "profile": "profile.json",
    "checkpoint": "gate.vqgm",
    "predictions": "predictions.jsonl",
    "loss_log": "losses.json",
    "report": "report.txt",
    "analysis": "analysis.txt",
}


def _merge(base: dict, override: dict, prefix="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted!r} must be a section")
            out[key] = _merge(base[key], value, prefix=dotted + ".")
        else:
            out[key] = value
    return out


def _coerce(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def load(cls, path: str | Path, overrides: list[str] | None = None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except ValueError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        merged = _merge(DEFAULTS, data)
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not KEY.PATH=VALUE")
            dotted, _, value = item.partition("=")
            patch: dict = {}
            node = patch
            parts = dotted.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = _coerce(value)
            merged = _merge(merged, patch)
        cfg = cls(raw=merged, base_dir=path.parent)
        cfg.validate()
        return cfg

    def __getitem__(self, dotted: str):
        node = self.raw
        for part in dotted.split("."):
            node = node[part]
        return node

    def resolve(self, rel: str | Path) -> Path:
        rel = Path(rel)
        return rel if rel.is_absolute() else self.base_dir / rel

    def path(self, name: str) -> Path:
        configured = self.raw["paths"][name]
        if configured:
            return self.resolve(configured)
        return self.resolve(self.raw["paths"]["out_dir"]) / _PATH_DEFAULTS[name]

    @property
    def manifest_path(self) -> Path:
        return self.resolve(self.raw["manifest"])

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def validate(self) -> None:
        r = self.raw
        for key in ("key_frames", "crops_per_frame", "trials_per_image",
                    "input_size", "max_in_flight"):
            if int(r[key]) < 1:
                raise ConfigError(f"{key} must be >= 1, got {r[key]}")
        if r["preprocessing"] not in ("resize", "crop"):
            raise ConfigError(f"unknown preprocessing {r['preprocessing']!r}")
        if r["prompt"] not in PROMPTS:
            raise ConfigError(f"unknown prompt {r['prompt']!r}")
        if not 0.0 <= float(r["sampler"]["p"]) <= 1.0:
            raise ConfigError(f"sampler.p={r['sampler']['p']} outside [0, 1]")
        if r["backend"]["kind"] not in ("mock", "http"):
            raise ConfigError(f"unknown backend kind {r['backend']['kind']!r}")
        if r["backend"]["kind"] == "http" and not r["backend"]["url"]:
            raise ConfigError("http backend requires backend.url")
        if not float(r["ql"]["min"]) < float(r["ql"]["max"]):
            raise ConfigError("degenerate ql bounds")
        for key in ("hidden", "epochs", "batch_size"):
            if int(r["ensemble"][key]) < 1:
                raise ConfigError(f"ensemble.{key} must be >= 1")
        if any(int(t) < 1 for t in r["profile"]["trials"]):
            raise ConfigError("profile.trials entries must be >= 1")
        if int(r["profile"]["resamples"]) < 1:
            raise ConfigError("profile.resamples must be >= 1")

    def sampler(self) -> SamplerConfig:
        s = self.raw["sampler"]
        return SamplerConfig(kind=s["kind"], p=float(s["p"]))

    def prompt(self):
        return PROMPTS[self.raw["prompt"]]

    def backend(self):
        b = self.raw["backend"]
        if b["kind"] == "mock":
            mock = b["mock"]
            mu_by_video = {}
            if mock["mu_file"]:
                mu_path = self.resolve(mock["mu_file"])
                if not mu_path.is_file():
                    raise ConfigError(f"mock.mu_file not found: {mu_path}")
                mu_by_video = {
                    k: float(v) for k, v in json.loads(mu_path.read_text()).items()
                }
            return MockBackend(
                mu_by_video=mu_by_video,
                default_mu=float(mock["default_mu"]),
                sigma=float(mock["sigma"]),
                nonsense_rate=float(mock["nonsense_rate"]),
                seed=self.seed,
                input_size=None,
            )
        return HttpBackend(
            url=b["url"],
            model=b["model"],
            timeout_s=float(b["timeout_s"]),
            max_tokens=int(b["max_tokens"]),
            auth_token=os.environ.get(AUTH_TOKEN_ENV),
            input_size=int(self.raw["input_size"]),
        )


def write_config(path: str | Path, values: dict) -> None:
    """Write a config file containing only the given (nested) values."""
    Path(path).write_text(json.dumps(values, indent=2) + "\n")
