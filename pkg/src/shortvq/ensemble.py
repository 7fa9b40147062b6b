"""Content-aware ensemble: a learned gate blending two quality predictions.

The gate is a two-layer MLP (fully connected, ReLU between, sigmoid out)
mapping a video's pooled key-frame features to a weight alpha in (0, 1);
the ensemble score is the convex combination

    q_e = alpha * q_p + (1 - alpha) * q_l

of the language-model prediction q_p and a learning-based model's
prediction q_l, both frozen: training fits only the gate, by l2 loss
against MOS, with Adam.  All score arithmetic is in normalized [0, 1]
space.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, TensorFormatError
from .rng import CounterRng

VQGM_MAGIC = b"VQGM"
VQGM_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIII")

# Guard width keeping alpha strictly inside (0, 1) when the sigmoid
# saturates past float resolution.
_ALPHA_EPS = 1e-12


@dataclass(frozen=True)
class TrainingRecord:
    """One video's frozen inputs for gate training."""

    video_id: str
    features: np.ndarray  # pooled (in_dim,) vector
    q_p: float
    q_l: float
    mos_norm: float


@dataclass
class GateModel:
    w1: np.ndarray  # (hidden, in_dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2,
                "b2": np.asarray(self.b2, dtype=np.float64)}

    @classmethod
    def from_params(cls, params: dict[str, np.ndarray]) -> "GateModel":
        return cls(w1=params["w1"], b1=params["b1"], w2=params["w2"],
                   b2=float(params["b2"]))

    @classmethod
    def zeros(cls, in_dim: int, hidden: int) -> "GateModel":
        return cls(
            w1=np.zeros((hidden, in_dim)),
            b1=np.zeros(hidden),
            w2=np.zeros(hidden),
            b2=0.0,
        )

    @classmethod
    def init_random(cls, in_dim: int, hidden: int, seed: int = 0) -> "GateModel":
        """Fan-scaled uniform init (biases zero) from a seeded stream.

        Keeps the initial alpha near 0.5, so an untrained gate starts at the
        fixed-0.5 reference blend.
        """
        rng = CounterRng(seed, "gate-init")
        lim1 = np.sqrt(6.0 / (in_dim + hidden))
        lim2 = np.sqrt(6.0 / (hidden + 1))
        w1 = np.array(
            [rng.uniform_in(-lim1, lim1) for _ in range(hidden * in_dim)]
        ).reshape(hidden, in_dim)
        w2 = np.array([rng.uniform_in(-lim2, lim2) for _ in range(hidden)])
        return cls(w1=w1, b1=np.zeros(hidden), w2=w2, b2=0.0)


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward(model: GateModel, features: np.ndarray):
    """Batch forward pass. features: (B, in_dim)."""
    if features.ndim != 2 or features.shape[1] != model.in_dim:
        raise DimensionMismatchError(
            f"features shape {features.shape} incompatible with in_dim {model.in_dim}"
        )
    pre = features @ model.w1.T + model.b1  # (B, hidden)
    hid = np.maximum(pre, 0.0)
    z = hid @ model.w2 + model.b2  # (B,)
    alpha = np.clip(_sigmoid(z), _ALPHA_EPS, 1.0 - _ALPHA_EPS)
    return pre, hid, alpha


def predict_alpha(model: GateModel, features: np.ndarray) -> float:
    """Gate weight for one pooled feature vector; strictly inside (0, 1)."""
    feats = np.asarray(features, dtype=np.float64).reshape(1, -1)
    _, _, alpha = _forward(model, feats)
    return float(alpha[0])


def blend(alpha: float, q_p: float, q_l: float) -> float:
    """The ensemble combination: alpha * q_p + (1 - alpha) * q_l."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    return alpha * q_p + (1.0 - alpha) * q_l


def naive_blend(q_p: float, q_l: float) -> float:
    """Reference combination with the weight fixed at 0.5."""
    return blend(0.5, q_p, q_l)


def loss_and_gradients(model: GateModel, batch: list[TrainingRecord]):
    """Mean squared blend error over a batch, with analytic gradients.

    q_p and q_l are constants; the chain runs from the per-record error
    through the blend q_e = alpha*q_p + (1-alpha)*q_l, the sigmoid, and
    both fully connected layers.
    """
    if not batch:
        raise ValueError("empty batch")
    feats = np.stack([np.asarray(r.features, dtype=np.float64) for r in batch])
    q_p = np.array([r.q_p for r in batch])
    q_l = np.array([r.q_l for r in batch])
    mos = np.array([r.mos_norm for r in batch])

    pre, hid, alpha = _forward(model, feats)
    q_e = alpha * q_p + (1.0 - alpha) * q_l
    err = q_e - mos
    loss = float(np.mean(err**2))

    d_alpha = 2.0 * err * (q_p - q_l) / len(batch)  # (B,)
    d_z = d_alpha * alpha * (1.0 - alpha)
    d_w2 = d_z @ hid  # (hidden,)
    d_b2 = float(np.sum(d_z))
    d_hid = np.outer(d_z, model.w2) * (pre > 0)  # (B, hidden)
    d_w1 = d_hid.T @ feats  # (hidden, in_dim)
    d_b1 = d_hid.sum(axis=0)
    grads = {"w1": d_w1, "b1": d_b1, "w2": d_w2,
             "b2": np.asarray(d_b2, dtype=np.float64)}
    return loss, grads


@dataclass
class AdamState:
    """Adam moments plus the step-decayed learning-rate schedule."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 3e-4
    lr_decay: float = 0.95
    decay_every_epochs: int = 2

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m={k: np.zeros_like(np.asarray(p, dtype=np.float64)) for k, p in params.items()},
            v={k: np.zeros_like(np.asarray(p, dtype=np.float64)) for k, p in params.items()},
            **kwargs,
        )

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.lr_decay ** (epoch // self.decay_every_epochs)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    epoch: int = 0,
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update at the schedule's rate for ``epoch``."""
    if set(params) != set(state.m) or set(params) != set(grads):
        raise DimensionMismatchError("parameter/gradient/state keys disagree")
    lr = state.lr_at(epoch)
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    out = {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != np.asarray(p).shape:
            raise DimensionMismatchError(f"gradient shape mismatch for {k}")
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        out[k] = np.asarray(p, dtype=np.float64) - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


@dataclass
class TrainConfig:
    hidden: int = 128
    epochs: int = 10
    batch_size: int = 32
    base_lr: float = 3e-4
    lr_decay: float = 0.95
    decay_every_epochs: int = 2
    seed: int = 0


def train(records: list[TrainingRecord], config: TrainConfig = TrainConfig()):
    """Fit the gate on frozen (features, q_p, q_l, mos) records.

    Shuffled minibatches each epoch (final partial batch kept); identical
    seeds give bit-identical models.  Returns (model, per-epoch losses).
    """
    if not records:
        raise ValueError("empty training set")
    in_dim = len(np.asarray(records[0].features).reshape(-1))
    for rec in records:
        if len(np.asarray(rec.features).reshape(-1)) != in_dim:
            raise DimensionMismatchError(
                f"{rec.video_id}: feature length != {in_dim}"
            )
    model = GateModel.init_random(in_dim, config.hidden, seed=config.seed)
    params = model.params()
    state = AdamState.for_params(
        params,
        base_lr=config.base_lr,
        lr_decay=config.lr_decay,
        decay_every_epochs=config.decay_every_epochs,
    )
    epoch_losses = []
    for epoch in range(config.epochs):
        order = list(range(len(records)))
        CounterRng(config.seed, "epoch-shuffle", epoch).shuffle(order)
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [records[i] for i in order[start : start + config.batch_size]]
            loss, grads = loss_and_gradients(GateModel.from_params(params), batch)
            params = adam_step(params, grads, state, epoch)
            total += loss * len(batch)
            seen += len(batch)
        epoch_losses.append(total / seen)
    return GateModel.from_params(params), epoch_losses


def save_checkpoint(model: GateModel, path: str | Path) -> None:
    """Write a VQGM checkpoint: header (magic, version, in_dim, hidden) then
    w1, b1, w2, b2 as flat little-endian float32."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = np.concatenate(
        [
            model.w1.reshape(-1),
            model.b1.reshape(-1),
            model.w2.reshape(-1),
            np.asarray([model.b2]),
        ]
    ).astype("<f4")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_CKPT_HEADER.pack(VQGM_MAGIC, VQGM_VERSION, model.in_dim, model.hidden))
        fh.write(flat.tobytes())
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> GateModel:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise TensorFormatError(f"{path}: truncated header")
    magic, version, in_dim, hidden = _CKPT_HEADER.unpack_from(raw)
    if magic != VQGM_MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}")
    if version != VQGM_VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    count = hidden * in_dim + hidden + hidden + 1
    payload = raw[_CKPT_HEADER.size :]
    if len(payload) != count * 4:
        raise TensorFormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {count * 4}"
        )
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    w1, rest = flat[: hidden * in_dim].reshape(hidden, in_dim), flat[hidden * in_dim :]
    b1, rest = rest[:hidden], rest[hidden:]
    w2, rest = rest[:hidden], rest[hidden:]
    if not np.isfinite(flat).all():
        raise TensorFormatError(f"{path}: non-finite parameters")
    return GateModel(w1=w1, b1=b1, w2=w2, b2=float(rest[0]))


@dataclass(frozen=True)
class WeightAnalysisRow:
    video_id: str
    alpha: float
    q_p: float
    q_l: float
    delta: float  # |q_p - q_l|
    direction: str  # "up" when the gate pulls the blend above q_l

    @property
    def strength(self) -> float:
        return self.alpha * self.delta


def analyze_weights(triples, alpha_min: float = 0.6, delta_min: float = 0.1):
    """Rank the videos where the gate leaned hardest on the model's rating.

    Keeps triples with alpha >= alpha_min and |q_p - q_l| >= delta_min,
    sorted by descending alpha * |q_p - q_l|; direction "up" marks videos
    the blend pulled above the learning-based prediction (q_p > q_l),
    "down" the reverse.
    """
    rows = []
    for t in triples:
        if t.alpha is None:
            raise ValueError(f"{t.video_id}: triple carries no alpha")
        delta = abs(t.q_p - t.q_l)
        if t.alpha >= alpha_min and delta >= delta_min:
            rows.append(
                WeightAnalysisRow(
                    video_id=t.video_id,
                    alpha=t.alpha,
                    q_p=t.q_p,
                    q_l=t.q_l,
                    delta=delta,
                    direction="up" if t.q_p > t.q_l else "down",
                )
            )
    rows.sort(key=lambda r: (-r.strength, r.video_id))
    return rows
