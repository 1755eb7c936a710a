"""One-hidden-layer binary MLP (tanh hidden, sigmoid output) trained with SGD on BCE."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np


class DivergenceError(RuntimeError):
    pass


@dataclass
class MlpModel:
    w1: np.ndarray  # (input_dim, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden,)
    b2: float
    seed: int = 0
    # optional input standardization applied before the first layer
    shift: np.ndarray | None = None
    scale: np.ndarray | None = None
    losses: list[float] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def copy(self) -> "MlpModel":
        return replace(
            self, w1=self.w1.copy(), b1=self.b1.copy(), w2=self.w2.copy(),
            losses=list(self.losses),
        )

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, np.array([self.b2])]


def mlp_init(input_dim: int, hidden: int = 64, seed: int = 0) -> MlpModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if input_dim < 1 or hidden < 1:
        raise ValueError("input_dim and hidden must be >= 1")
    rng = np.random.default_rng(seed)
    a1 = 1.0 / np.sqrt(input_dim)
    a2 = 1.0 / np.sqrt(hidden)
    w1 = rng.uniform(-a1, a1, size=(input_dim, hidden))
    w2 = rng.uniform(-a2, a2, size=hidden)
    return MlpModel(w1, np.zeros(hidden), w2, 0.0, seed)


def standardizer(x: np.ndarray, min_std: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and std (std floored so constant features map to 0)."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return mu, np.where(sd > min_std, sd, 1.0)


def with_standardization(model: MlpModel, x: np.ndarray) -> MlpModel:
    mu, sd = standardizer(x)
    return replace(model, shift=mu, scale=sd)


def _prep(model: MlpModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.input_dim:
        raise ValueError(f"expected inputs of dimension {model.input_dim}, got {x.shape[1]}")
    if model.shift is not None:
        x = (x - model.shift) / model.scale
    return x


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward(model: MlpModel, x: np.ndarray):
    h = np.tanh(x @ model.w1 + model.b1)
    z = h @ model.w2 + model.b2
    return h, z


def bce_from_logits(z: np.ndarray, y: np.ndarray) -> float:
    # log(1 + exp(z)) - y z, computed stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def loss(model: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    _, z = _forward(model, _prep(model, x))
    return bce_from_logits(z, np.asarray(y, dtype=np.float64))


def gradients(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Mean-BCE gradients ``(dw1, db1, dw2, db2)`` over the batch."""
    x = _prep(model, x)
    y = np.asarray(y, dtype=np.float64)
    h, z = _forward(model, x)
    dz = (sigmoid(z) - y) / len(y)
    dw2 = h.T @ dz
    db2 = float(dz.sum())
    dh = np.outer(dz, model.w2) * (1.0 - h * h)
    dw1 = x.T @ dh
    db1 = dh.sum(axis=0)
    return dw1, db1, dw2, db2


def mlp_train(model: MlpModel, x: np.ndarray, y: np.ndarray, epochs: int = 30, lr: float = 0.01,
              batch: int = 16, seed: int = 0) -> MlpModel:
    """Mini-batch SGD; the sample order is reshuffled each epoch from ``seed``.

    Returns a new model; the per-epoch mean training loss is in ``.losses``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("training set is empty")
    if len(y) != len(x):
        raise ValueError("features and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    m = model.copy()
    xs = _prep(m, x)
    rng = np.random.default_rng(seed)
    n = len(xs)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            xb, yb = xs[idx], y[idx]
            h = np.tanh(xb @ m.w1 + m.b1)
            z = h @ m.w2 + m.b2
            total += bce_from_logits(z, yb) * len(idx)
            dz = (sigmoid(z) - yb) / len(idx)
            dh = np.outer(dz, m.w2) * (1.0 - h * h)
            if lr:
                m.w2 -= lr * (h.T @ dz)
                m.b2 -= lr * float(dz.sum())
                m.w1 -= lr * (xb.T @ dh)
                m.b1 -= lr * dh.sum(axis=0)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss) or not np.isfinite(m.b2):
            raise DivergenceError(f"non-finite training loss at epoch {epoch}")
        m.losses.append(epoch_loss)
    return m


def predict_proba(model: MlpModel, x: np.ndarray) -> np.ndarray:
    _, z = _forward(model, _prep(model, x))
    return sigmoid(z)


def mlp_predict(model: MlpModel, x: np.ndarray) -> tuple[int, float]:
    """Hard label (1 iff prob >= 0.5) and probability for one input."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    p = float(predict_proba(model, x)[0])
    return (1 if p >= 0.5 else 0), p


def predict_labels(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return (predict_proba(model, x) >= 0.5).astype(int)


# --- checkpoints ------------------------------------------------------------

_MAGIC = b"SCMLP"
_VERSION = 1
_HEADER = struct.Struct("<5sIIIqI")


def save_mlp(model: MlpModel, path) -> None:
    """Header then little-endian float32 dump of w1, b1, w2, b2 (+ shift, scale)."""
    has_norm = model.shift is not None
    head = _HEADER.pack(_MAGIC, _VERSION, model.input_dim, model.hidden, model.seed, int(has_norm))
    parts = [model.w1, model.b1, model.w2, np.array([model.b2])]
    if has_norm:
        parts += [model.shift, model.scale]
    with open(path, "wb") as fh:
        fh.write(head)
        for p in parts:
            fh.write(np.asarray(p, dtype="<f4").reshape(-1).tobytes())


def load_mlp(path) -> MlpModel:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, d, h, seed, has_norm = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an MLP checkpoint")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    sizes = [d * h, h, h, 1] + ([d, d] if has_norm else [])
    if flat.size != sum(sizes):
        raise ValueError(f"{path}: checkpoint size mismatch")
    chunks = np.split(flat, np.cumsum(sizes)[:-1])
    model = MlpModel(chunks[0].reshape(d, h), chunks[1], chunks[2], float(chunks[3][0]), seed)
    if has_norm:
        model.shift, model.scale = chunks[4], chunks[5]
    return model
