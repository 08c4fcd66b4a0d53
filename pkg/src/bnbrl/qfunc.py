"""Q-function approximators scoring branching candidates.

Per-candidate feature rows map independently to either a histogram of
logits over value bins (cross-entropy training, decoded to scalars by the
codec) or a single scalar (squared-error training). Two parameterizations:
linear, and a ReLU MLP with configurable hidden sizes. Gradients are exact
analytic backprop; tests check them against central finite differences.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .codec import HistogramCodec, decode_matrix

LOSS_MSE = "mse"
LOSS_HL_GAUSS_CE = "hl_gauss_ce"

KIND_LINEAR = "linear"
KIND_MLP = "mlp"

CHECKPOINT_MAGIC = b"BBMDPQFN"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


class QFunction:
    """Feedforward candidate scorer with a flat parameter vector."""

    def __init__(self, kind: str, in_dim: int, codec: HistogramCodec | None,
                 hidden: tuple[int, ...] = (64, 64), seed: int = 0,
                 head_init_value: float | None = -4.0):
        if kind not in (KIND_LINEAR, KIND_MLP):
            raise ValueError(f"unknown q-function kind {kind!r}")
        self.kind = kind
        self.in_dim = in_dim
        self.codec = codec
        self.out_dim = codec.m_bins if codec is not None else 1
        self.hidden = tuple(hidden) if kind == KIND_MLP else ()
        self.seed = seed

        rng = np.random.default_rng(seed)
        dims = [in_dim, *self.hidden, self.out_dim]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            scale = math.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        if head_init_value is not None:
            # Start predictions near a small subtree value instead of the
            # near-uniform softmax (which decodes to the huge tail bins),
            # so early bootstrapped targets stay on a sane scale.
            self.weights[-1] *= 0.01
            if codec is not None:
                from .codec import encode

                self.biases[-1][...] = np.log(encode(codec, head_init_value) + 1e-12)
            else:
                self.biases[-1][...] = head_init_value

    @property
    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def get_theta(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_theta(self, theta: np.ndarray) -> None:
        if theta.shape != (self.num_params,):
            raise ValueError(f"theta has shape {theta.shape}, expected ({self.num_params},)")
        pos = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = theta[pos:pos + w.size].reshape(w.shape)
            pos += w.size
            b[...] = theta[pos:pos + b.size]
            pos += b.size

    def clone(self) -> "QFunction":
        other = QFunction(self.kind, self.in_dim, self.codec, self.hidden, self.seed)
        other.set_theta(self.get_theta())
        return other

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (logits, activations) where activations[i] is the input
        to layer i (needed for backprop)."""
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
                acts.append(h)
        return h, acts

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out, _ = self._forward(x)
        return out

    def values(self, x: np.ndarray) -> np.ndarray:
        """Decoded scalar value per candidate row."""
        out = self.logits(x)
        if self.codec is None:
            return out[:, 0]
        return decode_matrix(self.codec, _softmax(out))

    def _backprop(self, acts: list[np.ndarray], dlogits: np.ndarray) -> np.ndarray:
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        delta = dlogits
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0.0)
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb.ravel())
        return np.concatenate(parts)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradient(qfn: QFunction, features: np.ndarray, targets: np.ndarray,
                      weights: np.ndarray, loss: str) -> tuple[float, np.ndarray]:
    """Importance-weighted batch loss and its exact parameter gradient.

    features: (B, in_dim) rows of the chosen candidates; targets: (B,)
    scalar value targets; weights: (B,) importance weights.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    batch = x.shape[0]
    logits, acts = qfn._forward(x)
    if not np.isfinite(logits).all():
        raise TrainingError(
            f"non-finite forward pass: logits range "
            f"[{np.nanmin(logits)}, {np.nanmax(logits)}], batch size {batch}"
        )
    if loss == LOSS_MSE:
        if qfn.codec is not None:
            raise ValueError("squared-error loss expects a scalar-head q-function")
        pred = logits[:, 0]
        err = pred - y
        value = float(np.mean(w * err * err))
        dlogits = (2.0 * w * err / batch)[:, None]
    elif loss == LOSS_HL_GAUSS_CE:
        if qfn.codec is None:
            raise ValueError("cross-entropy loss expects a histogram-head q-function")
        from .codec import encode

        probs = _softmax(logits)
        target_dists = np.stack([encode(qfn.codec, float(t)) for t in y])
        logp = logits - logits.max(axis=1, keepdims=True)
        logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
        ce = -(target_dists * logp).sum(axis=1)
        value = float(np.mean(w * ce))
        dlogits = (probs - target_dists) * (w / batch)[:, None]
    else:
        raise ValueError(f"unknown loss {loss!r}")
    grad = qfn._backprop(acts, dlogits)
    return value, grad


class Adam:
    """Standard Adam on a flat parameter vector."""

    def __init__(self, num_params: int, lr: float = 5e-5,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(num_params)
        self.v = np.zeros(num_params)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_gradient(grad: np.ndarray, max_norm: float = 10.0) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def soft_update(target: QFunction, online: QFunction, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online."""
    theta = (1.0 - tau) * target.get_theta() + tau * online.get_theta()
    target.set_theta(theta)


def save_checkpoint(path: str, qfn: QFunction, config_doc: dict, step: int) -> None:
    """Binary checkpoint: 16-byte magic header, JSON metadata block, then
    the flat parameter vector as little-endian float64."""
    meta = {
        "kind": qfn.kind,
        "in_dim": qfn.in_dim,
        "hidden": list(qfn.hidden),
        "codec": qfn.codec.to_json_dict() if qfn.codec is not None else None,
        "config_sha256": hashlib.sha256(
            json.dumps(config_doc, sort_keys=True).encode()).hexdigest(),
        "step": step,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    theta = qfn.get_theta()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, 0))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<Q", theta.size))
        fh.write(theta.astype("<f8").tobytes())


def load_checkpoint(path: str) -> tuple[QFunction, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        version, _ = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (theta_len,) = struct.unpack("<Q", fh.read(8))
        theta = np.frombuffer(fh.read(theta_len * 8), dtype="<f8").astype(np.float64)
    codec = HistogramCodec.from_json_dict(meta["codec"]) if meta["codec"] else None
    qfn = QFunction(meta["kind"], meta["in_dim"], codec, tuple(meta["hidden"]))
    qfn.set_theta(theta)
    return qfn, meta
