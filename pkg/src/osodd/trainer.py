"""Contrastive refinement of object embeddings.

A linear projection head is trained without labels: every object yields a
query view and a key view (feature-space jitter plus coordinate dropout),
the query input is mixed with the key view, queries go through the live
head and keys through a momentum copy, and InfoNCE is taken against a FIFO
queue of past keys.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import MemoryBuffer
from .errors import DimensionMismatch, EmptyBuffer, IoFailure, SchemaMismatch
from .losses import info_nce_batch

log = logging.getLogger(__name__)

HEAD_VERSION = 1
_NORM_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class ProjectionHead:
    weight: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError(f"inconsistent head shapes {w.shape} / {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("head parameters must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ProjectionHead):
            return NotImplemented
        return np.array_equal(self.weight, other.weight) and np.array_equal(self.bias, other.bias)

    def copy(self) -> "ProjectionHead":
        return ProjectionHead(self.weight.copy(), self.bias.copy())


class KeyQueue:
    """Bounded FIFO of key vectors; the oldest keys are evicted first."""

    def __init__(self, capacity: int, dim: int):
        if capacity <= 0:
            raise ValueError("queue capacity must be positive")
        self.capacity = int(capacity)
        self.entries = np.zeros((0, dim))

    def __len__(self):
        return self.entries.shape[0]

    def enqueue(self, keys: np.ndarray) -> None:
        keys = np.atleast_2d(keys)
        self.entries = np.concatenate((self.entries, keys))[-self.capacity:]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.015
    sgd_momentum: float = 0.9
    temperature: float = 1.0
    key_momentum: float = 0.999
    batch_size: int = 128
    mix_alpha: float = 1.0
    queue_size: int = 4096
    jitter_scale: float = 0.05
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0:
            raise ValueError("epochs must be >= 0 and batch_size > 0")
        if self.learning_rate < 0 or self.temperature <= 0 or self.mix_alpha <= 0:
            raise ValueError("learning_rate must be >= 0; temperature and mix_alpha > 0")
        if not 0.0 <= self.key_momentum < 1.0:
            raise ValueError("key_momentum must lie in [0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.queue_size <= 0:
            raise ValueError("queue_size must be positive")


@dataclass
class TrainStats:
    epoch_losses: list[float] = field(default_factory=list)
    steps: int = 0
    queue_length: int = 0
    key_head: ProjectionHead | None = None

    @property
    def final_loss(self) -> float | None:
        return self.epoch_losses[-1] if self.epoch_losses else None


def init_head(d_in: int, d_out: int = 256, seed: int = 0) -> ProjectionHead:
    if d_in <= 0 or d_out <= 0:
        raise ValueError("head dimensions must be positive")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d_in)
    weight = rng.uniform(-bound, bound, size=(d_out, d_in))
    bias = rng.uniform(-bound, bound, size=d_out)
    return ProjectionHead(weight, bias)


def _project(head: ProjectionHead, x: np.ndarray):
    u = x @ head.weight.T + head.bias
    norms = np.linalg.norm(u, axis=1)
    out = np.zeros_like(u)
    ok = norms >= _NORM_FLOOR
    out[ok] = u[ok] / norms[ok, None]
    out[~ok, 0] = 1.0
    return out, norms, ok


def encode(head: ProjectionHead, features) -> np.ndarray:
    """Unit-norm embeddings ``normalize(W f + b)``, one row per feature row."""
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != head.d_in:
        raise DimensionMismatch(f"feature dim {x.shape[1]} != head input dim {head.d_in}")
    out, _, _ = _project(head, x)
    return out[0] if single else out


def _augment(x: np.ndarray, sigma: np.ndarray, dropout: float, rng: np.random.Generator) -> np.ndarray:
    view = x + rng.standard_normal(x.shape) * sigma
    if dropout > 0:
        view = view * (rng.random(x.shape) >= dropout)
    return view


def _in_batch_loss(q: np.ndarray, k: np.ndarray, tau: float):
    # negatives are the other samples' keys in this batch
    logits = q @ k.T / tau
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1))
    probs = np.exp(shifted - lse[:, None])
    idx = np.arange(q.shape[0])
    loss = lse - shifted[idx, idx]
    probs[idx, idx] -= 1.0
    return np.maximum(loss, 0.0), probs @ k / tau


def train(
    head: ProjectionHead,
    buffer: MemoryBuffer,
    cfg: TrainConfig,
    features: np.ndarray | None = None,
) -> tuple[ProjectionHead, TrainStats]:
    """Train ``head`` on every object in both memory stores; labels are unused.

    ``features`` may override the buffer's stacked vectors (same row order).
    """
    x = buffer.all_matrix() if features is None else np.asarray(features, dtype=np.float64)
    if x.shape[0] == 0:
        raise EmptyBuffer("memory buffer holds no objects to train on")
    if x.shape[1] != head.d_in:
        raise DimensionMismatch(f"feature dim {x.shape[1]} != head input dim {head.d_in}")

    rng = np.random.default_rng(cfg.seed)
    sigma = cfg.jitter_scale * x.std(axis=0)
    w, b = head.weight.copy(), head.bias.copy()
    key_w, key_b = w.copy(), b.copy()
    vel_w, vel_b = np.zeros_like(w), np.zeros_like(b)
    queue = KeyQueue(cfg.queue_size, head.d_out)
    stats = TrainStats()
    n = x.shape[0]
    m = cfg.key_momentum

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total, count = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            xb = x[order[start:start + cfg.batch_size]]
            q_view = _augment(xb, sigma, cfg.dropout, rng)
            k_view = _augment(xb, sigma, cfg.dropout, rng)
            lam = rng.beta(cfg.mix_alpha, cfg.mix_alpha, size=(xb.shape[0], 1))
            # each query is mixed with its own key view (virtual label 1)
            mixed = lam * q_view + (1.0 - lam) * k_view

            live = ProjectionHead(w, b)
            q, norms, ok = _project(live, mixed)
            k, _, _ = _project(ProjectionHead(key_w, key_b), k_view)

            if len(queue):
                losses, g_q = info_nce_batch(q, k, queue.entries, cfg.temperature)
            elif xb.shape[0] > 1:
                losses, g_q = _in_batch_loss(q, k, cfg.temperature)
            else:
                losses, g_q = None, None

            if losses is not None:
                total += float(losses.sum())
                count += losses.size
                # d normalize(u)/du = (I - q q^T) / |u|
                g_u = np.zeros_like(g_q)
                radial = np.einsum("ij,ij->i", g_q, q)[:, None]
                g_u[ok] = (g_q[ok] - q[ok] * radial[ok]) / norms[ok, None]
                g_u /= xb.shape[0]
                vel_w = cfg.sgd_momentum * vel_w + g_u.T @ mixed
                vel_b = cfg.sgd_momentum * vel_b + g_u.sum(axis=0)
                w = w - cfg.learning_rate * vel_w
                b = b - cfg.learning_rate * vel_b

            key_w = m * key_w + (1.0 - m) * w
            key_b = m * key_b + (1.0 - m) * b
            queue.enqueue(k)
            stats.steps += 1

        epoch_loss = total / count if count else float("nan")
        stats.epoch_losses.append(epoch_loss)
        log.debug("epoch %d loss %.6f queue %d", epoch, epoch_loss, len(queue))

    stats.queue_length = len(queue)
    stats.key_head = ProjectionHead(key_w, key_b)
    return ProjectionHead(w, b), stats


def save_head(head: ProjectionHead, path) -> None:
    doc = {
        "version": HEAD_VERSION,
        "d_in": head.d_in,
        "d_out": head.d_out,
        "weight": head.weight.ravel().tolist(),
        "bias": head.bias.tolist(),
    }
    try:
        Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write head checkpoint {path}: {exc}") from exc


def load_head(path) -> ProjectionHead:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read head checkpoint {path}: {exc}") from exc
    if doc.get("version") != HEAD_VERSION:
        raise SchemaMismatch(f"{path}: unsupported head version {doc.get('version')!r}")
    d_in, d_out = doc["d_in"], doc["d_out"]
    weight = np.array(doc["weight"], dtype=np.float64)
    if weight.size != d_in * d_out or len(doc["bias"]) != d_out:
        raise SchemaMismatch(f"{path}: parameter sizes disagree with d_in={d_in}, d_out={d_out}")
    return ProjectionHead(weight.reshape(d_out, d_in), np.array(doc["bias"], dtype=np.float64))

