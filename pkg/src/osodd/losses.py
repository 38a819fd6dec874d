"""Loss kernels with hand-derived gradients.

Prototype margin loss, the weighted ROI loss sum, InfoNCE against a key
queue, and mixup view construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidClass


@dataclass(frozen=True, eq=False)
class PrototypeSet:
    prototypes: np.ndarray  # (n_classes, d)
    margin: float = 15.0

    def __post_init__(self):
        protos = np.atleast_2d(np.asarray(self.prototypes, dtype=np.float64))
        if protos.ndim != 2:
            raise ValueError("prototypes must be a (n_classes, d) matrix")
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        object.__setattr__(self, "prototypes", protos)

    def __len__(self):
        return self.prototypes.shape[0]


@dataclass(frozen=True)
class LossWeights:
    alpha_pcl: float = 1.0
    alpha_cls: float = 1.0
    alpha_reg: float = 1.0

    def __post_init__(self):
        if min(self.alpha_pcl, self.alpha_cls, self.alpha_reg) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True, eq=False)
class ContrastiveBatch:
    query: np.ndarray
    positive_key: np.ndarray
    negative_keys: np.ndarray  # (K, d)
    temperature: float = 1.0

    def __post_init__(self):
        q = np.asarray(self.query, dtype=np.float64)
        kp = np.asarray(self.positive_key, dtype=np.float64)
        kn = np.atleast_2d(np.asarray(self.negative_keys, dtype=np.float64))
        if q.ndim != 1 or kp.shape != q.shape or kn.shape[1:] != q.shape:
            raise ValueError("query, positive and negative keys must share one dimension")
        if kn.shape[0] < 1:
            raise ValueError("at least one negative key is required")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "query", q)
        object.__setattr__(self, "positive_key", kp)
        object.__setattr__(self, "negative_keys", kn)


def prototype_loss(f, c: int, protos: PrototypeSet) -> float:
    """Pull ``f`` onto its own prototype, push others beyond the margin."""
    f = np.asarray(f, dtype=np.float64)
    if not 0 <= c < len(protos):
        raise InvalidClass(f"class index {c} outside [0, {len(protos)})")
    dist = np.linalg.norm(protos.prototypes - f, axis=1)
    others = np.delete(dist, c)
    return float(dist[c] + np.maximum(0.0, protos.margin - others).sum())


def update_prototypes(protos: PrototypeSet, batch_features, batch_labels, momentum: float) -> PrototypeSet:
    """Exponential moving average of class prototypes toward batch means."""
    if not 0.0 <= momentum <= 1.0:
        raise ValueError("momentum must lie in [0, 1]")
    feats = np.atleast_2d(np.asarray(batch_features, dtype=np.float64))
    labels = np.asarray(batch_labels)
    new = protos.prototypes.copy()
    for c in np.unique(labels):
        if not 0 <= c < len(protos):
            raise InvalidClass(f"class index {c} outside [0, {len(protos)})")
        mean = feats[labels == c].mean(axis=0)
        new[c] = momentum * new[c] + (1.0 - momentum) * mean
    return PrototypeSet(new, protos.margin)


def roi_total_loss(l_pcl: float, l_cls: float, l_reg: float, w: LossWeights = LossWeights()) -> float:
    return w.alpha_pcl * l_pcl + w.alpha_cls * l_cls + w.alpha_reg * l_reg


@dataclass(frozen=True, eq=False)
class InfoNCEResult:
    loss: float
    grad_q: np.ndarray
    grad_kpos: np.ndarray
    grad_knegs: np.ndarray

    def __iter__(self):
        return iter((self.loss, self.grad_q, self.grad_kpos, self.grad_knegs))


def _log_softmax_pos(logits: np.ndarray):
    # logits[..., 0] is the positive
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    probs = np.exp(shifted - lse)
    loss = (lse[..., 0] - shifted[..., 0])
    return loss, probs


def info_nce(b: ContrastiveBatch) -> InfoNCEResult:
    """InfoNCE loss and its exact gradients w.r.t. query and all keys."""
    tau = b.temperature
    logits = np.concatenate(([b.query @ b.positive_key], b.negative_keys @ b.query)) / tau
    loss, probs = _log_softmax_pos(logits)
    dz = probs.copy()
    dz[0] -= 1.0
    grad_q = (dz[0] * b.positive_key + dz[1:] @ b.negative_keys) / tau
    grad_kpos = dz[0] * b.query / tau
    grad_knegs = np.outer(dz[1:], b.query) / tau
    return InfoNCEResult(float(max(loss, 0.0)), grad_q, grad_kpos, grad_knegs)


def info_nce_batch(queries, positive_keys, negative_keys, temperature: float = 1.0):
    """Vectorised InfoNCE over a batch sharing one negative set.

    Returns per-sample losses and the gradient of each loss w.r.t. its own
    query, shape (B, d). Keys are treated as constants.
    """
    q = np.asarray(queries, dtype=np.float64)
    kp = np.asarray(positive_keys, dtype=np.float64)
    kn = np.asarray(negative_keys, dtype=np.float64)
    pos = np.einsum("ij,ij->i", q, kp)[:, None]
    logits = np.concatenate((pos, q @ kn.T), axis=1) / temperature
    loss, probs = _log_softmax_pos(logits)
    dz = probs
    dz[:, 0] -= 1.0
    grad_q = (dz[:, :1] * kp + dz[:, 1:] @ kn) / temperature
    return np.maximum(loss, 0.0), grad_q


def mixup_view(q_input, k_input, lam: float, same_instance: bool):
    """Linear interpolation of two inputs plus its binary virtual label.

    The label is 1 exactly when the two inputs are views of one instance.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    q = np.asarray(q_input, dtype=np.float64)
    k = np.asarray(k_input, dtype=np.float64)
    if q.shape != k.shape:
        raise ValueError("mixup inputs must have equal shapes")
    if lam == 1.0:
        mixed = q.copy()
    else:
        mixed = lam * q + (1.0 - lam) * k
    return mixed, int(bool(same_instance))
