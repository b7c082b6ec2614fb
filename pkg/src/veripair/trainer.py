"""Cluster-contrastive training against a momentum memory bank.

The feature extractor is a trainable linear projection over the fixed base
features; embeddings are L2-normalized. Each cluster owns one unit vector
in the memory bank; the loss is softmax cross-entropy of the scaled
cosine logits against the sample's own cluster, and the bank vector of
that cluster is momentum-updated after every sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import ClusterSet


class TrainerError(ValueError):
    pass


@dataclass
class Projection:
    """Linear map from base features (d_base) to embeddings (d_emb)."""

    weights: np.ndarray
    learning_rate: float

    @property
    def d_base(self):
        return self.weights.shape[0]

    @property
    def d_emb(self):
        return self.weights.shape[1]


def init_projection(d_base, d_emb, learning_rate, seed) -> Projection:
    if d_emb > d_base:
        raise TrainerError("embedding dimension cannot exceed the base dimension")
    rng = np.random.default_rng(seed)
    weights = rng.standard_normal((d_base, d_emb)) / np.sqrt(d_base)
    return Projection(weights=weights, learning_rate=float(learning_rate))


def embed(projection: Projection, base_features) -> np.ndarray:
    """Unit-normalized embeddings of the given base features."""
    raw = np.asarray(base_features, dtype=np.float64) @ projection.weights
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    if (norms == 0.0).any():
        raise TrainerError("projection produced a zero embedding")
    return raw / norms


class MemoryBank:
    """One unit vector per dense cluster label, updated by momentum."""

    def __init__(self, vectors, momentum, temperature):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise TrainerError("bank vectors must be a 2-d array")
        if not 0.0 <= momentum < 1.0:
            raise TrainerError("momentum must be in [0, 1)")
        if temperature <= 0.0:
            raise TrainerError("temperature must be positive")
        self.vectors = vectors
        self.momentum = float(momentum)
        self.temperature = float(temperature)

    @property
    def size(self):
        return self.vectors.shape[0]

    def check_label(self, label):
        if not 0 <= label < self.size:
            raise TrainerError(f"label {label} not covered by the memory bank")


def init_memory(clusters: ClusterSet, embeddings, momentum=0.2, temperature=0.05) -> MemoryBank:
    """Bank vectors from the normalized per-cluster embedding means.

    Row j corresponds to dense pseudo-label j (ascending cluster-id
    order), matching annotation.pseudo_labels.
    """
    ids = clusters.ids()
    if not ids:
        raise TrainerError("cannot initialize memory without clusters")
    vectors = np.empty((len(ids), embeddings.shape[1]), dtype=np.float64)
    for row, cid in enumerate(ids):
        mean = embeddings[clusters.clusters[cid].members].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            raise TrainerError(f"cluster {cid} has a zero-mean embedding")
        vectors[row] = mean / norm
    return MemoryBank(vectors, momentum, temperature)


def _logits(f, bank: MemoryBank):
    return (f @ bank.vectors.T) / bank.temperature


def cluster_nce_loss(f_i, label: int, bank: MemoryBank) -> float:
    """Softmax cross-entropy of the scaled cosine logits, stabilized by
    max subtraction."""
    bank.check_label(label)
    logits = _logits(np.asarray(f_i, dtype=np.float64), bank)
    shifted = logits - logits.max()
    return float(np.log(np.sum(np.exp(shifted))) - shifted[label])


def loss_gradient(f_i, label: int, bank: MemoryBank) -> np.ndarray:
    """Analytic gradient of the loss with respect to the embedding:
    (softmax - onehot) @ bank / temperature."""
    bank.check_label(label)
    logits = _logits(np.asarray(f_i, dtype=np.float64), bank)
    shifted = np.exp(logits - logits.max())
    softmax = shifted / shifted.sum()
    softmax[label] -= 1.0
    return (softmax @ bank.vectors) / bank.temperature


def momentum_update(bank: MemoryBank, f_i, label: int) -> MemoryBank:
    """Blend the sample into its cluster's bank vector and renormalize."""
    bank.check_label(label)
    mixed = bank.momentum * bank.vectors[label] + (1.0 - bank.momentum) * np.asarray(f_i)
    norm = np.linalg.norm(mixed)
    if norm == 0.0:
        raise TrainerError("momentum update produced a zero vector")
    bank.vectors[label] = mixed / norm
    return bank


def train_epoch(projection: Projection, base_features, labels, bank: MemoryBank,
                batch_size: int, seed):
    """One pass of shuffled mini-batch gradient descent.

    Per batch: embed, accumulate the mean loss and its chain-ruled weight
    gradient, take one plain gradient step, then momentum-update the bank
    from the batch's (pre-step) embeddings in batch order. Returns
    (projection, bank, mean per-sample loss).
    """
    base_features = np.asarray(base_features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if base_features.shape[0] != labels.shape[0]:
        raise TrainerError("features and labels disagree on sample count")
    if labels.size == 0:
        raise TrainerError("nothing to train on")
    if labels.min() < 0 or labels.max() >= bank.size:
        raise TrainerError("labels not covered by the memory bank")
    if batch_size < 1:
        raise TrainerError("batch size must be >= 1")

    rng = np.random.default_rng(seed)
    order = rng.permutation(labels.shape[0])
    loss_sum = 0.0
    for start in range(0, order.shape[0], batch_size):
        batch = order[start:start + batch_size]
        x = base_features[batch]
        y = labels[batch]

        raw = x @ projection.weights
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if (norms == 0.0).any():
            raise TrainerError("projection produced a zero embedding")
        f = raw / norms

        logits = _logits(f, bank)
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        denom = exp.sum(axis=1, keepdims=True)
        rows = np.arange(batch.shape[0])
        loss_sum += float(np.sum(np.log(denom[:, 0]) - shifted[rows, y]))

        if projection.learning_rate != 0.0:
            d_logits = exp / denom
            d_logits[rows, y] -= 1.0
            d_f = (d_logits @ bank.vectors) / (bank.temperature * batch.shape[0])
            d_raw = (d_f - f * np.sum(f * d_f, axis=1, keepdims=True)) / norms
            projection.weights -= projection.learning_rate * (x.T @ d_raw)

        for i in range(batch.shape[0]):
            momentum_update(bank, f[i], int(y[i]))

    return projection, bank, loss_sum / labels.shape[0]


def save_checkpoint(path, projection: Projection, temperature, momentum, epoch):
    """Header line (JSON) followed by the little-endian float32 weight blob."""
    header = {
        "d_base": projection.d_base,
        "d_emb": projection.d_emb,
        "learning_rate": projection.learning_rate,
        "tau": temperature,
        "momentum": momentum,
        "epoch": epoch,
    }
    blob = projection.weights.astype("<f4").tobytes()
    Path(path).write_bytes(json.dumps(header).encode() + b"\n" + blob)


def load_checkpoint(path):
    """Returns (Projection, header dict); weights come back as float64."""
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode())
    blob = raw[nl + 1:]
    expected = header["d_base"] * header["d_emb"] * 4
    if len(blob) != expected:
        raise TrainerError(f"checkpoint blob holds {len(blob)} bytes, expected {expected}")
    weights = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    weights = weights.reshape(header["d_base"], header["d_emb"])
    projection = Projection(weights=weights.copy(), learning_rate=header["learning_rate"])
    return projection, header
