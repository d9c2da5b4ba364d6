"""Two-layer GCN classifier with hand-written forward and backward passes.

    H1 = ReLU(A X W1 + b1)
    H2 = ReLU(A H1 W2 + b2)
    logits = mean_rows(H2) W3 + b3

``A`` is the normalised adjacency of the complete graph with self-loops. The
per-graph functions (``forward``, ``backward``, ``last_layer_gradient``) are
the reference implementation; ``PackedGraphs`` and ``batch_loss_and_grads``
vectorise the same computation over many graphs for training.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import numerics as nx
from .graph_data import NUM_FEATURES, Dataset, EventGraph, normalized_adjacency

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")
NUM_CLASSES = 2


@dataclass(eq=False)
class ModelParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        h = self.hidden
        expected = {
            "W1": (NUM_FEATURES, h),
            "b1": (h,),
            "W2": (h, h),
            "b2": (h,),
            "W3": (h, NUM_CLASSES),
            "b3": (NUM_CLASSES,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise nx.ShapeError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def items(self):
        return [(name, getattr(self, name)) for name in PARAM_NAMES]

    def tensors(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    def copy(self) -> "ModelParams":
        return ModelParams(*(t.copy() for t in self.tensors()))

    def map(self, fn) -> "ModelParams":
        return ModelParams(*(fn(t) for t in self.tensors()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors())

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.tensors(), other.tensors()))

    @classmethod
    def zeros(cls, hidden: int) -> "ModelParams":
        return cls(
            np.zeros((NUM_FEATURES, hidden)),
            np.zeros(hidden),
            np.zeros((hidden, hidden)),
            np.zeros(hidden),
            np.zeros((hidden, NUM_CLASSES)),
            np.zeros(NUM_CLASSES),
        )


# gradients have exactly the layout of the parameters they belong to
Gradients = ModelParams


def init_params(hidden: int, seed) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    if hidden < 1:
        raise ValueError(f"hidden width must be >= 1, got {hidden}")
    rng = np.random.default_rng(seed)

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return ModelParams(
        glorot(NUM_FEATURES, hidden),
        np.zeros(hidden),
        glorot(hidden, hidden),
        np.zeros(hidden),
        glorot(hidden, NUM_CLASSES),
        np.zeros(NUM_CLASSES),
    )


@dataclass
class ForwardCache:
    adjacency: np.ndarray
    p1: np.ndarray  # A X
    z1: np.ndarray
    h1: np.ndarray
    p2: np.ndarray  # A H1
    z2: np.ndarray
    h2: np.ndarray
    pooled: np.ndarray


def _features(graph) -> np.ndarray:
    x = graph.features if isinstance(graph, EventGraph) else np.asarray(graph, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != NUM_FEATURES:
        raise nx.ShapeError(f"graph features must be (n, {NUM_FEATURES}), got {x.shape}")
    return x


def forward(params: ModelParams, graph) -> tuple[np.ndarray, ForwardCache]:
    """Logits for one graph (an ``EventGraph`` or a raw ``(n, 6)`` feature matrix)."""
    x = _features(graph)
    a = normalized_adjacency(x.shape[0])
    p1 = nx.matmul(a, x)
    z1 = nx.matmul(p1, params.W1) + params.b1
    h1 = nx.relu(z1)
    p2 = nx.matmul(a, h1)
    z2 = nx.matmul(p2, params.W2) + params.b2
    h2 = nx.relu(z2)
    pooled = h2.mean(axis=0)
    logits = nx.matmul(pooled[None, :], params.W3)[0] + params.b3
    return logits, ForwardCache(a, p1, z1, h1, p2, z2, h2, pooled)


def loss(logits, label: int) -> float:
    """Cross-entropy of two-class logits against ``label``."""
    return float(-nx.log_softmax(logits)[label])


def _output_delta(logits, label: int) -> np.ndarray:
    delta = nx.softmax(logits)
    delta[label] -= 1.0
    return delta


def backward(params: ModelParams, graph, label: int) -> tuple[float, Gradients]:
    logits, c = forward(params, graph)
    n = c.h2.shape[0]
    d_logits = _output_delta(logits, label)
    g_w3 = np.outer(c.pooled, d_logits)
    g_b3 = d_logits
    d_pooled = nx.matmul(params.W3, d_logits[:, None])[:, 0]
    d_h2 = np.tile(d_pooled / n, (n, 1))
    d_z2 = d_h2 * nx.relu_mask(c.z2)
    g_w2 = nx.matmul(c.p2.T, d_z2)
    g_b2 = d_z2.sum(axis=0)
    d_p2 = nx.matmul(d_z2, params.W2.T)
    d_h1 = nx.matmul(c.adjacency.T, d_p2)
    d_z1 = d_h1 * nx.relu_mask(c.z1)
    g_w1 = nx.matmul(c.p1.T, d_z1)
    g_b1 = d_z1.sum(axis=0)
    return loss(logits, label), ModelParams(g_w1, g_b1, g_w2, g_b2, g_w3, g_b3)


def last_layer_gradient(params: ModelParams, graph, label: int) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the loss w.r.t. the output layer only: (dW3, db3)."""
    logits, c = forward(params, graph)
    d_logits = _output_delta(logits, label)
    return np.outer(c.pooled, d_logits), d_logits


# --- batched path -------------------------------------------------------------


@lru_cache(maxsize=None)
def _adjacency(n: int) -> np.ndarray:
    a = normalized_adjacency(n)
    a.flags.writeable = False
    return a


class PackedGraphs:
    """Dataset graphs stacked into one ``(count, n, 6)`` array per node count."""

    def __init__(self, dataset: Dataset):
        self.labels = dataset.labels
        self.num_nodes = np.array([g.num_nodes for g in dataset.graphs], dtype=np.int64)
        self.row = np.zeros(len(dataset), dtype=np.int64)
        self.groups: dict[int, np.ndarray] = {}
        for n in sorted(set(self.num_nodes.tolist())):
            members = np.flatnonzero(self.num_nodes == n)
            self.row[members] = np.arange(len(members))
            self.groups[n] = np.stack([dataset.graphs[i].features for i in members])

    def __len__(self):
        return len(self.labels)

    def gather(self, indices) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Split ``indices`` by node count: [(positions in batch, features, adjacency)]."""
        indices = np.asarray(indices, dtype=np.int64)
        sizes = self.num_nodes[indices]
        out = []
        for n, stacked in self.groups.items():
            where = np.flatnonzero(sizes == n)
            if where.size:
                out.append((where, stacked[self.row[indices[where]]], _adjacency(n)))
        return out


def _batch_forward(params: ModelParams, parts, batch_size: int):
    pooled = np.empty((batch_size, params.hidden))
    caches = []
    for where, x, a in parts:
        p1 = np.matmul(a, x)
        z1 = p1 @ params.W1 + params.b1
        h1 = np.maximum(z1, 0.0)
        p2 = np.matmul(a, h1)
        z2 = p2 @ params.W2 + params.b2
        h2 = np.maximum(z2, 0.0)
        pooled[where] = h2.mean(axis=1)
        caches.append((where, a, p1, z1, p2, z2))
    logits = pooled @ params.W3 + params.b3
    return logits, pooled, caches


def batch_pooled(params: ModelParams, packed: PackedGraphs, indices) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    _, pooled, _ = _batch_forward(params, packed.gather(indices), len(indices))
    return pooled


def batch_logits(params: ModelParams, packed: PackedGraphs, indices) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    logits, _, _ = _batch_forward(params, packed.gather(indices), len(indices))
    return logits


def per_sample_losses(params: ModelParams, packed: PackedGraphs, indices, labels=None) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    labels = packed.labels[indices] if labels is None else np.asarray(labels)
    logp = nx.log_softmax(batch_logits(params, packed, indices))
    return -logp[np.arange(len(indices)), labels]


def batch_loss_and_grads(params: ModelParams, packed: PackedGraphs, indices) -> tuple[float, Gradients]:
    """Mean cross-entropy over the batch and its gradient."""
    indices = np.asarray(indices, dtype=np.int64)
    b = len(indices)
    labels = packed.labels[indices]
    logits, pooled, caches = _batch_forward(params, packed.gather(indices), b)
    logp = nx.log_softmax(logits)
    batch_loss = float(-logp[np.arange(b), labels].mean())

    d_logits = np.exp(logp)
    d_logits[np.arange(b), labels] -= 1.0
    d_logits /= b
    g_w3 = pooled.T @ d_logits
    g_b3 = d_logits.sum(axis=0)
    d_pooled = d_logits @ params.W3.T

    h = params.hidden
    g_w1 = np.zeros_like(params.W1)
    g_b1 = np.zeros_like(params.b1)
    g_w2 = np.zeros_like(params.W2)
    g_b2 = np.zeros_like(params.b2)
    for where, a, p1, z1, p2, z2 in caches:
        n = a.shape[0]
        d_z2 = np.where(z2 > 0.0, (d_pooled[where] / n)[:, None, :], 0.0)
        g_w2 += p2.reshape(-1, h).T @ d_z2.reshape(-1, h)
        g_b2 += d_z2.sum(axis=(0, 1))
        d_h1 = np.matmul(a.T, d_z2 @ params.W2.T)
        d_z1 = np.where(z1 > 0.0, d_h1, 0.0)
        g_w1 += p1.reshape(-1, NUM_FEATURES).T @ d_z1.reshape(-1, h)
        g_b1 += d_z1.sum(axis=(0, 1))
    return batch_loss, ModelParams(g_w1, g_b1, g_w2, g_b2, g_w3, g_b3)
