"""TracIn self-influence over saved checkpoints, top-score filtering and a LOO oracle.

The self-influence of a training sample ``x`` is

    SI(x) = sum_i lr_i * || grad_{W3,b3} loss(params_i, x) ||^2

summed over checkpoints ``i``, with the gradient restricted to the output
linear layer. For that layer the gradient is the outer product
``pooled (x) delta`` with ``delta = softmax(logits) - onehot(label)``, so its
squared norm factors as ``(|pooled|^2 + 1) * |delta|^2`` (the ``+ 1`` being the
bias block). ``include_bias=False`` drops that block and scores the weight
gradient alone.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .graph_data import Dataset, EventGraph, round_half_up
from .model import PackedGraphs, batch_pooled, last_layer_gradient, per_sample_losses
from .trainer import TrainConfig, train

LOO_MAX_SAMPLES = 64


class InfluenceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class InfluenceReport:
    sample_ids: list[int]
    scores: np.ndarray
    checkpoint_count: int
    partials: np.ndarray | None = None  # (checkpoints, samples)

    def __post_init__(self):
        if len(self.scores) != len(self.sample_ids):
            raise InfluenceError("scores and sample_ids differ in length")

    def ranks(self) -> dict[int, int]:
        """Rank 1 is the highest score; equal scores rank by smaller id first."""
        order = sorted(range(len(self.sample_ids)), key=lambda k: (-self.scores[k], self.sample_ids[k]))
        return {self.sample_ids[k]: r for r, k in enumerate(order, 1)}

    def __eq__(self, other):
        if not isinstance(other, InfluenceReport):
            return NotImplemented
        return (
            list(self.sample_ids) == list(other.sample_ids)
            and self.checkpoint_count == other.checkpoint_count
            and np.array_equal(self.scores, other.scores)
        )


def self_influence(
    checkpoints, graph: EventGraph, label: int | None = None, include_bias: bool = True
) -> float:
    """Self-influence of one graph, accumulated over ``checkpoints``."""
    checkpoints = list(checkpoints)
    if not checkpoints:
        raise InfluenceError("self-influence needs at least one checkpoint")
    label = graph.label if label is None else label
    total = 0.0
    for ckpt in checkpoints:
        g_w, g_b = last_layer_gradient(ckpt.params, graph, label)
        sq = nx.frobenius_norm_sq(g_w) + (nx.frobenius_norm_sq(g_b) if include_bias else 0.0)
        total += ckpt.lr_in_effect * sq
    return total


def _partials(checkpoints, packed: PackedGraphs, indices, include_bias: bool = True) -> np.ndarray:
    labels = packed.labels[indices]
    rows = []
    for ckpt in checkpoints:
        pooled = batch_pooled(ckpt.params, packed, indices)
        delta = nx.softmax(pooled @ ckpt.params.W3 + ckpt.params.b3)
        delta[np.arange(len(indices)), labels] -= 1.0
        sq = (np.sum(pooled * pooled, axis=1) + float(include_bias)) * np.sum(delta * delta, axis=1)
        rows.append(ckpt.lr_in_effect * sq)
    return np.array(rows)


def score_dataset(
    checkpoints,
    dataset: Dataset,
    indices,
    packed: PackedGraphs | None = None,
    workers: int = 1,
    include_bias: bool = True,
) -> InfluenceReport:
    """Self-influence for every sample in ``indices``, reported in input order.

    Samples are scored independently, so ``workers > 1`` splits them into
    contiguous chunks evaluated on a thread pool with identical results.
    """
    checkpoints = list(checkpoints)
    if not checkpoints:
        raise InfluenceError("self-influence needs at least one checkpoint")
    indices = np.asarray(list(indices), dtype=np.int64)
    if indices.size == 0:
        raise InfluenceError("no samples to score")
    packed = packed if packed is not None else PackedGraphs(dataset)
    if workers > 1:
        chunks = np.array_split(indices, min(workers, len(indices)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _partials(checkpoints, packed, c, include_bias), chunks))
        partials = np.concatenate(parts, axis=1)
    else:
        partials = _partials(checkpoints, packed, indices, include_bias)
    # summing checkpoint rows in order keeps each sample's total independent of chunking
    scores = np.zeros(len(indices))
    for row in partials:
        scores = scores + row
    ids = [dataset.graphs[i].id for i in indices]
    return InfluenceReport(ids, scores, len(checkpoints), partials)


def filter_top(report: InfluenceReport, keep_fraction: float) -> list[int]:
    """Drop the highest-scoring samples and return the kept ids, sorted.

    Keeps ``round_half_up(keep_fraction * n)`` lowest scores; equal scores are
    kept smaller-id first.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise InfluenceError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    n = len(report.sample_ids)
    keep = round_half_up(keep_fraction * n)
    order = sorted(range(n), key=lambda k: (report.scores[k], report.sample_ids[k]))
    return sorted(report.sample_ids[k] for k in order[:keep])


def save_report_csv(report: InfluenceReport, path):
    ranks = report.ranks()
    rows = sorted(zip(report.sample_ids, report.scores), key=lambda r: r[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "score", "rank"])
        for sid, score in rows:
            writer.writerow([sid, repr(float(score)), ranks[sid]])


def load_report_csv(path, checkpoint_count: int = 0) -> InfluenceReport:
    ids, scores = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ids.append(int(row["id"]))
            scores.append(float(row["score"]))
    return InfluenceReport(ids, np.array(scores), checkpoint_count)


def loo_oracle(config: TrainConfig, dataset: Dataset, indices, probe_indices, packed=None) -> np.ndarray:
    """Leave-one-out self-effect of each probe sample.

    For each probe, retrain with the same seed but without the probe and
    return ``loss_ablated(probe) - loss_full(probe)``: how much the probe's
    own loss rises when it is left out. Validation only, hence the size guard.
    """
    indices = [int(i) for i in indices]
    if len(indices) > LOO_MAX_SAMPLES:
        raise InfluenceError(
            f"leave-one-out is limited to {LOO_MAX_SAMPLES} training samples, got {len(indices)}; use a smaller set"
        )
    members = set(indices)
    for p in probe_indices:
        if int(p) not in members:
            raise InfluenceError(f"probe {p} is not part of the training indices")
    packed = packed if packed is not None else PackedGraphs(dataset)
    full = train(config, dataset, indices, packed).params
    probes = np.asarray(list(probe_indices), dtype=np.int64)
    full_losses = per_sample_losses(full, packed, probes)
    out = np.empty(len(probes))
    for k, p in enumerate(probes):
        ablated = train(config, dataset, [i for i in indices if i != p], packed).params
        out[k] = per_sample_losses(ablated, packed, [p])[0] - full_losses[k]
    return out
