"""Mini-batch Adam training with periodic checkpoints.

Training is a pure function of ``(TrainConfig, dataset, indices)``: parameter
initialisation and the per-epoch shuffles draw from separate numpy streams
derived from ``config.seed``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .graph_data import Dataset
from .model import PARAM_NAMES, ModelParams, PackedGraphs, batch_logits, batch_loss_and_grads, init_params

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gnn-tracin-checkpoint"
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"

# independent RNG streams derived from one run seed
INIT_STREAM = 0
SHUFFLE_STREAM = 1


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr: float = 1e-3
    weight_decay: float = 5e-4
    batch_size: int = 64
    checkpoint_every: int = 30
    seed: int = 0
    hidden: int = 64

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.checkpoint_every < 1:
            raise ValueError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Checkpoint:
    epoch: int
    lr_in_effect: float
    params: ModelParams

    def __post_init__(self):
        if not self.lr_in_effect > 0:
            raise ValueError(f"lr_in_effect must be > 0, got {self.lr_in_effect}")

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            self.epoch == other.epoch
            and self.lr_in_effect == other.lr_in_effect
            and self.params == other.params
        )


def checkpoint_epochs(epochs: int, every: int) -> list[int]:
    """Epochs (1-based, after completion) at which a checkpoint is taken."""
    marks = set(range(every, epochs + 1, every))
    marks.add(epochs)
    return sorted(marks)


def validate_checkpoints(checkpoints) -> list[Checkpoint]:
    checkpoints = list(checkpoints)
    for prev, cur in zip(checkpoints, checkpoints[1:]):
        if cur.epoch <= prev.epoch:
            raise CheckpointError(f"checkpoint epochs must be strictly increasing ({prev.epoch} then {cur.epoch})")
    return checkpoints


# --- Adam ---------------------------------------------------------------------


@dataclass(eq=False)
class AdamState:
    m: ModelParams
    v: ModelParams
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(params.map(np.zeros_like), params.map(np.zeros_like))


def adam_step(
    params: ModelParams, grads: ModelParams, state: AdamState, lr: float, weight_decay: float = 0.0
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update with L2 weight decay folded into the gradient.

    Returns new parameter and state objects; the inputs are left untouched.
    """
    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params.tensors(), grads.tensors(), state.m.tensors(), state.v.tensors()):
        if g.shape != p.shape:
            raise nx.ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if weight_decay:
            g = g + weight_decay * p
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        new_p.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(ModelParams(*new_m), ModelParams(*new_v), t, state.beta1, state.beta2, state.eps)
    return ModelParams(*new_p), new_state


# --- training loop ------------------------------------------------------------


@dataclass
class TrainResult:
    params: ModelParams
    checkpoints: list[Checkpoint]
    loss_history: list[float]
    evaluations: dict[int, object] = field(default_factory=dict)


def train(
    config: TrainConfig,
    dataset: Dataset,
    train_indices,
    packed: PackedGraphs | None = None,
    eval_fn=None,
    init: ModelParams | None = None,
) -> TrainResult:
    """Train from a seed-derived initialisation (or ``init``) on ``train_indices``.

    ``loss_history`` holds the mean batch loss of every epoch. ``eval_fn``, if
    given, is called as ``eval_fn(epoch, params)`` at each checkpoint epoch and
    its results are collected in ``TrainResult.evaluations``.
    """
    indices = np.asarray(list(train_indices), dtype=np.int64)
    if indices.size == 0:
        raise ValueError("train needs at least one training index")
    packed = packed if packed is not None else PackedGraphs(dataset)

    if init is None:
        params = init_params(config.hidden, [config.seed, INIT_STREAM])
    elif init.hidden != config.hidden:
        raise ValueError(f"initial params have hidden={init.hidden}, config says {config.hidden}")
    else:
        params = init.copy()
    state = AdamState.for_params(params)
    shuffle_rng = np.random.default_rng([config.seed, SHUFFLE_STREAM])
    marks = set(checkpoint_epochs(config.epochs, config.checkpoint_every))

    checkpoints, history, evaluations = [], [], {}
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(indices)
        batch_losses = []
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = order[start : start + config.batch_size]
            batch_loss, grads = batch_loss_and_grads(params, packed, batch)
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b}")
            params, state = adam_step(params, grads, state, config.lr, config.weight_decay)
            batch_losses.append(batch_loss)
        history.append(float(np.mean(batch_losses)))
        if epoch in marks:
            checkpoints.append(Checkpoint(epoch, config.lr, params.copy()))
            if eval_fn is not None:
                evaluations[epoch] = eval_fn(epoch, params)
            log.debug("epoch %d loss %.5f", epoch, history[-1])
    return TrainResult(params, checkpoints, history, evaluations)


def predict(params: ModelParams, dataset: Dataset, indices, packed: PackedGraphs | None = None):
    """Class-1 probability and predicted label per sample; exact ties go to class 0."""
    indices = np.asarray(list(indices), dtype=np.int64)
    packed = packed if packed is not None else PackedGraphs(dataset)
    logits = batch_logits(params, packed, indices)
    scores = nx.softmax(logits)[:, 1]
    preds = (logits[:, 1] > logits[:, 0]).astype(np.int64)
    return scores, preds


# --- persistence --------------------------------------------------------------


def _checkpoint_record(ckpt: Checkpoint) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "epoch": ckpt.epoch,
        "lr_in_effect": ckpt.lr_in_effect,
        "hidden": ckpt.params.hidden,
        "params": {
            name: {"shape": list(t.shape), "data": [float(x) for x in t.ravel()]}
            for name, t in ckpt.params.items()
        },
    }


def save_checkpoints(checkpoints, directory, config: TrainConfig | None = None):
    """Write ``ckpt_<epoch>.json`` per checkpoint plus a manifest."""
    checkpoints = validate_checkpoints(checkpoints)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for ckpt in checkpoints:
        path = directory / f"ckpt_{ckpt.epoch}.json"
        path.write_text(json.dumps(_checkpoint_record(ckpt)), encoding="utf-8")
    manifest = {
        "version": CHECKPOINT_VERSION,
        "epochs": [c.epoch for c in checkpoints],
        "config_hash": config.digest() if config is not None else None,
    }
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def _load_checkpoint(path: Path) -> Checkpoint:
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
    if rec.get("format") != CHECKPOINT_FORMAT or rec.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {rec.get('format')!r}/{rec.get('version')!r}"
        )
    try:
        hidden = int(rec["hidden"])
        tensors = []
        for name in PARAM_NAMES:
            entry = rec["params"][name]
            shape = tuple(int(s) for s in entry["shape"])
            data = np.array(entry["data"], dtype=np.float64)
            if data.size != int(np.prod(shape)):
                raise CheckpointError(f"{path}: {name} shape header {shape} does not match {data.size} values")
            tensors.append(data.reshape(shape))
        params = ModelParams(*tensors)
        ckpt = Checkpoint(int(rec["epoch"]), float(rec["lr_in_effect"]), params)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    if params.hidden != hidden:
        raise CheckpointError(f"{path}: hidden={hidden} in header but tensors have width {params.hidden}")
    if not params.is_finite():
        raise CheckpointError(f"{path}: non-finite parameter values")
    return ckpt


def load_checkpoints(directory) -> list[Checkpoint]:
    """Load every checkpoint in ``directory`` ordered by recorded epoch."""
    directory = Path(directory)
    files = sorted(directory.glob("ckpt_*.json"))
    manifest_path = directory / MANIFEST_NAME
    expected = None
    if manifest_path.exists():
        try:
            expected = json.loads(manifest_path.read_text(encoding="utf-8"))["epochs"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise CheckpointError(f"{manifest_path}: corrupt manifest ({exc})") from None
    if not files:
        raise CheckpointError(f"{directory}: no checkpoint files found")
    checkpoints = sorted((_load_checkpoint(p) for p in files), key=lambda c: c.epoch)
    epochs = [c.epoch for c in checkpoints]
    if expected is not None and sorted(expected) != epochs:
        missing = sorted(set(expected) - set(epochs))
        names = ", ".join(f"ckpt_{e}.json" for e in missing) or "(extra files present)"
        raise CheckpointError(f"{directory}: checkpoint files do not match manifest: {names}")
    return validate_checkpoints(checkpoints)
