"""Event graphs, synthetic SUSY-like events, splits and JSONL persistence.

Each collision event is a complete graph whose nodes are reconstructed
objects. Node features follow a fixed six-column layout; entries that are not
physically defined for an object are zero and flagged in a boolean mask::

    column   0      1    2    3         4     5
    jet1-3   pT     eta  phi  quantile  -     -
    b1, b2   pT     eta  phi  quantile  mass  -
    lepton   pT     eta  phi  -         -     -
    energy   ETmiss -    phi  -         -     -

Six-node events have no ``jet3``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

NUM_FEATURES = 6
PT, ETA, PHI, QUANTILE, MASS = range(5)
ETA_LIMIT = 5.0

NODE_ROLES = ("jet1", "jet2", "jet3", "b1", "b2", "lepton", "energy")
ROLE_MASKS = {
    "jet1": (1, 1, 1, 1, 0, 0),
    "jet2": (1, 1, 1, 1, 0, 0),
    "jet3": (1, 1, 1, 1, 0, 0),
    "b1": (1, 1, 1, 1, 1, 0),
    "b2": (1, 1, 1, 1, 1, 0),
    "lepton": (1, 1, 1, 0, 0, 0),
    "energy": (1, 0, 1, 0, 0, 0),
}
# typical transverse momentum (GeV) per role; "energy" is the ETmiss scale
ROLE_PT_SCALE = {
    "jet1": 120.0,
    "jet2": 80.0,
    "jet3": 50.0,
    "b1": 90.0,
    "b2": 60.0,
    "lepton": 50.0,
    "energy": 100.0,
}
LOG_PT_WIDTH = 0.3
COMMON_MODE = 0.8


class DatasetError(ValueError):
    pass


class InvariantError(DatasetError):
    pass


class ParseError(DatasetError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class IntegrityError(DatasetError):
    pass


class ConfigError(ValueError):
    pass


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def roles_for(num_nodes: int) -> tuple[str, ...]:
    if num_nodes == 7:
        return NODE_ROLES
    if num_nodes == 6:
        return tuple(r for r in NODE_ROLES if r != "jet3")
    raise InvariantError(f"num_nodes must be 6 or 7, got {num_nodes}")


def role_mask(num_nodes: int) -> np.ndarray:
    return np.array([ROLE_MASKS[r] for r in roles_for(num_nodes)], dtype=bool)


@dataclass(frozen=True, eq=False)
class EventGraph:
    id: int
    features: np.ndarray
    mask: np.ndarray
    label: int

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64)
        mask = np.array(self.mask, dtype=bool)
        n = feats.shape[0] if feats.ndim == 2 else -1
        if n not in (6, 7):
            raise InvariantError(f"graph {self.id}: num_nodes must be 6 or 7, got shape {feats.shape}")
        if feats.shape != (n, NUM_FEATURES) or mask.shape != feats.shape:
            raise InvariantError(
                f"graph {self.id}: features {feats.shape} and mask {mask.shape} must be ({n}, {NUM_FEATURES})"
            )
        if not np.all(np.isfinite(feats)):
            raise InvariantError(f"graph {self.id}: non-finite feature")
        if np.any(feats[~mask] != 0.0):
            raise InvariantError(f"graph {self.id}: masked-out feature entries must be 0")
        if self.label not in (0, 1):
            raise InvariantError(f"graph {self.id}: label must be 0 or 1, got {self.label!r}")
        feats.flags.writeable = False
        mask.flags.writeable = False
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "mask", mask)

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    def check_kinematic_ranges(self):
        eta = self.features[:, ETA][self.mask[:, ETA]]
        phi = self.features[:, PHI][self.mask[:, PHI]]
        if np.any(np.abs(eta) > ETA_LIMIT) or np.any(np.abs(phi) > math.pi):
            raise InvariantError(f"graph {self.id}: eta/phi outside physical range")

    def with_label(self, label: int) -> "EventGraph":
        return EventGraph(self.id, self.features, self.mask, label)

    def __eq__(self, other):
        if not isinstance(other, EventGraph):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.mask, other.mask)
        )


@dataclass(frozen=True)
class FeatureStats:
    mean: tuple[float, ...]
    std: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered, immutable collection of event graphs.

    ``feature_stats`` is ``None`` for raw kinematics and holds the z-score
    parameters once :func:`standardize` has been applied.
    """

    graphs: tuple[EventGraph, ...]
    feature_stats: FeatureStats | None = None

    def __post_init__(self):
        graphs = tuple(self.graphs)
        object.__setattr__(self, "graphs", graphs)
        seen = set()
        for g in graphs:
            if g.id in seen:
                raise IntegrityError(f"duplicate graph id {g.id}")
            seen.add(g.id)
        if self.feature_stats is None:
            for g in graphs:
                g.check_kinematic_ranges()
        else:
            s = self.feature_stats
            if len(s.mean) != NUM_FEATURES or len(s.std) != NUM_FEATURES or min(s.std) <= 0:
                raise InvariantError(f"bad feature stats {s}")

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    @property
    def ids(self) -> list[int]:
        return [g.id for g in self.graphs]

    def index_of(self) -> dict[int, int]:
        return {g.id: i for i, g in enumerate(self.graphs)}

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.feature_stats == other.feature_stats and self.graphs == other.graphs


def normalized_adjacency(n: int) -> np.ndarray:
    """Symmetric-normalised adjacency D^-1/2 (A + I) D^-1/2 of the complete graph K_n."""
    if n < 1:
        raise ValueError(f"graph must have at least one node, got n={n}")
    a_hat = np.ones((n, n))
    deg = a_hat.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    return d_inv_sqrt[:, None] * a_hat * d_inv_sqrt[None, :]


# --- synthetic generator ------------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic event generator.

    ``class_shift`` moves signal events up in log-pT and log-ETmiss, in the
    same units as ``noise_scale`` (so ``class_shift / noise_scale`` is the
    per-object separation in standard deviations). Most of the noise is an
    event-level common mode shared by all objects, which keeps the classes
    overlapping even after averaging over nodes.
    """

    num_samples: int = 2000
    class_balance: float = 0.5
    class_shift: float = 1.0
    noise_scale: float = 1.0
    seven_node_prob: float = 0.5
    seed: int = 0

    def validate(self):
        bad = []
        if not isinstance(self.num_samples, int) or self.num_samples < 2:
            bad.append("num_samples")
        if not 0.0 < self.class_balance < 1.0:
            bad.append("class_balance")
        if not math.isfinite(self.class_shift):
            bad.append("class_shift")
        if not (math.isfinite(self.noise_scale) and self.noise_scale > 0):
            bad.append("noise_scale")
        if not 0.0 <= self.seven_node_prob <= 1.0:
            bad.append("seven_node_prob")
        if bad:
            raise ConfigError(f"invalid generator config field(s): {', '.join(bad)}")
        return self


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else (":" if ":" in line else None)
        if sep is None:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split(sep, 1))
        out[key.replace("-", "_")] = value
    return out


def coerce_fields(cls, values: dict[str, str], source: str = "<config>") -> dict:
    """Convert string values to the field types declared on dataclass ``cls``."""
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"{source}: unknown field {key!r}")
        default = known[key].default
        try:
            if isinstance(default, bool):
                out[key] = value.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                out[key] = int(value)
            elif isinstance(default, float):
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError:
            raise ConfigError(f"{source}: field {key!r} has invalid value {value!r}") from None
    return out


def load_generator_config(path) -> GeneratorConfig:
    path = Path(path)
    values = parse_kv_text(path.read_text(encoding="utf-8"), str(path))
    return GeneratorConfig(**coerce_fields(GeneratorConfig, values, str(path))).validate()


def save_generator_config(config: GeneratorConfig, path):
    lines = [f"{f.name} = {getattr(config, f.name)!r}" for f in fields(config)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def generate_synthetic(config: GeneratorConfig, seed: int | None = None) -> Dataset:
    """Draw a reproducible surrogate dataset; ``seed`` overrides ``config.seed``."""
    config.validate()
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    n = config.num_samples
    n_signal = round_half_up(config.class_balance * n)
    labels = np.zeros(n, dtype=np.int64)
    labels[:n_signal] = 1
    labels = rng.permutation(labels)

    graphs = []
    for gid in range(n):
        y = int(labels[gid])
        num_nodes = 7 if rng.random() < config.seven_node_prob else 6
        roles = roles_for(num_nodes)
        common = rng.standard_normal()
        own = rng.standard_normal(num_nodes)
        u = COMMON_MODE * common + math.sqrt(1.0 - COMMON_MODE**2) * own
        log_pt = LOG_PT_WIDTH * (y * config.class_shift + config.noise_scale * u)

        feats = np.zeros((num_nodes, NUM_FEATURES))
        for k, role in enumerate(roles):
            feats[k, PT] = ROLE_PT_SCALE[role] * math.exp(log_pt[k])
            feats[k, PHI] = rng.uniform(-math.pi, math.pi)
            if role != "energy":
                feats[k, ETA] = float(np.clip(rng.normal(0.0, 1.3), -4.5, 4.5))
            if role.startswith("jet"):
                feats[k, QUANTILE] = float(rng.integers(1, 6))
            elif role.startswith("b"):
                feats[k, QUANTILE] = float(rng.integers(3, 6))
                feats[k, MASS] = 10.0 * math.exp(0.3 * rng.standard_normal())
        graphs.append(EventGraph(gid, feats, role_mask(num_nodes), y))
    return Dataset(tuple(graphs))


def flip_labels(dataset: Dataset, indices, fraction: float, seed: int) -> tuple[Dataset, list[int]]:
    """Flip the labels of ``round(fraction * len(indices))`` randomly chosen samples.

    Returns the corrupted dataset and the sorted ids of the flipped graphs.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    indices = np.asarray(indices, dtype=np.int64)
    count = round_half_up(fraction * len(indices))
    rng = np.random.default_rng(seed)
    chosen = set(int(i) for i in rng.choice(indices, size=count, replace=False))
    graphs = [g.with_label(1 - g.label) if i in chosen else g for i, g in enumerate(dataset.graphs)]
    flipped = sorted(dataset.graphs[i].id for i in chosen)
    return Dataset(tuple(graphs), dataset.feature_stats), flipped


# --- preprocessing and splits -------------------------------------------------


def standardize(dataset: Dataset, fit_indices) -> Dataset:
    """Z-score every column using masked-in entries of ``fit_indices`` only.

    Columns with zero variance (or no masked-in entries) get std 1. Masked-out
    entries stay exactly 0.
    """
    fit_indices = list(fit_indices)
    if not fit_indices:
        raise ValueError("standardize needs a non-empty fit set")
    if dataset.feature_stats is not None:
        raise DatasetError("dataset is already standardized")
    feats = np.concatenate([dataset.graphs[i].features for i in fit_indices])
    mask = np.concatenate([dataset.graphs[i].mask for i in fit_indices])
    mean = np.zeros(NUM_FEATURES)
    std = np.ones(NUM_FEATURES)
    for c in range(NUM_FEATURES):
        col = feats[mask[:, c], c]
        if col.size == 0:
            continue
        mean[c] = col.mean()
        s = np.sqrt(np.mean((col - mean[c]) ** 2))
        if s > 1e-12 * max(1.0, abs(mean[c])):
            std[c] = s

    graphs = []
    for g in dataset.graphs:
        z = np.where(g.mask, (g.features - mean) / std, 0.0)
        graphs.append(EventGraph(g.id, z, g.mask, g.label))
    stats = FeatureStats(tuple(float(m) for m in mean), tuple(float(s) for s in std))
    return Dataset(tuple(graphs), stats)


def stratified_sample(indices, labels, frac: float, rng: np.random.Generator) -> list[int]:
    """Pick ``round(frac * len(indices))`` indices keeping per-class proportions.

    Per-class counts are apportioned by largest remainder, so each class is
    within one sample of its exact share. Returned sorted.
    """
    indices = np.asarray(indices, dtype=np.int64)
    labels = np.asarray(labels)
    total = round_half_up(frac * len(indices))
    classes = sorted(set(labels.tolist()))
    members = {c: indices[labels == c] for c in classes}
    quota = {c: frac * len(members[c]) for c in classes}
    counts = {c: int(math.floor(quota[c])) for c in classes}
    leftover = total - sum(counts.values())
    by_remainder = sorted(classes, key=lambda c: (-(quota[c] - counts[c]), c))
    for c in by_remainder[:max(leftover, 0)]:
        counts[c] += 1
    picked = []
    for c in classes:
        picked.extend(rng.permutation(members[c])[: counts[c]].tolist())
    return sorted(picked)


def split(dataset: Dataset, train_frac: float, seed: int) -> tuple[list[int], list[int]]:
    """Stratified, seeded train/test partition of dataset positions."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    rng = np.random.default_rng(seed)
    all_idx = np.arange(len(dataset))
    train = stratified_sample(all_idx, dataset.labels, train_frac, rng)
    train_set = set(train)
    test = [i for i in range(len(dataset)) if i not in train_set]
    return train, test


def random_subset(indices, labels, frac: float, seed: int, stratified: bool = True) -> list[int]:
    """Seeded subset of ``indices``; ``frac == 1`` returns them all, sorted."""
    if not 0.0 < frac <= 1.0:
        raise ValueError(f"subset fraction must be in (0, 1], got {frac}")
    indices = [int(i) for i in indices]
    if frac == 1.0:
        return sorted(indices)
    rng = np.random.default_rng(seed)
    if stratified:
        return stratified_sample(indices, labels, frac, rng)
    k = round_half_up(frac * len(indices))
    return sorted(int(i) for i in rng.choice(indices, size=k, replace=False))


# --- persistence --------------------------------------------------------------


def _graph_record(g: EventGraph) -> str:
    record = {
        "id": g.id,
        "num_nodes": g.num_nodes,
        "features": [float(x) for x in g.features.ravel()],
        "mask": [int(x) for x in g.mask.ravel()],
        "label": g.label,
    }
    return json.dumps(record, separators=(",", ":"))


def _stats_path(path: Path) -> Path:
    return path.with_name(path.name + ".stats.json")


def save_jsonl(dataset: Dataset, path):
    """Write one JSON object per graph.

    Standardization parameters, when present, go to a ``<path>.stats.json``
    sidecar so that loading restores the dataset exactly.
    """
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for g in dataset.graphs:
            fh.write(_graph_record(g) + "\n")
    sidecar = _stats_path(path)
    if dataset.feature_stats is not None:
        stats = dataset.feature_stats
        sidecar.write_text(json.dumps({"mean": stats.mean, "std": stats.std}), encoding="utf-8")
    elif sidecar.exists():
        sidecar.unlink()


def load_jsonl(path) -> Dataset:
    path = Path(path)
    graphs = []
    seen = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                gid = rec["id"]
                n = rec["num_nodes"]
                feats = rec["features"]
                mask = rec["mask"]
                label = rec["label"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"malformed record in {path}: {exc}", lineno) from None
            if not isinstance(gid, int) or not isinstance(n, int):
                raise ParseError("id and num_nodes must be integers", lineno)
            if n not in (6, 7):
                raise InvariantError(f"{path} line {lineno}: num_nodes must be 6 or 7, got {n}")
            if len(feats) != n * NUM_FEATURES or len(mask) != n * NUM_FEATURES:
                raise InvariantError(f"{path} line {lineno}: features/mask length does not match num_nodes={n}")
            if gid in seen:
                raise IntegrityError(f"{path} line {lineno}: duplicate id {gid}")
            seen.add(gid)
            try:
                graphs.append(
                    EventGraph(
                        gid,
                        np.array(feats, dtype=np.float64).reshape(n, NUM_FEATURES),
                        np.array(mask, dtype=bool).reshape(n, NUM_FEATURES),
                        label,
                    )
                )
            except InvariantError as exc:
                raise InvariantError(f"{path} line {lineno}: {exc}") from None
    stats = None
    sidecar = _stats_path(path)
    if sidecar.exists():
        raw = json.loads(sidecar.read_text(encoding="utf-8"))
        stats = FeatureStats(tuple(raw["mean"]), tuple(raw["std"]))
    return Dataset(tuple(graphs), stats)
