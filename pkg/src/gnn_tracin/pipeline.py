"""Experiment orchestration: full-set (FT), random-subset (RST) and
influence-filtered random-subset (IRST) training, seed sweeps and reports.

Every experiment starts from :func:`prepare_data`, which fixes one
standardised dataset and one train/test split. All modes, fractions and seeds
reuse that split, so they are all scored against the same test set.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .graph_data import (
    ConfigError,
    Dataset,
    GeneratorConfig,
    coerce_fields,
    flip_labels,
    generate_synthetic,
    load_jsonl,
    parse_kv_text,
    random_subset,
    split,
    standardize,
    _graph_record,
)
from .influence import InfluenceReport, filter_top, save_report_csv, score_dataset
from .metrics import METRIC_NAMES, MetricsReport, aggregate, evaluate
from .model import PackedGraphs
from .trainer import TrainConfig, TrainResult, predict, save_checkpoints, train

log = logging.getLogger(__name__)

MODES = ("FT", "RST", "IRST")
TRAIN_FRACTIONS = (0.95, 0.90, 0.80, 0.50, 0.20, 0.10, 0.05)
INFLUENCE_FRACTIONS = (1.0, 0.80, 0.50, 0.20)
DEFAULT_SEEDS = (0, 1, 2, 3)

# RNG stream ids mixed with a seed so unrelated draws never share a stream
SUBSET_STREAM = 2
CORRUPTION_STREAM = 3

RESULT_COLUMNS = ("mode", "train_frac", "influence_frac", "seed", *METRIC_NAMES, "status")


# --- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "FT"
    train_frac: float | None = None
    influence_frac: float | None = None
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    train: TrainConfig = field(default_factory=TrainConfig)
    data_path: str | None = None
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    test_frac: float = 0.2
    split_seed: int = 0
    label_noise: float = 0.0
    stratified: bool = True
    irst_init: str = "fresh"

    def __post_init__(self):
        object.__setattr__(self, "mode", self.mode.upper())
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        needs_train = self.mode in ("RST", "IRST")
        needs_infl = self.mode == "IRST"
        if needs_train != (self.train_frac is not None):
            raise ConfigError(f"train_frac is {'required' if needs_train else 'not allowed'} for mode {self.mode}")
        if needs_infl != (self.influence_frac is not None):
            raise ConfigError(f"influence_frac is {'required' if needs_infl else 'not allowed'} for mode {self.mode}")
        for name in ("train_frac", "influence_frac"):
            value = getattr(self, name)
            if value is not None and not 0.0 < value <= 1.0:
                raise ConfigError(f"{name} must be in (0, 1], got {value}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not 0.0 < self.test_frac < 1.0:
            raise ConfigError(f"test_frac must be in (0, 1), got {self.test_frac}")
        if not 0.0 <= self.label_noise < 1.0:
            raise ConfigError(f"label_noise must be in [0, 1), got {self.label_noise}")
        if self.irst_init not in ("fresh", "finetune"):
            raise ConfigError(f"irst_init must be 'fresh' or 'finetune', got {self.irst_init!r}")

    @property
    def effective_frac(self) -> float:
        return (self.train_frac or 1.0) * (self.influence_frac or 1.0)

    def with_mode(self, mode: str, train_frac=None, influence_frac=None) -> "ExperimentConfig":
        return replace(self, mode=mode, train_frac=train_frac, influence_frac=influence_frac)

    def data_key(self) -> str:
        """Identity of the prepared dataset: source, split and corruption settings."""
        src = {"path": self.data_path} if self.data_path else asdict(self.generator)
        blob = json.dumps(
            [src, self.test_frac, self.split_seed, self.label_noise], sort_keys=True, default=str
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_kv(self) -> str:
        lines = [
            f"mode = {self.mode}",
            f"train_frac = {'' if self.train_frac is None else self.train_frac!r}",
            f"influence_frac = {'' if self.influence_frac is None else self.influence_frac!r}",
            f"seeds = {','.join(str(s) for s in self.seeds)}",
        ]
        lines += [f"{f.name} = {getattr(self.train, f.name)!r}" for f in fields(TrainConfig) if f.name != "seed"]
        if self.data_path:
            lines.append(f"data = {self.data_path}")
        for f in fields(GeneratorConfig):
            key = "data_seed" if f.name == "seed" else f.name
            lines.append(f"{key} = {getattr(self.generator, f.name)!r}")
        lines += [
            f"test_frac = {self.test_frac!r}",
            f"split_seed = {self.split_seed}",
            f"label_noise = {self.label_noise!r}",
            f"stratified = {self.stratified}",
            f"irst_init = {self.irst_init}",
        ]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepConfig:
    base: ExperimentConfig
    modes: tuple[str, ...] = MODES
    train_fracs: tuple[float, ...] = TRAIN_FRACTIONS
    influence_fracs: tuple[float, ...] = INFLUENCE_FRACTIONS

    def cells(self) -> list[ExperimentConfig]:
        """Every (mode, fraction) combination, in a fixed order."""
        cells = []
        for mode in self.modes:
            mode = mode.upper()
            if mode == "FT":
                cells.append(self.base.with_mode("FT"))
            elif mode == "RST":
                cells += [self.base.with_mode("RST", tf) for tf in self.train_fracs]
            elif mode == "IRST":
                cells += [
                    self.base.with_mode("IRST", tf, inf) for tf in self.train_fracs for inf in self.influence_fracs
                ]
            else:
                raise ConfigError(f"unknown mode {mode!r} in sweep")
        if not cells:
            raise ConfigError("sweep matrix is empty")
        return cells


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in value.replace(" ", "").split(",") if v)


def _ints(value: str) -> tuple[int, ...]:
    return tuple(int(v) for v in value.replace(" ", "").split(",") if v)


def _optional_float(value):
    if value is None or value == "" or str(value).lower() == "none":
        return None
    return float(value)


def config_from_mapping(values: dict) -> SweepConfig:
    """Build a sweep (whose ``base`` is a single experiment) from flat key-values.

    Values may be strings, as read from a config file, or already typed, as
    passed from CLI flags.
    """
    values = {k.replace("-", "_"): v for k, v in values.items() if v is not None}
    train_kw = coerce_fields(TrainConfig, {k: str(values.pop(k)) for k in list(values) if k in _TRAIN_KEYS})
    gen_raw = {("seed" if k == "data_seed" else k): str(values.pop(k)) for k in list(values) if k in _GEN_KEYS}
    gen_kw = coerce_fields(GeneratorConfig, gen_raw)

    def pop(key, conv, default):
        if key not in values:
            return default
        raw = values.pop(key)
        return conv(raw) if isinstance(raw, str) else raw

    seeds = pop("seeds", _ints, DEFAULT_SEEDS)
    if "seed" in values:
        seeds = (int(values.pop("seed")),)
    base = dict(
        mode=str(pop("mode", str, "FT")),
        train_frac=_optional_float(values.pop("train_frac", None)),
        influence_frac=_optional_float(values.pop("influence_frac", None)),
        seeds=seeds,
        train=TrainConfig(**train_kw),
        data_path=pop("data", str, None),
        generator=GeneratorConfig(**gen_kw).validate(),
        test_frac=float(pop("test_frac", float, 0.2)),
        split_seed=int(pop("split_seed", int, 0)),
        label_noise=float(pop("label_noise", float, 0.0)),
        stratified=pop("stratified", lambda s: s.lower() in ("1", "true", "yes", "on"), True),
        irst_init=str(pop("irst_init", str, "fresh")),
    )
    modes = pop("modes", lambda s: tuple(m.strip().upper() for m in s.split(",") if m.strip()), None)
    train_fracs = pop("train_fracs", _floats, None)
    influence_fracs = pop("influence_fracs", _floats, None)
    values.pop("out_dir", None)
    if values:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(values))}")

    # a single-experiment config leaves mode-specific fractions unset for FT
    if base["mode"].upper() == "FT":
        base["train_frac"] = base["influence_frac"] = None
    elif base["mode"].upper() == "RST":
        base["influence_frac"] = None
    experiment = ExperimentConfig(**base)
    return SweepConfig(
        experiment,
        modes=modes or MODES,
        train_fracs=train_fracs or TRAIN_FRACTIONS,
        influence_fracs=influence_fracs or INFLUENCE_FRACTIONS,
    )


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
_GEN_KEYS = ({f.name for f in fields(GeneratorConfig)} - {"seed"}) | {"data_seed"}


def load_config(path, overrides: dict | None = None) -> SweepConfig:
    values = {}
    if path is not None:
        path = Path(path)
        values = parse_kv_text(path.read_text(encoding="utf-8"), str(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(values)


# --- data preparation ---------------------------------------------------------


@dataclass
class PreparedData:
    dataset: Dataset
    train_idx: list[int]
    test_idx: list[int]
    flipped_ids: list[int]
    digest: str
    packed: PackedGraphs = field(repr=False, default=None)

    def __post_init__(self):
        if self.packed is None:
            self.packed = PackedGraphs(self.dataset)


def dataset_digest(dataset: Dataset) -> str:
    h = hashlib.sha256()
    for g in dataset.graphs:
        h.update(_graph_record(g).encode())
        h.update(b"\n")
    return h.hexdigest()


def load_or_generate(config: ExperimentConfig) -> Dataset:
    if config.data_path:
        return load_jsonl(config.data_path)
    return generate_synthetic(config.generator)


def prepare_data(config: ExperimentConfig, raw: Dataset | None = None) -> PreparedData:
    """Split, standardise on the training side and optionally corrupt training labels.

    Label corruption only touches the training split; test labels stay clean.
    """
    raw = raw if raw is not None else load_or_generate(config)
    digest = dataset_digest(raw)
    train_idx, test_idx = split(raw, 1.0 - config.test_frac, config.split_seed)
    dataset = raw if raw.feature_stats is not None else standardize(raw, train_idx)
    flipped = []
    if config.label_noise > 0:
        dataset, flipped = flip_labels(dataset, train_idx, config.label_noise, [config.split_seed, CORRUPTION_STREAM])
    return PreparedData(dataset, train_idx, test_idx, flipped, digest)


# --- single runs --------------------------------------------------------------


@dataclass
class RunResult:
    mode: str
    train_frac: float | None
    influence_frac: float | None
    seed: int
    final: MetricsReport
    best_epoch: int
    best: MetricsReport
    per_checkpoint: dict[int, MetricsReport]
    train_ids: list[int]
    subset_ids: list[int]
    loss_history: list[float]
    influence: InfluenceReport | None = None

    def metrics_json(self) -> dict:
        return {
            "mode": self.mode,
            "train_frac": self.train_frac,
            "influence_frac": self.influence_frac,
            "seed": self.seed,
            "train_size": len(self.train_ids),
            "final_epoch": self.final.to_dict(),
            "best_checkpoint": {
                "selection": "checkpoint with the highest test accuracy",
                "epoch": self.best_epoch,
                **self.best.to_dict(),
            },
            "per_checkpoint": {str(e): m.values() for e, m in self.per_checkpoint.items()},
        }


def _fit_and_evaluate(config: ExperimentConfig, data: PreparedData, seed: int, indices, init=None):
    truths = data.dataset.labels[data.test_idx]

    def evaluate_at(epoch, params):
        scores, preds = predict(params, data.dataset, data.test_idx, data.packed)
        return evaluate(scores, preds, truths)

    result = train(replace(config.train, seed=seed), data.dataset, indices, data.packed, evaluate_at, init)
    return result, result.evaluations[result.checkpoints[-1].epoch]


def _best(per_checkpoint: dict[int, MetricsReport]) -> tuple[int, MetricsReport]:
    epoch = max(per_checkpoint, key=lambda e: (per_checkpoint[e].accuracy, -e))
    return epoch, per_checkpoint[epoch]


def run_once(config: ExperimentConfig, data: PreparedData, seed: int, out_dir=None) -> RunResult:
    """One training run (both IRST stages for IRST) for one seed."""
    ds = data.dataset
    labels = ds.labels
    if config.mode == "FT":
        subset = sorted(data.train_idx)
    else:
        subset = random_subset(
            data.train_idx, labels[data.train_idx], config.train_frac, [seed, SUBSET_STREAM], config.stratified
        )

    stage1, metrics = _fit_and_evaluate(config, data, seed, subset)
    final_result: TrainResult = stage1
    train_indices = subset
    report = None
    if config.mode == "IRST":
        report = score_dataset(stage1.checkpoints, ds, subset, data.packed)
        position = ds.index_of()
        train_indices = sorted(position[i] for i in filter_top(report, config.influence_frac))
        init = stage1.params if config.irst_init == "finetune" else None
        final_result, metrics = _fit_and_evaluate(config, data, seed, train_indices, init)

    best_epoch, best = _best(final_result.evaluations)
    run = RunResult(
        mode=config.mode,
        train_frac=config.train_frac,
        influence_frac=config.influence_frac,
        seed=seed,
        final=metrics,
        best_epoch=best_epoch,
        best=best,
        per_checkpoint=final_result.evaluations,
        train_ids=[ds.graphs[i].id for i in train_indices],
        subset_ids=[ds.graphs[i].id for i in subset],
        loss_history=final_result.loss_history,
        influence=report,
    )
    if out_dir is not None:
        _persist_run(config, run, stage1, final_result, Path(out_dir))
    return run


def run_dir(root, config: ExperimentConfig, seed: int) -> Path:
    tf = "1" if config.train_frac is None else f"{config.train_frac:g}"
    inf = "none" if config.influence_frac is None else f"{config.influence_frac:g}"
    return Path(root) / "runs" / config.mode / f"{tf}_{inf}" / str(seed)


def _write_loss_csv(path: Path, history):
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, value in enumerate(history, 1):
            writer.writerow([epoch, repr(value)])


def _persist_run(config, run: RunResult, stage1: TrainResult, final: TrainResult, root: Path):
    d = run_dir(root, config, run.seed)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.txt").write_text(replace(config, seeds=(run.seed,)).to_kv(), encoding="utf-8")
    indices = {"subset_ids": run.subset_ids, "train_ids": run.train_ids}
    (d / "indices.json").write_text(json.dumps(indices), encoding="utf-8")
    train_cfg = replace(config.train, seed=run.seed)
    save_checkpoints(stage1.checkpoints, d / "checkpoints", train_cfg)
    if config.mode == "IRST":
        save_checkpoints(final.checkpoints, d / "checkpoints_final", train_cfg)
        save_report_csv(run.influence, d / "influence.csv")
    _write_loss_csv(d / "loss.csv", run.loss_history)
    (d / "metrics.json").write_text(json.dumps(run.metrics_json(), indent=1), encoding="utf-8")


def load_run_indices(root, config: ExperimentConfig, seed: int) -> dict:
    return json.loads((run_dir(root, config, seed) / "indices.json").read_text(encoding="utf-8"))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunResult]
    aggregate: MetricsReport | None
    best_aggregate: MetricsReport | None


def run_experiment(config: ExperimentConfig, data: PreparedData | None = None, out_dir=None) -> ExperimentResult:
    """Run ``config.mode`` for every seed and aggregate the final-epoch metrics."""
    data = data if data is not None else prepare_data(config)
    runs = [run_once(config, data, seed, out_dir) for seed in config.seeds]
    agg = aggregate([r.final for r in runs]) if len(runs) > 1 else None
    best = aggregate([r.best for r in runs]) if len(runs) > 1 else None
    result = ExperimentResult(config, runs, agg, best)
    if out_dir is not None and agg is not None:
        cell = run_dir(out_dir, config, 0).parent
        summary = {"final_epoch": agg.to_dict(), "best_checkpoint": best.to_dict(), "seeds": list(config.seeds)}
        (cell / "aggregate.json").write_text(json.dumps(summary, indent=1), encoding="utf-8")
    return result


def run_ft(config: ExperimentConfig, data: PreparedData | None = None, out_dir=None) -> ExperimentResult:
    return run_experiment(config.with_mode("FT"), data, out_dir)


def run_rst(config: ExperimentConfig, data: PreparedData | None = None, out_dir=None) -> ExperimentResult:
    if config.train_frac is None:
        raise ConfigError("RST needs train_frac")
    return run_experiment(config.with_mode("RST", config.train_frac), data, out_dir)


def run_irst(config: ExperimentConfig, data: PreparedData | None = None, out_dir=None) -> ExperimentResult:
    if config.train_frac is None or config.influence_frac is None:
        raise ConfigError("IRST needs both train_frac and influence_frac")
    return run_experiment(config.with_mode("IRST", config.train_frac, config.influence_frac), data, out_dir)


# --- sweeps and reports -------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _row(cell: ExperimentConfig, seed: int, report: MetricsReport | None, status: str) -> dict:
    row = {
        "mode": cell.mode,
        "train_frac": _fmt(cell.train_frac if cell.train_frac is not None else 1.0),
        "influence_frac": _fmt(cell.influence_frac),
        "seed": str(seed),
        "status": status,
    }
    for name in METRIC_NAMES:
        row[name] = _fmt(getattr(report, name)) if report is not None else ""
    return row


_worker_data: dict = {}


def _sweep_job(args):
    cell, seed, out_dir = args
    key = cell.data_key()
    if key not in _worker_data:
        _worker_data.clear()
        _worker_data[key] = prepare_data(cell)
    try:
        run = run_once(replace(cell, seeds=(seed,)), _worker_data[key], seed, out_dir)
    except Exception as exc:  # a failed run becomes a row, the sweep goes on
        log.warning("run %s/%s/%s seed %d failed: %s", cell.mode, cell.train_frac, cell.influence_frac, seed, exc)
        return _row(cell, seed, None, f"error: {type(exc).__name__}: {exc}")
    return _row(cell, seed, run.final, "ok")


def write_csv(path, rows, columns):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def aggregate_rows(rows) -> list[dict]:
    """Collapse per-seed result rows into mean/std rows, one per (mode, fractions) cell."""
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        cells.setdefault((row["mode"], row["train_frac"], row["influence_frac"]), []).append(row)
    out = []
    for (mode, tf, inf), members in cells.items():
        agg = {"mode": mode, "train_frac": tf, "influence_frac": inf, "n": str(len(members))}
        for name in METRIC_NAMES:
            vals = np.array([float(r[name]) for r in members])
            agg[f"{name}_mean"] = repr(float(vals.mean()))
            agg[f"{name}_std"] = repr(float(vals.std(ddof=1))) if len(vals) > 1 else ""
        out.append(agg)
    return out


AGGREGATE_COLUMNS = (
    "mode",
    "train_frac",
    "influence_frac",
    "n",
    *(f"{m}_{s}" for m in METRIC_NAMES for s in ("mean", "std")),
)


def sweep(matrix: SweepConfig, out_dir, workers: int = 1, raw: Dataset | None = None) -> list[dict]:
    """Run every cell of ``matrix`` for every seed; write results.csv and aggregate.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = matrix.cells()
    base = matrix.base
    data = prepare_data(base, raw)
    _worker_data.clear()
    _worker_data[base.data_key()] = data
    manifest = {
        "config": base.to_kv(),
        "modes": list(matrix.modes),
        "train_fracs": list(matrix.train_fracs),
        "influence_fracs": list(matrix.influence_fracs),
        "seeds": list(base.seeds),
        "dataset_sha256": data.digest,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    jobs = [(cell, seed, out_dir) for cell in cells for seed in base.seeds]
    if workers > 1 and raw is None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(job) for job in jobs]
    write_csv(out_dir / "results.csv", rows, RESULT_COLUMNS)
    write_csv(out_dir / "aggregate.csv", aggregate_rows(rows), AGGREGATE_COLUMNS)
    return rows


def plot_profiles(aggregate_csv, out_dir, metrics=("auroc", "f1")) -> list[Path]:
    """Metric-vs-train-fraction SVG line charts, one series per mode/influence fraction."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_csv(aggregate_csv)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in metrics:
        fig, ax = plt.subplots(figsize=(6, 4))
        series: dict[str, list[tuple[float, float, float]]] = {}
        for r in rows:
            label = r["mode"] if not r["influence_frac"] else f"IRST keep {float(r['influence_frac']):g}"
            std = float(r[f"{metric}_std"]) if r[f"{metric}_std"] else 0.0
            series.setdefault(label, []).append((float(r["train_frac"]), float(r[f"{metric}_mean"]), std))
        for label in sorted(series):
            pts = sorted(series[label])
            xs, ys, es = (np.array(v) for v in zip(*pts))
            if label == "FT":
                ax.axhline(ys[0], linestyle="--", color="gray", label="FT")
            else:
                ax.errorbar(xs * 100, ys, yerr=es, marker="o", capsize=3, label=label)
        ax.set_xlabel("% of training set (random subset)")
        ax.set_ylabel(metric.upper() if metric == "auroc" else metric.capitalize())
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        path = out_dir / f"{metric}_profile.svg"
        plt.rcParams["svg.hashsalt"] = "gnn-tracin"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written


def report(results_csv, out_dir, svg: bool = True) -> list[Path]:
    """Rebuild aggregate.csv (and optional SVG profiles) from a results.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agg_path = out_dir / "aggregate.csv"
    write_csv(agg_path, aggregate_rows(read_csv(results_csv)), AGGREGATE_COLUMNS)
    written = [agg_path]
    if svg:
        written += plot_profiles(agg_path, out_dir)
    return written


def fraction_label(x: float | None) -> str:
    return "-" if x is None else f"{x * 100:g}"


def summarize(result: ExperimentResult) -> str:
    """Table-style one-liner: mode, fractions, mean ± std of every metric (in %)."""
    cfg = result.config
    agg = result.aggregate
    total = fraction_label(cfg.effective_frac)
    head = f"{cfg.mode:5s} train {fraction_label(cfg.train_frac):>4s} infl {fraction_label(cfg.influence_frac):>4s} total {total:>4s}"
    if agg is None:
        vals = result.runs[0].final
        return head + " " + " ".join(f"{m}={getattr(vals, m) * 100:.2f}" for m in METRIC_NAMES)
    parts = []
    for m in METRIC_NAMES:
        parts.append(f"{m}={getattr(agg, m) * 100:.2f}±{agg.std[m] * 100:.2f}")
    return head + " " + " ".join(parts)

