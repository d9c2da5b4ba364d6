"""Command-line entry point: ``gnn-tracin <command> [options]``.

The manual IRST flow is ``train`` -> ``influence`` -> ``filter`` ->
``train --indices kept.json`` -> ``evaluate``; ``run`` and ``sweep`` do the
same end to end.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .graph_data import GeneratorConfig, coerce_fields, generate_synthetic, parse_kv_text, random_subset, save_jsonl
from .influence import filter_top, load_report_csv, save_report_csv, score_dataset
from .metrics import evaluate as evaluate_metrics
from .pipeline import SUBSET_STREAM, _write_loss_csv, load_config, prepare_data, report, run_experiment, summarize, sweep
from .trainer import load_checkpoints, predict, save_checkpoints, train

log = logging.getLogger("gnn_tracin")


def _experiment_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="key = value experiment config file")
    p.add_argument("--data", help="dataset JSONL (default: synthetic generator settings from the config)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--mode", choices=["FT", "RST", "IRST", "ft", "rst", "irst"])
    p.add_argument("--train-frac", type=float)
    p.add_argument("--influence-frac", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--label-noise", type=float, help="fraction of training labels to flip")
    p.add_argument("--out-dir", type=Path, default=Path("out"))


def _overrides(args) -> dict:
    keys = (
        "data",
        "seed",
        "mode",
        "train_frac",
        "influence_frac",
        "epochs",
        "checkpoint_every",
        "hidden",
        "lr",
        "weight_decay",
        "batch_size",
        "label_noise",
    )
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def cmd_generate(args):
    values = {}
    if args.config:
        values = parse_kv_text(args.config.read_text(encoding="utf-8"), str(args.config))
    for key in ("num_samples", "class_balance", "class_shift", "noise_scale", "seven_node_prob", "seed"):
        if getattr(args, key) is not None:
            values[key] = str(getattr(args, key))
    gen = GeneratorConfig(**coerce_fields(GeneratorConfig, values)).validate()
    dataset = generate_synthetic(gen)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_jsonl(dataset, args.out)
    print(f"wrote {len(dataset)} graphs to {args.out}")


def cmd_train(args):
    config = load_config(args.config, _overrides(args)).base
    seed = config.seeds[0]
    data = prepare_data(config)
    if args.indices:
        position = data.dataset.index_of()
        ids = json.loads(args.indices.read_text(encoding="utf-8"))["train_ids"]
        indices = sorted(position[i] for i in ids)
    elif config.mode == "FT":
        indices = sorted(data.train_idx)
    else:
        labels = data.dataset.labels[data.train_idx]
        indices = random_subset(data.train_idx, labels, config.train_frac, [seed, SUBSET_STREAM], config.stratified)
    train_cfg = replace(config.train, seed=seed)
    result = train(train_cfg, data.dataset, indices, data.packed)
    out = args.out_dir
    save_checkpoints(result.checkpoints, out / "checkpoints", train_cfg)
    ids = [data.dataset.graphs[i].id for i in indices]
    (out / "indices.json").write_text(json.dumps({"train_ids": ids}), encoding="utf-8")
    _write_loss_csv(out / "loss.csv", result.loss_history)
    print(f"trained on {len(indices)} samples, {len(result.checkpoints)} checkpoints in {out / 'checkpoints'}")


def cmd_influence(args):
    config = load_config(args.config, _overrides(args)).base
    data = prepare_data(config)
    run = args.out_dir
    checkpoints = load_checkpoints(run / "checkpoints")
    ids = json.loads((run / "indices.json").read_text(encoding="utf-8"))["train_ids"]
    position = data.dataset.index_of()
    rep = score_dataset(checkpoints, data.dataset, [position[i] for i in ids], data.packed, workers=args.workers)
    save_report_csv(rep, run / "influence.csv")
    print(f"scored {len(ids)} samples over {len(checkpoints)} checkpoints -> {run / 'influence.csv'}")


def cmd_filter(args):
    rep = load_report_csv(args.influence)
    kept = filter_top(rep, args.influence_frac)
    args.out.write_text(json.dumps({"train_ids": kept}), encoding="utf-8")
    print(f"kept {len(kept)} of {len(rep.sample_ids)} samples -> {args.out}")


def cmd_evaluate(args):
    config = load_config(args.config, _overrides(args)).base
    data = prepare_data(config)
    final = load_checkpoints(args.out_dir / "checkpoints")[-1]
    scores, preds = predict(final.params, data.dataset, data.test_idx, data.packed)
    metrics = evaluate_metrics(scores, preds, data.dataset.labels[data.test_idx])
    payload = {"epoch": final.epoch, **metrics.to_dict()}
    (args.out_dir / "metrics.json").write_text(json.dumps(payload, indent=1), encoding="utf-8")
    print(json.dumps(metrics.values()))


def cmd_run(args):
    config = load_config(args.config, _overrides(args)).base
    result = run_experiment(config, out_dir=args.out_dir)
    print(summarize(result))


def cmd_sweep(args):
    matrix = load_config(args.config, _overrides(args))
    if args.modes:
        matrix = replace(matrix, modes=tuple(m.upper() for m in args.modes.split(",")))
    if args.train_fracs:
        matrix = replace(matrix, train_fracs=tuple(float(x) for x in args.train_fracs.split(",")))
    if args.influence_fracs:
        matrix = replace(matrix, influence_fracs=tuple(float(x) for x in args.influence_fracs.split(",")))
    rows = sweep(matrix, args.out_dir, workers=args.workers)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} runs ({failed} failed) -> {args.out_dir / 'results.csv'}")


def cmd_report(args):
    for path in report(args.results, args.out_dir, svg=not args.no_svg):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnn-tracin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic event dataset")
    p.add_argument("--config", type=Path, help="generator key = value file")
    p.add_argument("--num-samples", type=int)
    p.add_argument("--class-balance", type=float)
    p.add_argument("--class-shift", type=float)
    p.add_argument("--noise-scale", type=float)
    p.add_argument("--seven-node-prob", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one seed and save checkpoints")
    _experiment_flags(p)
    p.add_argument("--indices", type=Path, help="JSON with train_ids to train on (e.g. output of filter)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("influence", help="self-influence of the trained samples in --out-dir")
    _experiment_flags(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("filter", help="drop the highest self-influence samples")
    p.add_argument("--influence", type=Path, required=True, help="influence CSV (id,score,rank)")
    p.add_argument("--influence-frac", type=float, required=True, help="fraction of samples to keep")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("evaluate", help="test metrics of the last checkpoint in --out-dir")
    _experiment_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="one experiment over all configured seeds")
    _experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="modes x fractions x seeds matrix")
    _experiment_flags(p)
    p.add_argument("--modes", help="comma list, e.g. FT,RST,IRST")
    p.add_argument("--train-fracs", help="comma list of random-subset fractions")
    p.add_argument("--influence-fracs", help="comma list of influence keep fractions")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate.csv and SVG profiles from results.csv")
    p.add_argument("--results", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = getattr(args, "out_dir", None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    try:
        args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
