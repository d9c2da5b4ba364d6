import json
import math

import numpy as np
import pytest

from gnn_tracin.graph_data import (
    ConfigError,
    Dataset,
    EventGraph,
    GeneratorConfig,
    IntegrityError,
    InvariantError,
    ParseError,
    flip_labels,
    generate_synthetic,
    load_generator_config,
    load_jsonl,
    normalized_adjacency,
    random_subset,
    role_mask,
    save_generator_config,
    save_jsonl,
    split,
    standardize,
)
from gnn_tracin.metrics import auroc
from gnn_tracin.model import PackedGraphs
from gnn_tracin.trainer import TrainConfig, predict, train


def tiny_dataset(labels=(0, 1, 1)):
    graphs = []
    for gid, y in enumerate(labels):
        n = 6 + gid % 2
        mask = role_mask(n)
        feats = np.where(mask, (gid + 1) * 0.37 + np.arange(n * 6).reshape(n, 6) / 7.0, 0.0)
        feats[:, 2] = np.where(mask[:, 2], 0.1 * gid, 0.0)
        feats[:, 1] = np.where(mask[:, 1], -0.3, 0.0)
        graphs.append(EventGraph(gid, feats, mask, y))
    return Dataset(tuple(graphs))


# --- adjacency ---


def test_adjacency_single_node():
    assert np.array_equal(normalized_adjacency(1), [[1.0]])


def test_adjacency_two_nodes_by_hand():
    # A + I is all ones, both degrees are 2: entries 1 / sqrt(2 * 2)
    np.testing.assert_allclose(normalized_adjacency(2), [[0.5, 0.5], [0.5, 0.5]], rtol=0, atol=1e-15)


def test_adjacency_seven_nodes_uniform():
    a = normalized_adjacency(7)
    np.testing.assert_allclose(a, np.full((7, 7), 1 / 7), rtol=0, atol=1e-15)


@pytest.mark.parametrize("n", range(1, 17))
def test_adjacency_symmetric_doubly_stochastic(n):
    a = normalized_adjacency(n)
    assert np.array_equal(a, a.T)
    assert np.all(np.abs(a.sum(axis=0) - 1) <= 1e-12)
    assert np.all(np.abs(a.sum(axis=1) - 1) <= 1e-12)


def test_adjacency_rejects_empty_graph():
    with pytest.raises(ValueError):
        normalized_adjacency(0)


# --- event graphs ---


def test_masked_out_entries_must_be_zero():
    mask = role_mask(6)
    feats = np.ones((6, 6))
    with pytest.raises(InvariantError, match="masked-out"):
        EventGraph(0, feats, mask, 1)


@pytest.mark.parametrize("label", [2, -1])
def test_label_must_be_binary(label):
    with pytest.raises(InvariantError):
        EventGraph(0, np.zeros((6, 6)), role_mask(6), label)


def test_node_count_must_be_six_or_seven():
    with pytest.raises(InvariantError):
        EventGraph(0, np.zeros((5, 6)), np.zeros((5, 6), bool), 0)


def test_role_mask_layout():
    m = role_mask(7)
    assert m.sum(axis=1).tolist() == [4, 4, 4, 5, 5, 3, 2]
    assert m[-1].tolist() == [True, False, True, False, False, False]
    assert role_mask(6).shape == (6, 6)
    assert not role_mask(7)[:, 5].any()


# --- generator ---


def test_generator_is_byte_deterministic(tmp_path):
    cfg = GeneratorConfig(num_samples=100)
    save_jsonl(generate_synthetic(cfg, seed=42), tmp_path / "a.jsonl")
    save_jsonl(generate_synthetic(cfg, seed=42), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert generate_synthetic(cfg, seed=43) != generate_synthetic(cfg, seed=42)


def test_generator_honours_layout_and_ranges():
    ds = generate_synthetic(GeneratorConfig(num_samples=300), seed=1)
    assert len(ds) == 300
    assert ds.ids == list(range(300))
    assert {g.num_nodes for g in ds.graphs} == {6, 7}
    assert abs(ds.labels.mean() - 0.5) < 1e-12
    for g in ds.graphs:
        assert np.array_equal(g.mask, role_mask(g.num_nodes))
        phi = g.features[:, 2]
        eta = g.features[g.mask[:, 1], 1]
        assert np.all(np.abs(phi) <= math.pi) and np.all(np.abs(eta) <= 5)
        assert np.all(g.features[:, 0] > 0)


def test_generator_class_balance():
    ds = generate_synthetic(GeneratorConfig(num_samples=200, class_balance=0.25), seed=0)
    assert int(ds.labels.sum()) == 50


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"num_samples": 1}, "num_samples"),
        ({"class_balance": 1.0}, "class_balance"),
        ({"noise_scale": 0.0}, "noise_scale"),
        ({"seven_node_prob": 1.5}, "seven_node_prob"),
    ],
)
def test_generator_config_errors_name_field(kwargs, field):
    with pytest.raises(ConfigError, match=field):
        generate_synthetic(GeneratorConfig(**kwargs), seed=0)


def test_generator_config_file_round_trip(tmp_path):
    cfg = GeneratorConfig(num_samples=123, class_balance=0.4, class_shift=2.5, noise_scale=0.7, seed=9)
    save_generator_config(cfg, tmp_path / "gen.txt")
    assert load_generator_config(tmp_path / "gen.txt") == cfg


def test_generator_config_plain_key_values(tmp_path):
    path = tmp_path / "gen.txt"
    path.write_text("# surrogate\nnum_samples = 50\nclass_shift=3\nseed = 7\n")
    cfg = load_generator_config(path)
    assert (cfg.num_samples, cfg.class_shift, cfg.seed) == (50, 3.0, 7)


def threshold_sweep_auroc(scores, labels):
    """ROC area from an explicit sweep over every distinct threshold."""
    pos, neg = labels.sum(), (1 - labels).sum()
    pts = [(0.0, 0.0)]
    for t in sorted(set(scores.tolist()), reverse=True):
        pred = scores >= t
        pts.append((np.sum(pred & (labels == 0)) / neg, np.sum(pred & (labels == 1)) / pos))
    return sum((x1 - x0) * (y1 + y0) / 2 for (x0, y0), (x1, y1) in zip(pts, pts[1:]))


def test_large_shift_separable_by_mean_pt():
    ds = generate_synthetic(GeneratorConfig(num_samples=1000, class_shift=5.0), seed=3)
    mean_pt = np.array([g.features[:, 0].mean() for g in ds.graphs])
    assert threshold_sweep_auroc(mean_pt, ds.labels) > 0.95


def test_zero_shift_is_not_learnable():
    raw = generate_synthetic(GeneratorConfig(num_samples=4000, class_shift=0.0), seed=5)
    tr, te = split(raw, 0.5, 0)
    ds = standardize(raw, tr)
    packed = PackedGraphs(ds)
    result = train(TrainConfig(epochs=20, checkpoint_every=20, seed=0), ds, tr, packed)
    scores, _ = predict(result.params, ds, te, packed)
    assert abs(auroc(scores, ds.labels[te]) - 0.5) <= 0.05


# --- standardize ---


def test_standardize_fit_rows_have_unit_stats():
    ds = generate_synthetic(GeneratorConfig(num_samples=200), seed=2)
    fit = list(range(0, 200, 2))
    z = standardize(ds, fit)
    feats = np.concatenate([z.graphs[i].features for i in fit])
    mask = np.concatenate([z.graphs[i].mask for i in fit])
    for c in range(5):
        col = feats[mask[:, c], c]
        assert abs(col.mean()) <= 1e-9
        assert abs(col.std() - 1) <= 1e-9
    assert len(z.feature_stats.mean) == 6 and z.feature_stats.std[5] == 1.0
    for g_raw, g_z in zip(ds.graphs, z.graphs):
        assert np.all(g_z.features[~g_raw.mask] == 0.0)


def test_standardize_zero_variance_column_clamped():
    graphs = []
    for gid in range(4):
        mask = role_mask(6)
        feats = np.where(mask, float(gid), 0.0)
        feats[:, 3] = np.where(mask[:, 3], 5.0, 0.0)
        feats[:, 1] = feats[:, 2] = 0.0
        graphs.append(EventGraph(gid, feats, mask, gid % 2))
    z = standardize(Dataset(tuple(graphs)), range(4))
    assert z.feature_stats.std[3] == 1.0
    for g in z.graphs:
        assert np.all(g.features[:, 3] == 0.0)


def test_standardize_needs_fit_rows():
    with pytest.raises(ValueError):
        standardize(tiny_dataset(), [])


# --- splits ---


def test_split_sizes_and_partition():
    ds = generate_synthetic(GeneratorConfig(num_samples=100), seed=0)
    tr, te = split(ds, 0.8, seed=11)
    assert (len(tr), len(te)) == (80, 20)
    assert sorted(tr + te) == list(range(100))


def test_split_is_stratified():
    ds = generate_synthetic(GeneratorConfig(num_samples=100, class_balance=0.6), seed=0)
    tr, te = split(ds, 0.8, seed=4)
    labels = ds.labels
    assert abs(labels[tr].sum() - 0.6 * len(tr)) <= 1
    assert abs(labels[te].sum() - 0.6 * len(te)) <= 1


def test_split_deterministic():
    ds = generate_synthetic(GeneratorConfig(num_samples=100), seed=0)
    assert split(ds, 0.7, 3) == split(ds, 0.7, 3)
    assert split(ds, 0.7, 3) != split(ds, 0.7, 4)


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.2, 1.3])
def test_split_fraction_range(frac):
    with pytest.raises(ValueError):
        split(tiny_dataset(), frac, 0)


def test_random_subset_full_and_sizes():
    idx = list(range(10, 110))
    labels = np.array([i % 3 == 0 for i in idx], dtype=int)
    assert random_subset(idx, labels, 1.0, 0) == idx
    sub = random_subset(idx, labels, 0.35, 0)
    assert len(sub) == 35 and set(sub) <= set(idx)
    assert len(random_subset(idx, labels, 0.35, 0, stratified=False)) == 35


def test_flip_labels_count_and_scope():
    ds = generate_synthetic(GeneratorConfig(num_samples=100), seed=0)
    corrupted, flipped = flip_labels(ds, range(50), 0.1, seed=1)
    assert len(flipped) == 5 and all(f < 50 for f in flipped)
    changed = [g.id for g, h in zip(ds.graphs, corrupted.graphs) if g.label != h.label]
    assert changed == flipped


# --- persistence ---


def test_jsonl_round_trip(tmp_path):
    ds = tiny_dataset()
    save_jsonl(ds, tmp_path / "d.jsonl")
    assert load_jsonl(tmp_path / "d.jsonl") == ds
    first = json.loads((tmp_path / "d.jsonl").read_text().splitlines()[0])
    assert set(first) == {"id", "num_nodes", "features", "mask", "label"}


def test_jsonl_round_trip_exact_floats(tmp_path):
    ds = standardize(generate_synthetic(GeneratorConfig(num_samples=30), seed=8), range(20))
    save_jsonl(ds, tmp_path / "z.jsonl")
    assert load_jsonl(tmp_path / "z.jsonl") == ds


def test_jsonl_truncated_line(tmp_path):
    path = tmp_path / "d.jsonl"
    save_jsonl(tiny_dataset(), path)
    lines = path.read_text().splitlines()
    lines[1] = lines[1][: len(lines[1]) // 2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError, match="line 2") as info:
        load_jsonl(path)
    assert info.value.line == 2


def test_jsonl_rejects_five_nodes(tmp_path):
    rec = {"id": 0, "num_nodes": 5, "features": [0.0] * 30, "mask": [0] * 30, "label": 0}
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(InvariantError, match="num_nodes"):
        load_jsonl(path)


def test_jsonl_duplicate_id(tmp_path):
    path = tmp_path / "d.jsonl"
    save_jsonl(tiny_dataset(), path)
    text = path.read_text()
    path.write_text(text + text.splitlines()[0] + "\n")
    with pytest.raises(IntegrityError, match="duplicate"):
        load_jsonl(path)
