"""Random instance builders shared by the test modules."""

import numpy as np

from gnn_tracin.graph_data import EventGraph, role_mask
from gnn_tracin.model import ModelParams


def random_params(rng, hidden, scale=1.0):
    return ModelParams(
        scale * rng.normal(size=(6, hidden)),
        scale * rng.normal(size=hidden),
        scale * rng.normal(size=(hidden, hidden)) / np.sqrt(hidden),
        scale * rng.normal(size=hidden),
        scale * rng.normal(size=(hidden, 2)),
        scale * rng.normal(size=2),
    )


def random_graph(rng, n, gid=0, label=None):
    mask = role_mask(n)
    feats = np.where(mask, rng.normal(size=(n, 6)), 0.0)
    if label is None:
        label = int(rng.integers(0, 2))
    return EventGraph(gid, feats, mask, label)
