"""Prototype-based learners: Kohonen SOM (KO), LVQ1 and the online fuzzy c-means map (CM)."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .base import SupervisedModel, TrainingSet, UnsupervisedModel, epoch_orders, spread_init


def _as_data(data) -> np.ndarray:
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("data must be a non-empty (samples, n) array")
    return data


def train_som(data, m: int, iters: int = 200, eta0: float = 0.1, seed: int = 0) -> UnsupervisedModel:
    """1-D Kohonen chain of ``m`` nodes.

    The winner and, during the first half of training, its chain neighbours move
    toward each sample; ``iters`` counts epochs.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    data = _as_data(data)
    nodes = spread_init(data, m)
    order = epoch_orders(data.shape[0], iters, np.random.default_rng(seed))
    if iters > 0:
        _kernels.som_1d(data, nodes, order, float(eta0))
    return UnsupervisedModel("KO", nodes)


def train_lvq(ts: TrainingSet, iters: int = 200, eta0: float = 0.1, seed: int = 0) -> SupervisedModel:
    """LVQ1 with one codebook per class, seeded from a random sample of that class."""
    rng = np.random.default_rng(seed)
    codebooks = np.empty((ts.class_count, ts.dim))
    for c in range(ts.class_count):
        members = np.flatnonzero(ts.y == c)
        if members.size == 0:
            raise ValueError(f"class {c} has no samples")
        codebooks[c] = ts.X[rng.choice(members)]
    order = epoch_orders(len(ts.y), iters, rng)
    if iters > 0:
        _kernels.lvq1(np.ascontiguousarray(ts.X), ts.y, codebooks,
                      np.arange(ts.class_count, dtype=np.int64), order, float(eta0))
    return SupervisedModel("LVQ", {"codebooks": codebooks}, ts.class_count)


def lvq_step(codebooks: np.ndarray, code_labels, x, label: int, eta: float) -> np.ndarray:
    """A single LVQ1 update, returning new codebooks."""
    out = np.array(codebooks, dtype=np.float64)
    _kernels.lvq1(np.atleast_2d(np.asarray(x, dtype=np.float64)), np.array([label], dtype=np.int64), out,
                  np.asarray(code_labels, dtype=np.int64), np.zeros((1, 1), dtype=np.int64), float(eta))
    return out


def fcm_memberships(x, centers: np.ndarray, fuzzifier: float = 2.0) -> np.ndarray:
    u = np.empty(centers.shape[0])
    _kernels.fuzzy_memberships(np.asarray(x, dtype=np.float64), np.ascontiguousarray(centers, dtype=np.float64),
                               float(fuzzifier), u)
    return u


def train_fcm(data, m: int, iters: int = 200, eta0: float = 0.1, fuzzifier: float = 2.0,
              seed: int = 0) -> UnsupervisedModel:
    """Online fuzzy c-means: every center moves by eta * u_k**fuzzifier * (x - center_k)."""
    if m < 2:
        raise ValueError("fuzzy c-means needs at least two centers")
    if fuzzifier <= 1:
        raise ValueError("fuzzifier must exceed 1")
    data = _as_data(data)
    centers = spread_init(data, m)
    order = epoch_orders(data.shape[0], iters, np.random.default_rng(seed))
    if iters > 0:
        _kernels.online_fcm(data, centers, order, float(eta0), float(fuzzifier))
    return UnsupervisedModel("CM", centers, float(fuzzifier))
