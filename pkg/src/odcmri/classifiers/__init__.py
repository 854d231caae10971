"""Comparison classifiers and the shared per-pixel decision rule."""

from __future__ import annotations

import numpy as np

from ..image_model import LabelMap, MultispectralImage
from ..morphology import wang_fidelity
from .base import (
    SUPERVISED_KINDS,
    UNSUPERVISED_KINDS,
    DivergedError,
    SupervisedModel,
    TrainingSet,
    UnsupervisedModel,
    extract_training_set,
    load_model,
    model_from_dict,
    read_training_csv,
    save_model,
    write_training_csv,
)
from .competitive import fcm_memberships, lvq_step, train_fcm, train_lvq, train_som
from .networks import mlp_forward, mlp_gradients, mlp_loss, rbf_basis, rbf_outputs, train_mlp, train_rbf
from .polynomial import expand_polynomial, polynomial_outputs, polynomial_terms, train_polynomial

__all__ = [
    "SUPERVISED_KINDS", "UNSUPERVISED_KINDS", "DivergedError", "SupervisedModel", "TrainingSet",
    "UnsupervisedModel", "classify", "classify_vectors", "discriminants", "expand_polynomial",
    "extract_training_set", "fcm_memberships", "load_model", "lvq_step", "mlp_forward", "mlp_gradients",
    "mlp_loss", "model_from_dict", "polynomial_outputs", "polynomial_terms", "rbf_basis", "rbf_outputs",
    "read_training_csv", "save_model", "select_polynomial_degree", "train_fcm", "train_lvq", "train_mlp",
    "train_polynomial", "train_rbf", "train_som", "write_training_csv",
]


def _neg_sq_dist(X: np.ndarray, protos: np.ndarray) -> np.ndarray:
    return -((X[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)


def model_dim(model) -> int:
    if isinstance(model, UnsupervisedModel):
        return model.prototypes.shape[1]
    p = model.params
    return {"MLP": lambda: p["W1"].shape[1], "RBF": lambda: p["centers"].shape[1],
            "LVQ": lambda: p["codebooks"].shape[1],
            "PO": lambda: _po_dim(p["W"].shape[1], int(p["degree"]))}[model.kind]()


def _po_dim(n_terms: int, degree: int) -> int:
    n = 1
    while len(polynomial_terms(n, degree)) < n_terms:
        n += 1
    return n


def discriminants(model, X) -> np.ndarray:
    """Per-class scores (samples, m); the largest score wins.

    Prototype models score by negative squared distance, which orders classes
    exactly like maximum fuzzy membership.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model_dim(model):
        raise ValueError(f"model expects {model_dim(model)}-dimensional vectors, got {X.shape[1]}")
    if isinstance(model, UnsupervisedModel):
        return _neg_sq_dist(X, model.prototypes)
    if model.kind == "MLP":
        return mlp_forward(model.params, X)[1]
    if model.kind == "RBF":
        return rbf_outputs(model.params, X)
    if model.kind == "LVQ":
        return _neg_sq_dist(X, model.params["codebooks"])
    if model.kind == "PO":
        return polynomial_outputs(model.params, X)
    raise ValueError(f"unknown model kind {model.kind!r}")


def classify_vectors(model, X, chunk: int = 8192) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.empty(X.shape[0], dtype=np.int64)
    for start in range(0, X.shape[0], chunk):
        # argmax returns the first maximum, so ties go to the lowest index
        out[start : start + chunk] = np.argmax(discriminants(model, X[start : start + chunk]), axis=1)
    return out


def classify(model, image: MultispectralImage) -> LabelMap:
    labels = classify_vectors(model, image.vectors())
    return LabelMap(labels.reshape(image.grid.shape), model.class_count)


def select_polynomial_degree(ts: TrainingSet, image: MultispectralImage, max_degree: int = 4,
                             threshold: float = 0.98, **train_kwargs) -> int:
    """Smallest degree whose classification agrees with the next degree's.

    Agreement is Wang's fidelity between the label maps scaled to [0, 1].
    Returns ``max_degree`` when no consecutive pair reaches ``threshold``.
    """
    if max_degree < 2:
        raise ValueError("max_degree must be at least 2")
    scale = max(ts.class_count - 1, 1)

    def labels_at(d):
        return classify(train_polynomial(ts, degree=d, **train_kwargs), image).labels / scale

    prev = labels_at(2)
    for d in range(2, max_degree):
        nxt = labels_at(d + 1)
        same = np.array_equal(prev, nxt)
        if (1.0 if same else wang_fidelity(prev, nxt)) >= threshold:
            return d
        prev = nxt
    return max_degree
