"""Polynomial network: a multiplicative layer of monomials feeding a one-layer perceptron."""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .base import DivergedError, SupervisedModel, TrainingSet, linear_rate


@lru_cache(maxsize=None)
def polynomial_terms(n: int, degree: int = 2) -> tuple[tuple[int, ...], ...]:
    """Monomials of total degree <= ``degree`` as tuples of variable indices.

    Order: constant, linear terms, then per degree the pure powers followed by
    the mixed products in lexicographic order. For n=3, degree=2 this gives
    1, x1, x2, x3, x1^2, x2^2, x3^2, x1x2, x1x3, x2x3.
    """
    terms: list[tuple[int, ...]] = [()]
    for d in range(1, degree + 1):
        combos = list(combinations_with_replacement(range(n), d))
        pure = [c for c in combos if len(set(c)) == 1]
        terms += pure + [c for c in combos if len(set(c)) > 1]
    return tuple(terms)


def expand_polynomial(x, degree: int = 2) -> np.ndarray:
    """Monomial features of one vector (returns 1-D) or of the rows of a matrix."""
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    cols = [np.prod(X[:, list(t)], axis=1) if t else np.ones(X.shape[0])
            for t in polynomial_terms(X.shape[1], degree)]
    out = np.stack(cols, axis=1)
    return out[0] if x.ndim == 1 else out


def polynomial_outputs(params: dict, X: np.ndarray) -> np.ndarray:
    return expand_polynomial(np.atleast_2d(X), int(params["degree"])) @ params["W"].T


def train_polynomial(ts: TrainingSet, eta0: float = 0.1, max_iters: int = 200, target_error: float = 0.05,
                     seed: int = 0, degree: int = 2) -> SupervisedModel:
    """Per-class linear discriminants over monomials, trained with the delta rule.

    Stops when the training mean squared error reaches ``target_error`` or after
    ``max_iters`` epochs.
    """
    rng = np.random.default_rng(seed)
    Phi = expand_polynomial(ts.X, degree)
    T = ts.one_hot()
    W = np.zeros((ts.class_count, Phi.shape[1]))
    epochs_run = 0
    mse = float(((Phi @ W.T - T) ** 2).mean())
    for epoch in range(max_iters):
        if mse <= target_error:
            break
        eta = linear_rate(eta0, epoch, max_iters)
        for i in rng.permutation(len(ts.y)):
            W += eta * np.outer(T[i] - W @ Phi[i], Phi[i])
        epochs_run = epoch + 1
        mse = float(((Phi @ W.T - T) ** 2).mean())
        if not np.isfinite(mse):
            raise DivergedError(f"polynomial network diverged at epoch {epoch}")
    return SupervisedModel("PO", {"W": W, "degree": degree, "epochs": epochs_run, "mse": mse}, ts.class_count)
