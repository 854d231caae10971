"""Multilayer perceptron and radial basis function network."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .base import DivergedError, SupervisedModel, TrainingSet, epoch_orders, linear_rate


def _sigmoid(a):
    return 1.0 / (1.0 + np.exp(-a))


# --------------------------------------------------------------------------
# MLP: sigmoid hidden layer, sigmoid outputs, squared error


def mlp_init(n_in: int, hidden: int, n_out: int, rng: np.random.Generator) -> dict:
    r1, r2 = 1.0 / np.sqrt(n_in), 1.0 / np.sqrt(hidden)
    return {
        "W1": rng.uniform(-r1, r1, size=(hidden, n_in)),
        "b1": rng.uniform(-r1, r1, size=hidden),
        "W2": rng.uniform(-r2, r2, size=(n_out, hidden)),
        "b2": rng.uniform(-r2, r2, size=n_out),
    }


def mlp_forward(params: dict, X: np.ndarray):
    """Return (hidden activations, outputs) for rows of X."""
    H = _sigmoid(X @ params["W1"].T + params["b1"])
    Y = _sigmoid(H @ params["W2"].T + params["b2"])
    return H, Y


def mlp_loss(params: dict, X: np.ndarray, T: np.ndarray) -> float:
    """0.5 * sum of squared output errors over all samples."""
    _, Y = mlp_forward(params, np.atleast_2d(X))
    return 0.5 * float(((Y - T) ** 2).sum())


def mlp_gradients(params: dict, X: np.ndarray, T: np.ndarray) -> dict:
    """Backpropagated gradient of :func:`mlp_loss`."""
    X = np.atleast_2d(X)
    T = np.atleast_2d(T)
    H, Y = mlp_forward(params, X)
    d2 = (Y - T) * Y * (1.0 - Y)
    d1 = (d2 @ params["W2"]) * H * (1.0 - H)
    return {"W1": d1.T @ X, "b1": d1.sum(axis=0), "W2": d2.T @ H, "b2": d2.sum(axis=0)}


def train_mlp(ts: TrainingSet, hidden: int = 60, eta0: float = 0.2, max_iters: int = 1000,
              target_error: float = 0.05, seed: int = 0) -> SupervisedModel:
    """Online backpropagation with one-hot targets.

    Stops once the training-set mean squared error (over samples and outputs)
    reaches ``target_error`` or after ``max_iters`` epochs. The rate decays
    linearly per epoch.
    """
    if hidden < 1:
        raise ValueError("hidden must be at least 1")
    rng = np.random.default_rng(seed)
    params = mlp_init(ts.dim, hidden, ts.class_count, rng)
    T = ts.one_hot()
    epochs_run = 0
    mse = _mse(params, ts.X, T)
    for epoch in range(max_iters):
        if mse <= target_error:
            break
        eta = linear_rate(eta0, epoch, max_iters)
        for i in rng.permutation(len(ts.y)):
            g = mlp_gradients(params, ts.X[i : i + 1], T[i : i + 1])
            for k in params:
                params[k] -= eta * g[k]
        epochs_run = epoch + 1
        mse = _mse(params, ts.X, T)
        if not np.isfinite(mse):
            raise DivergedError(f"MLP diverged at epoch {epoch}")
    return SupervisedModel("MLP", {**params, "epochs": epochs_run, "mse": mse}, ts.class_count)


def _mse(params, X, T) -> float:
    _, Y = mlp_forward(params, X)
    return float(((Y - T) ** 2).mean())


# --------------------------------------------------------------------------
# RBF: online k-means centers with Gaussian bases, delta-rule linear outputs

WIDTH_FLOOR = 1e-3


def rbf_basis(X: np.ndarray, centers: np.ndarray, widths: np.ndarray) -> np.ndarray:
    d2 = ((np.atleast_2d(X)[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-d2 / (2.0 * widths**2))


def rbf_outputs(params: dict, X: np.ndarray) -> np.ndarray:
    phi = rbf_basis(X, params["centers"], params["widths"])
    return phi @ params["W"].T + params["b"]


def _assign(X, centers):
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1), np.sqrt(d2)


def train_rbf(ts: TrainingSet, centers: int = 18, kmeans_iters: int = 200, eta0: float = 0.1,
              out_iters: int = 200, seed: int = 0) -> SupervisedModel:
    """Two-layer RBF network.

    Basis width per center is the mean distance of its members, floored at
    1e-3. Centers left without members are reseeded from a random sample.
    """
    n = len(ts.y)
    if centers > n:
        raise ValueError(f"{centers} centers but only {n} samples")
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(ts.X)
    C = X[rng.choice(n, size=centers, replace=False)].copy()
    if kmeans_iters > 0:
        _kernels.online_kmeans(X, C, epoch_orders(n, kmeans_iters, rng), float(eta0))
    assign, dist = _assign(X, C)
    for k in range(centers):
        if not np.any(assign == k):
            C[k] = X[rng.integers(n)]
    assign, dist = _assign(X, C)
    widths = np.full(centers, WIDTH_FLOOR)
    for k in range(centers):
        members = assign == k
        if members.any():
            widths[k] = max(WIDTH_FLOOR, float(dist[members, k].mean()))

    phi = rbf_basis(X, C, widths)
    T = ts.one_hot()
    W = np.zeros((ts.class_count, centers))
    b = np.zeros(ts.class_count)
    total = out_iters * n
    t = 0
    for _ in range(out_iters):
        for i in rng.permutation(n):
            eta = linear_rate(eta0, t, total)
            err = T[i] - (W @ phi[i] + b)
            W += eta * np.outer(err, phi[i])
            b += eta * err
            t += 1
        if not np.all(np.isfinite(W)):
            raise DivergedError("RBF output layer diverged")
    return SupervisedModel("RBF", {"centers": C, "widths": widths, "W": W, "b": b}, ts.class_count)
