"""Compiled inner loops for the online (per-sample) trainers.

Every kernel walks ``order`` (epochs, samples) so presentation order is fixed
by the caller's seed, and decays the rate linearly per presentation.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def nearest(x, protos):
    best = 0
    best_d = np.inf
    for i in range(protos.shape[0]):
        s = 0.0
        for c in range(x.shape[0]):
            diff = x[c] - protos[i, c]
            s += diff * diff
        if s < best_d:
            best_d = s
            best = i
    return best


@njit(cache=True)
def online_kmeans(data, centers, order, eta0):
    epochs, n = order.shape
    total = epochs * n
    t = 0
    for e in range(epochs):
        for r in range(n):
            x = data[order[e, r]]
            k = nearest(x, centers)
            eta = eta0 * (1.0 - t / total)
            for c in range(x.shape[0]):
                centers[k, c] += eta * (x[c] - centers[k, c])
            t += 1


@njit(cache=True)
def som_1d(data, nodes, order, eta0):
    # neighbour strength falls linearly from 1 to 0 over the first half
    epochs, n = order.shape
    total = epochs * n
    half = total / 2.0
    m = nodes.shape[0]
    t = 0
    for e in range(epochs):
        for r in range(n):
            x = data[order[e, r]]
            k = nearest(x, nodes)
            eta = eta0 * (1.0 - t / total)
            h = 1.0 - t / half
            for c in range(x.shape[0]):
                nodes[k, c] += eta * (x[c] - nodes[k, c])
            if h > 0.0:
                for j in (k - 1, k + 1):
                    if 0 <= j < m:
                        for c in range(x.shape[0]):
                            nodes[j, c] += eta * h * (x[c] - nodes[j, c])
            t += 1


@njit(cache=True)
def lvq1(data, labels, codebooks, code_labels, order, eta0):
    epochs, n = order.shape
    total = epochs * n
    t = 0
    for e in range(epochs):
        for r in range(n):
            idx = order[e, r]
            x = data[idx]
            k = nearest(x, codebooks)
            eta = eta0 * (1.0 - t / total)
            sign = 1.0 if code_labels[k] == labels[idx] else -1.0
            for c in range(x.shape[0]):
                codebooks[k, c] += sign * eta * (x[c] - codebooks[k, c])
                if codebooks[k, c] < 0.0:
                    codebooks[k, c] = 0.0
                elif codebooks[k, c] > 1.0:
                    codebooks[k, c] = 1.0
            t += 1


@njit(cache=True)
def fuzzy_memberships(x, centers, fuzzifier, out):
    m = centers.shape[0]
    d2 = np.empty(m)
    hit = -1
    for i in range(m):
        s = 0.0
        for c in range(x.shape[0]):
            diff = x[c] - centers[i, c]
            s += diff * diff
        d2[i] = s
        if s == 0.0 and hit < 0:
            hit = i
    if hit >= 0:
        for i in range(m):
            out[i] = 0.0
        out[hit] = 1.0
        return
    p = 1.0 / (fuzzifier - 1.0)
    for i in range(m):
        acc = 0.0
        for j in range(m):
            acc += (d2[i] / d2[j]) ** p
        out[i] = 1.0 / acc


@njit(cache=True)
def online_fcm(data, centers, order, eta0, fuzzifier):
    epochs, n = order.shape
    total = epochs * n
    u = np.empty(centers.shape[0])
    t = 0
    for e in range(epochs):
        for r in range(n):
            x = data[order[e, r]]
            fuzzy_memberships(x, centers, fuzzifier, u)
            eta = eta0 * (1.0 - t / total)
            for k in range(centers.shape[0]):
                step = eta * u[k] ** fuzzifier
                for c in range(x.shape[0]):
                    centers[k, c] += step * (x[c] - centers[k, c])
            t += 1
