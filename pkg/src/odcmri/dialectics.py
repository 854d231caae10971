"""Objective Dialectical Classifier (ODC).

A dialectical system is a set of poles, each a weight vector plus a measure of
force. Training alternates historical phases of pole struggle (online
winner-take-all updates, the winner gains force) with revolutionary crises
that drop weak poles, absorb near-duplicates, optionally synthesize a pole
from the most contradictory pair, and perturb every surviving weight.

Two anticontradiction functions are supported:

* ``GAUSS``: g_i(x) = exp(-||x - w_i||)
* ``RATIO``: g_i(x) = 1 / sum_k ||x - w_i||^2 / ||x - w_k||^2 (a fuzzy c-means
  membership with fuzzifier 2)

Both are strictly decreasing in ||x - w_i||, so the winner is always the
nearest pole. Winners are therefore picked on squared distances, which avoids
spurious ties where two different distances round to the same g.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Mapping, NamedTuple

import numpy as np
from numba import njit

from .image_model import LabelMap, MultispectralImage

log = logging.getLogger(__name__)


class Anticontradiction(str, Enum):
    GAUSS = "gauss"
    RATIO = "ratio"


class UpdateRule(str, Enum):
    PLAIN = "plain"
    G_SQUARED = "g_squared"


class DegeneratePhaseError(ValueError):
    """Every pole has zero force, so forces cannot be normalized."""


class Pole(NamedTuple):
    weights: np.ndarray
    force: float


@dataclass(frozen=True, eq=False)
class DialecticalSystem:
    weights: np.ndarray  # (poles, n)
    forces: np.ndarray  # (poles,)
    anticontradiction: Anticontradiction = Anticontradiction.GAUSS
    update_rule: UpdateRule = UpdateRule.PLAIN
    history: tuple = ()

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        f = np.array(self.forces, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ValueError("weights must be a (poles, n) array with at least one pole")
        if f.shape != (w.shape[0],):
            raise ValueError("one force per pole is required")
        if np.any(f < 0):
            raise ValueError("forces must be nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "forces", f)
        object.__setattr__(self, "anticontradiction", Anticontradiction(self.anticontradiction))
        object.__setattr__(self, "update_rule", UpdateRule(self.update_rule))

    @classmethod
    def from_poles(cls, poles, **kwargs) -> "DialecticalSystem":
        poles = list(poles)
        return cls(np.array([p.weights for p in poles], dtype=np.float64),
                   np.array([p.force for p in poles], dtype=np.float64), **kwargs)

    @property
    def poles(self) -> tuple[Pole, ...]:
        return tuple(Pole(self.weights[i].copy(), float(self.forces[i])) for i in range(self.size))

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @property
    def condition_dim(self) -> int:
        return self.weights.shape[1]

    def to_dict(self) -> dict:
        return {
            "anticontradiction": self.anticontradiction.value,
            "update_rule": self.update_rule.value,
            "condition_dim": self.condition_dim,
            "weights": self.weights.tolist(),
            "forces": self.forces.tolist(),
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DialecticalSystem":
        return cls(np.array(d["weights"], dtype=np.float64), np.array(d["forces"], dtype=np.float64),
                   d["anticontradiction"], d["update_rule"], tuple(d.get("history", ())))


@dataclass(frozen=True)
class OdcConfig:
    """Training parameters; defaults reproduce the published experiment."""

    n_phases: int = 5
    phase_length: int = 100
    target_poles: int = 4
    initial_poles: int = 10
    eta0: float = 0.1
    chi_max: float = 0.25
    f_min: float = 0.01
    delta_min: float = 0.25
    seed: int = 0
    eta_floor: float = 0.01
    anticontradiction: Anticontradiction = Anticontradiction.RATIO
    update_rule: UpdateRule = UpdateRule.G_SQUARED
    synthesis: bool = False
    # Kind used for crisis-time contradictions. Under RATIO every pair of distinct
    # poles has delta = 1, which would make delta_min inert.
    contradiction_kind: Anticontradiction = Anticontradiction.GAUSS

    def __post_init__(self):
        object.__setattr__(self, "anticontradiction", Anticontradiction(self.anticontradiction))
        object.__setattr__(self, "contradiction_kind", Anticontradiction(self.contradiction_kind))
        object.__setattr__(self, "update_rule", UpdateRule(self.update_rule))
        if self.n_phases < 1 or self.phase_length < 1:
            raise ValueError("n_phases and phase_length must be at least 1")
        if not 1 <= self.target_poles <= self.initial_poles:
            raise ValueError("need 1 <= target_poles <= initial_poles")
        if not 0 <= self.eta0 <= 1:
            raise ValueError("eta0 must lie in [0, 1]")
        for name in ("chi_max", "f_min", "delta_min"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["anticontradiction"] = self.anticontradiction.value
        d["update_rule"] = self.update_rule.value
        d["contradiction_kind"] = self.contradiction_kind.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "OdcConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown OdcConfig fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "OdcConfig":
        return cls.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# Anticontradiction and contradiction


def _check_dim(system: DialecticalSystem, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (system.condition_dim,):
        raise ValueError(f"condition vector has shape {x.shape}, expected ({system.condition_dim},)")
    return x


def _sq_distances(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    return ((weights - x) ** 2).sum(axis=1)


def ratio_memberships(sq_dist: np.ndarray) -> np.ndarray:
    """Fuzzifier-2 memberships from squared distances; exact hits are one-hot on the first hit."""
    sq_dist = np.asarray(sq_dist, dtype=np.float64)
    hits = np.flatnonzero(sq_dist == 0)
    if hits.size:
        g = np.zeros_like(sq_dist)
        g[hits[0]] = 1.0
        return g
    inv = 1.0 / sq_dist
    return inv / inv.sum()


def anticontradictions(system: DialecticalSystem, x) -> np.ndarray:
    """g_i(x) for every pole."""
    x = _check_dim(system, x)
    d2 = _sq_distances(system.weights, x)
    if system.anticontradiction is Anticontradiction.GAUSS:
        return np.exp(-np.sqrt(d2))
    return ratio_memberships(d2)


def anticontradiction(system: DialecticalSystem, i: int, x) -> float:
    return float(anticontradictions(system, x)[i])


def winner_index(system: DialecticalSystem, x) -> int:
    x = _check_dim(system, x)
    return int(np.argmin(_sq_distances(system.weights, x)))


def contradiction(system: DialecticalSystem, i: int, j: int,
                  kind: Anticontradiction | str | None = None) -> float:
    """delta_ij = 1 - g_i(w_j), with g of the system's kind unless ``kind`` is given."""
    if i == j:
        raise ValueError("contradiction is defined between distinct poles")
    if kind is not None and Anticontradiction(kind) is not system.anticontradiction:
        system = replace(system, anticontradiction=Anticontradiction(kind))
    return 1.0 - anticontradiction(system, i, system.weights[j])


def normalized_forces(system: DialecticalSystem) -> np.ndarray:
    top = system.forces.max()
    if top <= 0:
        raise DegeneratePhaseError("all pole forces are zero")
    return system.forces / top


# --------------------------------------------------------------------------
# Evolution


def evolution_step(system: DialecticalSystem, x, eta: float) -> tuple[DialecticalSystem, int]:
    """Move the winner toward ``x`` and add one to its force; other poles are untouched."""
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    x = _check_dim(system, x)
    k = winner_index(system, x)
    step = eta
    if system.update_rule is UpdateRule.G_SQUARED:
        g = anticontradiction(system, k, x)
        step = eta * g * g
    w = system.weights.copy()
    f = system.forces.copy()
    w[k] = w[k] + step * (x - w[k])
    f[k] += 1.0
    return replace(system, weights=w, forces=f), k


@njit(cache=True)
def _evolve(data, weights, forces, n_passes, t0, total, eta0, eta_end, ratio, g_squared, trace):
    n_samples, n = data.shape
    n_poles = weights.shape[0]
    d2 = np.empty(n_poles)
    t = t0
    for _ in range(n_passes):
        for row in range(n_samples):
            best = 0
            for i in range(n_poles):
                s = 0.0
                for c in range(n):
                    diff = data[row, c] - weights[i, c]
                    s += diff * diff
                d2[i] = s
                if s < d2[best]:
                    best = i
            eta = eta0 - (eta0 - eta_end) * (t / total)
            step = eta
            if g_squared:
                if ratio:
                    if d2[best] == 0.0:
                        g = 1.0
                    else:
                        acc = 0.0
                        for i in range(n_poles):
                            acc += d2[best] / d2[i]
                        g = 1.0 / acc
                else:
                    g = np.exp(-np.sqrt(d2[best]))
                step = eta * g * g
            for c in range(n):
                weights[best, c] = weights[best, c] + step * (data[row, c] - weights[best, c])
            forces[best] += 1.0
            if trace.shape[0] > 0:
                trace[t - t0, :, :] = weights
            t += 1
    return t


def eta_schedule(eta0: float, floor: float, t: int, total: int) -> float:
    """Linear decay from eta0 at t=0 toward ``floor`` at t=total (never raised above eta0)."""
    end = min(eta0, floor)
    return eta0 - (eta0 - end) * (t / total)


# --------------------------------------------------------------------------
# Revolutionary crisis


@dataclass(frozen=True)
class CrisisRecord:
    poles_before: int
    poles_after: int
    weak: tuple[int, ...]
    absorbed: tuple[int, ...]
    synthesized_from: tuple[int, int] | None
    perturbed: bool
    degenerate: bool

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def _qualitative_change(system: DialecticalSystem, cfg: OdcConfig):
    """Survivor selection plus optional synthesis. Returns (weights, record fields)."""
    k = system.size
    fbar = normalized_forces(system)
    weak = [i for i in range(k) if fbar[i] < cfg.f_min]
    delta = np.full((k, k), np.nan)
    for j in range(1, k):
        for i in range(j):
            delta[i, j] = contradiction(system, i, j, cfg.contradiction_kind)
    absorbed: list[int] = []
    for i in range(k):
        for j in range(i + 1, k):
            if i in absorbed or j in absorbed:
                continue
            if delta[i, j] < cfg.delta_min:
                absorbed.append(j)
    survivors = [i for i in range(k) if i not in weak and i not in absorbed]
    degenerate = not survivors
    if degenerate:
        strongest = int(np.argmax(system.forces))
        log.warning("crisis would eliminate every pole; keeping pole %d", strongest)
        survivors = [strongest]
    weights = [system.weights[i].copy() for i in survivors]
    synthesized = None
    if cfg.synthesis and len(survivors) > cfg.target_poles and len(survivors) >= 2:
        best = -np.inf
        for jj in range(1, len(survivors)):
            for ii in range(jj):
                d = delta[survivors[ii], survivors[jj]]
                if d > best:
                    best, synthesized = d, (survivors[ii], survivors[jj])
        a, b = system.weights[synthesized[0]], system.weights[synthesized[1]]
        # 1-based odd coordinates from the first pole, even ones from the second
        new = np.where(np.arange(system.condition_dim) % 2 == 0, a, b)
        weights.append(new)
    return np.array(weights), tuple(weak), tuple(absorbed), synthesized, degenerate


def _perturb(weights: np.ndarray, chi_max: float, rng: np.random.Generator) -> np.ndarray:
    noisy = weights + chi_max * rng.standard_normal(weights.shape)
    return np.clip(noisy, 0.0, 1.0)


def revolutionary_crisis(system: DialecticalSystem, cfg: OdcConfig, rng: np.random.Generator,
                         perturb: bool = True) -> tuple[DialecticalSystem, CrisisRecord]:
    """Phase-end restructuring of the pole set.

    A pole survives when its normalized force is at least ``f_min`` and it was
    not absorbed: for i < j (ascending, pre-crisis indices) with
    delta_ij < delta_min, pole j is absorbed into pole i. Pairs touching an
    already absorbed pole are skipped. If synthesis is enabled and more than
    ``target_poles`` survive, one pole is built from the most contradictory
    surviving pair. Survivors are then perturbed by ``chi_max`` times standard
    normal noise per coordinate, clamped to [0, 1], and forces reset to zero.
    """
    weights, weak, absorbed, synthesized, degenerate = _qualitative_change(system, cfg)
    if perturb:
        weights = _perturb(weights, cfg.chi_max, rng)
    record = CrisisRecord(system.size, weights.shape[0], weak, absorbed, synthesized, perturb, degenerate)
    return replace(system, weights=weights, forces=np.zeros(weights.shape[0])), record


# --------------------------------------------------------------------------
# Training and classification


def distinct_rows(data: np.ndarray) -> np.ndarray:
    """Distinct rows of ``data`` in order of first occurrence."""
    _, first = np.unique(data, axis=0, return_index=True)
    return data[np.sort(first)]


def initial_poles(data: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw pole weights without replacement from the distinct condition vectors.

    The input is treated as a set, so repeated pixels do not crowd out rare
    ones. Falls back to uniform [0, 1] draws when there are fewer distinct
    vectors than poles.
    """
    candidates = distinct_rows(data)
    n = data.shape[1]
    take = min(count, candidates.shape[0])
    idx = rng.choice(candidates.shape[0], size=take, replace=False)
    w = candidates[idx].astype(np.float64)
    if take < count:
        w = np.vstack([w, rng.uniform(0.0, 1.0, size=(count - take, n))])
    return w


def train_odc(data, cfg: OdcConfig = OdcConfig(), trace: bool = False):
    """Train a dialectical system on condition vectors in the given presentation order.

    Runs up to ``n_phases`` historical phases of ``phase_length`` full passes,
    each followed by a crisis; stops early once at most ``target_poles`` poles
    remain. The crisis that ends training still selects survivors and resets
    forces but does not perturb the weights, since no phase follows to absorb
    the perturbation.

    With ``trace=True`` returns ``(system, trajectory)`` where trajectory holds
    the weights after every presentation of the first phase only, shape
    (phase_length * len(data), initial_poles, n).
    """
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("training data must be a non-empty (samples, n) array")
    rng = np.random.default_rng(cfg.seed)
    weights = initial_poles(data, cfg.initial_poles, rng)
    system = DialecticalSystem(weights, np.zeros(weights.shape[0]), cfg.anticontradiction, cfg.update_rule)
    total = cfg.n_phases * cfg.phase_length * data.shape[0]
    eta_end = min(cfg.eta0, cfg.eta_floor)
    ratio = cfg.anticontradiction is Anticontradiction.RATIO
    g_squared = cfg.update_rule is UpdateRule.G_SQUARED
    t = 0
    history = []
    trajectory = None
    for phase in range(cfg.n_phases):
        w = system.weights.copy()
        f = np.zeros(system.size)
        if trace and phase == 0:
            trajectory = np.empty((cfg.phase_length * data.shape[0],) + w.shape)
            buf = trajectory
        else:
            buf = np.empty((0,) + w.shape)
        t = _evolve(data, w, f, cfg.phase_length, t, total, cfg.eta0, eta_end, ratio, g_squared, buf)
        system = replace(system, weights=w, forces=f)
        phase_forces = f.tolist()
        weights_after, *_ = _qualitative_change(system, cfg)
        final = phase == cfg.n_phases - 1 or weights_after.shape[0] <= cfg.target_poles
        system, record = revolutionary_crisis(system, cfg, rng, perturb=not final)
        history.append({"phase": phase, "forces": phase_forces, **record.to_dict()})
        log.debug("phase %d: %d -> %d poles", phase, record.poles_before, record.poles_after)
        if final:
            break
    system = replace(system, history=tuple(history))
    if trace:
        return system, trajectory
    return system


def classify_vectors(system: DialecticalSystem, vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != system.condition_dim:
        raise ValueError("condition vectors do not match the system dimension")
    d2 = ((vectors[:, None, :] - system.weights[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def classify_odc(system: DialecticalSystem, image: MultispectralImage) -> LabelMap:
    if image.n_bands != system.condition_dim:
        raise ValueError(f"image has {image.n_bands} bands, system expects {system.condition_dim}")
    labels = classify_vectors(system, image.vectors()).reshape(image.grid.shape)
    return LabelMap(labels, system.size)


def relabel(labels: LabelMap, merge: Mapping, class_count: int | None = None) -> LabelMap:
    """Pointwise label substitution (post-labeling).

    ``merge`` maps every label present to its target; JSON-style string keys are
    accepted. The result has ``max(target) + 1`` classes unless given.
    """
    table = {int(k): int(v) for k, v in merge.items()}
    present = np.unique(labels.labels)
    missing = [int(p) for p in present if int(p) not in table]
    if missing:
        raise KeyError(f"merge map has no entry for labels {missing}")
    lut = np.zeros(max(max(table), int(present.max())) + 1, dtype=np.int64)
    for k, v in table.items():
        if k < lut.size:
            lut[k] = v
    m = class_count if class_count is not None else max(table[int(p)] for p in present) + 1
    return LabelMap(lut[labels.labels], m)
