"""Training sets, model containers and the shared per-pixel classification rule."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..image_model import LabelMap, MultispectralImage


class DivergedError(RuntimeError):
    """Training produced a non-finite loss."""


SUPERVISED_KINDS = ("MLP", "RBF", "LVQ", "PO")
UNSUPERVISED_KINDS = ("KO", "CM")


@dataclass(frozen=True, eq=False)
class TrainingSet:
    X: np.ndarray  # (samples, n)
    y: np.ndarray  # (samples,)
    class_count: int

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        y = np.asarray(self.y, dtype=np.int64).ravel()
        if X.shape[0] == 0:
            raise ValueError("training set is empty")
        if y.shape[0] != X.shape[0]:
            raise ValueError("one label per sample is required")
        m = int(self.class_count)
        if y.min() < 0 or y.max() >= m:
            raise ValueError(f"labels must lie in 0..{m - 1}")
        missing = sorted(set(range(m)) - set(y.tolist()))
        if missing:
            raise ValueError(f"classes without samples: {missing}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "class_count", m)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def one_hot(self) -> np.ndarray:
        return np.eye(self.class_count)[self.y]


def write_training_csv(ts: TrainingSet, path) -> None:
    """CSV rows ``x1,...,xn,label`` with a header line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(ts.dim)] + ["label"])
        for x, lab in zip(ts.X, ts.y):
            w.writerow([repr(float(v)) for v in x] + [int(lab)])


def read_training_csv(path, class_count: int | None = None) -> TrainingSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no samples")
    X = np.array([[float(v) for v in r[:-1]] for r in rows])
    y = np.array([int(r[-1]) for r in rows])
    return TrainingSet(X, y, class_count if class_count is not None else int(y.max()) + 1)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def extract_training_set(image: MultispectralImage, mask: LabelMap, samples_per_class: int | None = None,
                         seed: int = 0, ignore: int | None = None) -> TrainingSet:
    """Sample labelled condition vectors (regions of interest) from an image.

    ``mask`` gives the class per pixel; pixels labelled ``ignore`` are skipped.
    With ``samples_per_class`` each class contributes at most that many pixels,
    drawn without replacement.
    """
    if mask.grid != image.grid:
        raise ValueError("mask and image grids differ")
    X = image.vectors()
    labels = mask.labels.ravel()
    rng = np.random.default_rng(seed)
    picked = []
    for c in range(mask.class_count):
        if c == ignore:
            continue
        idx = np.flatnonzero(labels == c)
        if samples_per_class is not None and idx.size > samples_per_class:
            idx = np.sort(rng.choice(idx, size=samples_per_class, replace=False))
        picked.append(idx)
    idx = np.concatenate(picked)
    return TrainingSet(X[idx], labels[idx], mask.class_count)


@dataclass(frozen=True, eq=False)
class SupervisedModel:
    kind: str
    params: dict = field(default_factory=dict)
    class_count: int = 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "class_count": self.class_count,
                "params": {k: _jsonable(v) for k, v in self.params.items()}}


@dataclass(frozen=True, eq=False)
class UnsupervisedModel:
    kind: str
    prototypes: np.ndarray
    fuzzifier: float = 2.0

    @property
    def class_count(self) -> int:
        return self.prototypes.shape[0]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "prototypes": self.prototypes.tolist(), "fuzzifier": self.fuzzifier}


def _jsonable(v):
    return v.tolist() if isinstance(v, np.ndarray) else v


def model_from_dict(d: dict):
    if d["kind"] in UNSUPERVISED_KINDS:
        return UnsupervisedModel(d["kind"], np.array(d["prototypes"], dtype=np.float64), d.get("fuzzifier", 2.0))
    params = {k: (np.array(v, dtype=np.float64) if isinstance(v, list) else v) for k, v in d["params"].items()}
    return SupervisedModel(d["kind"], params, int(d["class_count"]))


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


def spread_init(data: np.ndarray, m: int) -> np.ndarray:
    """Deterministic prototype seeding.

    Picks distinct data rows at evenly spaced quantiles along their first
    principal axis. Distinct rows keep symmetric learners such as fuzzy c-means
    from starting with coincident (and hence inseparable) centers.
    """
    data = np.asarray(data, dtype=np.float64)
    _, first = np.unique(data, axis=0, return_index=True)
    data = data[np.sort(first)]
    centered = data - data.mean(axis=0)
    if np.allclose(centered, 0):
        return np.repeat(data[:1], m, axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    proj = centered @ vt[0]
    order = np.argsort(proj, kind="stable")
    picks = ((np.arange(m) + 0.5) / m * data.shape[0]).astype(int)
    return data[order[picks]].copy()


def epoch_orders(n_samples: int, epochs: int, rng: np.random.Generator) -> np.ndarray:
    """One fresh permutation of the samples per epoch."""
    return np.array([rng.permutation(n_samples) for _ in range(epochs)], dtype=np.int64).reshape(epochs, n_samples)


def linear_rate(eta0: float, step: int, total: int) -> float:
    return eta0 * (1.0 - step / total)
