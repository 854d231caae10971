"""Confusion matrices, accuracy, kappa, volume fractions and the generalization index.

Confusion matrices put the predicted class on rows and the true class on columns.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .image_model import LabelMap


class UndefinedMetricError(ValueError):
    pass


def build_confusion(predicted: LabelMap, truth: LabelMap, m: int | None = None) -> np.ndarray:
    if predicted.grid != truth.grid:
        raise ValueError("predicted and truth grids differ")
    if m is None:
        m = max(predicted.class_count, truth.class_count)
    p = predicted.labels.ravel()
    t = truth.labels.ravel()
    if p.max() >= m or t.max() >= m:
        raise ValueError(f"labels must lie in 0..{m - 1}")
    cm = np.zeros((m, m), dtype=np.int64)
    np.add.at(cm, (p, t), 1)
    return cm


def _checked(cm) -> np.ndarray:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    if np.any(cm < 0):
        raise ValueError("confusion counts must be nonnegative")
    if cm.sum() <= 0:
        raise UndefinedMetricError("empty confusion matrix")
    return cm.astype(np.float64)


def overall_accuracy(cm) -> float:
    cm = _checked(cm)
    return float(np.trace(cm) / cm.sum())


def chance_agreement(cm) -> float:
    cm = _checked(cm)
    total = cm.sum()
    return float((cm.sum(axis=1) * cm.sum(axis=0)).sum() / total**2)


def kappa(cm) -> float:
    agree = overall_accuracy(cm)
    chance = chance_agreement(cm)
    if chance == 1.0:
        raise UndefinedMetricError("kappa undefined when chance agreement is 1")
    return (agree - chance) / (1.0 - chance)


@dataclass(frozen=True)
class VolumeReport:
    fractions: tuple[float, ...]  # percent per class
    ratio: float  # fluid over matter
    counts: tuple[int, ...]


def volume_fractions(maps: LabelMap | Iterable[LabelMap], m: int, fluid: Sequence[int] | int,
                     matter: Sequence[int] | int) -> VolumeReport:
    """Class volumes in percent and the fluid/matter volume ratio.

    ``fluid`` and ``matter`` name the labels that make up each role, so a
    combined gray+white matter class is ``matter=(2, 3)``.
    """
    maps = [maps] if isinstance(maps, LabelMap) else list(maps)
    if not maps:
        raise ValueError("no label maps")
    counts = np.zeros(m, dtype=np.int64)
    for lm in maps:
        if lm.labels.max() >= m:
            raise ValueError(f"labels must lie in 0..{m - 1}")
        counts += np.bincount(lm.labels.ravel(), minlength=m)
    fluid = [fluid] if isinstance(fluid, int) else list(fluid)
    matter = [matter] if isinstance(matter, int) else list(matter)
    matter_count = int(counts[matter].sum())
    if matter_count == 0:
        raise UndefinedMetricError("fluid/matter ratio undefined: no matter voxels")
    fractions = 100.0 * counts / counts.sum()
    return VolumeReport(tuple(float(f) for f in fractions), float(counts[fluid].sum() / matter_count),
                        tuple(int(c) for c in counts))


def kappa_spread(kappas: Sequence[float]) -> tuple[float, float]:
    """(range, mean) of per-slice kappas, the raw ingredients of the index."""
    k = np.asarray(kappas, dtype=np.float64)
    if k.size < 2:
        raise ValueError("at least two slices are needed")
    return float(k.max() - k.min()), float(k.mean())


def generalization_index(kappas: Sequence[float]) -> float:
    """1 - (max - min) / mean of per-slice kappa, clamped to [0, 1]."""
    spread, mean = kappa_spread(kappas)
    if mean <= 0:
        raise UndefinedMetricError("generalization index undefined for nonpositive mean kappa")
    return float(min(1.0, max(0.0, 1.0 - spread / mean)))


def majority_mapping(predicted: LabelMap, truth: LabelMap) -> dict[int, int]:
    """Map each predicted cluster to the truth class it overlaps most (ties -> lowest class).

    Clusters absent from ``predicted`` map to class 0 so the table covers every label.
    """
    cm = build_confusion(predicted, truth, max(predicted.class_count, truth.class_count))
    return {i: int(np.argmax(cm[i, : truth.class_count])) for i in range(predicted.class_count)}


@dataclass
class SliceScores:
    accuracy: list[float] = field(default_factory=list)
    kappa: list[float] = field(default_factory=list)

    def add(self, cm) -> None:
        self.accuracy.append(overall_accuracy(cm))
        self.kappa.append(kappa(cm))

    def rows(self):
        for s, (phi, k) in enumerate(zip(self.accuracy, self.kappa)):
            yield s, phi, k


def scores_csv(scores: SliceScores, volumes: VolumeReport | None = None, gen_index: float | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "phi", "kappa"])
    for s, phi, k in scores.rows():
        w.writerow([s, repr(phi), repr(k)])
    if volumes is not None:
        w.writerow([])
        w.writerow([f"V{i}" for i in range(len(volumes.fractions))] + ["fluid_matter_ratio", "generalization_index"])
        w.writerow([repr(f) for f in volumes.fractions] + [repr(volumes.ratio),
                                                             "" if gen_index is None else repr(gen_index)])
    return buf.getvalue()
