"""Binary morphology on digital discs, granulometry and pattern spectra.

Images are boolean (height, width) arrays. Pixels outside the grid count as
background, so erosion never grows a shape from the border.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class StructuringElement(str, Enum):
    SQUARE3 = "square"
    CROSS3 = "cross"

    @property
    def mask(self) -> np.ndarray:
        if self is StructuringElement.SQUARE3:
            return np.ones((3, 3), dtype=bool)
        return np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)

    @property
    def offsets(self) -> list[tuple[int, int]]:
        """(dy, dx) offsets relative to the center pixel."""
        return [(dy - 1, dx - 1) for dy, dx in zip(*np.nonzero(self.mask))]


SQUARE3 = StructuringElement.SQUARE3
CROSS3 = StructuringElement.CROSS3


class UndefinedSpectrumError(ValueError):
    """Pattern spectrum of an empty image."""


def as_binary(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValueError("binary images are 2-D")
    if a.dtype != bool:
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("binary images hold only 0 and 1")
        a = a.astype(bool)
    return a


def _shifted(padded: np.ndarray, dy: int, dx: int, h: int, w: int) -> np.ndarray:
    return padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]


def erode(img, se: StructuringElement = SQUARE3) -> np.ndarray:
    a = as_binary(img)
    h, w = a.shape
    p = np.pad(a, 1, constant_values=False)
    out = np.ones_like(a)
    for dy, dx in se.offsets:
        out &= _shifted(p, dy, dx, h, w)
    return out


def dilate(img, se: StructuringElement = SQUARE3) -> np.ndarray:
    a = as_binary(img)
    h, w = a.shape
    p = np.pad(a, 1, constant_values=False)
    out = np.zeros_like(a)
    # both discs are symmetric, so the reflected element is the element itself
    for dy, dx in se.offsets:
        out |= _shifted(p, dy, dx, h, w)
    return out


def open_j(img, se: StructuringElement = SQUARE3, j: int = 1) -> np.ndarray:
    """j erosions followed by j dilations (opening by the j-fold disc)."""
    if j < 0:
        raise ValueError("j must be nonnegative")
    out = as_binary(img).copy()
    for _ in range(j):
        out = erode(out, se)
    for _ in range(j):
        out = dilate(out, se)
    return out


def close_j(img, se: StructuringElement = SQUARE3, j: int = 1) -> np.ndarray:
    if j < 0:
        raise ValueError("j must be nonnegative")
    out = as_binary(img).copy()
    for _ in range(j):
        out = dilate(out, se)
    for _ in range(j):
        out = erode(out, se)
    return out


def granulometric_volume(img, se: StructuringElement = SQUARE3, k: int = 0) -> int:
    return int(open_j(img, se, k).sum())


def granulometric_curve(img, se: StructuringElement = SQUARE3) -> list[int]:
    """V(0), V(1), ... up to and including the first zero."""
    a = as_binary(img)
    volumes = [int(a.sum())]
    eroded = a
    k = 0
    while volumes[-1] > 0:
        k += 1
        eroded = erode(eroded, se)
        opened = eroded
        for _ in range(k):
            opened = dilate(opened, se)
        volumes.append(int(opened.sum()))
    return volumes


@dataclass(frozen=True)
class PatternSpectrum:
    volumes: tuple[int, ...]  # V(0..k_max)
    cumulative: tuple[float, ...]  # Xi[0..k_max]
    density: tuple[float, ...]  # xi[0..k_max-1]

    @property
    def k_max(self) -> int:
        return len(self.volumes) - 1

    def rows(self):
        """(k, V, Xi, xi) rows; xi is blank at k_max."""
        for k in range(self.k_max + 1):
            yield k, self.volumes[k], self.cumulative[k], (self.density[k] if k < self.k_max else None)


def pattern_spectrum(img, se: StructuringElement = SQUARE3) -> PatternSpectrum:
    volumes = granulometric_curve(img, se)
    if volumes[0] == 0:
        raise UndefinedSpectrumError("pattern spectrum of an empty image is undefined")
    v0 = volumes[0]
    cumulative = [1.0 - v / v0 for v in volumes]
    density = [cumulative[k + 1] - cumulative[k] for k in range(len(volumes) - 1)]
    return PatternSpectrum(tuple(volumes), tuple(cumulative), tuple(density))


def morphological_similarity(f, g, se: StructuringElement = SQUARE3) -> float:
    """Q_M(f, g): exp of minus the L2 distance between pattern spectra, relative to g's spectrum.

    Not symmetric: ``g`` is the reference.
    """
    xf = np.array(pattern_spectrum(f, se).density)
    xg = np.array(pattern_spectrum(g, se).density)
    size = max(xf.size, xg.size)
    xf = np.pad(xf, (0, size - xf.size))
    xg = np.pad(xg, (0, size - xg.size))
    return float(np.exp(-np.sqrt(((xf - xg) ** 2).sum() / (xg**2).sum())))


def class_mask(labels, class_id: int) -> np.ndarray:
    """Binary mask of one class of a label map (LabelMap or integer array)."""
    arr = getattr(labels, "labels", labels)
    return np.asarray(arr) == class_id


def binarize(band, threshold: float) -> np.ndarray:
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    values = getattr(band, "values", band)
    return np.asarray(values) >= threshold


class DegenerateFidelityError(ValueError):
    pass


def wang_fidelity(f, g) -> float:
    """Wang's fidelity index 4 mu_f mu_g s_fg / ((mu_f^2 + mu_g^2)(s_f^2 + s_g^2)).

    Accepts Bands or arrays. Moments are taken over all pixels (ddof=1); the ratio
    is the same for any consistent normalization.
    """
    f = np.asarray(getattr(f, "values", f), dtype=np.float64).ravel()
    g = np.asarray(getattr(g, "values", g), dtype=np.float64).ravel()
    if f.shape != g.shape:
        raise ValueError("images must share a grid")
    mf, mg = f.mean(), g.mean()
    ddof = 1 if f.size > 1 else 0
    vf, vg = f.var(ddof=ddof), g.var(ddof=ddof)
    cov = ((f - mf) * (g - mg)).sum() / (f.size - ddof)
    energy, spread = mf**2 + mg**2, vf + vg
    if energy == 0 and spread == 0:
        raise DegenerateFidelityError("fidelity undefined: both images constant zero")
    if energy == 0 or spread == 0:
        # the numerator vanishes with either factor
        return 0.0
    return float(4 * mf * mg * cov / (energy * spread))


def spectrum_csv(spectrum: PatternSpectrum) -> str:
    lines = ["k,V,Xi,xi"]
    for k, v, cum, dens in spectrum.rows():
        lines.append(f"{k},{v},{cum!r},{'' if dens is None else repr(dens)}")
    return "\n".join(lines) + "\n"


def spectrum_dict(spectrum: PatternSpectrum) -> dict:
    return {"k_max": spectrum.k_max, "V": list(spectrum.volumes),
            "Xi": list(spectrum.cumulative), "xi": list(spectrum.density)}
