"""Multispectral image data model, PGM band I/O and synthetic DW-MR phantoms.

Pixel values live in [0, 1] everywhere inside the package; 8/16-bit integers
only appear at the PGM boundary.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class PGMError(ValueError):
    """Malformed, truncated or otherwise unreadable PGM file."""


class PhantomSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.width * self.height


def _grid_of(arr: np.ndarray) -> Grid:
    return Grid(width=arr.shape[1], height=arr.shape[0])


@dataclass(frozen=True, eq=False)
class Band:
    """One scalar image, values in [0, 1], stored as a (height, width) array."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("band values must be a non-empty 2-D array")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("band values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid(self) -> Grid:
        return _grid_of(self.values)


@dataclass(frozen=True, eq=False)
class MultispectralImage:
    """Co-registered bands plus the diffusion exponent (s/mm^2) of each band."""

    bands: tuple[Band, ...]
    b_values: tuple[float, ...]

    def __post_init__(self):
        bands = tuple(self.bands)
        b_values = tuple(float(b) for b in self.b_values)
        if not bands:
            raise ValueError("at least one band is required")
        if len(b_values) != len(bands):
            raise ValueError(f"{len(bands)} bands but {len(b_values)} b-values")
        grid = bands[0].grid
        if any(b.grid != grid for b in bands):
            raise ValueError("all bands must share one grid")
        if any(b < 0 for b in b_values):
            raise ValueError("b-values must be nonnegative")
        if any(b1 <= b0 for b0, b1 in zip(b_values, b_values[1:])):
            raise ValueError("b-values must be strictly increasing")
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "b_values", b_values)

    @property
    def grid(self) -> Grid:
        return self.bands[0].grid

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def data(self) -> np.ndarray:
        """Array of shape (n_bands, height, width)."""
        return np.stack([b.values for b in self.bands])

    def vectors(self) -> np.ndarray:
        """Condition vectors, one row per pixel in raster order: (height*width, n_bands)."""
        return self.data.reshape(self.n_bands, -1).T.copy()

    def pixel(self, row: int, col: int) -> np.ndarray:
        return np.array([b.values[row, col] for b in self.bands])


@dataclass(frozen=True, eq=False)
class Volume:
    slices: tuple[MultispectralImage, ...]

    def __post_init__(self):
        slices = tuple(self.slices)
        if not slices:
            raise ValueError("a volume needs at least one slice")
        first = slices[0]
        for s in slices[1:]:
            if s.grid != first.grid or s.b_values != first.b_values:
                raise ValueError("all slices must share grid and b-values")
        object.__setattr__(self, "slices", slices)

    @property
    def slice_count(self) -> int:
        return len(self.slices)

    @property
    def grid(self) -> Grid:
        return self.slices[0].grid

    @property
    def b_values(self) -> tuple[float, ...]:
        return self.slices[0].b_values


@dataclass(frozen=True, eq=False)
class LabelMap:
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        lab = np.array(self.labels)
        if lab.ndim != 2 or lab.size == 0:
            raise ValueError("labels must be a non-empty 2-D array")
        if not np.issubdtype(lab.dtype, np.integer):
            if not np.all(lab == np.round(lab)):
                raise ValueError("labels must be integers")
        lab = lab.astype(np.int64)
        m = int(self.class_count)
        if m < 1:
            raise ValueError("class_count must be positive")
        if lab.min() < 0 or lab.max() >= m:
            raise ValueError(f"labels must lie in 0..{m - 1}")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "class_count", m)

    @property
    def grid(self) -> Grid:
        return _grid_of(self.labels)

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.class_count == other.class_count and np.array_equal(self.labels, other.labels)


# --------------------------------------------------------------------------
# PGM I/O

_MAXVAL = {8: 255, 16: 65535}
_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_header(raw: bytes):
    if raw[:2] != b"P5":
        raise PGMError(f"unsupported PGM magic {raw[:2]!r}; only binary P5 is read")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise PGMError("malformed header: missing width/height/maxval")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise PGMError(f"malformed header token {m.group(1)!r}") from None
        pos = m.end()
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise PGMError("malformed header: no whitespace before payload")
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PGMError("malformed header: nonpositive dimensions")
    if maxval not in (255, 65535):
        raise PGMError(f"maxval must be 255 or 65535, got {maxval}")
    return width, height, maxval, pos + 1


def _read_pgm(path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    width, height, maxval, offset = _parse_header(raw)
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = raw[offset : offset + need]
    if len(payload) < need:
        raise PGMError(f"truncated payload: expected {need} bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return arr, maxval


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_pgm(path, arr: np.ndarray, maxval: int) -> None:
    height, width = arr.shape
    dtype = ">u2" if maxval == 65535 else "u1"
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    _atomic_write(path, header + np.ascontiguousarray(arr, dtype=dtype).tobytes())


def quantize(values: np.ndarray, bit_depth: int) -> np.ndarray:
    """Encode [0, 1] values as integers with round-half-up."""
    maxval = _MAXVAL[bit_depth]
    return np.floor(np.asarray(values, dtype=np.float64) * maxval + 0.5).astype(np.int64)


def read_band(path, bit_depth: int | None = None, grid: Grid | None = None) -> Band:
    """Read a binary PGM and scale it to [0, 1] by its maxval.

    ``bit_depth`` and ``grid``, when given, are checked against the header.
    """
    arr, maxval = _read_pgm(path)
    if bit_depth is not None:
        if bit_depth not in _MAXVAL:
            raise ValueError("bit_depth must be 8 or 16")
        if _MAXVAL[bit_depth] != maxval:
            raise PGMError(f"expected a {bit_depth}-bit file, header maxval is {maxval}")
    if grid is not None and _grid_of(arr) != grid:
        raise PGMError(f"dimension mismatch: file is {arr.shape[1]}x{arr.shape[0]}, "
                       f"expected {grid.width}x{grid.height}")
    return Band(arr.astype(np.float64) / maxval)


def write_band(band: Band, path, bit_depth: int = 8) -> None:
    if bit_depth not in _MAXVAL:
        raise ValueError("bit_depth must be 8 or 16")
    _write_pgm(path, quantize(band.values, bit_depth), _MAXVAL[bit_depth])


def write_labels(labels: LabelMap, path) -> None:
    """Label maps are stored as raw 8-bit indices (not scaled)."""
    if labels.class_count > 256:
        raise ValueError("8-bit label maps hold at most 256 classes")
    _write_pgm(path, labels.labels, 255)


def read_labels(path, class_count: int | None = None) -> LabelMap:
    arr, maxval = _read_pgm(path)
    if maxval != 255:
        raise PGMError("label maps must be 8-bit")
    arr = arr.astype(np.int64)
    m = int(arr.max()) + 1 if class_count is None else class_count
    return LabelMap(arr, m)


def write_binary(mask: np.ndarray, path) -> None:
    """Binary image as 0/255 PGM."""
    _write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0), 255)


# --------------------------------------------------------------------------
# Stacking, noise


def stack_bands(bands: Sequence[Band], b_values: Sequence[float]) -> MultispectralImage:
    return MultispectralImage(tuple(bands), tuple(b_values))


def add_noise(image: MultispectralImage, sigma: float, seed: int) -> MultispectralImage:
    """Additive i.i.d. Gaussian noise N(0, sigma^2) per pixel and band, clamped to [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if sigma == 0:
        return image
    rng = np.random.default_rng(seed)
    noisy = image.data + rng.normal(0.0, sigma, size=image.data.shape)
    np.clip(noisy, 0.0, 1.0, out=noisy)
    return MultispectralImage(tuple(Band(b) for b in noisy), image.b_values)


# --------------------------------------------------------------------------
# Phantoms


@dataclass(frozen=True)
class Tissue:
    name: str
    rho: float
    T2: float  # ms
    D: float  # mm^2/s
    label: int | None = None  # ground-truth class; defaults to the tissue index


@dataclass(frozen=True)
class Region:
    """Ellipse (center + semi-axes) or axis-aligned rectangle (center + half-sizes), in pixels.

    Present on slices ``z_start <= s < z_stop``.
    """

    shape: str
    center: tuple[float, float]  # (x, y)
    radii: tuple[float, float]
    tissue: int
    z_start: int = 0
    z_stop: int | None = None

    def mask(self, grid: Grid, s: int) -> np.ndarray:
        if s < self.z_start or (self.z_stop is not None and s >= self.z_stop):
            return np.zeros(grid.shape, dtype=bool)
        y, x = np.mgrid[0 : grid.height, 0 : grid.width].astype(np.float64)
        cx, cy = self.center
        rx, ry = self.radii
        if self.shape == "ellipse":
            return ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0
        return (np.abs(x - cx) <= rx) & (np.abs(y - cy) <= ry)


@dataclass(frozen=True)
class PhantomSpec:
    grid: Grid
    slice_count: int
    tissues: tuple[Tissue, ...]
    regions: tuple[Region, ...]
    K: float = 1.0
    TE: float = 50.0  # ms
    b_values: tuple[float, ...] = (0.0, 500.0, 1000.0)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tissues", tuple(self.tissues))
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "b_values", tuple(float(b) for b in self.b_values))
        self.validate()

    def validate(self) -> None:
        if self.slice_count < 1:
            raise PhantomSpecError("slice_count must be positive")
        if not self.tissues:
            raise PhantomSpecError("at least one tissue is required")
        if not 0.0 <= self.K <= 1.0:
            raise PhantomSpecError("K must lie in [0, 1]")
        if self.TE < 0:
            raise PhantomSpecError("TE must be nonnegative")
        if self.noise_sigma < 0:
            raise PhantomSpecError("noise_sigma must be nonnegative")
        if any(b < 0 for b in self.b_values) or any(
            b1 <= b0 for b0, b1 in zip(self.b_values, self.b_values[1:])
        ):
            raise PhantomSpecError("b-values must be nonnegative and strictly increasing")
        for t in self.tissues:
            if not 0.0 <= t.rho <= 1.0:
                raise PhantomSpecError(f"tissue {t.name}: rho must lie in [0, 1]")
            if t.T2 <= 0:
                raise PhantomSpecError(f"tissue {t.name}: T2 must be positive")
            if t.D < 0:
                raise PhantomSpecError(f"tissue {t.name}: D must be nonnegative")
        w, h = self.grid.width, self.grid.height
        for r in self.regions:
            if r.shape not in ("ellipse", "rect"):
                raise PhantomSpecError(f"unknown region shape {r.shape!r}")
            if not 0 <= r.tissue < len(self.tissues):
                raise PhantomSpecError(f"region references unknown tissue {r.tissue}")
            (cx, cy), (rx, ry) = r.center, r.radii
            if rx <= 0 or ry <= 0:
                raise PhantomSpecError("region radii must be positive")
            if cx - rx < -0.5 or cy - ry < -0.5 or cx + rx > w - 0.5 or cy + ry > h - 0.5:
                raise PhantomSpecError("region geometry must lie inside the grid")
            if r.z_start < 0 or (r.z_stop is not None and r.z_stop <= r.z_start):
                raise PhantomSpecError("invalid region z-range")

    @property
    def class_count(self) -> int:
        return max(self.tissue_label(i) for i in range(len(self.tissues))) + 1

    def tissue_label(self, i: int) -> int:
        t = self.tissues[i]
        return i if t.label is None else int(t.label)

    def condition_vector(self, i: int) -> np.ndarray:
        """Noiseless band values of tissue ``i``: K rho exp(-TE/T2) exp(-b D), clamped."""
        t = self.tissues[i]
        b = np.asarray(self.b_values)
        return np.clip(self.K * t.rho * math.exp(-self.TE / t.T2) * np.exp(-b * t.D), 0.0, 1.0)

    # JSON ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "width": self.grid.width,
            "height": self.grid.height,
            "slices": self.slice_count,
            "K": self.K,
            "TE": self.TE,
            "b_values": list(self.b_values),
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "tissues": [
                {"name": t.name, "rho": t.rho, "T2": t.T2, "D": t.D, "label": t.label}
                for t in self.tissues
            ],
            "regions": [
                {
                    "shape": r.shape,
                    "center": list(r.center),
                    "radii": list(r.radii),
                    "tissue": r.tissue,
                    "z": [r.z_start, r.z_stop],
                }
                for r in self.regions
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        try:
            tissues = tuple(
                Tissue(str(t["name"]), float(t["rho"]), float(t["T2"]), float(t["D"]), t.get("label"))
                for t in d["tissues"]
            )
            regions = []
            for r in d["regions"]:
                z = r.get("z", [0, None])
                regions.append(
                    Region(
                        r["shape"],
                        tuple(float(c) for c in r["center"]),
                        tuple(float(c) for c in r["radii"]),
                        int(r["tissue"]),
                        int(z[0]),
                        None if z[1] is None else int(z[1]),
                    )
                )
            return cls(
                grid=Grid(int(d["width"]), int(d["height"])),
                slice_count=int(d["slices"]),
                tissues=tissues,
                regions=tuple(regions),
                K=float(d.get("K", 1.0)),
                TE=float(d.get("TE", 50.0)),
                b_values=tuple(d.get("b_values", (0.0, 500.0, 1000.0))),
                noise_sigma=float(d.get("noise_sigma", 0.0)),
                seed=int(d.get("seed", 0)),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise PhantomSpecError(f"invalid phantom spec: {exc!r}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        return cls.from_dict(json.loads(text))


def tissue_map(spec: PhantomSpec, s: int) -> np.ndarray:
    """Tissue index per pixel of slice ``s``; later regions paint over earlier ones."""
    out = np.zeros(spec.grid.shape, dtype=np.int64)
    for r in spec.regions:
        out[r.mask(spec.grid, s)] = r.tissue
    return out


def synthesize_phantom(spec: PhantomSpec) -> tuple[Volume, list[LabelMap]]:
    """Render the phantom volume and its ground-truth label maps.

    Pixels not covered by any region take tissue 0. When ``spec.noise_sigma`` is
    positive, slice ``s`` gets noise seeded with ``spec.seed + s``.
    """
    vectors = np.stack([spec.condition_vector(i) for i in range(len(spec.tissues))])
    tissue_labels = np.array([spec.tissue_label(i) for i in range(len(spec.tissues))])
    m = spec.class_count
    slices, truth = [], []
    for s in range(spec.slice_count):
        tmap = tissue_map(spec, s)
        data = vectors[tmap]  # (h, w, n)
        img = MultispectralImage(tuple(Band(data[..., i]) for i in range(data.shape[-1])), spec.b_values)
        if spec.noise_sigma > 0:
            img = add_noise(img, spec.noise_sigma, spec.seed + s)
        slices.append(img)
        truth.append(LabelMap(tissue_labels[tmap], m))
    return Volume(tuple(slices)), truth


# Default tissue labels: 0 background (incl. skull), 1 CSF, 2 gray matter, 3 white matter.
BACKGROUND, CSF, GRAY_MATTER, WHITE_MATTER = 0, 1, 2, 3
CLASS_NAMES = ("background", "csf", "gray_matter", "white_matter")


def default_brain_phantom(size: int = 64, slices: int = 8, **overrides) -> PhantomSpec:
    """Nested-ellipse axial brain phantom.

    Tissues: background, skull ring, gray-matter rim, white-matter core and two
    CSF ventricles. The skull carries the background label. Ventricles are absent
    from the first and last slice. Keyword overrides are passed to PhantomSpec.
    """
    if size < 32:
        raise PhantomSpecError("phantom size must be at least 32 pixels")
    if slices < 1:
        raise PhantomSpecError("slices must be positive")
    c = (size - 1) / 2.0
    tissues = (
        Tissue("background", 0.0, 1.0, 0.0, BACKGROUND),
        Tissue("skull", 0.2, 30.0, 0.0001, BACKGROUND),
        Tissue("gray_matter", 1.0, 120.0, 0.0009, GRAY_MATTER),
        Tissue("white_matter", 0.65, 75.0, 0.0007, WHITE_MATTER),
        Tissue("csf", 1.0, 2000.0, 0.003, CSF),
    )
    z_last = slices - 1 if slices > 2 else slices
    z_first = 1 if slices > 2 else 0
    regions = (
        Region("ellipse", (c, c), (0.46 * size, 0.48 * size), 1),
        Region("ellipse", (c, c), (0.40 * size, 0.42 * size), 2),
        Region("ellipse", (c, c), (0.30 * size, 0.32 * size), 3),
        Region("ellipse", (c - 0.09 * size, c), (0.05 * size, 0.14 * size), 4, z_first, z_last),
        Region("ellipse", (c + 0.09 * size, c), (0.05 * size, 0.14 * size), 4, z_first, z_last),
    )
    params = dict(grid=Grid(size, size), slice_count=slices, tissues=tissues, regions=regions,
                  K=1.0, TE=50.0, b_values=(0.0, 500.0, 1000.0), noise_sigma=0.0, seed=0)
    params.update(overrides)
    return PhantomSpec(**params)


# --------------------------------------------------------------------------
# Volume directories


def band_filename(s: int, i: int) -> str:
    return f"slice{s:02}_band{i}.pgm"


def truth_filename(s: int) -> str:
    return f"slice{s:02}_truth.pgm"


def save_volume(volume: Volume, out_dir, truth: Sequence[LabelMap] | None = None,
                bit_depth: int = 16) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for s, img in enumerate(volume.slices):
        for i, band in enumerate(img.bands):
            write_band(band, out / band_filename(s, i), bit_depth)
    manifest = {
        "width": volume.grid.width,
        "height": volume.grid.height,
        "slices": volume.slice_count,
        "b_values": list(volume.b_values),
        "bit_depth": bit_depth,
    }
    if truth is not None:
        for s, lab in enumerate(truth):
            write_labels(lab, out / truth_filename(s))
        manifest["truth"] = [truth_filename(s) for s in range(len(truth))]
        manifest["class_count"] = truth[0].class_count
    _atomic_write(out / "manifest.json", (json.dumps(manifest, indent=2) + "\n").encode())


def load_volume(in_dir) -> tuple[Volume, list[LabelMap] | None]:
    d = Path(in_dir)
    manifest = json.loads((d / "manifest.json").read_text())
    grid = Grid(int(manifest["width"]), int(manifest["height"]))
    b_values = manifest["b_values"]
    bit_depth = int(manifest.get("bit_depth", 16))
    slices = []
    for s in range(int(manifest["slices"])):
        bands = [read_band(d / band_filename(s, i), bit_depth, grid) for i in range(len(b_values))]
        slices.append(stack_bands(bands, b_values))
    truth = None
    if "truth" in manifest:
        m = manifest.get("class_count")
        truth = [read_labels(d / name, m) for name in manifest["truth"]]
    return Volume(tuple(slices)), truth
