"""Command-line pipeline: phantom, adc, run, relabel, spectrum, similarity.

Exit codes: 0 success, 2 configuration/data/IO error, 3 undefined pattern
spectrum, 4 training failure (divergence or a degenerate phase).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from . import classifiers as clf
from .adc import AdcConfig, adc_image, compute_adc
from .dialectics import DegeneratePhaseError, OdcConfig, classify_odc, relabel, train_odc
from .image_model import (
    LabelMap,
    PGMError,
    PhantomSpec,
    PhantomSpecError,
    _atomic_write,
    default_brain_phantom,
    load_volume,
    read_labels,
    save_volume,
    synthesize_phantom,
    write_band,
    write_labels,
)
from .metrics import (
    SliceScores,
    UndefinedMetricError,
    build_confusion,
    generalization_index,
    kappa_spread,
    majority_mapping,
    scores_csv,
    volume_fractions,
)
from .morphology import (
    StructuringElement,
    UndefinedSpectrumError,
    class_mask,
    morphological_similarity,
    pattern_spectrum,
    spectrum_csv,
    spectrum_dict,
)

log = logging.getLogger("odcmri")

SEED_ENV = "ODCMRI_SEED"
CONFIG_VERSION = 1
METHODS = ("ODC", "KO", "LVQ", "CM", "MLP", "RBF", "PO", "ADC-CM")

EXIT_OK, EXIT_CONFIG, EXIT_SPECTRUM, EXIT_TRAINING = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def resolve_seed(cli_seed: int | None, fallback: int) -> int:
    """--seed beats the environment, which beats the config file."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return fallback


# --------------------------------------------------------------------------
# run configuration

DEFAULT_HYPER: dict[str, dict[str, Any]] = {
    "KO": {"nodes": 6, "iters": 200, "eta0": 0.1},
    "LVQ": {"iters": 200, "eta0": 0.1},
    "CM": {"iters": 200, "eta0": 0.1, "fuzzifier": 2.0},
    "ADC-CM": {"iters": 200, "eta0": 0.1, "fuzzifier": 2.0},
    "MLP": {"hidden": 60, "eta0": 0.2, "max_iters": 1000, "target_error": 0.05},
    "RBF": {"centers": 18, "kmeans_iters": 200, "eta0": 0.1, "out_iters": 200},
    "PO": {"eta0": 0.1, "max_iters": 200, "target_error": 0.05, "degree": 2},
}


@dataclass
class RunConfig:
    classifiers: list[str] = field(default_factory=lambda: ["ODC"])
    volume: str | None = None
    phantom: dict | None = None
    train_slice: int | None = None
    seed: int = 0
    samples_per_class: int | None = 50
    fluid: list[int] = field(default_factory=lambda: [1])
    matter: list[int] = field(default_factory=lambda: [2, 3])
    odc: dict = field(default_factory=dict)
    merge: dict | None = None
    hyper: dict = field(default_factory=dict)
    adc: dict = field(default_factory=dict)
    out_dir: str = "run_out"
    version: int = CONFIG_VERSION

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunConfig":
        if not isinstance(d, Mapping):
            raise ConfigError("run config must be a JSON object")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if not self.classifiers:
            raise ConfigError("no classifiers requested")
        bad = [c for c in self.classifiers if c not in METHODS]
        if bad:
            raise ConfigError(f"unknown classifiers {bad}; choose from {list(METHODS)}")
        if self.volume is not None and self.phantom is not None:
            raise ConfigError("give either 'volume' or 'phantom', not both")
        unknown = set(self.hyper) - set(DEFAULT_HYPER)
        if unknown:
            raise ConfigError(f"hyperparameters for unknown methods {sorted(unknown)}")
        for kind, params in self.hyper.items():
            extra = set(params) - set(DEFAULT_HYPER[kind])
            if extra:
                raise ConfigError(f"unknown {kind} hyperparameters {sorted(extra)}")
        if "seed" in self.odc:
            raise ConfigError("the ODC seed comes from the run seed; drop odc.seed")
        try:
            OdcConfig.from_dict(self.odc)
            AdcConfig(**self.adc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.samples_per_class is not None and self.samples_per_class < 1:
            raise ConfigError("samples_per_class must be positive")

    def hyper_for(self, kind: str) -> dict:
        return {**DEFAULT_HYPER[kind], **self.hyper.get(kind, {})}


def load_run_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    try:
        return RunConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _load_inputs(cfg: RunConfig, base: Path):
    if cfg.volume is not None:
        volume, truth = load_volume(base / cfg.volume)
        if truth is None:
            raise ConfigError("the volume has no ground-truth maps to score against")
        return volume, truth
    spec = PhantomSpec.from_dict(cfg.phantom) if cfg.phantom is not None else default_brain_phantom()
    return synthesize_phantom(spec)


# --------------------------------------------------------------------------
# pipeline


@dataclass
class MethodResult:
    raw_maps: list[LabelMap]
    maps: list[LabelMap]
    model: dict
    merge: dict[int, int] | None = None


def _unsupervised_fit(kind, vectors, m, hyper, seed):
    if kind == "KO":
        return clf.train_som(vectors, hyper["nodes"], hyper["iters"], hyper["eta0"], seed)
    return clf.train_fcm(vectors, m, hyper["iters"], hyper["eta0"], hyper["fuzzifier"], seed)


def _supervised_fit(kind, ts, hyper, seed):
    if kind == "LVQ":
        return clf.train_lvq(ts, seed=seed, **hyper)
    if kind == "MLP":
        return clf.train_mlp(ts, seed=seed, **hyper)
    if kind == "RBF":
        return clf.train_rbf(ts, seed=seed, **hyper)
    return clf.train_polynomial(ts, seed=seed, **hyper)


def run_method(kind: str, cfg: RunConfig, seed: int, volume, truth) -> MethodResult:
    s = cfg.train_slice
    m = truth[s].class_count
    if kind == "ODC":
        odc_cfg = replace(OdcConfig.from_dict(cfg.odc), seed=seed)
        vectors = volume.slices[s].vectors()
        order = np.random.default_rng(seed).permutation(vectors.shape[0])
        system = train_odc(vectors[order], odc_cfg)
        raw = [classify_odc(system, img) for img in volume.slices]
        merge = ({int(k): int(v) for k, v in cfg.merge.items()} if cfg.merge is not None
                 else majority_mapping(raw[s], truth[s]))
        maps = [relabel(r, merge, m) for r in raw]
        return MethodResult(raw, maps, {"config": odc_cfg.to_dict(), "system": system.to_dict()}, merge)

    hyper = cfg.hyper_for(kind)
    if kind in ("KO", "CM", "ADC-CM"):
        slices = volume.slices
        if kind == "ADC-CM":
            adc_cfg = AdcConfig(**cfg.adc)
            slices = [adc_image(img, adc_cfg) for img in slices]
        model = _unsupervised_fit("KO" if kind == "KO" else "CM", slices[s].vectors(), m, hyper, seed)
        raw = [clf.classify(model, img) for img in slices]
        merge = majority_mapping(raw[s], truth[s])
        maps = [relabel(r, merge, m) for r in raw]
        return MethodResult(raw, maps, model.to_dict(), merge)

    ts = clf.extract_training_set(volume.slices[s], truth[s], cfg.samples_per_class, seed)
    model = _supervised_fit(kind, ts, hyper, seed)
    maps = [clf.classify(model, img) for img in volume.slices]
    return MethodResult(maps, maps, model.to_dict())


def _maybe(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


def score_method(result: MethodResult, truth, cfg: RunConfig) -> dict:
    m = truth[0].class_count
    slices = []
    for s, (pred, tru) in enumerate(zip(result.maps, truth)):
        cm = build_confusion(pred, tru, m)
        scores = SliceScores()
        try:
            scores.add(cm)
            phi, k = scores.accuracy[0], scores.kappa[0]
        except UndefinedMetricError:
            phi, k = float(np.trace(cm) / cm.sum()), None
        slices.append({"s": s, "phi": phi, "kappa": k, "confusion": cm.tolist()})
    kappas = [r["kappa"] for r in slices if r["kappa"] is not None]
    report = {"slices": slices, "kappa_range": None, "kappa_mean": None, "generalization_index": None}
    if len(kappas) >= 2:
        report["kappa_range"], report["kappa_mean"] = kappa_spread(kappas)
        report["generalization_index"] = _maybe(generalization_index, kappas)
    vols = _maybe(volume_fractions, result.maps, m, cfg.fluid, cfg.matter)
    report["volume_fractions"] = None if vols is None else list(vols.fractions)
    report["fluid_matter_ratio"] = None if vols is None else vols.ratio
    return report


def _csv_for(report: dict) -> str:
    scores = SliceScores()
    for r in report["slices"]:
        scores.accuracy.append(r["phi"])
        scores.kappa.append(float("nan") if r["kappa"] is None else r["kappa"])
    lines = scores_csv(scores).splitlines()
    lines.append("")
    m = len(report["volume_fractions"] or [])
    lines.append(",".join([f"V{i}" for i in range(m)] + ["fluid_matter_ratio", "generalization_index",
                                                          "kappa_range", "kappa_mean"]))
    tail = [report["fluid_matter_ratio"], report["generalization_index"], report["kappa_range"], report["kappa_mean"]]
    lines.append(",".join(repr(v) if v is not None else "" for v in (report["volume_fractions"] or []) + tail))
    return "\n".join(lines) + "\n"


def run_pipeline(cfg: RunConfig, seed: int, base: Path, out_dir: Path) -> dict:
    volume, truth = _load_inputs(cfg, base)
    if cfg.train_slice is None:
        cfg = replace(cfg, train_slice=volume.slice_count // 2)
    if not 0 <= cfg.train_slice < volume.slice_count:
        raise ConfigError(f"train_slice {cfg.train_slice} outside 0..{volume.slice_count - 1}")
    if len(truth) != volume.slice_count:
        raise ConfigError("truth maps do not cover every slice")
    echo = {**asdict(cfg), "seed": seed}
    summary = {"tool": "odcmri", "version": __version__, "config": echo, "methods": {}}
    for kind in cfg.classifiers:
        log.info("running %s", kind)
        result = run_method(kind, cfg, seed, volume, truth)
        method_dir = out_dir / kind
        (method_dir / "labels").mkdir(parents=True, exist_ok=True)
        for s, lm in enumerate(result.maps):
            write_labels(lm, method_dir / "labels" / f"slice{s:02}.pgm")
        if result.merge is not None:
            (method_dir / "clusters").mkdir(exist_ok=True)
            for s, lm in enumerate(result.raw_maps):
                write_labels(lm, method_dir / "clusters" / f"slice{s:02}.pgm")
        model_name = "system.json" if kind == "ODC" else "model.json"
        _atomic_write(method_dir / model_name, _dump_json(result.model))
        report = {"tool": "odcmri", "version": __version__, "method": kind, "seed": seed,
                  "train_slice": cfg.train_slice, "config": echo,
                  "hyperparameters": (result.model["config"] if kind == "ODC" else cfg.hyper_for(kind)),
                  "merge": None if result.merge is None else {str(k): v for k, v in sorted(result.merge.items())},
                  **score_method(result, truth, cfg)}
        _atomic_write(method_dir / "report.json", _dump_json(report))
        _atomic_write(method_dir / "report.csv", _csv_for(report).encode())
        summary["methods"][kind] = {k: report[k] for k in ("kappa_mean", "generalization_index",
                                                           "fluid_matter_ratio", "volume_fractions")}
    _atomic_write(out_dir / "summary.json", _dump_json(summary))
    return summary


# --------------------------------------------------------------------------
# commands


def cmd_phantom(args) -> int:
    if args.spec is not None:
        spec = PhantomSpec.from_json(Path(args.spec).read_text())
    else:
        spec = default_brain_phantom(args.size, args.slices)
    seed = resolve_seed(args.seed, spec.seed)
    if args.noise is not None or seed != spec.seed:
        spec = replace(spec, seed=seed, noise_sigma=spec.noise_sigma if args.noise is None else args.noise)
    volume, truth = synthesize_phantom(spec)
    out = Path(args.out)
    save_volume(volume, out, truth, args.bit_depth)
    _atomic_write(out / "phantom_spec.json", (spec.to_json() + "\n").encode())
    print(f"wrote {volume.slice_count} slices x {len(volume.b_values)} bands to {out}")
    return EXIT_OK


def cmd_adc(args) -> int:
    volume, _ = load_volume(args.volume)
    cfg = AdcConfig(args.C, args.epsilon, args.output_scale)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s, img in enumerate(volume.slices):
        write_band(compute_adc(img, cfg), out / f"slice{s:02}_adc.pgm", args.bit_depth)
    _atomic_write(out / "adc.json", _dump_json({"version": __version__, **asdict(cfg),
                                                 "slices": volume.slice_count}))
    print(f"wrote {volume.slice_count} ADC maps to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_run_config(args.config)
    seed = resolve_seed(args.seed, cfg.seed)
    base = Path(args.config).resolve().parent
    out_dir = Path(args.out) if args.out else base / cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = run_pipeline(cfg, seed, base, out_dir)
    for kind, res in summary["methods"].items():
        k = res["kappa_mean"]
        print(f"{kind:7s} mean kappa {'n/a' if k is None else f'{k:.4f}'}")
    return EXIT_OK


def _parse_merge(text: str) -> dict:
    p = Path(text)
    raw = p.read_text() if p.exists() else text
    try:
        merge = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"merge map is neither a file nor JSON: {exc}") from exc
    if not isinstance(merge, dict):
        raise ConfigError("merge map must be a JSON object")
    return merge


def cmd_relabel(args) -> int:
    labels = read_labels(args.labels)
    try:
        out = relabel(labels, _parse_merge(args.merge), args.classes)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    write_labels(out, args.out)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    mask = class_mask(read_labels(args.labels), args.class_id)
    spectrum = pattern_spectrum(mask, StructuringElement(args.se))
    text = spectrum_csv(spectrum)
    if args.out:
        _atomic_write(Path(args.out), text.encode())
    else:
        sys.stdout.write(text)
    if args.json:
        _atomic_write(Path(args.json), _dump_json(spectrum_dict(spectrum)))
    return EXIT_OK


def cmd_similarity(args) -> int:
    a, b = read_labels(args.a), read_labels(args.b)
    if a.grid != b.grid:
        raise ConfigError("label maps have different grids")
    q = morphological_similarity(class_mask(a, args.class_id), class_mask(b, args.class_id),
                                 StructuringElement(args.se))
    print(f"{q:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="odcmri", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    ph = sub.add_parser("phantom", help="synthesize a DW-MR phantom volume with ground truth")
    ph.add_argument("--spec", help="PhantomSpec JSON (default: built-in brain phantom)")
    ph.add_argument("--out", required=True)
    ph.add_argument("--size", type=int, default=64)
    ph.add_argument("--slices", type=int, default=8)
    ph.add_argument("--noise", type=float)
    ph.add_argument("--seed", type=int)
    ph.add_argument("--bit-depth", type=int, choices=(8, 16), default=16)
    ph.set_defaults(func=cmd_phantom)

    ad = sub.add_parser("adc", help="compute ADC maps of a volume directory")
    ad.add_argument("volume")
    ad.add_argument("--out", required=True)
    ad.add_argument("--C", type=float, default=AdcConfig.C)
    ad.add_argument("--epsilon", type=float, default=AdcConfig.epsilon)
    ad.add_argument("--output-scale", type=float, default=AdcConfig.output_scale)
    ad.add_argument("--bit-depth", type=int, choices=(8, 16), default=16)
    ad.set_defaults(func=cmd_adc)

    rn = sub.add_parser("run", help="train on one slice, classify and score every slice")
    rn.add_argument("config")
    rn.add_argument("--seed", type=int)
    rn.add_argument("--out", help="output directory (overrides out_dir in the config)")
    rn.set_defaults(func=cmd_run)

    rl = sub.add_parser("relabel", help="merge cluster labels into classes")
    rl.add_argument("labels")
    rl.add_argument("--merge", required=True, help="JSON object or file mapping label -> class")
    rl.add_argument("--classes", type=int)
    rl.add_argument("--out", required=True)
    rl.set_defaults(func=cmd_relabel)

    se_choices = [s.value for s in StructuringElement]
    sp = sub.add_parser("spectrum", help="pattern spectrum of one class mask as CSV")
    sp.add_argument("labels")
    sp.add_argument("--class", dest="class_id", type=int, required=True)
    sp.add_argument("--se", choices=se_choices, default="square")
    sp.add_argument("--out", help="CSV path (default: stdout)")
    sp.add_argument("--json", help="also write the spectrum as JSON")
    sp.set_defaults(func=cmd_spectrum)

    si = sub.add_parser("similarity", help="morphological similarity of one class in two maps")
    si.add_argument("a")
    si.add_argument("b", help="reference map")
    si.add_argument("--class", dest="class_id", type=int, required=True)
    si.add_argument("--se", choices=se_choices, default="square")
    si.set_defaults(func=cmd_similarity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UndefinedSpectrumError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPECTRUM
    except (clf.DivergedError, DegeneratePhaseError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (ConfigError, PGMError, PhantomSpecError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
