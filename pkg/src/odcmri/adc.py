"""Apparent Diffusion Coefficient maps from multispectral DW images.

The map is the sum over weighted bands of (C / b_i) * ln(f_1 / f_i), with f_1
the b=0 reference. For ideal data each term estimates D, so three bands give
2*C*D rather than C*D; the factor is left in, as the formula is written.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .image_model import Band, MultispectralImage, PhantomSpec, add_noise, synthesize_phantom


@dataclass(frozen=True)
class AdcConfig:
    C: float = 1.0
    epsilon: float = 1.0 / 65535
    # 2 * (CSF-like D of 3e-3) * C would saturate; 0.008 puts CSF near 0.75.
    output_scale: float = 0.008

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.output_scale <= 0:
            raise ValueError("output_scale must be positive")


def adc_raw(image: MultispectralImage, C: float = 1.0, epsilon: float = 1.0 / 65535) -> np.ndarray:
    """Unscaled ADC per pixel. Band values are floored at ``epsilon`` before the logs."""
    if image.n_bands < 2:
        raise ValueError("ADC needs at least two bands")
    b = image.b_values
    if b[0] != 0:
        raise ValueError("the first band must be the b=0 reference")
    if any(bi <= 0 for bi in b[1:]):
        raise ValueError("weighted bands need positive b-values")
    data = np.maximum(image.data, epsilon)
    log_ref = np.log(data[0])
    raw = np.zeros(image.grid.shape)
    for i in range(1, image.n_bands):
        raw += (C / b[i]) * (log_ref - np.log(data[i]))
    return raw


def compute_adc(image: MultispectralImage, cfg: AdcConfig = AdcConfig()) -> Band:
    raw = adc_raw(image, cfg.C, cfg.epsilon)
    return Band(np.clip(raw / cfg.output_scale, 0.0, 1.0))


def adc_image(image: MultispectralImage, cfg: AdcConfig = AdcConfig()) -> MultispectralImage:
    """The ADC map wrapped as a one-band image, so classifiers can consume it."""
    return MultispectralImage((compute_adc(image, cfg),), (0.0,))


def adc_artifact_demo(spec: PhantomSpec, sigma: float, seed: int, slice_index: int | None = None,
                      cfg: AdcConfig = AdcConfig()) -> tuple[Band, Band]:
    """ADC of one phantom slice before and after additive noise.

    Returns (noiseless, noisy). With noise, background pixels where the sample is
    absent pick up spurious, often saturated, diffusion values.
    """
    if not any(spec.tissues[r.tissue].rho == 0 for r in spec.regions) and spec.tissues[0].rho != 0:
        raise ValueError("the phantom needs a background region with rho = 0")
    clean_spec = replace(spec, noise_sigma=0.0)
    volume, _ = synthesize_phantom(clean_spec)
    s = volume.slice_count // 2 if slice_index is None else slice_index
    clean = volume.slices[s]
    noisy = add_noise(clean, sigma, seed)
    return compute_adc(clean, cfg), compute_adc(noisy, cfg)
