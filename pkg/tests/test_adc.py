import math

import numpy as np
import pytest

from odcmri.adc import AdcConfig, adc_artifact_demo, adc_image, adc_raw, compute_adc
from odcmri.image_model import Band, MultispectralImage, default_brain_phantom, synthesize_phantom


def image(*bands, b=(0, 500, 1000)):
    return MultispectralImage(tuple(Band(np.array([[v]], dtype=float)) for v in bands), b)


def test_hand_evaluated_example():
    raw = adc_raw(image(1.0, math.exp(-1.5), math.exp(-3.0)))
    assert raw[0, 0] == pytest.approx(1.5 / 500 + 3 / 1000, abs=1e-15)


def test_identical_bands_give_zero():
    assert adc_raw(image(0.4, 0.4, 0.4))[0, 0] == 0.0


def test_zero_signal_is_clamped_to_epsilon():
    raw = adc_raw(image(1.0, 0.0, b=(0, 500)))
    assert raw[0, 0] == pytest.approx(math.log(65535) / 500)
    assert np.isfinite(raw).all()


def test_errors():
    with pytest.raises(ValueError):
        adc_raw(image(1.0, b=(0,)))
    with pytest.raises(ValueError):
        adc_raw(image(1.0, 0.5, b=(100, 500)))
    with pytest.raises(ValueError):
        AdcConfig(C=0)


def test_scaled_map_is_clipped_band():
    band = compute_adc(image(1.0, 1e-4, 1e-4), AdcConfig(output_scale=0.008))
    assert band.values[0, 0] == 1.0
    one = adc_image(image(1.0, math.exp(-0.5), math.exp(-1.0)))
    assert one.n_bands == 1
    assert one.bands[0].values[0, 0] == pytest.approx(0.002 / 0.008)


def test_artifact_demo_background():
    spec = default_brain_phantom(64, 3)
    clean, same = adc_artifact_demo(spec, 0.0, 0)
    _, truth = synthesize_phantom(spec)
    np.testing.assert_array_equal(clean.values, same.values)
    corner = np.zeros((64, 64), dtype=bool)
    corner[:4, :4] = True
    assert np.all(clean.values[corner] == 0)
    _, noisy1 = adc_artifact_demo(spec, 0.05, 1)
    _, noisy2 = adc_artifact_demo(spec, 0.05, 2)
    assert np.abs(noisy1.values[corner]).mean() > np.abs(clean.values[corner]).mean()
    assert not np.array_equal(noisy1.values, noisy2.values)
    outside = truth[1].labels == 0
    s1, s2 = noisy1.values[outside].mean(), noisy2.values[outside].mean()
    assert abs(s1 - s2) <= 0.2 * max(s1, s2)
