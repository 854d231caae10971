import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from odcmri.image_model import (
    Band,
    Grid,
    LabelMap,
    MultispectralImage,
    PGMError,
    PhantomSpec,
    PhantomSpecError,
    Region,
    Tissue,
    add_noise,
    default_brain_phantom,
    load_volume,
    quantize,
    read_band,
    read_labels,
    save_volume,
    stack_bands,
    synthesize_phantom,
    write_band,
    write_binary,
    write_labels,
)


def test_read_band_scales_bytes(tmp_path):
    p = tmp_path / "b.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    band = read_band(p, 8)
    np.testing.assert_array_equal(band.values, [[0, 1], [128 / 255, 64 / 255]])


def test_read_band_handles_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n# depth\n255\n" + bytes([10, 20]))
    assert read_band(p).grid == Grid(2, 1)


def test_read_band_16bit_big_endian(tmp_path):
    p = tmp_path / "w.pgm"
    p.write_bytes(b"P5\n2 1\n65535\n" + bytes([0xFF, 0xFF, 0x00, 0x01]))
    np.testing.assert_array_equal(read_band(p, 16).values, [[1.0, 1 / 65535]])


@pytest.mark.parametrize("payload", [
    b"P2\n2 2\n255\n0 1 2 3\n",
    b"P5\n2 x\n255\n" + bytes(4),
    b"P5\n2 2\n100\n" + bytes(4),
    b"P5\n2 2\n255\n" + bytes(3),
])
def test_read_band_rejects_bad_files(tmp_path, payload):
    p = tmp_path / "bad.pgm"
    p.write_bytes(payload)
    with pytest.raises(PGMError):
        read_band(p)


def test_read_band_checks_grid_and_depth(tmp_path):
    p = tmp_path / "b.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
    with pytest.raises(PGMError):
        read_band(p, grid=Grid(3, 2))
    with pytest.raises(PGMError):
        read_band(p, bit_depth=16)


def test_write_band_bytes(tmp_path):
    p = tmp_path / "o.pgm"
    write_band(Band(np.array([[0.0, 1.0, 0.5]])), p, 8)
    assert p.read_bytes().endswith(bytes([0, 255, 128]))
    write_band(Band(np.zeros((2, 2))), p, 8)
    assert p.read_bytes().endswith(bytes(4))


def test_quantize_rounds_half_up():
    assert quantize(np.array([0.5]), 8)[0] == 128
    assert quantize(np.array([1.0]), 16)[0] == 65535


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6))))
def test_band_round_trip_8bit(tmp_path_factory, raw):
    p = tmp_path_factory.mktemp("rt") / "b.pgm"
    band = Band(raw / 255.0)
    write_band(band, p, 8)
    np.testing.assert_array_equal(read_band(p, 8).values, band.values)


def test_band_validation():
    with pytest.raises(ValueError):
        Band(np.array([[1.5]]))
    with pytest.raises(ValueError):
        Band(np.zeros(3))


def test_stack_bands():
    b = Band(np.zeros((64, 64)))
    img = stack_bands([b, b, b], (0, 500, 1000))
    assert img.n_bands == 3 and img.vectors().shape == (64 * 64, 3)
    assert stack_bands([b], (0,)).n_bands == 1
    with pytest.raises(ValueError):
        stack_bands([b, Band(np.zeros((32, 64)))], (0, 500))
    with pytest.raises(ValueError):
        stack_bands([b, b], (0,))
    with pytest.raises(ValueError):
        stack_bands([b, b], (500, 0))


def test_vectors_are_raster_order():
    img = MultispectralImage((Band(np.array([[0.1, 0.2]])), Band(np.array([[0.3, 0.4]]))), (0, 1))
    np.testing.assert_array_equal(img.vectors(), [[0.1, 0.3], [0.2, 0.4]])
    np.testing.assert_array_equal(img.pixel(0, 1), [0.2, 0.4])


def test_label_map_round_trip(tmp_path):
    lm = LabelMap(np.array([[0, 1], [3, 2]]), 4)
    write_labels(lm, tmp_path / "l.pgm")
    assert read_labels(tmp_path / "l.pgm", 4) == lm
    with pytest.raises(ValueError):
        LabelMap(np.array([[0, 4]]), 4)


def test_write_binary(tmp_path):
    write_binary(np.array([[True, False]]), tmp_path / "m.pgm")
    assert (tmp_path / "m.pgm").read_bytes().endswith(bytes([255, 0]))


def single_tissue(rho=1.0, T2=1e9, D=0.003, TE=0.0, **kw):
    return PhantomSpec(Grid(4, 4), 1, (Tissue("t", rho, T2, D),), (Region("rect", (1.5, 1.5), (2, 2), 0),),
                       TE=TE, **kw)


def test_signal_equation_example():
    volume, _ = synthesize_phantom(single_tissue())
    np.testing.assert_allclose(volume.slices[0].pixel(0, 0), [1, math.exp(-1.5), math.exp(-3)], rtol=1e-12)


def test_zero_diffusion_gives_equal_bands():
    v = synthesize_phantom(single_tissue(rho=0.7, T2=80, TE=50, D=0.0))[0].slices[0].pixel(1, 1)
    assert v[0] == v[1] == v[2] > 0


def test_background_is_zero(phantom):
    _, volume, truth = phantom
    assert np.all(volume.slices[3].data[:, 0, 0] == 0)
    assert truth[3].labels[0, 0] == 0


def test_noise_contract():
    img = MultispectralImage((Band(np.full((64, 64), 0.5)),), (0,))
    assert add_noise(img, 0.0, 3) is img
    a, b = add_noise(img, 0.05, 1), add_noise(img, 0.05, 1)
    np.testing.assert_array_equal(a.data, b.data)
    assert abs(a.data.std(ddof=1) - 0.05) < 0.005


def test_default_phantom_labels(phantom):
    spec, volume, truth = phantom
    assert volume.slice_count == 8 and volume.grid == Grid(64, 64)
    for s in range(1, 7):
        assert sorted(np.unique(truth[s].labels)) == [0, 1, 2, 3]
    d = {t.name: t.D for t in spec.tissues}
    assert d["white_matter"] < d["gray_matter"] < d["csf"]
    with pytest.raises(PhantomSpecError):
        default_brain_phantom(31)


def test_phantom_spec_json_round_trip():
    spec = default_brain_phantom(40, 3, noise_sigma=0.02, seed=9)
    again = PhantomSpec.from_json(spec.to_json())
    assert again.to_dict() == spec.to_dict()


@pytest.mark.parametrize("bad", [
    {"K": 2.0}, {"TE": -1.0}, {"noise_sigma": -0.1}, {"b_values": (0.0, 0.0)},
])
def test_phantom_spec_validation(bad):
    with pytest.raises(PhantomSpecError):
        default_brain_phantom(**bad)


def test_phantom_spec_rejects_out_of_grid_region():
    with pytest.raises(PhantomSpecError):
        PhantomSpec(Grid(4, 4), 1, (Tissue("t", 1, 10, 0),), (Region("ellipse", (2, 2), (5, 1), 0),))


def test_volume_directory_round_trip(tmp_path):
    spec = default_brain_phantom(32, 2, noise_sigma=0.03, seed=4)
    volume, truth = synthesize_phantom(spec)
    save_volume(volume, tmp_path, truth, 16)
    loaded, loaded_truth = load_volume(tmp_path)
    assert loaded.slice_count == 2 and loaded.b_values == volume.b_values
    for a, b in zip(loaded.slices, volume.slices):
        np.testing.assert_allclose(a.data, b.data, atol=0.5 / 65535 + 1e-12)
    assert all(x == y for x, y in zip(loaded_truth, truth))


def test_phantom_noise_is_seeded_per_slice():
    spec = default_brain_phantom(32, 2, noise_sigma=0.05, seed=1)
    a, _ = synthesize_phantom(spec)
    b, _ = synthesize_phantom(spec)
    np.testing.assert_array_equal(a.slices[1].data, b.slices[1].data)
    assert not np.array_equal(a.slices[0].data - a.slices[1].data, 0)
