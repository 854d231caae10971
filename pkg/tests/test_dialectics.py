import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from odcmri.dialectics import (
    Anticontradiction,
    DegeneratePhaseError,
    DialecticalSystem,
    OdcConfig,
    UpdateRule,
    anticontradiction,
    anticontradictions,
    classify_odc,
    contradiction,
    eta_schedule,
    evolution_step,
    normalized_forces,
    relabel,
    revolutionary_crisis,
    train_odc,
    winner_index,
)
from odcmri.image_model import Band, LabelMap, MultispectralImage
from odcmri.metrics import build_confusion, kappa, majority_mapping


def system(weights, kind=Anticontradiction.GAUSS, rule=UpdateRule.PLAIN, forces=None):
    w = np.array(weights, dtype=float)
    f = np.zeros(len(w)) if forces is None else np.array(forces, dtype=float)
    return DialecticalSystem(w, f, kind, rule)


def test_gauss_anticontradiction():
    s = system([[0.2, 0.3, 0.4], [0.0, 0.0, 0.0]])
    assert anticontradiction(s, 0, [0.2, 0.3, 0.4]) == 1.0
    assert anticontradiction(s, 1, [1.0, 0.0, 0.0]) == pytest.approx(math.exp(-1))


def test_ratio_equidistant_and_exact_hit():
    s = system([[0.0], [1.0]], Anticontradiction.RATIO)
    np.testing.assert_allclose(anticontradictions(s, [0.5]), [0.5, 0.5])
    np.testing.assert_array_equal(anticontradictions(s, [1.0]), [0.0, 1.0])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        anticontradictions(system([[0.0, 0.0]]), [0.1])


def test_winner_index():
    assert winner_index(system([[0.3]]), [0.9]) == 0
    assert winner_index(system([[0, 0, 0], [1, 1, 1]]), [0.1, 0.1, 0.1]) == 0
    assert winner_index(system([[0.0], [0.4], [0.6]]), [0.5]) == 1


def test_evolution_step_plain():
    s, k = evolution_step(system([[0, 0, 0]]), [1, 1, 1], 0.1)
    assert k == 0
    np.testing.assert_allclose(s.weights[0], [0.1, 0.1, 0.1])
    assert s.forces[0] == 1.0


def test_evolution_step_fixed_point_and_g_squared():
    base = system([[0.5, 0.5]], rule=UpdateRule.G_SQUARED)
    s, _ = evolution_step(base, [0.5, 0.5], 0.3)
    np.testing.assert_array_equal(s.weights, base.weights)
    assert s.forces[0] == 1.0
    # away from the pole g < 1 shrinks the step relative to PLAIN
    far_sq, _ = evolution_step(base, [1.0, 1.0], 0.3)
    far_plain, _ = evolution_step(system([[0.5, 0.5]]), [1.0, 1.0], 0.3)
    g = math.exp(-math.sqrt(0.5))
    np.testing.assert_allclose(far_sq.weights[0] - 0.5, (far_plain.weights[0] - 0.5) * g * g)
    with pytest.raises(ValueError):
        evolution_step(base, [0.5, 0.5], 0.0)


def test_normalized_forces():
    np.testing.assert_allclose(normalized_forces(system([[0], [0], [0]], forces=[10, 5, 0])), [1, 0.5, 0])
    np.testing.assert_allclose(normalized_forces(system([[0]], forces=[4])), [1])
    np.testing.assert_allclose(normalized_forces(system([[0], [1]], forces=[3, 3])), [1, 1])
    with pytest.raises(DegeneratePhaseError):
        normalized_forces(system([[0], [1]]))


def test_contradiction():
    s = system([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    assert contradiction(s, 0, 2) == 0.0
    assert contradiction(s, 0, 1) == pytest.approx(1 - math.exp(-1))
    assert contradiction(s, 0, 1) == contradiction(s, 1, 0)
    with pytest.raises(ValueError):
        contradiction(s, 1, 1)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 4)), elements=st.floats(0, 1)),
       st.data())
def test_ratio_memberships_normalized(weights, data):
    s = system(weights, Anticontradiction.RATIO)
    x = data.draw(arrays(np.float64, weights.shape[1], elements=st.floats(0, 1)))
    g = anticontradictions(s, x)
    assert abs(g.sum() - 1) <= 1e-9
    assert np.all(g >= 0)


def crisis_cfg(**kw):
    base = dict(chi_max=0.0, f_min=0.0, delta_min=0.0, synthesis=False)
    base.update(kw)
    return OdcConfig(**base)


def test_neutral_crisis_only_resets_forces():
    s = system([[0.1, 0.2], [0.8, 0.9], [0.5, 0.5]], forces=[3, 2, 1])
    out, rec = revolutionary_crisis(s, crisis_cfg(target_poles=2), np.random.default_rng(0))
    np.testing.assert_array_equal(out.weights, s.weights)
    assert np.all(out.forces == 0) and rec.poles_after == 3


def test_close_pair_absorbs_later_pole():
    s = system([[0.5, 0.5], [0.52, 0.5], [0.0, 1.0]], forces=[1, 1, 1])
    out, rec = revolutionary_crisis(s, crisis_cfg(delta_min=0.25, target_poles=1), np.random.default_rng(0))
    assert rec.absorbed == (1,)
    np.testing.assert_array_equal(out.weights, [[0.5, 0.5], [0.0, 1.0]])


def test_weak_poles_are_removed():
    s = system([[0.0], [0.5], [1.0]], forces=[100, 0, 50])
    out, rec = revolutionary_crisis(s, crisis_cfg(f_min=0.01, target_poles=1), np.random.default_rng(0))
    assert rec.weak == (1,)
    np.testing.assert_array_equal(out.weights, [[0.0], [1.0]])


def test_synthesis_interleaves_coordinates():
    s = system([[0.1, 0.2, 0.3], [0.9, 0.8, 0.7]], forces=[1, 1])
    out, rec = revolutionary_crisis(s, crisis_cfg(synthesis=True, target_poles=1), np.random.default_rng(0))
    assert rec.synthesized_from == (0, 1)
    np.testing.assert_array_equal(out.weights[-1], [0.1, 0.8, 0.3])


def test_degenerate_crisis_keeps_strongest():
    s = system([[0.0], [1.0]], forces=[1, 5])
    cfg = crisis_cfg(f_min=1.0, target_poles=1)
    out, rec = revolutionary_crisis(s, cfg, np.random.default_rng(0))
    # pole 0 is weak, pole 1 survives on its own
    assert out.size == 1 and not rec.degenerate
    s = system([[0.0], [0.001]], forces=[1, 5])
    out, rec = revolutionary_crisis(s, crisis_cfg(f_min=1.0, delta_min=0.5, target_poles=1),
                                    np.random.default_rng(0))
    assert rec.degenerate and out.size == 1 and out.weights[0, 0] == 0.001


def test_perturbation_is_clamped():
    s = system([[0.0, 1.0]] * 2, forces=[1, 1])
    out, _ = revolutionary_crisis(s, crisis_cfg(chi_max=1.0, target_poles=1), np.random.default_rng(0))
    assert np.all((out.weights >= 0) & (out.weights <= 1))


def test_eta_schedule():
    assert eta_schedule(0.1, 0.01, 0, 100) == 0.1
    assert eta_schedule(0.1, 0.01, 100, 100) == pytest.approx(0.01)
    assert eta_schedule(0.005, 0.01, 50, 100) == 0.005


def test_config_round_trip_and_validation():
    cfg = OdcConfig(seed=3, synthesis=True)
    assert OdcConfig.from_json(json.dumps(cfg.to_dict())) == cfg
    with pytest.raises(ValueError):
        OdcConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        OdcConfig(target_poles=11, initial_poles=10)


def test_train_odc_on_phantom_recovers_tissues(phantom):
    spec, volume, truth = phantom
    img = volume.slices[4]
    data = img.vectors()[np.random.default_rng(0).permutation(64 * 64)]
    sys_ = train_odc(data, OdcConfig())
    assert 4 <= sys_.size <= 10
    # one representative tissue per class: background, csf, gray, white
    for tissue in (0, 4, 2, 3):
        v = spec.condition_vector(tissue)
        assert np.min(np.max(np.abs(sys_.weights - v), axis=1)) <= 0.05
    labels = classify_odc(sys_, img)
    merged = relabel(labels, majority_mapping(labels, truth[4]), 4)
    assert kappa(build_confusion(merged, truth[4], 4)) == 1.0


def test_train_odc_single_attractor():
    data = np.tile([0.3, 0.6, 0.2], (50, 1))
    s = train_odc(data, OdcConfig(n_phases=3, phase_length=20))
    np.testing.assert_allclose(s.weights, [[0.3, 0.6, 0.2]], atol=1e-9)


def test_train_odc_is_deterministic_and_serializable():
    data = np.random.default_rng(1).random((200, 3))
    a = train_odc(data, OdcConfig(phase_length=5, seed=7))
    b = train_odc(data, OdcConfig(phase_length=5, seed=7))
    np.testing.assert_array_equal(a.weights, b.weights)
    again = DialecticalSystem.from_dict(json.loads(json.dumps(a.to_dict())))
    np.testing.assert_array_equal(again.weights, a.weights)
    assert len(a.history) >= 1
    with pytest.raises(ValueError):
        train_odc(np.empty((0, 3)))


def test_classify_odc():
    s = system([[0.1, 0.1], [0.9, 0.9]])
    img = MultispectralImage((Band(np.array([[0.9, 0.1]])), Band(np.array([[0.9, 0.1]]))), (0, 500))
    np.testing.assert_array_equal(classify_odc(s, img).labels, [[1, 0]])
    flat = MultispectralImage((Band(np.full((3, 3), 0.4)),) * 2, (0, 500))
    assert len(np.unique(classify_odc(s, flat).labels)) == 1
    with pytest.raises(ValueError):
        classify_odc(s, MultispectralImage((Band(np.zeros((2, 2))),), (0,)))


def test_relabel():
    lm = LabelMap(np.arange(6).reshape(2, 3), 6)
    assert relabel(lm, {i: i for i in range(6)}) == lm
    merged = relabel(lm, {"0": 0, "1": 1, "2": 2, "3": 3, "4": 2, "5": 3})
    assert merged.class_count == 4 and len(np.unique(merged.labels)) == 4
    assert np.sum(merged.labels == 2) == 2
    with pytest.raises(KeyError):
        relabel(lm, {0: 0})
