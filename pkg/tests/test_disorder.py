import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsk_gcs.disorder import (
    DegenerateSpectrumWarning,
    QskInstance,
    level_spacing_ratios,
    make_rng,
    mean_level_spacing_ratio,
    sample_qsk_instance,
    sample_symmetric_gaussian,
)


def test_two_spin_instance_has_one_coupling():
    inst = sample_qsk_instance(2, j_scale=1.0, h_scale=0.0, seed=3)
    assert inst.couplings[0, 1] == inst.couplings[1, 0]
    assert inst.couplings[0, 1] != 0
    assert np.all(np.diag(inst.couplings) == 0)
    assert np.all(inst.fields == 0)


def test_sampling_is_deterministic():
    a = sample_qsk_instance(4, 1.0, 0.5, seed=11)
    b = sample_qsk_instance(4, 1.0, 0.5, seed=11)
    np.testing.assert_array_equal(a.couplings, b.couplings)
    np.testing.assert_array_equal(a.fields, b.fields)
    c = sample_qsk_instance(4, 1.0, 0.5, seed=12)
    assert not np.array_equal(a.couplings, c.couplings)


def test_coupling_variance_scales_as_one_over_n():
    n = 200
    iu = np.triu_indices(n, 1)
    draws = np.concatenate([sample_qsk_instance(n, seed=s).couplings[iu] for s in range(10)])
    assert abs(draws.var() * n - 1.0) < 0.05
    # moment check of normality
    kurt = np.mean(draws ** 4) / np.mean(draws ** 2) ** 2
    assert abs(kurt - 3.0) < 0.1


def test_field_variance():
    h = np.concatenate([sample_qsk_instance(50, h_scale=0.5, seed=s).fields for s in range(200)])
    assert abs(h.var() / 0.25 - 1) < 0.05


def test_same_seed_shares_couplings_across_field_scales():
    a = sample_qsk_instance(6, h_scale=0.0, seed=5)
    b = sample_qsk_instance(6, h_scale=0.5, seed=5)
    np.testing.assert_array_equal(a.couplings, b.couplings)


@pytest.mark.parametrize("kwargs", [{"n": 0}, {"n": 3, "j_scale": -1}, {"n": 3, "h_scale": -0.1}])
def test_sampler_rejects_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        sample_qsk_instance(**kwargs)


def test_instance_validation():
    with pytest.raises(ValueError):
        QskInstance(np.array([[0, 1], [2, 0.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        QskInstance(np.array([[1.0, 0], [0, 0]]), np.zeros(2))
    with pytest.raises(ValueError):
        QskInstance(np.zeros((2, 2)), np.zeros(3))
    with pytest.raises(ValueError):
        QskInstance(np.zeros((2, 2)), np.zeros(2), g=-1)


def test_instance_json_round_trip():
    inst = sample_qsk_instance(5, 1.0, 0.3, g=0.7, seed=9)
    back = QskInstance.from_json(inst.to_json())
    np.testing.assert_array_equal(back.couplings, inst.couplings)
    np.testing.assert_array_equal(back.fields, inst.fields)
    assert back.g == inst.g and back.seed == inst.seed
    doc = inst.to_dict()
    assert len(doc["couplings"]) == 10
    # row-major lower triangle: (1,0), (2,0), (2,1), ...
    assert doc["couplings"][:3] == [inst.couplings[1, 0], inst.couplings[2, 0], inst.couplings[2, 1]]


def test_classical_energy_of_aligned_pair():
    inst = QskInstance(np.array([[0, 1.0], [1.0, 0]]), np.zeros(2))
    assert inst.classical_energy([1, 1]) == -1.0
    assert inst.classical_energy([1, -1]) == 1.0


def test_spawned_streams_differ():
    a = make_rng(1, 0).normal(size=4)
    b = make_rng(1, 1).normal(size=4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, make_rng(1, 0).normal(size=4))


def test_symmetric_gaussian_smallest_case():
    mat = sample_symmetric_gaussian(2, 0.5, seed=1)
    assert mat.entries[0, 1] == mat.entries[1, 0]
    assert np.all(np.diag(mat.entries) == 0)
    assert mat.offdiag_variance == 0.5 and mat.n == 2
    with pytest.raises(ValueError):
        sample_symmetric_gaussian(1, 0.5)
    with pytest.raises(ValueError):
        sample_symmetric_gaussian(3, 0.0)


def test_symmetric_gaussian_variance_and_determinism():
    n = 100
    iu = np.triu_indices(n, 1)
    vals = np.concatenate([sample_symmetric_gaussian(n, 1 / n, seed=s).entries[iu] for s in range(200)])
    assert abs(vals.var() * n - 1) < 0.05
    np.testing.assert_array_equal(sample_symmetric_gaussian(5, 1.0, 3).entries,
                                  sample_symmetric_gaussian(5, 1.0, 3).entries)


def test_equally_spaced_spectrum_has_ratio_one():
    assert mean_level_spacing_ratio(np.diag([0.0, 1.0, 2.0, 3.0])) == 1.0


def test_poisson_ensemble_ratio():
    rng = np.random.default_rng(0)
    r = np.mean([mean_level_spacing_ratio(np.diag(rng.uniform(size=200))) for _ in range(300)])
    # 2 ln 2 - 1 for uncorrelated levels
    assert abs(r - (2 * np.log(2) - 1)) < 0.01


def test_gaussian_ensemble_ratio_small():
    r = np.mean([mean_level_spacing_ratio(sample_symmetric_gaussian(100, 0.01, seed=s)) for s in range(100)])
    assert abs(r - 0.53) < 0.02


def test_degenerate_gap_warns_and_counts_as_zero():
    with pytest.warns(DegenerateSpectrumWarning):
        r = level_spacing_ratios(np.diag([0.0, 1.0, 1.0, 2.0]))
    np.testing.assert_allclose(r, [0.0, 0.0])
    with pytest.warns(DegenerateSpectrumWarning):
        assert mean_level_spacing_ratio(np.zeros((3, 3))) == 1.0


def test_level_ratio_needs_three_levels():
    with pytest.raises(ValueError):
        mean_level_spacing_ratio(np.diag([0.0, 1.0]))


@settings(max_examples=25, deadline=None)
@given(shift=st.floats(-100, 100), scale=st.floats(0.01, 100), seed=st.integers(0, 1000))
def test_level_ratio_is_shift_and_scale_invariant(shift, scale, seed):
    m = sample_symmetric_gaussian(20, 1.0, seed).entries
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        base = mean_level_spacing_ratio(m)
        moved = mean_level_spacing_ratio(scale * m + shift * np.eye(20))
    assert abs(base - moved) < 1e-8
