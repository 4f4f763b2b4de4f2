import numpy as np
import pytest
from sklearn.base import clone

from qsk_gcs.analysis import (
    ENERGY_ERROR_FIELDS,
    EnsembleStatistic,
    EntropyProfileRegressor,
    bootstrap_profile_coefficient,
    energy_error_density,
    ensemble_statistics,
    entropy_profile_model,
    error_density_ratio,
    fit_entropy_profile,
    spin_glass_susceptibility,
    transverse_magnetization,
    write_csv,
)


def test_susceptibility_of_frozen_configuration():
    s = np.array([1, -1, 1, 1, -1.0])
    assert spin_glass_susceptibility(np.outer(s, s)) == pytest.approx(5.0)


def test_susceptibility_of_transverse_state():
    assert spin_glass_susceptibility(np.eye(6)) == pytest.approx(1.0)


def test_susceptibility_range(rng):
    for _ in range(20):
        v = rng.normal(size=(8, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        zz = v @ v.T
        chi = spin_glass_susceptibility(zz)
        assert 1.0 - 1e-12 <= chi <= 8.0 + 1e-12


def test_susceptibility_input_checks():
    with pytest.raises(ValueError):
        spin_glass_susceptibility(np.ones((2, 3)))
    with pytest.raises(ValueError):
        spin_glass_susceptibility(np.zeros((3, 3)))


def test_transverse_magnetization():
    assert transverse_magnetization([1.0, 0.5, -0.25]) == pytest.approx(1.25)
    with pytest.raises(ValueError):
        transverse_magnetization(np.ones((2, 2)))


def test_ensemble_single_value():
    st = ensemble_statistics([5.0])
    assert st.mean == 5.0 and st.stderr == 0.0 and st.low_count


def test_ensemble_two_values():
    st = ensemble_statistics([1.0, 3.0])
    assert st.mean == 2.0
    assert st.stderr == pytest.approx(1.0)
    assert not st.low_count


def test_ensemble_normal_draws():
    v = np.random.default_rng(1).normal(0, 1, 10_000)
    st = ensemble_statistics(v)
    assert abs(st.mean) < 4 * st.stderr
    assert st.stderr == pytest.approx(0.01, rel=0.05)


def test_ensemble_merge_matches_pooled(rng):
    v = rng.normal(size=37)
    a, b, c = ensemble_statistics(v[:10]), ensemble_statistics(v[10:11]), ensemble_statistics(v[11:])
    pooled = ensemble_statistics(v)
    for merged in (a.merge(b).merge(c), a.merge(b.merge(c))):
        assert merged.count == 37
        assert merged.mean == pytest.approx(pooled.mean, abs=1e-14)
        assert merged.stderr == pytest.approx(pooled.stderr, rel=1e-12)


def test_ensemble_empty_rejected():
    with pytest.raises(ValueError):
        ensemble_statistics([])


def test_energy_error_density():
    err = energy_error_density(-9.5, -10.0, 20.0)
    assert err.delta == pytest.approx(0.5)
    assert err.ratio == pytest.approx(0.025)
    assert energy_error_density(-10.0, -10.0, 20.0).delta == 0.0


def test_energy_below_ground_state_rejected():
    with pytest.raises(ValueError):
        energy_error_density(-10.1, -10.0, 20.0)
    with pytest.raises(ValueError):
        energy_error_density(-9.0, -10.0, 0.0)


def test_error_density_ratio():
    eps, se = error_density_ratio([1.0, 1.0, 1.0], [10.0, 10.0, 10.0])
    assert eps == pytest.approx(0.1) and se == pytest.approx(0.0, abs=1e-15)
    eps, se = error_density_ratio([1.0, 3.0], [10.0, 10.0])
    assert eps == pytest.approx(0.2)
    assert se == pytest.approx(0.1)
    with pytest.raises(ValueError):
        error_density_ratio([1.0], [1.0, 2.0])


def test_profile_fit_round_trip():
    n = 100
    L = np.arange(1, 100)
    s2 = entropy_profile_model(L, 0.9, 2.0, n)
    fit = fit_entropy_profile(L, s2, n)
    assert fit.converged
    assert fit.a == pytest.approx(0.9, abs=1e-6)
    assert fit.b == pytest.approx(2.0, abs=1e-6)
    assert fit.c == pytest.approx(0.9 * 2.0 / 100, abs=1e-8)
    assert fit.residual < 1e-10


def test_profile_model_reflection_symmetry():
    n = 40
    L = np.arange(1, 40)
    s = entropy_profile_model(L, 1.3, 0.7, n)
    np.testing.assert_allclose(s, s[::-1], atol=1e-14)


def test_profile_fit_all_zero():
    fit = fit_entropy_profile([1, 2, 3, 4], np.zeros(4), 10)
    assert fit.a == 0.0
    assert not fit.b_defined


def test_profile_fit_input_checks():
    with pytest.raises(ValueError):
        fit_entropy_profile([1, 2], [0.1, 0.2], 10)
    with pytest.raises(ValueError):
        fit_entropy_profile([1, 2, 10], [0.1, 0.2, 0.3], 10)
    with pytest.raises(ValueError):
        fit_entropy_profile([1, 2, 3], [0.1, 0.2], 10)


def test_bootstrap_coefficient_error():
    rng = np.random.default_rng(0)
    L = np.arange(1, 20)
    clean = entropy_profile_model(L, 0.5, 3.0, 20)
    profiles = clean + rng.normal(scale=0.01, size=(30, L.size))
    se = bootstrap_profile_coefficient(L, profiles, 20, n_boot=50, seed=1)
    assert 0 < se < 0.01
    assert se == bootstrap_profile_coefficient(L, profiles, 20, n_boot=50, seed=1)


def test_regressor_interface():
    reg = EntropyProfileRegressor(n_sites=30)
    assert reg.get_params() == {"n_sites": 30}
    L = np.arange(1, 30)[:, None]
    y = entropy_profile_model(L[:, 0], 0.8, 1.5, 30)
    reg.fit(L, y)
    assert reg.c_ == pytest.approx(0.8 * 1.5 / 30, abs=1e-7)
    np.testing.assert_allclose(reg.predict(L), y, atol=1e-8)
    assert reg.score(L, y) == pytest.approx(1.0)
    fresh = clone(reg)
    with pytest.raises(Exception):
        fresh.predict(L)


def test_write_csv(tmp_path):
    rows = [{"N": 8, "g": 0.1, "h": 0.0, "eps_cs": 1 / 3, "eps_gcs": 0.0,
             "eps_cs_stderr": 0.0, "eps_gcs_stderr": 0.0}]
    text = write_csv(rows, ENERGY_ERROR_FIELDS, tmp_path / "e.csv")
    lines = text.splitlines()
    assert lines[0] == ",".join(ENERGY_ERROR_FIELDS)
    assert float(lines[1].split(",")[3]) == 1 / 3
    assert (tmp_path / "e.csv").read_text() == text


def test_statistic_dataclass_is_frozen():
    st = EnsembleStatistic(0.0, 0.0, 1)
    with pytest.raises(AttributeError):
        st.mean = 1.0
