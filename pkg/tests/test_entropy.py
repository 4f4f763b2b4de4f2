import numpy as np
import pytest

from conftest import random_params
from qsk_gcs.ansatz import GcsParams, SingleSpinAmplitudes
from qsk_gcs.entropy import (
    EXACT_MAX_SITES,
    Spin1Distribution,
    analytic_wgs_coefficient,
    renyi2_estimate,
    wgs_sample,
    x_variances,
)
from qsk_gcs.exact import dense_gcs_state, exact_renyi2


def _dense_s2(params, sites):
    return exact_renyi2(dense_gcs_state(params.x, params.y, params.m), sites)


def test_product_state_has_zero_entropy(rng):
    p = random_params(6, rng)
    p = GcsParams(p.x, p.y, np.zeros((6, 6)))
    for sites in ([0], [1, 2], [0, 3, 5]):
        est = renyi2_estimate(p, sites)
        assert est.s2 == pytest.approx(0.0, abs=1e-14)
        assert est.exact


@pytest.mark.parametrize("phi", [0.3, 1.0, np.pi / 2, 2.5])
def test_two_qubit_purity(phi):
    x = np.zeros((2, 3))
    x[:, 1] = np.pi / 4
    m = np.array([[0, phi], [phi, 0]])
    est = renyi2_estimate(GcsParams(x, np.zeros((2, 3)), m), [0])
    assert est.purity_mean == pytest.approx(1 - np.sin(phi / 2) ** 2 / 2, abs=1e-14)


def test_exact_enumeration_matches_dense(rng):
    for _ in range(3):
        p = random_params(10, rng)
        for size in range(1, 6):
            sites = np.sort(rng.choice(10, size, replace=False))
            est = renyi2_estimate(p, sites, method="exact")
            assert abs(est.s2 - _dense_s2(p, sites)) < 1e-10


def test_monte_carlo_within_three_sigma(rng):
    p = random_params(10, rng)
    sites = [0, 2, 4, 6]
    ref = _dense_s2(p, sites)
    est = renyi2_estimate(p, sites, samples=50_000, seed=3, method="monte_carlo")
    assert not est.exact
    assert est.samples == 50_000
    assert abs(est.s2 - ref) <= 3 * est.s2_stderr


def test_insensitive_to_final_rotations(rng):
    p = random_params(7, rng)
    q = GcsParams(p.x, rng.normal(size=(7, 3)), p.m)
    assert renyi2_estimate(p, [1, 4]).s2 == pytest.approx(renyi2_estimate(q, [1, 4]).s2, abs=1e-13)


def test_complement_gives_same_entropy(rng):
    p = random_params(8, rng)
    a = [0, 5, 6]
    rest = [1, 2, 3, 4, 7]
    assert renyi2_estimate(p, a).s2 == pytest.approx(renyi2_estimate(p, rest).s2, abs=1e-12)


def test_auto_switches_to_sampling_above_threshold():
    p = wgs_sample(24, seed=1)
    small = renyi2_estimate(p, range(EXACT_MAX_SITES))
    large = renyi2_estimate(p, range(EXACT_MAX_SITES + 1), samples=2000)
    assert small.exact and small.samples == 0
    assert not large.exact and large.samples == 2000


def test_sampling_is_deterministic():
    p = wgs_sample(30, seed=2)
    a = renyi2_estimate(p, range(12), samples=5000, seed=9)
    b = renyi2_estimate(p, range(12), samples=5000, seed=9)
    c = renyi2_estimate(p, range(12), samples=5000, seed=10)
    assert a == b
    assert a.s2 != c.s2


def test_invalid_arguments(rng):
    p = random_params(4, rng)
    with pytest.raises(ValueError):
        renyi2_estimate(p, [0], samples=0)
    with pytest.raises(ValueError):
        renyi2_estimate(p, [0], method="bogus")
    with pytest.raises(IndexError):
        renyi2_estimate(p, [4])


def test_empty_and_full_subsystems(rng):
    p = random_params(4, rng)
    assert renyi2_estimate(p, []).s2 == 0.0
    assert renyi2_estimate(p, range(4)).s2 == 0.0


def test_reliability_flag_for_tiny_purity():
    # strongly entangled state: purity near 2^-L, far below sampling noise
    n = 40
    x = np.zeros((n, 3))
    x[:, 1] = np.pi / 4
    rng = np.random.default_rng(0)
    m = np.triu(rng.uniform(-np.pi, np.pi, (n, n)), 1)
    est = renyi2_estimate(GcsParams(x, np.zeros((n, 3)), m + m.T), range(20), samples=200, seed=0)
    assert not est.reliable


def test_wgs_spin1_weights():
    p = wgs_sample(5, seed=0)
    dist = Spin1Distribution.from_amplitudes(SingleSpinAmplitudes.from_angles(p.x))
    np.testing.assert_allclose(dist.probs, np.tile([0.25, 0.5, 0.25], (5, 1)), atol=1e-15)


def test_spin1_sampling_frequencies():
    dist = Spin1Distribution(np.tile([0.2, 0.6, 0.2], (3, 1)))
    draws = dist.sample(np.random.default_rng(0), 100_000)
    freq = np.mean(draws == 0)
    assert abs(freq - 0.6) < 5e-3
    assert abs(np.mean(draws)) < 5e-3


def test_spin1_distribution_rejects_asymmetry():
    with pytest.raises(ValueError):
        Spin1Distribution([[0.3, 0.5, 0.2]])
    with pytest.raises(ValueError):
        Spin1Distribution([[0.3, 0.3, 0.3]])


def test_wgs_sample_statistics():
    n = 200
    p = wgs_sample(n, seed=5)
    off = p.m[np.triu_indices(n, 1)]
    assert np.allclose(p.m, p.m.T)
    assert np.all(np.diag(p.m) == 0)
    assert abs(off.var() * n - 1) < 0.05
    np.testing.assert_array_equal(wgs_sample(n, seed=5).m, p.m)


def test_analytic_coefficient():
    assert analytic_wgs_coefficient() == pytest.approx(0.16910, abs=5e-6)
    assert analytic_wgs_coefficient(0.0) == 0.0
    assert analytic_wgs_coefficient(100.0) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        analytic_wgs_coefficient(-1)


def test_x_variances_approach_one_eighth():
    p = wgs_sample(400, seed=1)
    v = x_variances(p, range(10))
    assert abs(v.mean() - 0.125) < 0.01


def test_small_subsystem_slope_matches_coefficient():
    # at L << n the per-site entropy is close to the analytic value
    n = 100
    L = 6
    s = [renyi2_estimate(wgs_sample(n, seed=s), range(L)).s2 for s in range(20)]
    assert np.mean(s) / L == pytest.approx(analytic_wgs_coefficient(), rel=0.1)
