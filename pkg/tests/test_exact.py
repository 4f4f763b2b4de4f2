import numpy as np
import pytest
import scipy.linalg

from qsk_gcs.disorder import QskInstance, sample_qsk_instance
from qsk_gcs.exact import (
    PauliString,
    StateVector,
    dense_gcs_state,
    dense_hamiltonian,
    exact_expectation,
    exact_renyi2,
    exact_zz_correlations,
    lanczos_ground_state,
    product_state,
    spectrum_extent,
)

UP = np.array([1, 0], complex)
PLUS = np.array([1, 1], complex) / np.sqrt(2)


def test_single_spin_ground_energy():
    inst = QskInstance(np.zeros((1, 1)), np.array([0.3]), g=0.7)
    assert abs(lanczos_ground_state(inst).energy + np.hypot(0.7, 0.3)) < 1e-10


def test_two_aligned_spins():
    inst = QskInstance(np.array([[0, 1.0], [1.0, 0]]), np.zeros(2))
    energy, state = lanczos_ground_state(inst)
    assert abs(energy + 1) < 1e-10
    assert abs(spectrum_extent(inst) - 2) < 1e-10


def test_single_spin_extent():
    inst = QskInstance(np.zeros((1, 1)), np.zeros(1), g=1.0)
    assert abs(spectrum_extent(inst) - 2) < 1e-10


@pytest.mark.parametrize("n", [4, 8, 10])
def test_lanczos_matches_dense_spectrum(n):
    inst = sample_qsk_instance(n, 1.0, 0.4, g=0.9, seed=n)
    evals = np.linalg.eigvalsh(dense_hamiltonian(inst))
    res = lanczos_ground_state(inst)
    assert res.converged
    assert abs(res.energy - evals[0]) < 1e-8
    if n == 8:
        assert abs(spectrum_extent(inst) - (evals[-1] - evals[0])) < 1e-8
    h = dense_hamiltonian(inst)
    psi = res.state.amplitudes
    assert np.linalg.norm(h @ psi - res.energy * psi) < 1e-6


def test_lanczos_reports_nonconvergence():
    inst = sample_qsk_instance(10, 1.0, 0.4, g=0.9, seed=1)
    res = lanczos_ground_state(inst, tol=1e-14, max_iter=3)
    assert not res.converged
    assert res.iterations == 3
    assert np.isfinite(res.energy)


def test_lanczos_rejects_large_systems():
    inst = sample_qsk_instance(17, seed=0)
    with pytest.raises(ValueError, match="cap"):
        lanczos_ground_state(inst)
    with pytest.raises(ValueError):
        lanczos_ground_state(sample_qsk_instance(3, seed=0), tol=0)


def test_energy_invariant_under_site_relabeling():
    inst = sample_qsk_instance(7, 1.0, 0.5, g=0.8, seed=4)
    perm = np.random.default_rng(0).permutation(7)
    moved = QskInstance(inst.couplings[np.ix_(perm, perm)], inst.fields[perm], g=inst.g)
    assert abs(lanczos_ground_state(inst).energy - lanczos_ground_state(moved).energy) < 1e-9


def test_basic_expectations():
    up = StateVector(3, product_state([UP] * 3))
    plus = StateVector(3, product_state([PLUS] * 3))
    assert exact_expectation(up, "z0") == 1
    assert abs(exact_expectation(plus, "x0") - 1) < 1e-12
    assert abs(exact_expectation(plus, "x0 x2") - 1) < 1e-12


def test_expectation_matches_dense_operator():
    rng = np.random.default_rng(1)
    state = StateVector.normalized(rng.normal(size=16) + 1j * rng.normal(size=16))
    z = np.diag([1.0, -1.0])
    op = np.kron(np.kron(z, z), np.eye(4))
    expected = np.vdot(state.amplitudes, op @ state.amplitudes)
    assert abs(exact_expectation(state, "z0 z1") - expected) < 1e-12
    zz = exact_zz_correlations(state)
    assert abs(zz[0, 1] - expected.real) < 1e-12
    np.testing.assert_allclose(np.diag(zz), 1.0)


def test_pauli_string_validation():
    with pytest.raises(ValueError):
        PauliString("z0 x0")
    with pytest.raises(ValueError):
        PauliString("z0 z1 z2 z3 z4")
    with pytest.raises(ValueError):
        PauliString("q1")
    assert PauliString([(2, "x"), (0, "+")]).sites == (2, 0)
    assert not PauliString("+0").is_hermitian
    state = StateVector(2, product_state([UP, UP]))
    with pytest.raises(IndexError):
        exact_expectation(state, "z5")


def test_state_vector_normalization():
    with pytest.raises(ValueError):
        StateVector(1, np.array([1.0, 1.0]))


def test_renyi2_examples():
    bell = StateVector(2, np.array([1, 0, 0, 1]) / np.sqrt(2))
    assert abs(exact_renyi2(bell, [0]) - 1) < 1e-12
    prod = StateVector(3, product_state([UP, PLUS, PLUS]))
    assert exact_renyi2(prod, [1]) < 1e-12
    assert exact_renyi2(bell, []) == 0.0
    assert exact_renyi2(bell, [0, 1]) == 0.0
    with pytest.raises(IndexError):
        exact_renyi2(bell, [2])


def test_renyi2_of_two_qubit_phase_gate():
    m12 = 0.8
    x = np.array([[0, np.pi / 4, 0]] * 2)
    state = dense_gcs_state(x, np.zeros((2, 3)), np.array([[0, m12], [m12, 0]]))
    expected = -np.log2(1 - np.sin(m12 / 2) ** 2 / 2)
    assert abs(exact_renyi2(state, [0]) - expected) < 1e-12


def test_renyi2_complement_symmetry():
    rng = np.random.default_rng(2)
    state = StateVector.normalized(rng.normal(size=2 ** 6) + 1j * rng.normal(size=2 ** 6))
    for sub in ([0], [1, 4], [0, 2, 5]):
        rest = [k for k in range(6) if k not in sub]
        assert abs(exact_renyi2(state, sub) - exact_renyi2(state, rest)) < 1e-10


def test_dense_gcs_state_entangler_convention():
    # V = exp(-i/4 M Z Z) on |up up> gives a global phase exp(-i M / 4)
    m = np.array([[0, 1.3], [1.3, 0]])
    psi = dense_gcs_state(np.zeros((2, 3)), np.zeros((2, 3)), m).amplitudes
    assert abs(psi[0] - np.exp(-0.25j * 1.3)) < 1e-12
    # single-site rotation is exp(-i x.sigma)
    x = np.array([[0.2, -0.4, 0.7]])
    gen = 0.2 * np.array([[0, 1], [1, 0]]) - 0.4 * np.array([[0, -1j], [1j, 0]]) + 0.7 * np.diag([1, -1])
    np.testing.assert_allclose(dense_gcs_state(x, np.zeros((1, 3)), np.zeros((1, 1))).amplitudes,
                               scipy.linalg.expm(-1j * gen)[:, 0], atol=1e-12)
