"""Exact state-vector oracle for small systems.

Basis convention: site 0 is the most significant bit of the basis index and
``|up>`` (sigma^z = +1) is bit value 0. All operations here work on explicit
``2**n`` amplitude vectors and are meant as independent checks of the
variational engine, so they deliberately share no code with :mod:`qsk_gcs.ansatz`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from ._validation import check_site_set
from .disorder import QskInstance

__all__ = [
    "ED_CAP",
    "PauliString",
    "StateVector",
    "LanczosResult",
    "apply_hamiltonian",
    "dense_hamiltonian",
    "lanczos_ground_state",
    "exact_expectation",
    "exact_renyi2",
    "exact_zz_correlations",
    "exact_site_expectations",
    "spectrum_extent",
    "dense_gcs_state",
    "product_state",
]

ED_CAP = 16

_SINGLE = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "+": np.array([[0, 1], [0, 0]], dtype=complex),
    "-": np.array([[0, 0], [1, 0]], dtype=complex),
}
_TOKEN = re.compile(r"^([xyzXYZ+-])(\d+)$")


class PauliString:
    """Ordered product of single-site operators on distinct sites.

    Accepts ``[(site, axis), ...]`` or a compact string such as ``"z0 z3"``;
    axes are ``x, y, z, +, -`` with ``+ = |up><down|``. At most four sites.
    """

    max_sites = 4

    def __init__(self, terms):
        if isinstance(terms, str):
            parsed = []
            for tok in terms.split():
                m = _TOKEN.match(tok)
                if not m:
                    raise ValueError(f"cannot parse Pauli token {tok!r}")
                parsed.append((int(m.group(2)), m.group(1).lower()))
            terms = parsed
        terms = tuple((int(site), str(axis).lower()) for site, axis in terms)
        for site, axis in terms:
            if axis not in _SINGLE:
                raise ValueError(f"unknown axis {axis!r}")
            if site < 0:
                raise IndexError(f"negative site index {site}")
        sites = [s for s, _ in terms]
        if len(set(sites)) != len(sites):
            raise ValueError("Pauli string sites must be distinct")
        if len(terms) > self.max_sites:
            raise ValueError(f"Pauli strings are limited to {self.max_sites} sites")
        self.terms = terms

    @property
    def sites(self) -> tuple:
        return tuple(s for s, _ in self.terms)

    def check_range(self, n: int) -> None:
        for s in self.sites:
            if s >= n:
                raise IndexError(f"site {s} out of range for n={n}")

    @property
    def is_hermitian(self) -> bool:
        return all(axis in "xyz" for _, axis in self.terms)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __repr__(self):
        return "PauliString(%r)" % " ".join(f"{a}{s}" for s, a in self.terms)


def as_pauli(op) -> PauliString:
    return op if isinstance(op, PauliString) else PauliString(op)


@dataclass(frozen=True, eq=False)
class StateVector:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2 ** self.n,):
            raise ValueError(f"expected {2 ** self.n} amplitudes, got {amps.shape}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state is not normalized (norm={norm})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex)
        n = int(round(np.log2(amps.size)))
        return cls(n, amps / np.linalg.norm(amps))


def _apply_site(psi: np.ndarray, n: int, site: int, mat: np.ndarray) -> np.ndarray:
    t = psi.reshape((2 ** site, 2, 2 ** (n - site - 1)))
    return np.einsum("ab,ibj->iaj", mat, t).reshape(-1)


def _spins(n: int) -> np.ndarray:
    """(2**n, n) array of sigma^z eigenvalues for every basis state."""
    idx = np.arange(2 ** n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1.0 - 2.0 * bits


def _diagonal(instance: QskInstance) -> np.ndarray:
    n = instance.n
    out = np.zeros(2 ** n)
    # chunked to avoid materialising the full (2**n, n) spin table for n ~ 20
    chunk = 1 << 14
    for start in range(0, 2 ** n, chunk):
        idx = np.arange(start, min(start + chunk, 2 ** n))
        s = 1.0 - 2.0 * ((idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1)
        out[start:start + idx.size] = instance.classical_energy(s)
    return out


def _flip_sum(psi: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros_like(psi)
    for k in range(n):
        t = psi.reshape((2 ** k, 2, 2 ** (n - k - 1)))
        out += t[:, ::-1, :].reshape(-1)
    return out


def apply_hamiltonian(instance: QskInstance, psi: np.ndarray, diag: np.ndarray | None = None) -> np.ndarray:
    """Matrix-free ``H @ psi``."""
    if diag is None:
        diag = _diagonal(instance)
    out = diag * psi
    if instance.g != 0.0:
        out -= instance.g * _flip_sum(psi, instance.n)
    return out


def dense_hamiltonian(instance: QskInstance) -> np.ndarray:
    n = instance.n
    if n > 12:
        raise ValueError("dense Hamiltonian limited to n <= 12")
    h = np.diag(_diagonal(instance)).astype(float)
    idx = np.arange(2 ** n)
    for k in range(n):
        h[idx ^ (1 << (n - 1 - k)), idx] -= instance.g
    return h


@dataclass
class LanczosResult:
    energy: float
    state: StateVector
    converged: bool
    residual: float
    iterations: int

    def __iter__(self):
        # allows ``energy, state = lanczos_ground_state(...)``
        return iter((self.energy, self.state))


def _lanczos(apply, dim: int, tol: float, max_iter: int, rng: np.random.Generator):
    v = rng.normal(size=dim)
    v /= np.linalg.norm(v)
    basis = [v]
    alphas, betas = [], []
    w = apply(v)
    best = (np.inf, v, np.inf)
    for it in range(1, max_iter + 1):
        alpha = float(v @ w)
        alphas.append(alpha)
        w = w - alpha * v - (betas[-1] * basis[-2] if betas else 0.0)
        # full reorthogonalisation
        q = np.array(basis)
        w -= q.T @ (q @ w)
        beta = float(np.linalg.norm(w))
        evals, evecs = scipy.linalg.eigh_tridiagonal(np.array(alphas), np.array(betas))
        theta, y = evals[0], evecs[:, 0]
        residual = abs(beta * y[-1])
        scale = max(np.max(np.abs(evals)), 1.0)
        if residual < best[2] or it == 1:
            best = (theta, y, residual)
        if residual <= tol * scale or beta < 1e-14 * scale or it == dim:
            state = np.array(basis).T @ y
            return theta, state, True, residual, it
        v = w / beta
        basis.append(v)
        betas.append(beta)
        w = apply(v)
    theta, y, residual = best
    state = np.array(basis[: y.size]).T @ y
    return theta, state, False, residual, max_iter


def lanczos_ground_state(instance: QskInstance, tol: float = 1e-10, max_iter: int = 300,
                         cap: int = ED_CAP, seed: int = 0) -> LanczosResult:
    """Ground state by Lanczos with full reorthogonalisation and matrix-free H.

    On non-convergence the best Ritz pair seen so far is returned with
    ``converged=False``.
    """
    if instance.n > cap:
        raise ValueError(f"n={instance.n} exceeds the exact-diagonalisation cap {cap}")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    diag = _diagonal(instance)
    dim = diag.size
    if dim == 1:
        return LanczosResult(float(diag[0]), StateVector(0, np.ones(1)), True, 0.0, 0)
    apply = lambda v: apply_hamiltonian(instance, v, diag)  # noqa: E731
    e, vec, ok, res, it = _lanczos(apply, dim, tol, min(max_iter, dim), np.random.default_rng(seed))
    return LanczosResult(float(e), StateVector.normalized(vec), ok, float(res), it)


def spectrum_extent(instance: QskInstance, tol: float = 1e-10, max_iter: int = 300,
                    cap: int = ED_CAP) -> float:
    """Difference between the highest and lowest eigenvalues of H."""
    low = lanczos_ground_state(instance, tol, max_iter, cap)
    neg = QskInstance(-instance.couplings, -instance.fields, g=0.0,
                      j_scale=instance.j_scale, h_scale=instance.h_scale)
    diag = _diagonal(neg)
    g = instance.g
    apply = lambda v: diag * v + g * _flip_sum(v, instance.n)  # noqa: E731
    e, _, ok, _, _ = _lanczos(apply, diag.size, tol, min(max_iter, diag.size), np.random.default_rng(1))
    return float(-e - low.energy)


def exact_expectation(state: StateVector, op) -> complex:
    """``<psi| op |psi>`` for a Pauli string on the explicit state vector."""
    op = as_pauli(op)
    op.check_range(state.n)
    psi = state.amplitudes
    out = psi
    for site, axis in reversed(op.terms):
        out = _apply_site(out, state.n, site, _SINGLE[axis])
    return complex(np.vdot(psi, out))


def exact_zz_correlations(state: StateVector) -> np.ndarray:
    """Matrix of ``<Z_n Z_m>`` (unit diagonal) from basis-state probabilities."""
    prob = np.abs(state.amplitudes) ** 2
    s = _spins(state.n)
    return np.einsum("b,bi,bj->ij", prob, s, s)


def exact_site_expectations(state: StateVector, axis: str = "x") -> np.ndarray:
    return np.array([exact_expectation(state, [(k, axis)]).real for k in range(state.n)])


def exact_renyi2(state: StateVector, subsystem: Iterable[int]) -> float:
    """Second Renyi entropy (bits) of the reduced density matrix on ``subsystem``."""
    n = state.n
    a = check_site_set(subsystem, n)
    if a.size == 0 or a.size == n:
        return 0.0
    rest = np.setdiff1d(np.arange(n), a)
    t = state.amplitudes.reshape((2,) * n).transpose(list(a) + list(rest))
    mat = t.reshape(2 ** a.size, 2 ** rest.size)
    rho = mat @ mat.conj().T if a.size <= rest.size else mat.conj().T @ mat
    purity = float(np.sum(np.abs(rho) ** 2))
    return max(0.0, -np.log2(purity))


def _site_unitary(v: Sequence[float]) -> np.ndarray:
    gen = sum(float(v[k]) * _SINGLE[a] for k, a in enumerate("xyz"))
    return scipy.linalg.expm(-1j * gen)


def product_state(columns: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    for c in columns:
        out = np.kron(out, np.asarray(c, dtype=complex))
    return out


def dense_gcs_state(x, y, m) -> StateVector:
    """Explicit ``U(y) V(M) U(x) |up...up>`` with ``V = exp(-i/4 sum_{n<m} M_nm Z_n Z_m)``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    m = np.asarray(m, float)
    n = x.shape[0]
    psi = product_state([_site_unitary(x[k])[:, 0] for k in range(n)])
    s = _spins(n)
    phase = 0.5 * np.einsum("bi,ij,bj->b", s, np.triu(m, 1) + np.triu(m, 1).T, s)
    psi = np.exp(-0.25j * phase) * psi
    for k in range(n):
        psi = _apply_site(psi, n, k, _site_unitary(y[k]))
    return StateVector(n, psi)
