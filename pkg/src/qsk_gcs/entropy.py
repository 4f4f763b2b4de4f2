"""Renyi-2 entanglement of GCS states by a classical spin-1 sampling formula.

For ``|Psi> = U(y) V(M) |phi(x)>`` the local rotations U(y) do not change any
entanglement, and the purity of a subsystem A becomes a classical average

    tr(rho_A^2) = sum_j P(j) F(j),
    F(j) = prod_{n not in A} [1 - 4 p_n sin^2(1/2 sum_{m in A} M_nm j_m)],

over spin-1 variables ``j_m in {-1, 0, +1}`` on the sites of A with weights
``P_m(0) = |c0|^4 + |c1|^4`` and ``P_m(+-1) = |c0|^2 |c1|^2``, where
``p_n = |c0_n|^2 |c1_n|^2``. The average is done exactly over all ``3^L``
configurations when that is cheap and by Monte Carlo otherwise.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive_int, check_site_set
from .ansatz import GcsParams, SingleSpinAmplitudes
from .disorder import make_rng, sample_symmetric_gaussian

__all__ = [
    "EXACT_MAX_SITES",
    "EntropyEstimate",
    "Spin1Distribution",
    "renyi2_estimate",
    "wgs_sample",
    "analytic_wgs_coefficient",
    "x_variances",
    "ENTROPY_CSV_FIELDS",
]

EXACT_MAX_SITES = 9
ENTROPY_CSV_FIELDS = ("N", "L", "g", "h", "realization_seed", "s2", "stderr", "samples")
_BATCH = 4096


@dataclass(frozen=True)
class EntropyEstimate:
    """Renyi-2 entropy (bits) with the purity it was computed from.

    ``stderr`` is the standard error of the purity; ``reliable`` is False when
    the purity is within three standard errors of zero, where the logarithm is
    not trustworthy. ``samples == 0`` marks an exact enumeration.
    """

    s2: float
    purity_mean: float
    purity_stderr: float
    samples: int
    subsystem_size: int
    exact: bool = False
    reliable: bool = True

    @property
    def s2_stderr(self) -> float:
        """Delta-method error of ``s2`` in bits."""
        if self.purity_mean <= 0:
            return float("inf")
        return self.purity_stderr / (self.purity_mean * np.log(2))

    def to_row(self, n: int, g: float, h: float, realization_seed: int) -> dict:
        return {"N": n, "L": self.subsystem_size, "g": g, "h": h, "realization_seed": realization_seed,
                "s2": self.s2, "stderr": self.s2_stderr, "samples": self.samples}


class Spin1Distribution:
    """Independent spin-1 laws on the sampled sites, columns ordered (-1, 0, +1)."""

    values = np.array([-1.0, 0.0, 1.0])

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 2 or probs.shape[1] != 3:
            raise ValueError("probs must have shape (L, 3)")
        if np.any(probs < -1e-15) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("each row must be a probability vector")
        if not np.allclose(probs[:, 0], probs[:, 2], atol=1e-15):
            raise ValueError("P(+1) and P(-1) must agree")
        self.probs = np.clip(probs, 0.0, None)

    @classmethod
    def from_amplitudes(cls, amps: SingleSpinAmplitudes) -> "Spin1Distribution":
        a, b = amps.up_weight, amps.down_weight
        pm = a * b
        return cls(np.stack([pm, a ** 2 + b ** 2, pm], axis=1))

    def __len__(self):
        return self.probs.shape[0]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` configurations, shape (size, L)."""
        cdf = np.cumsum(self.probs, axis=1)
        u = rng.random((size, len(self), 1))
        idx = np.minimum((u > cdf[None, :, :2]).sum(axis=-1), 2)
        return self.values[idx]

    def enumerate(self):
        """All ``3^L`` configurations and their probabilities."""
        configs = np.array(list(itertools.product(self.values, repeat=len(self))), dtype=float)
        idx = (configs + 1).astype(int)
        weights = np.prod(self.probs[np.arange(len(self)), idx], axis=1)
        return configs.reshape(-1, len(self)), weights


def _weight_function(m_block: np.ndarray, p_rest: np.ndarray):
    """F(j) for configurations j (k, L); m_block has shape (n_rest, L)."""
    def f(j):
        phase = 0.5 * j @ m_block.T
        return np.prod(1.0 - 4.0 * p_rest * np.sin(phase) ** 2, axis=1)
    return f


def _merge(stats, batch):
    """Chan et al. pairwise merge of (count, mean, M2)."""
    n_a, mean_a, m2_a = stats
    n_b = batch.size
    mean_b = float(batch.mean())
    m2_b = float(((batch - mean_b) ** 2).sum())
    n = n_a + n_b
    delta = mean_b - mean_a
    return n, mean_a + delta * n_b / n, m2_a + m2_b + delta ** 2 * n_a * n_b / n


def _from_purity(purity, stderr, samples, size, exact) -> EntropyEstimate:
    reliable = exact or purity > 3 * stderr
    s2 = -np.log2(purity) if purity > 0 else float("inf")
    return EntropyEstimate(float(max(s2, 0.0)), float(purity), float(stderr), int(samples), int(size),
                           exact, bool(reliable))


def renyi2_estimate(params: GcsParams, subsystem, samples: int = 10_000, seed: int = 0,
                    method: str = "auto") -> EntropyEstimate:
    """S_2 of the reduced state on ``subsystem`` (0-based sites).

    ``method`` is ``'exact'`` (enumerate ``3^L`` terms), ``'monte_carlo'`` or
    ``'auto'`` (exact when L <= 9). L is the size of the smaller side of the
    cut, since ``S_2(A) = S_2(A^c)`` for a pure state. Monte Carlo samples are
    drawn in fixed batches from independent sub-streams of ``seed``.
    """
    samples = check_positive_int(samples, "samples")
    if method not in ("auto", "exact", "monte_carlo"):
        raise ValueError("method must be 'auto', 'exact' or 'monte_carlo'")
    n = params.n
    a = check_site_set(subsystem, n)
    if a.size == 0 or a.size == n:
        return EntropyEstimate(0.0, 1.0, 0.0, 0, int(a.size), True, True)
    rest = np.setdiff1d(np.arange(n), a)
    if a.size > rest.size:
        a, rest = rest, a
    amps = SingleSpinAmplitudes.from_angles(params.x)
    dist = Spin1Distribution.from_amplitudes(SingleSpinAmplitudes(amps.c[a]))
    f = _weight_function(params.m[np.ix_(rest, a)], amps.mixing[rest])
    if method == "exact" or (method == "auto" and a.size <= EXACT_MAX_SITES):
        if a.size > 12:
            raise ValueError("exact enumeration is limited to 12 sampled sites")
        configs, weights = dist.enumerate()
        total = 0.0
        for start in range(0, weights.size, _BATCH):
            total += float(weights[start:start + _BATCH] @ f(configs[start:start + _BATCH]))
        return _from_purity(total, 0.0, 0, a.size, True)
    stats = (0, 0.0, 0.0)
    for k, start in enumerate(range(0, samples, _BATCH)):
        size = min(_BATCH, samples - start)
        stats = _merge(stats, f(dist.sample(make_rng(seed, k), size)))
    count, mean, m2 = stats
    stderr = np.sqrt(m2 / (count - 1) / count) if count > 1 else 0.0
    return _from_purity(mean, stderr, count, a.size, False)


# --------------------------------------------------------------------------
# weighted graph states


def wgs_sample(n: int, seed: int = 0) -> GcsParams:
    """Weighted graph state ``V(M)|+...+>`` with Gaussian phases of variance 1/n."""
    n = check_positive_int(n, "n", minimum=2)
    x = np.zeros((n, 3))
    x[:, 1] = np.pi / 4  # exp(-i pi/4 Y)|up> = |+>
    m = sample_symmetric_gaussian(n, 1.0 / n, seed).entries
    return GcsParams(x, np.zeros((n, 3)), m)


def analytic_wgs_coefficient(x_variance: float = 0.125) -> float:
    """Large-n entropy per spin (bits) of weighted graph states.

    Each of the L factors averages ``cos^2 X`` over a Gaussian X with variance
    ``x_variance`` (1/8 for the WGS ensemble), i.e. ``(1 + exp(-2 var)) / 2``.
    """
    if x_variance < 0:
        raise ValueError("x_variance must be >= 0")
    return float(-np.log2((1.0 + np.exp(-2.0 * x_variance)) / 2.0))


def x_variances(params: GcsParams, subsystem) -> np.ndarray:
    """``<X_n^2>`` for n in ``subsystem``, with ``X_n = 1/2 sum_{m outside} M_nm j_m``.

    ``<j_m^2> = 2 |c0_m|^2 |c1_m|^2``, so for weighted graph states this is
    ``(1/8) sum_m M_nm^2``, which tends to 1/8 for large n.
    """
    a = check_site_set(subsystem, params.n)
    rest = np.setdiff1d(np.arange(params.n), a)
    amps = SingleSpinAmplitudes.from_angles(params.x)
    jsq = 2.0 * amps.mixing[rest]
    return 0.25 * (params.m[np.ix_(a, rest)] ** 2) @ jsq
