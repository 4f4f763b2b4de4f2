"""Disorder realizations of the quantum SK model and random symmetric phase matrices.

Every sampler is a pure function of its arguments and a 64-bit seed. Streams are
derived with :class:`numpy.random.SeedSequence`, so independent realizations can
be generated in any order or in parallel.
"""
from __future__ import annotations

import dataclasses
import json
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import check_nonnegative, check_positive, check_positive_int

__all__ = [
    "QskInstance",
    "SymmetricGaussianMatrix",
    "DegenerateSpectrumWarning",
    "make_rng",
    "sample_qsk_instance",
    "sample_symmetric_gaussian",
    "mean_level_spacing_ratio",
    "level_spacing_ratios",
]

_SEED_MASK = (1 << 64) - 1


class DegenerateSpectrumWarning(RuntimeWarning):
    """Raised (as a warning) when consecutive eigenvalues coincide numerically."""


def make_rng(seed, *spawn_key: int) -> np.random.Generator:
    """Generator for ``seed`` and an optional spawn path, e.g. ``make_rng(s, task, 2)``."""
    ss = np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=tuple(int(k) for k in spawn_key))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class QskInstance:
    """One disorder realization of

    ``H = -sum_{n<m} J_nm Z_n Z_m - g sum_n X_n - sum_n h_n Z_n``.

    Sites are 0-based. ``couplings`` is symmetric with zero diagonal.
    """

    couplings: np.ndarray
    fields: np.ndarray
    g: float = 0.0
    j_scale: float = 1.0
    h_scale: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        j = np.array(self.couplings, dtype=float)
        h = np.array(self.fields, dtype=float)
        if j.ndim != 2 or j.shape[0] != j.shape[1] or j.shape[0] < 1:
            raise ValueError(f"couplings must be a non-empty square matrix, got {j.shape}")
        if h.shape != (j.shape[0],):
            raise ValueError("fields length must match the coupling matrix")
        if not (np.all(np.isfinite(j)) and np.all(np.isfinite(h))):
            raise ValueError("couplings and fields must be finite")
        if not np.array_equal(j, j.T) or np.any(np.diag(j) != 0):
            raise ValueError("couplings must be exactly symmetric with zero diagonal")
        check_nonnegative(self.g, "g")
        j.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "couplings", j)
        object.__setattr__(self, "fields", h)
        object.__setattr__(self, "g", float(self.g))

    @property
    def n(self) -> int:
        return self.couplings.shape[0]

    def with_transverse_field(self, g: float) -> "QskInstance":
        """Same disorder, different transverse field."""
        return dataclasses.replace(self, g=float(g))

    def classical_energy(self, spins) -> np.ndarray:
        """Energy of z-basis configurations ``spins`` (..., n) with entries +-1 (g ignored)."""
        s = np.asarray(spins, dtype=float)
        return -0.5 * np.einsum("...i,ij,...j->...", s, self.couplings, s) - s @ self.fields

    def to_dict(self) -> dict:
        rows, cols = np.tril_indices(self.n, -1)
        return {
            "n": self.n,
            "g": self.g,
            "j_scale": self.j_scale,
            "h_scale": self.h_scale,
            "seed": self.seed,
            "couplings": self.couplings[rows, cols].tolist(),
            "fields": self.fields.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QskInstance":
        n = int(doc["n"])
        lower = np.asarray(doc["couplings"], dtype=float)
        if lower.shape != (n * (n - 1) // 2,):
            raise ValueError("couplings must hold the n(n-1)/2 lower-triangle entries")
        j = np.zeros((n, n))
        rows, cols = np.tril_indices(n, -1)
        j[rows, cols] = lower
        j[cols, rows] = lower
        return cls(
            couplings=j,
            fields=np.asarray(doc["fields"], dtype=float),
            g=float(doc.get("g", 0.0)),
            j_scale=float(doc.get("j_scale", 1.0)),
            h_scale=float(doc.get("h_scale", 0.0)),
            seed=doc.get("seed"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "QskInstance":
        return cls.from_dict(json.loads(text))


def sample_qsk_instance(n: int, j_scale: float = 1.0, h_scale: float = 0.0, g: float = 0.0,
                        seed: int = 0) -> QskInstance:
    """Draw couplings ``J_nm ~ N(0, j_scale**2 / n)`` per unordered pair and fields
    ``h_n ~ N(0, h_scale**2)``."""
    n = check_positive_int(n, "n")
    j_scale = check_nonnegative(j_scale, "j_scale")
    h_scale = check_nonnegative(h_scale, "h_scale")
    rng = make_rng(seed)
    rows, cols = np.triu_indices(n, 1)
    upper = rng.normal(0.0, j_scale / np.sqrt(n), size=rows.size)
    couplings = np.zeros((n, n))
    couplings[rows, cols] = upper
    couplings[cols, rows] = upper
    fields = rng.normal(0.0, 1.0, size=n) * h_scale if h_scale > 0 else np.zeros(n)
    return QskInstance(couplings, fields, g=g, j_scale=j_scale, h_scale=h_scale, seed=int(seed))


@dataclass(frozen=True, eq=False)
class SymmetricGaussianMatrix:
    entries: np.ndarray
    offdiag_variance: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def sample_symmetric_gaussian(n: int, offdiag_variance: float, seed: int = 0) -> SymmetricGaussianMatrix:
    """Symmetric matrix with zero diagonal and i.i.d. ``N(0, offdiag_variance)`` off-diagonals."""
    n = check_positive_int(n, "n", minimum=2)
    var = check_positive(offdiag_variance, "offdiag_variance")
    rng = make_rng(seed)
    rows, cols = np.triu_indices(n, 1)
    upper = rng.normal(0.0, np.sqrt(var), size=rows.size)
    m = np.zeros((n, n))
    m[rows, cols] = upper
    m[cols, rows] = upper
    return SymmetricGaussianMatrix(m, var)


def level_spacing_ratios(matrix, rtol: float = 1e-10) -> np.ndarray:
    """Ratios ``min(s_k, s_k+1) / max(s_k, s_k+1)`` of consecutive eigenvalue gaps.

    Gaps below ``rtol`` times the spectral width count as exact zeros; a pair of
    zero gaps yields ratio 1. A :class:`DegenerateSpectrumWarning` is emitted
    whenever a zero gap is met.
    """
    m = matrix.entries if isinstance(matrix, SymmetricGaussianMatrix) else np.asarray(matrix, float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if m.shape[0] < 3:
        raise ValueError("level spacing ratio needs n >= 3")
    evals = np.linalg.eigvalsh(m)
    gaps = np.diff(evals)
    width = evals[-1] - evals[0]
    zero = gaps <= rtol * max(width, np.finfo(float).tiny)
    if np.any(zero):
        warnings.warn("degenerate spectrum: some level gaps are numerically zero",
                      DegenerateSpectrumWarning, stacklevel=2)
        gaps = np.where(zero, 0.0, gaps)
    lo = np.minimum(gaps[:-1], gaps[1:])
    hi = np.maximum(gaps[:-1], gaps[1:])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(hi > 0, lo / np.where(hi > 0, hi, 1.0), 1.0)
    return r


def mean_level_spacing_ratio(matrix, rtol: float = 1e-10) -> float:
    """Mean of :func:`level_spacing_ratios`; about 0.53 for GOE, 0.386 for Poisson."""
    return float(np.mean(level_spacing_ratios(matrix, rtol=rtol)))
