"""Observables, disorder averages and the entanglement-profile fit.

All functions act on a single realization or on plain arrays of per-realization
numbers; the runner combines them into the CSV tables listed in
``*_FIELDS`` below.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.optimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_finite_array, check_positive_int
from .disorder import make_rng

__all__ = [
    "EnsembleStatistic",
    "EntanglementProfileFit",
    "EnergyError",
    "EntropyProfileRegressor",
    "spin_glass_susceptibility",
    "transverse_magnetization",
    "fit_entropy_profile",
    "bootstrap_profile_coefficient",
    "ensemble_statistics",
    "energy_error_density",
    "error_density_ratio",
    "entropy_profile_model",
    "write_csv",
    "SUSCEPTIBILITY_FIELDS",
    "MAGNETIZATION_FIELDS",
    "ENTROPY_FIT_FIELDS",
    "ENERGY_ERROR_FIELDS",
]

SUSCEPTIBILITY_FIELDS = ("N", "g", "h", "chi_mean", "chi_stderr")
MAGNETIZATION_FIELDS = ("N", "g", "h", "mx_mean", "mx_stderr")
ENTROPY_FIT_FIELDS = ("N", "g", "h", "a", "b", "c", "residual", "c_stderr")
ENERGY_ERROR_FIELDS = ("N", "g", "h", "eps_cs", "eps_gcs", "eps_cs_stderr", "eps_gcs_stderr")


# --------------------------------------------------------------------------
# per-realization observables


def spin_glass_susceptibility(pair_expectations) -> float:
    """``chi = (1/n) sum_{n,m} <Z_n Z_m>^2`` including the unit diagonal.

    Lies in ``[1, n]``: 1 for a fully transverse-polarized state, n for a
    frozen z-basis configuration.
    """
    zz = check_finite_array(pair_expectations, "pair_expectations")
    if zz.ndim != 2 or zz.shape[0] != zz.shape[1]:
        raise ValueError("pair_expectations must be a complete n x n table")
    if not np.allclose(np.diag(zz), 1.0, atol=1e-8):
        raise ValueError("diagonal entries <Z_n Z_n> must equal 1")
    return float(np.sum(zz ** 2) / zz.shape[0])


def transverse_magnetization(site_expectations) -> float:
    """``M_x = sum_n <X_n>`` for one realization."""
    mx = check_finite_array(site_expectations, "site_expectations")
    if mx.ndim != 1:
        raise ValueError("site_expectations must be a vector")
    return float(mx.sum())


# --------------------------------------------------------------------------
# ensemble statistics


@dataclass(frozen=True)
class EnsembleStatistic:
    """Mean and standard error ``std / sqrt(count)`` (ddof = 1).

    ``m2`` is the sum of squared deviations, kept so partial statistics can be
    merged exactly. A single value has stderr 0 and ``low_count`` set.
    """

    mean: float
    stderr: float
    count: int
    m2: float = 0.0

    @property
    def low_count(self) -> bool:
        return self.count < 2

    def merge(self, other: "EnsembleStatistic") -> "EnsembleStatistic":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta ** 2 * self.count * other.count / n
        return _statistic(mean, m2, n)


def _statistic(mean: float, m2: float, count: int) -> EnsembleStatistic:
    stderr = float(np.sqrt(m2 / (count - 1) / count)) if count > 1 else 0.0
    return EnsembleStatistic(float(mean), stderr, int(count), float(m2))


def ensemble_statistics(values) -> EnsembleStatistic:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("cannot summarise an empty list")
    mean = float(v.mean())
    return _statistic(mean, float(np.sum((v - mean) ** 2)), v.size)


# --------------------------------------------------------------------------
# energy error


@dataclass(frozen=True)
class EnergyError:
    """Per-realization ``delta = E - E0`` and spectral width ``extent``."""

    delta: float
    extent: float

    @property
    def ratio(self) -> float:
        return self.delta / self.extent


def energy_error_density(e_var: float, e_exact: float, extent: float, tolerance: float = 1e-6) -> EnergyError:
    """Record the variational excess energy of one realization.

    A negative excess beyond ``tolerance * max(1, |E0|)`` violates the
    variational principle and raises.
    """
    if not extent > 0:
        raise ValueError("spectral extent must be > 0")
    delta = float(e_var) - float(e_exact)
    if delta < -tolerance * max(1.0, abs(e_exact)):
        raise ValueError(f"variational energy {e_var} lies below the exact ground energy {e_exact}")
    return EnergyError(delta, float(extent))


def error_density_ratio(deltas, extents) -> tuple[float, float]:
    """``mean(delta) / mean(extent)`` and its delta-method standard error."""
    d = np.asarray(deltas, float)
    w = np.asarray(extents, float)
    if d.shape != w.shape or d.size == 0:
        raise ValueError("deltas and extents must be nonempty and of equal length")
    dm, wm = d.mean(), w.mean()
    eps = dm / wm
    if d.size < 2:
        return float(eps), 0.0
    cov = np.cov(np.stack([d, w]), ddof=1)
    var = (cov[0, 0] - 2 * eps * cov[0, 1] + eps ** 2 * cov[1, 1]) / wm ** 2 / d.size
    return float(eps), float(np.sqrt(max(var, 0.0)))


# --------------------------------------------------------------------------
# entanglement profile


def entropy_profile_model(L, a: float, b: float, n: int) -> np.ndarray:
    """``a * ln(1 + b/pi * sin(pi L / n))``."""
    return a * np.log1p(b / np.pi * np.sin(np.pi * np.asarray(L, float) / n))


@dataclass(frozen=True)
class EntanglementProfileFit:
    """Fitted amplitude ``a`` and shape ``b``; ``c = a b / n`` is the small-L slope."""

    a: float
    b: float
    residual: float
    n: int
    converged: bool = True

    @property
    def c(self) -> float:
        return self.a * self.b / self.n

    @property
    def b_defined(self) -> bool:
        return bool(np.isfinite(self.b))


def fit_entropy_profile(L, s2, n: int, sigma=None) -> EntanglementProfileFit:
    """Least-squares fit of ``s2(L) = a ln(1 + b/pi sin(pi L/n))``.

    Starts from ``b = pi`` and ``a`` matched to the small-L slope. ``residual``
    is the RMS of the (weighted) residuals, or ``inf`` if the solver fails.
    """
    n = check_positive_int(n, "n", minimum=2)
    L = check_finite_array(L, "L").ravel()
    s2 = check_finite_array(s2, "s2").ravel()
    if L.shape != s2.shape:
        raise ValueError("L and s2 must have equal length")
    if np.unique(L).size < 3:
        raise ValueError("need at least 3 distinct subsystem sizes")
    if np.any(L < 1) or np.any(L > n - 1):
        raise ValueError("subsystem sizes must lie in [1, n-1]")
    w = np.ones_like(s2) if sigma is None else 1.0 / check_finite_array(sigma, "sigma").ravel()
    if np.all(s2 == 0):
        return EntanglementProfileFit(0.0, float("nan"), 0.0, n, True)
    small = np.argmin(L)
    slope = s2[small] / L[small]
    b0 = np.pi
    a0 = max(slope * n / b0, 1e-6)

    def resid(theta):
        return w * (entropy_profile_model(L, theta[0], theta[1], n) - s2)

    try:
        sol = scipy.optimize.least_squares(resid, [a0, b0], bounds=([0.0, 0.0], [np.inf, np.inf]),
                                           xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=10_000)
    except (ValueError, np.linalg.LinAlgError):
        return EntanglementProfileFit(float("nan"), float("nan"), float("inf"), n, False)
    if not sol.success:
        return EntanglementProfileFit(float(sol.x[0]), float(sol.x[1]), float("inf"), n, False)
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    return EntanglementProfileFit(float(sol.x[0]), float(sol.x[1]), rms, n, True)


def bootstrap_profile_coefficient(L, profiles, n: int, n_boot: int = 200, seed: int = 0) -> float:
    """Bootstrap-over-realizations standard error of ``c`` for profiles (R, len(L))."""
    profiles = np.asarray(profiles, float)
    rng = make_rng(seed)
    cs = []
    for _ in range(n_boot):
        pick = rng.integers(0, profiles.shape[0], profiles.shape[0])
        fit = fit_entropy_profile(L, profiles[pick].mean(axis=0), n)
        if fit.converged:
            cs.append(fit.c)
    return float(np.std(cs, ddof=1)) if len(cs) > 1 else float("nan")


class EntropyProfileRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`fit_entropy_profile` (X holds L in one column)."""

    def __init__(self, n_sites=100):
        self.n_sites = n_sites

    def fit(self, X, y, sample_weight=None):
        L = np.asarray(X, float).reshape(len(y), -1)[:, 0]
        sigma = None if sample_weight is None else 1.0 / np.sqrt(np.asarray(sample_weight, float))
        fit = fit_entropy_profile(L, y, self.n_sites, sigma=sigma)
        self.fit_ = fit
        self.a_, self.b_, self.c_ = fit.a, fit.b, fit.c
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        L = np.asarray(X, float).reshape(np.shape(X)[0], -1)[:, 0]
        return entropy_profile_model(L, self.a_, self.b_, self.n_sites)


# --------------------------------------------------------------------------
# CSV output


def write_csv(rows, fields, path=None) -> str:
    """Serialise dict rows with a fixed column order; floats use ``repr``."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for k, v in row.items()})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
