"""Natural gradient descent for CS/GCS ground states, with an adiabatic g-sweep.

A step solves ``(S + eps I) X = -grad E`` with the tangent-space metric ``S``
and moves ``zeta <- zeta + t X``; ``t`` is reduced by backtracking until the
energy does not increase. The sweep starts from the best of many classical
product states at ``g = 0`` and walks up the field grid, seeding every point
with the previous optimum plus a small random kick.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator

from ._validation import check_nonnegative, check_positive, check_positive_int, check_same_size
from .ansatz import (
    GcsParams,
    cs_energy_and_gradient,
    energy,
    energy_and_gradient,
    tangent_metric,
)
from .disorder import QskInstance, make_rng

__all__ = [
    "OptimizerConfig",
    "GroundStateResult",
    "StepResult",
    "natural_gradient_step",
    "optimize",
    "multistart_classical",
    "adiabatic_sweep",
    "sweep_grid",
    "VariationalGroundState",
]

log = logging.getLogger(__name__)

ANSATZE = ("gcs", "cs")


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for :func:`optimize` and :func:`adiabatic_sweep`.

    ``metric_regularization`` is relative to the largest metric diagonal and
    ``gradient_tolerance`` is per spin: a run is converged once the
    natural-gradient norm ``sqrt(X^T S X)`` drops below ``n * gradient_tolerance``.
    """

    step_size: float = 0.5
    metric_regularization: float = 1e-6
    gradient_tolerance: float = 1e-6
    max_steps: int = 500
    perturbation_scale: float = 1e-3
    sweep_step: float = 0.05
    restarts_at_g0: int = 1000
    min_step_size: float = 1e-6
    step_growth: float = 1.5

    def __post_init__(self):
        check_positive(self.step_size, "step_size")
        check_nonnegative(self.metric_regularization, "metric_regularization")
        check_positive(self.gradient_tolerance, "gradient_tolerance")
        check_positive_int(self.max_steps, "max_steps", minimum=0)
        check_nonnegative(self.perturbation_scale, "perturbation_scale")
        check_positive(self.sweep_step, "sweep_step")
        check_positive_int(self.restarts_at_g0, "restarts_at_g0")
        check_positive(self.min_step_size, "min_step_size")
        if self.step_growth < 1:
            raise ValueError("step_growth must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "OptimizerConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown optimizer keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class GroundStateResult:
    params: GcsParams
    energy: float
    gradient_norm: float
    steps_taken: int
    converged: bool
    g: float | None = None
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "g": self.g,
            "energy": self.energy,
            "gradient_norm": self.gradient_norm,
            "steps_taken": self.steps_taken,
            "converged": self.converged,
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GroundStateResult":
        return cls(
            params=GcsParams.from_dict(doc["params"]),
            energy=float(doc["energy"]),
            gradient_norm=float(doc["gradient_norm"]),
            steps_taken=int(doc["steps_taken"]),
            converged=bool(doc["converged"]),
            g=doc.get("g"),
        )


@dataclass
class StepResult:
    params: GcsParams
    energy: float
    gradient_norm: float
    step_size: float
    failed: bool

    def __iter__(self):
        return iter((self.params, self.energy))


# --------------------------------------------------------------------------
# single step


def _check_ansatz(ansatz: str) -> str:
    if ansatz not in ANSATZE:
        raise ValueError(f"ansatz must be one of {ANSATZE}, got {ansatz!r}")
    return ansatz


def _free_vector(params: GcsParams, ansatz: str) -> np.ndarray:
    return params.x.ravel().copy() if ansatz == "cs" else params.to_vector()


def _from_free(vec: np.ndarray, like: GcsParams, ansatz: str) -> GcsParams:
    if ansatz == "cs":
        return GcsParams(vec.reshape(like.n, 3), like.y, like.m)
    return GcsParams.from_vector(like.n, vec)


def _energy(params, instance, ansatz):
    if ansatz == "cs":
        return cs_energy_and_gradient(params.x, instance)[0]
    return energy(params, instance)


def _direction(params: GcsParams, instance: QskInstance, config: OptimizerConfig, ansatz: str):
    """Energy, natural-gradient direction X and its norm sqrt(X^T S X)."""
    if ansatz == "cs":
        e, grad = cs_energy_and_gradient(params.x, instance)
        grad = grad.ravel()
        metric = tangent_metric(params, block="x")
    else:
        e, grad = energy_and_gradient(params, instance)
        metric = tangent_metric(params)
    scale = max(float(np.max(np.diag(metric))), 1e-300)
    reg = metric + config.metric_regularization * scale * np.eye(grad.size)
    try:
        x = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(reg), grad)
    except (np.linalg.LinAlgError, ValueError):
        x = -scipy.linalg.lstsq(reg, grad)[0]
    norm = float(np.sqrt(max(-x @ grad, 0.0)))
    return e, x, norm


def _line_search(params, instance, ansatz, e0, direction, step, config):
    base = _free_vector(params, ansatz)
    if not np.any(direction):
        return params, e0, step, False
    t = step
    while t >= config.min_step_size:
        trial = _from_free(base + t * direction, params, ansatz)
        e1 = _energy(trial, instance, ansatz)
        if e1 <= e0:
            return trial, e1, t, False
        t *= 0.5
    return params, e0, t, True


def natural_gradient_step(params: GcsParams, instance: QskInstance, config: OptimizerConfig | None = None,
                          ansatz: str = "gcs", step_size: float | None = None) -> StepResult:
    """One backtracking natural-gradient step.

    The energy never increases: if even ``config.min_step_size`` fails to lower
    it, the input parameters come back unchanged with ``failed=True``.
    ``ansatz='cs'`` moves only the product-state angles x.
    """
    config = config or OptimizerConfig()
    ansatz = _check_ansatz(ansatz)
    check_same_size(params, instance)
    e0, x, norm = _direction(params, instance, config, ansatz)
    step = config.step_size if step_size is None else step_size
    new, e1, t, failed = _line_search(params, instance, ansatz, e0, x, step, config)
    return StepResult(new, float(e1), norm, t, failed)


def optimize(params0: GcsParams, instance: QskInstance, config: OptimizerConfig | None = None,
             ansatz: str = "gcs") -> GroundStateResult:
    """Iterate natural-gradient steps until converged or ``max_steps``.

    The trial step grows by ``step_growth`` after every accepted step (capped at
    ``step_size``) and restarts from the backtracked value otherwise.
    """
    config = config or OptimizerConfig()
    ansatz = _check_ansatz(ansatz)
    check_same_size(params0, instance)
    if ansatz == "cs":
        params0 = GcsParams(params0.x, np.zeros_like(params0.y), np.zeros_like(params0.m))
    tol = config.gradient_tolerance * instance.n
    params = params0
    step = config.step_size
    trace = []
    for it in range(config.max_steps + 1):
        e, x, norm = _direction(params, instance, config, ansatz)
        trace.append((float(e), norm))
        if norm <= tol:
            return GroundStateResult(params, float(e), norm, it, True, instance.g, trace)
        if it == config.max_steps:
            break
        params, e_new, used, failed = _line_search(params, instance, ansatz, e, x, step, config)
        if failed:
            log.debug("line search stalled at step %d (norm %.3g)", it, norm)
            return GroundStateResult(params, float(e), norm, it, False, instance.g, trace)
        step = min(config.step_size, used * config.step_growth)
    return GroundStateResult(params, float(trace[-1][0]), trace[-1][1], config.max_steps, False,
                             instance.g, trace)


# --------------------------------------------------------------------------
# classical seeding at g = 0


def _greedy_flips(spins: np.ndarray, couplings: np.ndarray, fields: np.ndarray) -> np.ndarray:
    """Single-spin-flip descent to a local minimum, batched over rows."""
    spins = spins.copy()
    rows = np.arange(spins.shape[0])
    for _ in range(10 * spins.shape[1] + 10):
        local = spins @ couplings + fields
        gain = 2 * spins * local  # energy change when flipping
        worst = np.argmin(gain, axis=1)
        active = gain[rows, worst] < -1e-12
        if not np.any(active):
            break
        spins[rows[active], worst[active]] *= -1
    return spins


def multistart_classical(instance: QskInstance, restarts: int = 1000, seed: int = 0,
                         steps: int = 200, step_size: float = 0.2) -> GcsParams:
    """Best product state at g = 0 out of ``restarts`` random starts.

    Each start is a random set of Bloch polar angles. For product states the
    Fubini-Study metric on the polar angle is constant, so natural gradient
    descent is plain gradient descent on the angles; all restarts run as one
    batch. The relaxed states are rounded to spins and polished with greedy
    single-spin flips, since at g = 0 the energy is multilinear and its minima
    lie at corners.
    """
    if instance.g != 0:
        raise ValueError("multistart_classical requires an instance with g = 0")
    restarts = check_positive_int(restarts, "restarts")
    j, h = instance.couplings, instance.fields
    rng = make_rng(seed)
    theta = rng.uniform(0.0, np.pi, size=(restarts, instance.n))
    for _ in range(steps):
        z = np.cos(theta)
        theta -= step_size * np.sin(theta) * (z @ j + h)
    spins = np.where(np.cos(theta) >= 0, 1.0, -1.0)
    spins = _greedy_flips(spins, j, h)
    energies = instance.classical_energy(spins)
    best = spins[int(np.argmin(energies))]
    return spins_to_params(best)


def spins_to_params(spins) -> GcsParams:
    """GCS parameters (y = 0, M = 0) of the z-basis state ``spins`` (entries +-1)."""
    spins = np.asarray(spins, float)
    x = np.zeros((spins.size, 3))
    x[:, 1] = np.where(spins > 0, 0.0, np.pi / 2)
    n = spins.size
    return GcsParams(x, np.zeros((n, 3)), np.zeros((n, n)))


# --------------------------------------------------------------------------
# adiabatic sweep


def sweep_grid(g_values: Sequence[float], sweep_step: float) -> tuple[np.ndarray, np.ndarray]:
    """Internal grid from 0 through ``g_values`` with spacing at most ``sweep_step``.

    Returns the grid and the positions of the requested values within it.
    """
    g_values = np.asarray(g_values, float)
    if g_values.size == 0:
        raise ValueError("g grid is empty")
    if np.any(g_values < 0) or np.any(np.diff(g_values) <= 0):
        raise ValueError("g grid must be nonnegative and strictly ascending")
    anchors = np.concatenate([[0.0], g_values]) if g_values[0] > 0 else g_values
    pieces = [anchors[:1]]
    for lo, hi in zip(anchors[:-1], anchors[1:]):
        k = max(1, int(np.ceil((hi - lo) / sweep_step - 1e-9)))
        pieces.append(np.linspace(lo, hi, k + 1)[1:])
    grid = np.concatenate(pieces)
    # the anchors are reproduced exactly by linspace endpoints
    where = np.searchsorted(grid, g_values)
    return grid, where


def _perturb(params: GcsParams, scale: float, rng: np.random.Generator, ansatz: str) -> GcsParams:
    if scale == 0:
        return params
    vec = _free_vector(params, ansatz)
    return _from_free(vec + scale * rng.normal(size=vec.size), params, ansatz)


def _atomic_write(path: str, text: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def adiabatic_sweep(instance: QskInstance, g_values: Sequence[float], config: OptimizerConfig | None = None,
                    ansatz: str = "gcs", seed: int = 0, start: GcsParams | None = None,
                    checkpoint: str | None = None) -> list[GroundStateResult]:
    """Ground states along ascending transverse fields for one disorder realization.

    The walk starts at g = 0 from :func:`multistart_classical` (or ``start``)
    and inserts intermediate points so that no step exceeds
    ``config.sweep_step``. Only results at the requested ``g_values`` are
    returned. ``instance.g`` is ignored.

    ``checkpoint`` names a JSON file holding an array with one entry per
    finished internal grid point; an existing file is resumed from.
    """
    config = config or OptimizerConfig()
    ansatz = _check_ansatz(ansatz)
    grid, where = sweep_grid(g_values, config.sweep_step)
    done: list[dict] = []
    if checkpoint and os.path.exists(checkpoint):
        with open(checkpoint) as fh:
            done = json.load(fh)
        if len(done) > grid.size or any(abs(d["g"] - g) > 1e-12 for d, g in zip(done, grid)):
            raise ValueError(f"checkpoint {checkpoint} does not match the sweep grid")
    results = [GroundStateResult.from_dict(d) for d in done]
    for k in range(len(results), grid.size):
        g = float(grid[k])
        inst = instance.with_transverse_field(g)
        if k == 0:
            if g != 0.0:
                raise AssertionError("sweep grid must start at 0")
            p0 = start if start is not None else multistart_classical(
                inst, config.restarts_at_g0, seed=seed)
            check_same_size(p0, inst)
            e0 = _energy(p0, inst, ansatz)
            res = GroundStateResult(p0, float(e0), 0.0, 0, True, g)
        else:
            p0 = _perturb(results[-1].params, config.perturbation_scale, make_rng(seed, k), ansatz)
            res = optimize(p0, inst, config, ansatz)
            res.g = g
            if not res.converged:
                log.info("sweep point g=%.3f not converged (norm %.3g)", g, res.gradient_norm)
        res.trace = []
        results.append(res)
        if checkpoint:
            done.append(res.to_dict())
            _atomic_write(checkpoint, json.dumps(done))
    return [results[i] for i in where]


# --------------------------------------------------------------------------
# estimator wrapper


class VariationalGroundState(BaseEstimator):
    """Estimator-style front end: ``fit(instance)`` finds a variational ground state.

    Parameters
    ----------
    ansatz : {'gcs', 'cs'}
    step_size, metric_regularization, gradient_tolerance, max_steps
        Forwarded to :class:`OptimizerConfig`.
    restarts : int
        Random classical starts used when no ``params0`` is given.
    perturbation_scale : float
        Size of the random kick applied to the starting point. Product states
        with M = 0 are stationary points of the GCS energy, so without it the
        optimizer cannot leave them.
    random_state : int
        Seed of the restarts and the kick.
    """

    def __init__(self, ansatz="gcs", step_size=0.5, metric_regularization=1e-6,
                 gradient_tolerance=1e-6, max_steps=500, restarts=100, perturbation_scale=1e-3,
                 random_state=0):
        self.ansatz = ansatz
        self.step_size = step_size
        self.metric_regularization = metric_regularization
        self.gradient_tolerance = gradient_tolerance
        self.max_steps = max_steps
        self.restarts = restarts
        self.perturbation_scale = perturbation_scale
        self.random_state = random_state

    def _config(self) -> OptimizerConfig:
        return OptimizerConfig(step_size=self.step_size, metric_regularization=self.metric_regularization,
                               gradient_tolerance=self.gradient_tolerance, max_steps=self.max_steps,
                               restarts_at_g0=self.restarts)

    def fit(self, instance: QskInstance, params0: GcsParams | None = None):
        if not isinstance(instance, QskInstance):
            raise TypeError("fit expects a QskInstance")
        config = self._config()
        ansatz = _check_ansatz(self.ansatz)
        if params0 is None:
            params0 = multistart_classical(instance.with_transverse_field(0.0), self.restarts,
                                           seed=self.random_state)
        params0 = _perturb(params0, self.perturbation_scale, make_rng(self.random_state, 1), ansatz)
        self.result_ = optimize(params0, instance, config, self.ansatz)
        self.params_ = self.result_.params
        self.energy_ = self.result_.energy
        self.n_features_in_ = instance.n
        return self

    def score(self, instance: QskInstance) -> float:
        """Negative variational energy of the fitted state on ``instance``."""
        if not hasattr(self, "params_"):
            raise AttributeError("estimator is not fitted")
        return -energy(self.params_, instance)
