"""Coherent-state (CS) and generalized coherent-state (GCS) variational families.

``|Psi(x, y, M)> = U(y) V(M) U(x) |up, ..., up>`` with single-spin rotations
``U(x) = prod_n exp(-i x_n . sigma_n)`` and the diagonal entangler
``V(M) = exp(-(i/4) sum_{n<m} M_nm Z_n Z_m)``.

Every quantity is reduced to products of single-site brackets on the product
state ``|phi(x)> = U(x)|up...up>``. Two facts make this work:

* ``U(y)^dag sigma^a U(y) = sum_a' R^{aa'}(y) sigma^a'`` acts site by site;
* ``V^dag sigma^pm_n V = sigma^pm_n exp(+-(i/2) sum_m M_nm Z_m)`` and
  ``Z_n`` commutes with ``V``.

The ``i/2`` in the second identity follows from ``V`` as written above (each
pair appears once in the sum with weight 1/4, and flipping ``Z_n`` changes the
pair phase by twice that amount).

Internally the dressed raising/lowering/z operators are indexed by
``alpha = 0, 1, 2`` for ``+, -, z`` with signs ``(+1, -1, 0)``. Every site
bracket is linear in ``a = |c0|^2``, ``b = |c1|^2``, ``p = conj(c0) c1`` and
``conj(p)``, which is what the gradient accumulates.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from ._validation import check_finite_array, check_same_size, check_symmetric_zero_diag
from .disorder import QskInstance
from .exact import as_pauli

__all__ = [
    "CsParams",
    "GcsParams",
    "SingleSpinAmplitudes",
    "rotation_matrix",
    "cs_product_expectation",
    "gcs_pauli_expectation",
    "energy",
    "energy_and_gradient",
    "energy_gradient",
    "cs_energy_and_gradient",
    "tangent_metric",
    "zz_correlations",
    "site_expectations",
    "n_parameters",
]

SIGN = np.array([1.0, -1.0, 0.0])

_PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
_LADDER = np.array(
    [
        [[0, 1], [0, 0]],
        [[0, 0], [1, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)
# physical axis -> coefficients on (x, y, z)
_AXIS_VECTOR = {
    "x": np.array([1, 0, 0], dtype=complex),
    "y": np.array([0, 1, 0], dtype=complex),
    "z": np.array([0, 0, 1], dtype=complex),
    "+": np.array([0.5, 0.5j, 0], dtype=complex),
    "-": np.array([0.5, -0.5j, 0], dtype=complex),
}


# --------------------------------------------------------------------------
# parameter containers


@dataclass(frozen=True, eq=False)
class CsParams:
    """Product-state parameters: three rotation angles per spin."""

    x: np.ndarray

    def __post_init__(self):
        x = check_finite_array(self.x, "x")
        if x.ndim != 2 or x.shape[1] != 3:
            raise ValueError(f"x must have shape (n, 3), got {x.shape}")
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True, eq=False)
class GcsParams:
    """GCS parameters ``x`` (n, 3), ``y`` (n, 3) and symmetric phases ``m`` (n, n)."""

    x: np.ndarray
    y: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        x = check_finite_array(self.x, "x")
        if x.ndim != 2 or x.shape[1] != 3:
            raise ValueError(f"x must have shape (n, 3), got {x.shape}")
        n = x.shape[0]
        y = check_finite_array(self.y, "y", shape=(n, 3))
        m = check_symmetric_zero_diag(self.m, "m")
        if m.shape != (n, n):
            raise ValueError(f"m must have shape {(n, n)}, got {m.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "m", m)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_cs(cls, cs) -> "GcsParams":
        x = cs.x if isinstance(cs, CsParams) else np.asarray(cs, float)
        n = x.shape[0]
        return cls(x, np.zeros((n, 3)), np.zeros((n, n)))

    @classmethod
    def zeros(cls, n: int) -> "GcsParams":
        return cls(np.zeros((n, 3)), np.zeros((n, 3)), np.zeros((n, n)))

    def to_vector(self) -> np.ndarray:
        """Flat parameter vector ordered ``(x, y, M upper triangle)``."""
        iu = np.triu_indices(self.n, 1)
        return np.concatenate([self.x.ravel(), self.y.ravel(), self.m[iu]])

    @classmethod
    def from_vector(cls, n: int, vec) -> "GcsParams":
        vec = np.asarray(vec, float)
        if vec.shape != (n_parameters(n),):
            raise ValueError(f"expected {n_parameters(n)} parameters, got {vec.shape}")
        x = vec[: 3 * n].reshape(n, 3)
        y = vec[3 * n: 6 * n].reshape(n, 3)
        m = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        m[iu] = vec[6 * n:]
        return cls(x, y, m + m.T)

    def to_dict(self) -> dict:
        rows, cols = np.tril_indices(self.n, -1)
        return {"n": self.n, "x": self.x.tolist(), "y": self.y.tolist(),
                "m": self.m[rows, cols].tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "GcsParams":
        n = int(doc["n"])
        m = np.zeros((n, n))
        rows, cols = np.tril_indices(n, -1)
        m[rows, cols] = doc["m"]
        return cls(np.asarray(doc["x"], float).reshape(n, 3),
                   np.asarray(doc["y"], float).reshape(n, 3), m + m.T)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GcsParams":
        return cls.from_dict(json.loads(text))


def n_parameters(n: int) -> int:
    return 6 * n + n * (n - 1) // 2


@dataclass(frozen=True, eq=False)
class SingleSpinAmplitudes:
    """Per-site ``(c0, c1)`` of ``|phi_n> = c0|up> + c1|down>``."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        norms = np.sum(np.abs(c) ** 2, axis=-1)
        if c.ndim != 2 or c.shape[1] != 2 or np.any(np.abs(norms - 1) > 1e-12):
            raise ValueError("amplitudes must be an (n, 2) array of normalized pairs")
        object.__setattr__(self, "c", c)

    @classmethod
    def from_angles(cls, x) -> "SingleSpinAmplitudes":
        return cls(_su2(np.asarray(x, float))[..., :, 0])

    @property
    def up_weight(self) -> np.ndarray:
        return np.abs(self.c[:, 0]) ** 2

    @property
    def down_weight(self) -> np.ndarray:
        return np.abs(self.c[:, 1]) ** 2

    @property
    def coherence(self) -> np.ndarray:
        """``conj(c0) c1 = <sigma^+>``."""
        return self.c[:, 0].conj() * self.c[:, 1]

    @property
    def mixing(self) -> np.ndarray:
        """``p_n = |c0|^2 |c1|^2``."""
        return self.up_weight * self.down_weight


# --------------------------------------------------------------------------
# single-spin rotations


def _sinc_terms(theta):
    """``sin(t)/t`` and ``(cos(t) - sin(t)/t)/t**2`` with small-angle series."""
    small = theta < 1e-4
    t = np.where(small, 1.0, theta)
    s1 = np.where(small, 1 - theta ** 2 / 6 + theta ** 4 / 120, np.sin(t) / t)
    s2 = np.where(small, -1 / 3 + theta ** 2 / 30, (np.cos(t) - np.sin(t) / t) / t ** 2)
    return s1, s2


def _su2(v):
    """``exp(-i v . sigma)`` for v of shape (..., 3)."""
    theta = np.linalg.norm(v, axis=-1)
    s1, _ = _sinc_terms(theta)
    gen = np.einsum("...k,kab->...ab", v, _PAULI)
    return np.cos(theta)[..., None, None] * np.eye(2) - 1j * s1[..., None, None] * gen


def _su2_derivative(v):
    """``d/dv_k exp(-i v . sigma)``, shape (..., 3, 2, 2)."""
    theta = np.linalg.norm(v, axis=-1)
    s1, s2 = _sinc_terms(theta)
    gen = np.einsum("...k,kab->...ab", v, _PAULI)
    ident = -(s1[..., None] * v)[..., None, None] * np.eye(2)
    rest = -1j * (
        (s2[..., None] * v)[..., None, None] * gen[..., None, :, :]
        + s1[..., None, None, None] * _PAULI
    )
    return ident + rest


def _rotation(v):
    """R with ``u^dag sigma^a u = sum_a' R[a, a'] sigma^a'``."""
    u = _su2(v)
    conj = np.einsum("...ji,ajk,...kl->...ail", u.conj(), _PAULI, u)
    return 0.5 * np.einsum("bij,...aji->...ab", _PAULI, conj).real


def _rotation_derivative(v):
    """dR[..., k, a, a'] = d R[a, a'] / d v_k."""
    u = _su2(v)
    du = _su2_derivative(v)
    left = np.einsum("...ji,ajk->...aik", u.conj(), _PAULI)
    prod = np.einsum("...aik,...qkl->...qail", left, du)
    return np.einsum("bli,...qail->...qab", _PAULI, prod).real


def _right_generators(v):
    """w[..., k, b] with ``u^dag du/dv_k = -i sum_b w[k, b] sigma^b``."""
    u = _su2(v)
    du = _su2_derivative(v)
    prod = np.einsum("...ji,...kjl->...kil", u.conj(), du)
    return (0.5j * np.einsum("bli,...kil->...kb", _PAULI, prod)).real


def rotation_matrix(x_n) -> np.ndarray:
    """Adjoint action of ``exp(-i x_n . sigma)`` on the Pauli vector (3x3, orthogonal)."""
    v = check_finite_array(x_n, "x_n", shape=(3,))
    return _rotation(v)


def _ladder_coefficients(r):
    """Map (x, y, z) coefficient vectors (..., 3) to (+, -, z) branches."""
    return np.stack([r[..., 0] - 1j * r[..., 1], r[..., 0] + 1j * r[..., 1], r[..., 2]], axis=-1)


# --------------------------------------------------------------------------
# generic expectation values


def _amplitudes(x):
    return _su2(x)[..., :, 0]


def cs_product_expectation(params, op) -> complex:
    """Expectation of a Pauli string on the product state ``U(x)|up...up>``."""
    x = params.x if isinstance(params, (CsParams, GcsParams)) else np.asarray(params, float)
    op = as_pauli(op)
    op.check_range(x.shape[0])
    c = _amplitudes(x)
    out = 1.0 + 0j
    for site, axis in op:
        mat = _AXIS_MATRIX[axis]
        out *= c[site].conj() @ mat @ c[site]
    return complex(out)


_AXIS_MATRIX = {
    "x": _PAULI[0], "y": _PAULI[1], "z": _PAULI[2], "+": _LADDER[0], "-": _LADDER[1],
}


def gcs_pauli_expectation(params: GcsParams, op) -> complex:
    """``<Psi| op |Psi>`` via the branch expansion over ``sigma^{+,-,z}``.

    Cost is ``3**k * n`` for a string on ``k <= 4`` sites.
    """
    op = as_pauli(op)
    op.check_range(params.n)
    if len(op) == 0:
        return 1.0 + 0j
    c = _amplitudes(params.x)
    a, b = np.abs(c[:, 0]) ** 2, np.abs(c[:, 1]) ** 2
    rot = _rotation(params.y)
    sites = np.array(op.sites)
    coefs = [_ladder_coefficients(_AXIS_VECTOR[axis] @ rot[site]) for site, axis in op]
    others = np.setdiff1d(np.arange(params.n), sites)
    total = 0j
    for branch in itertools.product(range(3), repeat=len(op)):
        weight = np.prod([coefs[k][al] for k, al in enumerate(branch)])
        if weight == 0:
            continue
        signs = SIGN[list(branch)]
        theta = 0.5 * signs @ params.m[sites]  # phase each site picks up
        val = np.prod(a[others] * np.exp(1j * theta[others]) + b[others] * np.exp(-1j * theta[others]))
        for s in sites:
            mat = np.eye(2, dtype=complex)
            for k, site in enumerate(sites):
                if site == s:
                    mat = mat @ _LADDER[branch[k]]
                else:
                    ph = 0.5 * signs[k] * params.m[site, s]
                    mat = mat @ np.diag([np.exp(1j * ph), np.exp(-1j * ph)])
            val *= c[s].conj() @ mat @ c[s]
        total += weight * val
    return complex(total)


# --------------------------------------------------------------------------
# vectorised machinery


def _exclusive_products(f):
    """``out[..., s] = prod_{s' != s} f[..., s']`` without division."""
    ones = np.ones(f.shape[:-1] + (1,), dtype=f.dtype)
    pre = np.cumprod(np.concatenate([ones, f[..., :-1]], axis=-1), axis=-1)
    suf = np.cumprod(np.concatenate([ones, f[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return pre * suf


def _pair_exclusive_products(f):
    """``out[..., p, q] = prod_{s not in {p, q}} f[..., s]`` for p < q (zeros elsewhere)."""
    n = f.shape[-1]
    ones = np.ones(f.shape[:-1] + (1,), dtype=f.dtype)
    pre = np.cumprod(np.concatenate([ones, f[..., :-1]], axis=-1), axis=-1)
    suf = np.cumprod(np.concatenate([ones, f[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    mid_src = np.where(upper, f[..., None, :], 1.0)
    mid = np.cumprod(mid_src, axis=-1)  # mid[p, q] = prod_{p < s <= q}
    inner = np.ones_like(mid)
    inner[..., :, 1:] = mid[..., :, :-1]
    out = pre[..., :, None] * inner * suf[..., None, :]
    return np.where(upper, out, 0)


class _State:
    """Per-site quantities shared by energy, gradient and metric."""

    def __init__(self, params: GcsParams):
        self.params = params
        self.n = params.n
        self.c = _amplitudes(params.x)
        self.a = np.abs(self.c[:, 0]) ** 2
        self.b = np.abs(self.c[:, 1]) ** 2
        self.p = self.c[:, 0].conj() * self.c[:, 1]
        self.z = self.a - self.b
        self.rot = _rotation(params.y)
        self.m = params.m
        # single dressed operators sigma^alpha_n E^n_alpha, factors over sites s
        theta = 0.5 * SIGN[:, None, None] * self.m[None]
        self.e1 = np.exp(1j * theta)
        f1 = self.a * self.e1 + self.b * self.e1.conj()
        diag = np.arange(self.n)
        f1[:, diag, diag] = np.stack([self.p, self.p.conj(), self.z.astype(complex)])
        self.f1 = f1
        self.k1 = np.prod(f1, axis=-1)

    def coefficients(self, axis: int):
        """Branch coefficients C[n, alpha] of the physical Pauli ``axis`` at each site."""
        return _ladder_coefficients(self.rot[:, axis, :])


def _pair_factors(st: _State, pn: np.ndarray, pm: np.ndarray, grad: bool):
    """Site factors of ``<sigma^al_n E^n_al sigma^be_m E^m_be>`` for pairs (pn[k], pm[k]).

    Returns arrays of shape (3, 3, len(pn), n) indexed [al, be, k, s]; with
    ``grad`` also the linear coefficients on (a, b, p, conj p) and the
    derivative with respect to the site phase.
    """
    k = np.arange(pn.size)
    e = st.e1[:, None, pn, :] * st.e1[None, :, pm, :]
    ec = e.conj()
    a, b, p = st.a, st.b, st.p
    out = [a * e + b * ec]
    if grad:
        out += [e.copy(), ec.copy(), np.zeros_like(e), np.zeros_like(e), 1j * (a * e - b * ec)]

    # site n: sigma^alpha followed by the phase from E^m
    en = e[:, :, k, pn]  # (al, be, k)
    enc = en.conj()
    p_, a_, b_ = p[pn], a[pn], b[pn]
    site_n = [np.stack([p_ * enc[0], p_.conj() * en[1], a_ * en[2] - b_ * enc[2]])]
    if grad:
        z = np.zeros_like(en[0])
        site_n += [
            np.stack([z, z, en[2]]),
            np.stack([z, z, -enc[2]]),
            np.stack([enc[0], z, z]),
            np.stack([z, en[1], z]),
            np.stack([-1j * p_ * enc[0], 1j * p_.conj() * en[1], 1j * (a_ * en[2] + b_ * enc[2])]),
        ]
    for arr, vals in zip(out, site_n):
        arr[:, :, k, pn] = vals

    # site m: phase from E^n followed by sigma^beta
    em = e[:, :, k, pm]
    emc = em.conj()
    p_, a_, b_ = p[pm], a[pm], b[pm]
    site_m = [np.stack([p_ * em[:, 0], p_.conj() * emc[:, 1], a_ * em[:, 2] - b_ * emc[:, 2]], axis=1)]
    if grad:
        z = np.zeros_like(em[:, 0])
        site_m += [
            np.stack([z, z, em[:, 2]], axis=1),
            np.stack([z, z, -emc[:, 2]], axis=1),
            np.stack([em[:, 0], z, z], axis=1),
            np.stack([z, emc[:, 1], z], axis=1),
            np.stack([1j * p_ * em[:, 0], -1j * p_.conj() * emc[:, 1],
                      1j * (a_ * em[:, 2] + b_ * emc[:, 2])], axis=1),
        ]
    for arr, vals in zip(out, site_m):
        arr[:, :, k, pm] = vals
    if grad:
        return out[0], tuple(out[1:])
    return out[0], None


def _pair_chunks(n: int, budget: int = 4_000_000):
    """Unordered pairs n < m in chunks of bounded array size."""
    iu, ju = np.triu_indices(n, 1)
    step = max(1, budget // (9 * n))
    for start in range(0, iu.size, step):
        yield iu[start:start + step], ju[start:start + step]


def _pair_table(st: _State) -> np.ndarray:
    """K2[al, be, n, m] for all ordered pairs (diagonal n == m left at zero).

    The dressed operators on different sites commute, hence
    ``K2[al, be, n, m] == K2[be, al, m, n]``.
    """
    n = st.n
    out = np.zeros((3, 3, n, n), dtype=complex)
    for pn, pm in _pair_chunks(n):
        val, _ = _pair_factors(st, pn, pm, grad=False)
        vals = np.prod(val, axis=-1)
        out[:, :, pn, pm] = vals
        out[:, :, pm, pn] = vals.transpose(1, 0, 2)
    return out


# --------------------------------------------------------------------------
# energy and gradient


def _energy_core(params: GcsParams, instance: QskInstance, grad: bool):
    check_same_size(params, instance)
    st = _State(params)
    n = st.n
    jmat = instance.couplings
    cz = st.coefficients(2)
    cx = st.coefficients(0)
    # single-site terms: -g X_n - h_n Z_n
    w1 = -instance.g * cx - instance.fields[:, None] * cz  # (n, 3)
    e_single = np.sum(w1.T * st.k1)
    # pair terms -J_nm <Z_n Z_m>, n < m
    e_pair = 0j
    if grad:
        gA = np.zeros(n, complex)
        gB = np.zeros(n, complex)
        gP = np.zeros(n, complex)
        gQ = np.zeros(n, complex)
        dM = np.zeros((n, n), complex)
        dcz = np.zeros((n, 3), complex)
        dcx = np.zeros((n, 3), complex)
    for pn, pm in _pair_chunks(n):
        val, lam = _pair_factors(st, pn, pm, grad)
        jw = -jmat[pn, pm]
        w = cz[pn].T[:, None, :] * cz[pm].T[None, :, :] * jw
        if not grad:
            e_pair += np.sum(w * np.prod(val, axis=-1))
            continue
        ex = _exclusive_products(val)
        terms = ex[..., 0] * val[..., 0]
        e_pair += np.sum(w * terms)
        g = w[..., None] * ex
        la, lb, lp, lq, dth = lam
        gA += np.einsum("abks,abks->s", g, la)
        gB += np.einsum("abks,abks->s", g, lb)
        gP += np.einsum("abks,abks->s", g, lp)
        gQ += np.einsum("abks,abks->s", g, lq)
        gd = g * dth
        np.add.at(dM, pn, 0.5 * np.einsum("a,abks->ks", SIGN, gd))
        np.add.at(dM, pm, 0.5 * np.einsum("b,abks->ks", SIGN, gd))
        np.add.at(dcz, pn, np.einsum("k,kb,abk->ka", jw, cz[pm], terms))
        np.add.at(dcz, pm, np.einsum("k,ka,abk->kb", jw, cz[pn], terms))
    e_total = float((e_single + e_pair).real)
    if not grad:
        return e_total, None
    # single-site term adjoints
    ex1 = _exclusive_products(st.f1)
    g1 = w1.T[:, :, None] * ex1  # (3, n, s)
    diag = np.arange(n)
    off = np.ones((n, n), dtype=bool)
    off[diag, diag] = False
    gA += np.einsum("ans,ans->s", g1 * off, st.e1)
    gB += np.einsum("ans,ans->s", g1 * off, st.e1.conj())
    dth1 = 1j * (st.a * st.e1 - st.b * st.e1.conj())
    dM += 0.5 * np.einsum("a,ans->ns", SIGN, g1 * dth1 * off)
    gP += g1[0, diag, diag]
    gQ += g1[1, diag, diag]
    gA += g1[2, diag, diag]
    gB -= g1[2, diag, diag]
    dcx += -instance.g * st.k1.T
    dcz += -instance.fields[:, None] * st.k1.T
    # branch coefficients -> rotation matrix -> y
    drot = np.zeros((n, 3, 3), complex)
    for axis, dc in ((0, dcx), (2, dcz)):
        drot[:, axis, 0] = dc[:, 0] + dc[:, 1]
        drot[:, axis, 1] = -1j * dc[:, 0] + 1j * dc[:, 1]
        drot[:, axis, 2] = dc[:, 2]
    dy = np.einsum("nab,nkab->nk", drot, _rotation_derivative(params.y)).real
    # site adjoints -> amplitudes -> x
    dc = _su2_derivative(params.x)[..., :, 0]  # (n, 3, 2)
    c0, c1 = st.c[:, 0][:, None], st.c[:, 1][:, None]
    da = 2 * (c0.conj() * dc[..., 0]).real
    db = 2 * (c1.conj() * dc[..., 1]).real
    dp = dc[..., 0].conj() * c1 + c0.conj() * dc[..., 1]
    dx = (gA[:, None] * da + gB[:, None] * db + gP[:, None] * dp + gQ[:, None] * dp.conj()).real
    dmat = (dM + dM.T).real
    iu = np.triu_indices(n, 1)
    return e_total, np.concatenate([dx.ravel(), dy.ravel(), dmat[iu]])


def energy(params: GcsParams, instance: QskInstance) -> float:
    """Variational energy ``<Psi|H|Psi>``; O(n^3) time."""
    return _energy_core(params, instance, grad=False)[0]


def energy_and_gradient(params: GcsParams, instance: QskInstance):
    return _energy_core(params, instance, grad=True)


def energy_gradient(params: GcsParams, instance: QskInstance) -> np.ndarray:
    """Exact derivative of the energy w.r.t. the flat parameter vector.

    Equal to ``2 Re <Psi|H|V_mu>`` for the projected tangent vectors. It is
    obtained by reverse accumulation through the site-bracket expansion of the
    energy, so it costs about as much as one energy evaluation.
    """
    return _energy_core(params, instance, grad=True)[1]


def cs_energy_and_gradient(x, instance: QskInstance):
    """Energy of the product state ``U(x)|up...up>`` and its x-gradient (shape (n, 3)).

    Uses the Bloch vectors ``r_n = R(x_n)[:, z]`` directly, so it costs O(n^2)
    and is the fast path for the CS family.
    """
    x = np.asarray(x, float)
    if x.shape != (instance.n, 3):
        raise ValueError(f"x must have shape ({instance.n}, 3), got {x.shape}")
    bloch = _rotation(x)[:, :, 2]
    dbloch = _rotation_derivative(x)[:, :, :, 2]  # (n, k, a)
    jz = instance.couplings @ bloch[:, 2]
    e = -0.5 * bloch[:, 2] @ jz - instance.g * bloch[:, 0].sum() - instance.fields @ bloch[:, 2]
    dr = np.zeros_like(bloch)
    dr[:, 0] = -instance.g
    dr[:, 2] = -jz - instance.fields
    return float(e), np.einsum("nka,na->nk", dbloch, dr)


# --------------------------------------------------------------------------
# observables


def zz_correlations(params: GcsParams) -> np.ndarray:
    """Matrix of ``<Z_n Z_m>`` with unit diagonal."""
    st = _State(params)
    cz = st.coefficients(2)
    k2 = _pair_table(st)
    out = np.einsum("na,mb,abnm->nm", cz, cz, k2).real
    np.fill_diagonal(out, 1.0)
    return 0.5 * (out + out.T)


def site_expectations(params: GcsParams, axis: str = "x") -> np.ndarray:
    """Vector of single-site expectations ``<sigma^axis_n>``."""
    st = _State(params)
    coef = _ladder_coefficients(np.einsum("k,nka->na", _AXIS_VECTOR[axis], st.rot.astype(complex)))
    return np.einsum("na,an->n", coef, st.k1).real


# --------------------------------------------------------------------------
# tangent-space metric


def tangent_metric(params: GcsParams, block: str = "full") -> np.ndarray:
    """``S_{mu nu} = 2 Re(<d_mu Psi|d_nu Psi> - <d_mu Psi|Psi><Psi|d_nu Psi>)``.

    ``block='x'`` returns only the product-state (x, x) block, which is the
    metric of the CS family.
    """
    st = _State(params)
    n = st.n
    c = st.c
    dcol = _su2_derivative(params.x)[..., :, 0]  # (n, k, 2)
    t_x = np.einsum("ni,nki->nk", c.conj(), dcol)
    o_xx = np.einsum("nki,nli->nkl", dcol.conj(), dcol)
    s_xx = 2 * (o_xx - t_x.conj()[:, :, None] * t_x[:, None, :]).real
    xx = np.zeros((3 * n, 3 * n))
    for k in range(n):
        xx[3 * k: 3 * k + 3, 3 * k: 3 * k + 3] = s_xx[k]
    if block == "x":
        return xx
    if block != "full":
        raise ValueError("block must be 'full' or 'x'")

    iu, ju = np.triu_indices(n, 1)
    npair = iu.size
    z = st.z
    # y tangents: -i sum_al Y[m, b, al] sigma^al_m E^m_al
    ycoef = _ladder_coefficients(_right_generators(params.y))  # (n, b, al)
    t_y = -1j * np.einsum("mba,am->mb", ycoef, st.k1)
    t_m = -0.25j * z[iu] * z[ju]

    # (x, y): bra replaces site n by d_nk
    ex1 = _exclusive_products(st.f1)  # (al, m, s)
    e1 = st.e1  # (al, m, s) phases at site s
    d0 = dcol[..., 0].conj()  # (n, k)
    d1 = dcol[..., 1].conj()
    # <d|D(theta)|c> for site n under E^m_al: (al, m, n, k)
    bra = (d0 * c[:, None, 0])[None, None] * e1[..., None] + (d1 * c[:, None, 1])[None, None] * e1.conj()[..., None]
    diag = np.arange(n)
    own = np.stack([d0 * c[:, None, 1], d1 * c[:, None, 0], d0 * c[:, None, 0] - d1 * c[:, None, 1]])
    bra[:, diag, diag] = own
    o_xy = -1j * np.einsum("mba,amn,amnk->nkmb", ycoef, ex1, bra)
    s_xy = 2 * (o_xy - t_x.conj()[:, :, None, None] * t_y[None, None]).real

    # (y, y)
    k2 = _pair_table(st)
    prod_table = np.array([
        [np.zeros(n), st.a, -st.p],
        [st.b, np.zeros(n), st.p.conj()],
        [st.p, -st.p.conj(), np.ones(n)],
    ], dtype=complex)
    theta_sum = 0.5 * (SIGN[:, None] + SIGN[None, :])[..., None, None] * st.m[None, None]
    es = np.exp(1j * theta_sum)
    fs = st.a * es + st.b * es.conj()
    fs[:, :, diag, diag] = prod_table
    same = np.prod(fs, axis=-1)
    k2[:, :, diag, diag] = same
    o_yy = np.einsum("mba,lcd,adml->mblc", ycoef, ycoef, k2)
    s_yy = 2 * (o_yy - t_y.conj()[:, :, None, None] * t_y[None, None]).real

    # (y, M): (1/4) sum_al Y <sigma^al_m E_al Z_p Z_q>
    hz = st.a * e1 - st.b * e1.conj()
    hz[:, diag, diag] = np.stack([-st.p, st.p.conj(), np.ones(n)])
    ex2 = _pair_exclusive_products(st.f1)[..., iu, ju]  # (al, m, pair)
    lmat = ex2 * hz[:, :, iu] * hz[:, :, ju]
    o_ym = 0.25 * np.einsum("mba,amq->mbq", ycoef, lmat)
    s_ym = 2 * (o_ym - t_y.conj()[:, :, None] * t_m[None, None]).real

    # (x, M): only pairs containing the site contribute
    dz = d0 * c[:, None, 0] - d1 * c[:, None, 1]  # <d|Z|c>
    conn = -0.25j * (dz - t_x.conj() * z[:, None])  # times z of the partner
    s_xm = np.zeros((n, 3, npair))
    q = np.arange(npair)
    s_xm[iu, :, q] = 2 * (conn[iu] * z[ju][:, None]).real
    s_xm[ju, :, q] = 2 * (conn[ju] * z[iu][:, None]).real

    # (M, M): connected part nonzero only for pairs sharing a site
    s_mm = np.zeros((npair, npair))
    s_mm[q, q] = 2 * (1 - z[iu] ** 2 * z[ju] ** 2) / 16
    pair_index = -np.ones((n, n), dtype=int)
    pair_index[iu, ju] = q
    pair_index[ju, iu] = q
    for shared in range(n):
        others = np.delete(np.arange(n), shared)
        idx = pair_index[shared, others]
        block_mm = 2 * np.outer(z[others], z[others]) * (1 - z[shared] ** 2) / 16
        np.fill_diagonal(block_mm, 0.0)
        s_mm[np.ix_(idx, idx)] += block_mm

    p = n_parameters(n)
    out = np.zeros((p, p))
    xs, ys, ms = slice(0, 3 * n), slice(3 * n, 6 * n), slice(6 * n, p)
    out[xs, xs] = xx
    out[xs, ys] = s_xy.reshape(3 * n, 3 * n)
    out[ys, xs] = out[xs, ys].T
    out[ys, ys] = s_yy.reshape(3 * n, 3 * n)
    out[ys, ms] = s_ym.reshape(3 * n, npair)
    out[ms, ys] = out[ys, ms].T
    out[xs, ms] = s_xm.reshape(3 * n, npair)
    out[ms, xs] = out[xs, ms].T
    out[ms, ms] = s_mm
    return 0.5 * (out + out.T)
