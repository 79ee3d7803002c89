"""Assembly of the covering-ellipsoid LMI for one ReLU stage.

A stage is ``y = W1 relu(W0 x + b0) + b1`` with ``x`` ranging over an input
ellipsoid. Rows and columns of the stage matrices are ordered
``(x, z, 1)`` where ``z = relu(W0 x + b0)``; the Schur-complement LMI
appends the ``n_y`` output rows at the end.

Every matrix here is affine in the decision vector
``(tau, lam, nu, eta, lam_pair, A, b)``, so an :class:`LmiProblem` stores the
constant term and one coefficient matrix per variable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .ellipsoid import Ellipsoid
from .errors import DimensionMismatch, ZeroNormal
from .qc import (
    MultiplierBounds,
    NeuronStatus,
    QcMultipliers,
    build_Q,
    multiplier_bounds,
    pair_indices,
)


@dataclass(frozen=True)
class DecisionLayout:
    """Index ranges of the flat decision vector."""

    d: int
    ny: int = 0
    pairwise: bool = True

    @property
    def n_pairs(self) -> int:
        return self.d * (self.d - 1) // 2 if self.pairwise else 0

    @property
    def n_a(self) -> int:
        return self.ny * (self.ny + 1) // 2

    @property
    def tau(self) -> slice:
        return slice(0, 1)

    @property
    def lam(self) -> slice:
        return slice(1, 1 + self.d)

    @property
    def nu(self) -> slice:
        return slice(1 + self.d, 1 + 2 * self.d)

    @property
    def eta(self) -> slice:
        return slice(1 + 2 * self.d, 1 + 3 * self.d)

    @property
    def pair(self) -> slice:
        start = 1 + 3 * self.d
        return slice(start, start + self.n_pairs)

    @property
    def a(self) -> slice:
        start = self.pair.stop
        return slice(start, start + self.n_a)

    @property
    def b(self) -> slice:
        start = self.a.stop
        return slice(start, start + self.ny)

    @property
    def size(self) -> int:
        return self.b.stop

    def a_entries(self) -> tuple[np.ndarray, np.ndarray]:
        return np.triu_indices(self.ny)

    def pack(self, tau: float, mult: QcMultipliers, a=None, b=None) -> np.ndarray:
        v = np.zeros(self.size)
        v[self.tau] = tau
        v[self.lam] = mult.lam
        v[self.nu] = mult.nu
        v[self.eta] = mult.eta
        if self.pairwise:
            v[self.pair] = mult.lam_pair
        if self.ny:
            v[self.a] = np.asarray(a, dtype=float)[self.a_entries()]
            v[self.b] = b
        return v

    def unpack(self, v) -> tuple[float, QcMultipliers, np.ndarray | None, np.ndarray | None]:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise DimensionMismatch(f"decision vector has shape {v.shape}, layout expects ({self.size},)")
        pair = v[self.pair] if self.pairwise else None
        mult = QcMultipliers(v[self.lam], v[self.nu], v[self.eta], pair, self.pairwise)
        a = b = None
        if self.ny:
            a = np.zeros((self.ny, self.ny))
            iu = self.a_entries()
            a[iu] = v[self.a]
            a = a + np.triu(a, 1).T
            b = v[self.b].copy()
        return float(v[0]), mult, a, b

    def lower_bounds(self, bounds: MultiplierBounds) -> np.ndarray:
        lo = np.full(self.size, -np.inf)
        lo[self.tau] = 0.0
        lo[self.lam] = bounds.lam
        lo[self.nu] = bounds.nu
        lo[self.eta] = bounds.eta
        if self.pairwise:
            lo[self.pair] = bounds.pair
        return lo


@dataclass(frozen=True, eq=False)
class LmiProblem:
    """``M(x) = M0 + sum_i x_i C_i  <=  0`` with optional sign constraints.

    ``lower[i]`` is ``0.0`` for variables constrained to be nonnegative and
    ``-inf`` for free ones. For max-det problems ``logdet_index`` lists the
    variables whose combination ``sum_k x[logdet_index[k]] * logdet_basis[k]``
    is the matrix ``A`` whose log-determinant is maximized.
    """

    M0: np.ndarray
    coeffs: np.ndarray
    lower: np.ndarray
    logdet_index: np.ndarray
    logdet_basis: np.ndarray
    layout: DecisionLayout | None = None
    x0: np.ndarray | None = None
    scale_index: np.ndarray | None = None

    def __post_init__(self):
        m0 = np.asarray(self.M0, dtype=float)
        c = np.asarray(self.coeffs, dtype=float).reshape(-1, *m0.shape)
        if m0.ndim != 2 or m0.shape[0] != m0.shape[1]:
            raise DimensionMismatch("constant term must be square")
        if not np.array_equal(m0, m0.T) or not np.array_equal(c, np.swapaxes(c, 1, 2)):
            raise ValueError("LMI coefficient matrices must be exactly symmetric")
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        if lower.shape[0] != c.shape[0]:
            raise DimensionMismatch("lower bounds must have one entry per variable")
        if np.any((lower != 0.0) & np.isfinite(lower)):
            raise ValueError("lower bounds must be 0 or -inf")
        object.__setattr__(self, "M0", m0)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "logdet_index", np.asarray(self.logdet_index, dtype=int).reshape(-1))
        object.__setattr__(self, "logdet_basis", np.asarray(self.logdet_basis, dtype=float))

    @property
    def dim(self) -> int:
        return self.M0.shape[0]

    @property
    def n_vars(self) -> int:
        return self.coeffs.shape[0]

    @property
    def nonneg(self) -> np.ndarray:
        return self.lower == 0.0

    @property
    def is_maxdet(self) -> bool:
        return self.logdet_index.size > 0

    def matrix(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.M0 + np.tensordot(x, self.coeffs, axes=1)

    def a_matrix(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.tensordot(x[self.logdet_index], self.logdet_basis, axes=1)


# -- explicit stage matrices ---------------------------------------------------

def _sigma_inv(shape: np.ndarray) -> np.ndarray:
    return linalg.inv_pd(shape)


def build_M1(tau: float, mu, sigma, n1: int) -> np.ndarray:
    """Input-ellipsoid term: ``tau * (1 - (x - mu)^T sigma^{-1} (x - mu))`` as a matrix on ``(x, z, 1)``."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    nx = mu.shape[0]
    si = _sigma_inv(linalg.sym(sigma))
    p = np.zeros((nx + 1, nx + 1))
    p[:nx, :nx] = -si
    p[:nx, nx] = si @ mu
    p[nx, :nx] = si @ mu
    p[nx, nx] = 1.0 - mu @ si @ mu
    lift = np.zeros((nx + n1 + 1, nx + 1))
    lift[:nx, :nx] = np.eye(nx)
    lift[nx + n1, nx] = 1.0
    return linalg.sym(tau * (lift @ p @ lift.T))


def _inner_lift(w0, b0) -> np.ndarray:
    """Matrix mapping ``(x, z, 1)`` to ``(W0 x + b0, z, 1)``."""
    n1, nx = w0.shape
    lift = np.zeros((2 * n1 + 1, nx + n1 + 1))
    lift[:n1, :nx] = w0
    lift[:n1, -1] = b0
    lift[n1:2 * n1, nx:nx + n1] = np.eye(n1)
    lift[-1, -1] = 1.0
    return lift


def build_M2(q, w0, b0) -> np.ndarray:
    w0 = np.atleast_2d(np.asarray(w0, dtype=float))
    b0 = np.asarray(b0, dtype=float).reshape(-1)
    n1 = w0.shape[0]
    q = np.asarray(q, dtype=float)
    if q.shape != (2 * n1 + 1, 2 * n1 + 1) or b0.shape[0] != n1:
        raise DimensionMismatch(f"Q has shape {q.shape}, expected {(2 * n1 + 1,) * 2}")
    lift = _inner_lift(w0, b0)
    return linalg.sym(lift.T @ q @ lift)


def _outer_lift(w1, b1, nx: int) -> np.ndarray:
    """Matrix mapping ``(x, z, 1)`` to ``(W1 z + b1, 1)``."""
    ny, n1 = w1.shape
    lift = np.zeros((ny + 1, nx + n1 + 1))
    lift[:ny, nx:nx + n1] = w1
    lift[:ny, -1] = b1
    lift[ny, -1] = 1.0
    return lift


def build_M3(a, b, w1, b1, nx: int) -> np.ndarray:
    """Output term ``||A y + b||^2 - 1`` with ``y = W1 z + b1``; used for cross-checks only."""
    a = linalg.sym(a)
    b = np.asarray(b, dtype=float).reshape(-1)
    w1 = np.atleast_2d(np.asarray(w1, dtype=float))
    b1 = np.asarray(b1, dtype=float).reshape(-1)
    ny = a.shape[0]
    if w1.shape[0] != ny or b.shape[0] != ny or b1.shape[0] != ny:
        raise DimensionMismatch("A, b, W1, b1 dimensions disagree")
    s = np.zeros((ny + 1, ny + 1))
    s[:ny, :ny] = a @ a
    s[:ny, ny] = a @ b
    s[ny, :ny] = a @ b
    s[ny, ny] = b @ b - 1.0
    lift = _outer_lift(w1, b1, nx)
    return linalg.sym(lift.T @ s @ lift)


def schur_factor(a, b, w1, b1, nx: int) -> np.ndarray:
    """``F = [0; W1^T A; b1^T A + b^T]`` so that ``M3 = F F^T - e e^T``."""
    a = np.asarray(a, dtype=float)
    w1 = np.atleast_2d(np.asarray(w1, dtype=float))
    ny, n1 = w1.shape
    f = np.zeros((nx + n1 + 1, ny))
    f[nx:nx + n1] = w1.T @ a
    f[-1] = np.asarray(b1) @ a + np.asarray(b)
    return f


def lmi_matrix(m1, m2, f) -> np.ndarray:
    """Block matrix ``[[M1 + M2 - e e^T, F], [F^T, -I]]``."""
    n = m1.shape[0]
    ny = f.shape[1]
    out = np.zeros((n + ny, n + ny))
    out[:n, :n] = m1 + m2
    out[n - 1, n - 1] -= 1.0
    out[:n, n:] = f
    out[n:, :n] = f.T
    out[n:, n:] = -np.eye(ny)
    return linalg.sym(out)


# -- vectorized coefficient construction --------------------------------------

def _sym_outer(u, v):
    """``u v^T + v u^T`` for stacks of vectors (leading axis)."""
    o = np.einsum("ki,kj->kij", u, v)
    return o + np.swapaxes(o, 1, 2)


def _multiplier_coeffs(w0, b0, nx: int, pairwise: bool) -> np.ndarray:
    """Coefficient matrices (on ``(x, z, 1)``) of lam, nu, eta and lam_pair, in layout order."""
    n1 = w0.shape[0]
    n = nx + n1 + 1
    lv = np.zeros((n1, n))
    lv[:, :nx] = w0
    lv[:, -1] = b0
    lz = np.zeros((n1, n))
    lz[:, nx:nx + n1] = np.eye(n1)
    l1 = np.zeros((n1, n))
    l1[:, -1] = 1.0
    blocks = [
        _sym_outer(lv, lz) - 2.0 * np.einsum("ki,kj->kij", lz, lz),  # lam
        _sym_outer(lz - lv, l1),  # nu
        _sym_outer(lz, l1),  # eta
    ]
    if pairwise and n1 > 1:
        i, j = pair_indices(n1)
        dv = lv[i] - lv[j]
        dz = lz[i] - lz[j]
        blocks.append(_sym_outer(dv, dz) - 2.0 * np.einsum("ki,kj->kij", dz, dz))
    return np.concatenate(blocks, axis=0)


def _check_stage(w0, b0, w1, b1, e: Ellipsoid):
    w0 = np.atleast_2d(np.asarray(w0, dtype=float))
    b0 = np.asarray(b0, dtype=float).reshape(-1)
    n1, nx = w0.shape
    if b0.shape[0] != n1 or nx != e.dim:
        raise DimensionMismatch(f"inner map {w0.shape}/{b0.shape} incompatible with input dim {e.dim}")
    w1 = np.atleast_2d(np.asarray(w1, dtype=float))
    b1 = np.asarray(b1, dtype=float).reshape(-1)
    if w1.shape[1] != n1 or w1.shape[0] != b1.shape[0]:
        raise DimensionMismatch(f"outer map {w1.shape}/{b1.shape} incompatible with {n1} hidden units")
    return w0, b0, w1, b1


def _statuses(statuses, n1):
    statuses = list(statuses) if statuses is not None else [NeuronStatus.UNKNOWN] * n1
    if len(statuses) != n1:
        raise DimensionMismatch(f"{len(statuses)} statuses for {n1} neurons")
    return statuses


def _multiplier_hint(w0, e: Ellipsoid, layout: DecisionLayout, lower: np.ndarray,
                     small=1e-3, pair_small=1e-3) -> np.ndarray:
    """Multipliers making the ``(x, z)`` block of ``M1 + M2`` negative definite."""
    n1 = layout.d
    v = np.zeros(layout.size)
    v[layout.lam] = 1.0
    v[layout.nu] = small
    v[layout.eta] = small
    v[layout.pair] = pair_small
    t = np.eye(n1)
    if layout.pairwise and n1 > 1:
        i, j = pair_indices(n1)
        t[i, j] = t[j, i] = -pair_small
        t[np.diag_indices(n1)] += pair_small * (n1 - 1)
    low = linalg.cholesky(e.shape)
    k = low.T @ (0.5 * w0.T @ t @ w0) @ low
    v[0] = 2.0 * max(float(np.linalg.eigvalsh(linalg.sym(k))[-1]), 0.0) + 1e-3
    assert np.all(v >= lower)
    return v


def build_lmi(stage, input_e: Ellipsoid, statuses=None, pairwise: bool = True) -> LmiProblem:
    """Max-det LMI certifying ``W1 relu(W0 x + b0) + b1`` lies in ``E(-A^{-1} b, A^{-2})``."""
    w0, b0, w1, b1 = _check_stage(*stage, input_e)
    n1, nx = w0.shape
    ny = w1.shape[0]
    statuses = _statuses(statuses, n1)
    layout = DecisionLayout(n1, ny, pairwise)
    top = nx + n1 + 1
    n = top + ny

    m0 = np.zeros((n, n))
    m0[top - 1, top - 1] = -1.0
    m0[top:, top:] = -np.eye(ny)

    coeffs = np.zeros((layout.size, n, n))
    coeffs[0, :top, :top] = build_M1(1.0, input_e.center, input_e.shape, n1)
    mult = _multiplier_coeffs(w0, b0, nx, pairwise)
    coeffs[1:layout.pair.stop, :top, :top] = mult

    ia, ja = layout.a_entries()
    basis = np.zeros((ia.size, ny, ny))
    basis[np.arange(ia.size), ia, ja] = 1.0
    basis[np.arange(ia.size), ja, ia] = 1.0
    for k in range(ia.size):
        f = schur_factor(basis[k], np.zeros(ny), w1, b1, nx)
        idx = layout.a.start + k
        coeffs[idx, :top, top:] = f
        coeffs[idx, top:, :top] = f.T
    for k in range(ny):
        idx = layout.b.start + k
        coeffs[idx, top - 1, top + k] = 1.0
        coeffs[idx, top + k, top - 1] = 1.0

    lower = layout.lower_bounds(multiplier_bounds(statuses))
    x0 = _multiplier_hint(w0, input_e, layout, lower)
    # shrink (tau, Q) until the top-left block is negative definite
    top_const = m0[:top, :top]
    hom = np.tensordot(x0[:layout.pair.stop], coeffs[:layout.pair.stop, :top, :top], axes=1)
    s = 1.0
    for _ in range(80):
        if linalg.is_pd(-(top_const + s * hom)):
            break
        s *= 0.5
    x0[:layout.pair.stop] *= s
    y0 = w1 @ np.maximum(w0 @ input_e.center + b0, 0.0) + b1
    x0[layout.a] = np.eye(ny)[ia, ja]
    x0[layout.b] = -y0

    scale_index = np.arange(layout.a.start, layout.size)
    return LmiProblem(m0, coeffs, lower, np.arange(layout.a.start, layout.a.stop), basis,
                      layout, x0, scale_index)


def halfspace_output_block(a, c, w1, b1, nx: int) -> np.ndarray:
    """Lifting of ``[[0, a], [a^T, -2c]]``: quadratic form ``2 (a^T y - c)`` on ``(x, z, 1)``."""
    a = np.asarray(a, dtype=float).reshape(-1)
    w1 = np.atleast_2d(np.asarray(w1, dtype=float))
    ny = a.shape[0]
    s = np.zeros((ny + 1, ny + 1))
    s[:ny, ny] = a
    s[ny, :ny] = a
    s[ny, ny] = -2.0 * c
    lift = _outer_lift(w1, np.asarray(b1, dtype=float), nx)
    return linalg.sym(lift.T @ s @ lift)


def build_halfspace_lmi(stage, input_e: Ellipsoid, statuses, a, c: float,
                        pairwise: bool = True) -> LmiProblem:
    """Feasibility LMI certifying ``a^T (W1 relu(W0 x + b0) + b1) <= c`` on the input ellipsoid."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if not np.any(a != 0.0):
        raise ZeroNormal("half-space normal must be nonzero")
    w0, b0, w1, b1 = _check_stage(*stage, input_e)
    n1, nx = w0.shape
    if a.shape[0] != w1.shape[0]:
        raise DimensionMismatch(f"normal has length {a.shape[0]}, output dim is {w1.shape[0]}")
    statuses = _statuses(statuses, n1)
    layout = DecisionLayout(n1, 0, pairwise)
    n = nx + n1 + 1
    m0 = halfspace_output_block(a, c, w1, b1, nx)
    coeffs = np.zeros((layout.size, n, n))
    coeffs[0] = build_M1(1.0, input_e.center, input_e.shape, n1)
    coeffs[1:] = _multiplier_coeffs(w0, b0, nx, pairwise)
    lower = layout.lower_bounds(multiplier_bounds(statuses))
    return LmiProblem(m0, coeffs, lower, np.zeros(0, dtype=int), np.zeros((0, 0, 0)), layout)


def stage_forms(problem: LmiProblem, x, stage, input_e: Ellipsoid, points):
    """Scalar values of the input, activation and output terms at sampled ``(x, z, 1)`` points.

    Replays the three inequalities of the covering argument: the first two
    must be nonnegative on the input ellipsoid, the last nonpositive.
    """
    w0, b0, w1, b1 = _check_stage(*stage, input_e)
    tau, mult, a, b = problem.layout.unpack(x)
    n1, nx = w0.shape
    pts = np.atleast_2d(points)
    z = np.maximum(pts @ w0.T + b0, 0.0)
    v = np.hstack([pts, z, np.ones((pts.shape[0], 1))])
    m1 = build_M1(tau, input_e.center, input_e.shape, n1)
    m2 = build_M2(build_Q(mult), w0, b0)
    m3 = build_M3(a, b, w1, b1, nx)
    return tuple(np.einsum("ni,ij,nj->n", v, m, v) for m in (m1, m2, m3))

