"""Dense symmetric-matrix primitives.

Matrices are plain ``numpy`` arrays. :func:`sym` is the single entry point
that turns user data into an exactly symmetric float array; everything else
assumes its input already went through it (or was built symmetric).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonConvergence, NotPositiveDefinite

PIVOT_RTOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def sym(a) -> np.ndarray:
    """Return ``(a + a.T) / 2`` as a float array; rejects non-square input."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    out = 0.5 * (a + a.T)
    return out


def _scale(s: np.ndarray) -> float:
    m = float(np.max(np.abs(s))) if s.size else 0.0
    return m if m > 0.0 else 1.0


def cholesky(s) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == s``.

    Raises :class:`NotPositiveDefinite` when a squared pivot falls below
    ``1e-12`` times the largest diagonal entry.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    dmax = float(np.max(np.diag(s))) if s.size else 0.0
    if dmax <= 0.0:
        raise NotPositiveDefinite("largest diagonal entry is not positive")
    try:
        low = np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    piv = np.diag(low) ** 2
    if np.min(piv) <= PIVOT_RTOL * dmax:
        raise NotPositiveDefinite(
            f"pivot {np.min(piv):.3e} below tolerance {PIVOT_RTOL * dmax:.3e}"
        )
    return low


def is_pd(s) -> bool:
    try:
        cholesky(s)
    except NotPositiveDefinite:
        return False
    return True


def eig_sym(s, max_sweeps: int = JACOBI_MAX_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition by cyclic Jacobi rotations.

    Returns ``(w, V)`` with ``w`` ascending and ``s @ V == V @ diag(w)``.
    """
    a = sym(s).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a[0].copy(), v
    scale = _scale(a)
    a /= scale
    tol = np.finfo(float).eps * np.sqrt(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * max(np.linalg.norm(a), 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    else:
        raise NonConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a) * scale
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def max_eigval(s) -> float:
    return float(eig_sym(s)[0][-1])


def logdet_pd(s) -> float:
    """``log det s`` for positive definite ``s`` (via Cholesky)."""
    low = cholesky(s)
    return float(2.0 * np.sum(np.log(np.diag(low))))


def solve_pd(s, rhs) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    low = cholesky(s)
    if rhs.shape[0] != low.shape[0]:
        raise DimensionMismatch(f"rhs has length {rhs.shape[0]}, matrix is {low.shape[0]}")
    return scipy.linalg.cho_solve((low, True), rhs)


def inv_pd(s) -> np.ndarray:
    n = np.asarray(s).shape[0]
    return sym(solve_pd(s, np.eye(n)))
