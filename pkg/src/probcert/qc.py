"""Quadratic-constraint abstraction of the ReLU activation.

For ``y = max(0, x)`` with ``x in R^d`` the valid constraints are

* ``y_i^2 = x_i y_i``            (multiplier ``lam_i``, any sign)
* ``y_i >= x_i``                 (``nu_i >= 0``)
* ``y_i >= 0``                   (``eta_i >= 0``)
* ``(y_j - y_i)^2 <= (y_j - y_i)(x_j - x_i)``   (``lam_ij >= 0``, ``i < j``)

and their weighted sum is the quadratic form of the matrix built by
:func:`build_Q`. Neurons whose sign is fixed over the input region let some
of the inequality multipliers drop their sign constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import linalg
from .errors import DimensionMismatch


class NeuronStatus(str, Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"
    UNKNOWN = "unknown"


def classify_neurons(lower, upper) -> list[NeuronStatus]:
    out = []
    for lo, up in zip(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)):
        if lo >= 0.0:
            out.append(NeuronStatus.ACTIVE)
        elif up <= 0.0:
            out.append(NeuronStatus.INACTIVE)
        else:
            out.append(NeuronStatus.UNKNOWN)
    return out


def pair_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the pairs ``i < j`` in the order used for ``lam_pair``."""
    return np.triu_indices(d, k=1)


class MultiplierBounds(NamedTuple):
    """Lower bound per multiplier: ``0.0`` or ``-inf`` (free)."""

    lam: np.ndarray
    nu: np.ndarray
    eta: np.ndarray
    pair: np.ndarray


def multiplier_bounds(statuses) -> MultiplierBounds:
    st = list(statuses)
    d = len(st)
    active = np.array([s is NeuronStatus.ACTIVE for s in st])
    inactive = np.array([s is NeuronStatus.INACTIVE for s in st])
    free = -np.inf
    lam = np.full(d, free)
    nu = np.where(active, free, 0.0)
    eta = np.where(inactive, free, 0.0)
    i, j = pair_indices(d)
    same = (active[i] & active[j]) | (inactive[i] & inactive[j])
    pair = np.where(same, free, 0.0)
    return MultiplierBounds(lam, nu, eta, pair)


@dataclass(frozen=True, eq=False)
class QcMultipliers:
    lam: np.ndarray
    nu: np.ndarray
    eta: np.ndarray
    lam_pair: np.ndarray = field(default=None)
    pairwise_enabled: bool = True

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        d = lam.shape[0]
        nu = np.asarray(self.nu, dtype=float).reshape(-1)
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        npairs = d * (d - 1) // 2
        if self.lam_pair is None:
            pair = np.zeros(npairs)
        else:
            pair = np.asarray(self.lam_pair, dtype=float).reshape(-1)
        if nu.shape[0] != d or eta.shape[0] != d or pair.shape[0] != npairs:
            raise DimensionMismatch(
                f"multiplier lengths lam={d}, nu={nu.shape[0]}, eta={eta.shape[0]}, "
                f"pairs={pair.shape[0]} (expected {npairs})"
            )
        if not self.pairwise_enabled and np.any(pair != 0.0):
            raise ValueError("lam_pair must be zero when pairwise multipliers are disabled")
        for name, arr in (("lam", lam), ("nu", nu), ("eta", eta), ("lam_pair", pair)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def d(self) -> int:
        return self.lam.shape[0]

    def respects(self, bounds: MultiplierBounds, tol: float = 0.0) -> bool:
        return all(
            np.all(v >= lb - tol)
            for v, lb in ((self.lam, bounds.lam), (self.nu, bounds.nu),
                          (self.eta, bounds.eta), (self.lam_pair, bounds.pair))
        )


def build_T(lam, lam_pair) -> np.ndarray:
    """``sum_i lam_i e_i e_i^T + sum_{i<j} lam_ij (e_i - e_j)(e_i - e_j)^T``."""
    lam = np.asarray(lam, dtype=float).reshape(-1)
    d = lam.shape[0]
    lam_pair = np.asarray(lam_pair, dtype=float).reshape(-1)
    if lam_pair.shape[0] != d * (d - 1) // 2:
        raise DimensionMismatch(f"expected {d * (d - 1) // 2} pair multipliers, got {lam_pair.shape[0]}")
    t = np.zeros((d, d))
    i, j = pair_indices(d)
    t[i, j] = -lam_pair
    t[j, i] = -lam_pair
    t[np.diag_indices(d)] = lam - t.sum(axis=1)
    return t


def build_Q(m: QcMultipliers) -> np.ndarray:
    """The ``(2d+1)``-square matrix ``[[0, T, -nu], [T, -2T, nu+eta], [-nu^T, nu^T+eta^T, 0]]``."""
    d = m.d
    t = build_T(m.lam, m.lam_pair)
    q = np.zeros((2 * d + 1, 2 * d + 1))
    x, y, one = slice(0, d), slice(d, 2 * d), 2 * d
    q[x, y] = t
    q[y, x] = t
    q[y, y] = -2.0 * t
    q[x, one] = -m.nu
    q[one, x] = -m.nu
    q[y, one] = m.nu + m.eta
    q[one, y] = m.nu + m.eta
    return linalg.sym(q)


def qc_form(q: np.ndarray, x, y) -> np.ndarray:
    """``[x; y; 1]^T Q [x; y; 1]``, vectorized over rows of ``x`` and ``y``."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    v = np.hstack([x, y, np.ones((x.shape[0], 1))])
    return np.einsum("ni,ij,nj->n", v, q, v)
