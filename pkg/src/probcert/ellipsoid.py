"""Ellipsoids, chi-squared quantiles, and confidence-region construction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import linalg
from .errors import (
    DegenerateImage,
    DimensionMismatch,
    InvalidCount,
    InvalidProbability,
    NotPositiveDefinite,
)

MEMBERSHIP_TOL = 1e-9


class Model(str, Enum):
    GAUSSIAN = "gaussian"
    MOMENTS = "moments"


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """The set ``{x : (x - center)^T shape^{-1} (x - center) <= 1}``."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(-1)
        s = linalg.sym(self.shape)
        if s.shape[0] != c.shape[0]:
            raise DimensionMismatch(
                f"center has length {c.shape[0]}, shape is {s.shape[0]}x{s.shape[0]}"
            )
        linalg.cholesky(s)
        c.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", s)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def logdet(self) -> float:
        return linalg.logdet_pd(self.shape)

    @classmethod
    def from_quadratic(cls, a, b) -> "Ellipsoid":
        """Ellipsoid ``{y : ||A y + b|| <= 1}``, i.e. center ``-A^{-1} b``, shape ``A^{-2}``."""
        a = linalg.sym(a)
        b = np.asarray(b, dtype=float)
        ainv = linalg.inv_pd(a)
        return cls(-ainv @ b, linalg.sym(ainv @ ainv))

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "shape": self.shape.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Ellipsoid":
        return cls(np.asarray(d["center"], dtype=float), np.asarray(d["shape"], dtype=float))


# -- chi-squared distribution -------------------------------------------------

def _gammainc_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gammaincc_cf(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function ``P(a, x)``."""
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _gammainc_series(a, x))
    return max(0.0, 1.0 - _gammaincc_cf(a, x))


def chi2_cdf(x: float, dof: int) -> float:
    return gammainc_lower(0.5 * dof, 0.5 * x)


def chi2_quantile(dof: int, p: float) -> float:
    """Quantile of the chi-squared distribution, by bisection on the CDF."""
    if dof < 1 or int(dof) != dof:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if not (0.0 <= p < 1.0):
        raise InvalidProbability(f"p must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_cdf(hi, dof) < p:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return 0.5 * (lo + hi)


# -- constructions ------------------------------------------------------------

def confidence_scale(n: int, p: float, model: Model | str) -> float:
    """Radius-squared multiplier applied to the covariance for a ``p``-level region."""
    if not (0.0 <= p < 1.0):
        raise InvalidProbability(f"p must lie in [0, 1), got {p}")
    model = Model(model)
    if model is Model.GAUSSIAN:
        return chi2_quantile(n, p)
    return n / (1.0 - p)


def confidence_ellipsoid(mu, sigma, p: float, model: Model | str = Model.GAUSSIAN) -> Ellipsoid:
    """``p``-level confidence ellipsoid of a random vector with mean ``mu``, covariance ``sigma``.

    Gaussian inputs use the chi-squared quantile; ``MOMENTS`` uses the
    Chebyshev radius ``n / (1 - p)`` which only needs the first two moments.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    sigma = linalg.sym(sigma)
    linalg.cholesky(sigma)
    return Ellipsoid(mu, confidence_scale(mu.shape[0], p, model) * sigma)


def affine_image(e: Ellipsoid, w, b) -> Ellipsoid:
    w = np.atleast_2d(np.asarray(w, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if w.shape[1] != e.dim or w.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"map {w.shape} / bias {b.shape} incompatible with dim {e.dim}")
    shape = linalg.sym(w @ e.shape @ w.T)
    try:
        return Ellipsoid(w @ e.center + b, shape)
    except NotPositiveDefinite as exc:
        raise DegenerateImage(f"image shape is not positive definite: {exc}") from None


def quadratic_form(e: Ellipsoid, x) -> np.ndarray:
    """``(x - c)^T P^{-1} (x - c)`` for one point or a stack of points (rows)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != e.dim:
        raise DimensionMismatch(f"point dimension {x.shape[-1]} != ellipsoid dimension {e.dim}")
    low = linalg.cholesky(e.shape)
    d = np.atleast_2d(x - e.center)
    z = np.linalg.solve(low, d.T)
    q = np.sum(z * z, axis=0)
    return q[0] if x.ndim == 1 else q


def contains(e: Ellipsoid, x) -> bool | np.ndarray:
    """Membership with ``1e-9`` slack on the quadratic form; vectorized over rows."""
    q = quadratic_form(e, x)
    return (q <= 1.0 + MEMBERSHIP_TOL) if np.ndim(q) else bool(q <= 1.0 + MEMBERSHIP_TOL)


def support(e: Ellipsoid, direction) -> float:
    """``max_{x in e} direction^T x``."""
    a = np.asarray(direction, dtype=float)
    return float(a @ e.center + math.sqrt(max(a @ e.shape @ a, 0.0)))


# -- sampling -----------------------------------------------------------------

def _box_muller(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    total = count * dim
    pairs = (total + 1) // 2
    u1 = 1.0 - rng.random(pairs)  # in (0, 1]
    u2 = rng.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[:total].reshape(count, dim)


def sample_gaussian(mu, sigma, count: int, seed: int) -> np.ndarray:
    if count < 1:
        raise InvalidCount(f"sample count must be >= 1, got {count}")
    mu = np.asarray(mu, dtype=float).reshape(-1)
    low = linalg.cholesky(linalg.sym(sigma))
    z = _box_muller(np.random.default_rng(seed), count, mu.shape[0])
    return mu + z @ low.T


def sample_uniform(e: Ellipsoid, count: int, seed: int) -> np.ndarray:
    """Uniform samples from the interior of ``e``."""
    if count < 1:
        raise InvalidCount(f"sample count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    n = e.dim
    z = _box_muller(rng, count, n)
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = rng.random(count) ** (1.0 / n)
    low = linalg.cholesky(e.shape)
    return e.center + (r[:, None] * z) @ low.T


def sample(source, count: int, seed: int, mode: str = "gaussian") -> np.ndarray:
    """Draw ``count`` points.

    ``mode="gaussian"`` treats ``source`` as ``(mu, sigma)`` (or an
    :class:`Ellipsoid`, using its center and shape as moments);
    ``mode="uniform"`` draws uniformly inside the ellipsoid ``source``.
    """
    if mode == "uniform":
        return sample_uniform(source, count, seed)
    if mode == "gaussian":
        if isinstance(source, Ellipsoid):
            return sample_gaussian(source.center, source.shape, count, seed)
        mu, sigma = source
        return sample_gaussian(mu, sigma, count, seed)
    raise ValueError(f"unknown sampling mode {mode!r}")
