"""Log-barrier interior-point method for small dense LMI problems.

Two problem shapes are supported:

* max-det: maximize ``log det A(x)`` subject to ``M(x) <= 0`` and sign
  constraints (``A(x)`` affine, see :class:`~probcert.sdp_assembly.LmiProblem`);
* feasibility: minimize ``s`` subject to ``M(x) <= s I`` and sign constraints.

Both are solved by the same path-following loop: for increasing ``t`` the
function ``t * f0(x) - log det(-M(x)) - sum log(x_i - lo_i)`` is minimized
by damped Newton steps, and the run stops once the barrier gap ``m / t``
is below the requested tolerance.

Two safeguards keep large instances tractable.  Free variables whose
coefficient matrices are linear combinations of other free ones are removed
before the solve, and Newton steps are scaled by the current dual estimate
(primal-dual centering), which needs far fewer steps per centering than the
pure primal barrier Hessian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse

from .ellipsoid import Ellipsoid
from .errors import SolverFailure
from .sdp_assembly import LmiProblem

log = logging.getLogger(__name__)


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverConfig:
    mu_growth: float = 10.0
    t0: float = 1.0
    newton_tol: float = 1e-8
    gap_tol: float = 1e-7
    alpha: float = 0.01
    beta: float = 0.5
    max_newton: int = 60
    max_outer: int = 40
    start_halvings: int = 60

    def __post_init__(self):
        for name in ("mu_growth", "t0", "newton_tol", "gap_tol", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.beta < 1.0):
            raise ValueError("beta (backtracking shrink) must lie in (0, 1)")
        if not (0.0 < self.alpha < 0.5):
            raise ValueError("alpha (slope fraction) must lie in (0, 0.5)")
        if self.mu_growth <= 1.0:
            raise ValueError("mu_growth must exceed 1")


@dataclass(eq=False)
class Solution:
    status: Status
    x: np.ndarray
    objective: float
    outer_iterations: int
    newton_steps: int
    max_eig: float
    min_sign: float
    history: list = field(default_factory=list)
    tau: float | None = None
    multipliers: object = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    phase1: bool = False
    gap: float = np.inf

    @property
    def ellipsoid(self) -> Ellipsoid:
        """Certified set ``E(-A^{-1} b, A^{-2})``."""
        return Ellipsoid.from_quadratic(self.A, self.b)


class Feasibility(NamedTuple):
    feasible: bool
    margin: float
    x: np.ndarray


# -- barrier machinery ---------------------------------------------------------

class _NotInDomain(Exception):
    pass


def _chol(s):
    try:
        low = scipy.linalg.cholesky(s, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise _NotInDomain from None
    if not np.all(np.isfinite(low)) or np.min(np.diag(low)) <= 0.0:
        raise _NotInDomain
    return low


def _tri_inv(low):
    return scipy.linalg.solve_triangular(low, np.eye(low.shape[0]), lower=True, check_finite=False)


def _packed(g):
    """Flatten stacked symmetric matrices so that dot products equal trace inner products."""
    n = g.shape[-1]
    iu = np.triu_indices(n)
    w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return g[:, iu[0], iu[1]] * w


def _factor_coeffs(coeffs, rtol=1e-13):
    """Write every ``C_k`` as ``sum_j sigma_j q_j q_j^T`` (its nonzero eigenpairs).

    Returns ``(Q, sigma, starts)`` with the terms of variable ``k`` stored
    contiguously from ``starts[k]``.  A zero matrix keeps one zero term so the
    grouping stays well defined.
    """
    n = coeffs.shape[-1]
    cols, sig, starts = [], [], []
    w_all, v_all = np.linalg.eigh(coeffs)
    count = 0
    for w, v in zip(w_all, v_all):
        keep = np.abs(w) > rtol * max(float(np.max(np.abs(w))), 1e-300)
        if not np.any(keep):
            w, v, keep = np.zeros(1), np.zeros((n, 1)), np.array([True])
        starts.append(count)
        cols.append(v[:, keep])
        sig.append(w[keep])
        count += int(np.sum(keep))
    return np.hstack(cols), np.concatenate(sig), np.array(starts)


class _Barrier:
    """``t * (c^T x - w log det A(x)) - log det(-M(x)) - sum log(x_i - lo_i)``.

    The coefficient matrices produced by the assembly are low rank (mostly
    rank two), so Hessian entries ``tr(S^-1 C_i S^-1 C_j)`` are formed from
    the eigen-factors of the ``C_i`` instead of the full matrices.
    """

    def __init__(self, m0, coeffs, lo, c, ld_index, ld_basis):
        self.m0 = m0
        self.q, self.sigma, self.starts = _factor_coeffs(coeffs)
        self.owner = np.repeat(np.arange(len(self.starts)),
                               np.diff(np.append(self.starts, self.q.shape[1])))
        # sums the term-level quantities (weighted by sigma) per variable
        self.gather = scipy.sparse.csr_matrix(
            (self.sigma, (self.owner, np.arange(self.q.shape[1]))),
            shape=(len(self.starts), self.q.shape[1]))
        self.lo = lo
        self.bounded = np.isfinite(lo)
        self.c = c
        self.ld_index = ld_index
        self.ld_basis = ld_basis
        self.degree = m0.shape[0] + int(np.sum(self.bounded))

    def _combine(self, x):
        return (self.q * (self.sigma * x[self.owner])) @ self.q.T

    def state(self, x):
        slack = x[self.bounded] - self.lo[self.bounded]
        if np.any(slack <= 0.0):
            raise _NotInDomain
        s = -(self.m0 + self._combine(x))
        r = _tri_inv(_chol(s))
        ra = None
        if self.ld_index.size:
            a = np.tensordot(x[self.ld_index], self.ld_basis, axes=1)
            ra = _tri_inv(_chol(a))
        return r, ra, slack

    def derivatives(self, x, t, st, dual=None):
        """Gradient of the barrier and its Newton matrix.

        With ``dual = (Lz, z)`` the matrix uses the dual estimates
        ``Z = Lz Lz^T`` for the LMI and ``z`` for the sign constraints in
        place of ``S^-1`` and ``1 / slack`` (the primal-dual scaling);
        without it this is the exact barrier Hessian.
        """
        r, ra, slack = st
        rq = r @ self.q
        k = rq.T @ rq
        grad = self.gather @ np.diag(k)
        if dual is None:
            k *= k
            bound_curv = 1.0 / slack**2
        else:
            zq = dual[0].T @ self.q
            k *= zq.T @ zq
            bound_curv = dual[1] / slack
        hess = self.gather @ np.asarray(self.gather @ k).T
        grad += t * self.c
        if ra is not None:
            ga = np.matmul(np.matmul(ra, self.ld_basis), ra.T)
            grad[self.ld_index] -= t * np.trace(ga, axis1=1, axis2=2)
            gap = _packed(ga)
            hess[np.ix_(self.ld_index, self.ld_index)] += t * (gap @ gap.T)
        idx = np.flatnonzero(self.bounded)
        grad[idx] -= 1.0 / slack
        hess[idx, idx] += bound_curv
        return grad, hess

    def primal_dual(self, st):
        """Dual estimates matching the current point: ``Z = S^-1``, ``z = 1 / slack``."""
        r, _, slack = st
        return np.linalg.cholesky(r.T @ r), 1.0 / slack

    def dual_step(self, dx, st, dual):
        """Newton update of the dual estimates for the centering equations ``Z S = I``, ``z u = 1``."""
        r, _, slack = st
        lz, z = dual
        s_inv = r.T @ r
        zmat = lz @ lz.T
        cross = zmat @ self._combine(dx) @ s_inv
        dz_mat = s_inv - zmat + 0.5 * (cross + cross.T)
        dz = 1.0 / slack - z - z / slack * dx[self.bounded]
        li = _tri_inv(lz)
        w = np.concatenate([np.linalg.eigvalsh(li @ dz_mat @ li.T), dz / z])
        neg = w[w < 0.0]
        alpha = 1.0 if neg.size == 0 else min(1.0, 0.95 * float(np.min(-1.0 / neg)))
        try:
            lz_new = _chol(zmat + alpha * dz_mat)
        except _NotInDomain:
            return dual
        log.debug("dual step %.3g", alpha)
        return lz_new, z + alpha * dz

    def step_profile(self, x, dx, st):
        """Eigenvalue data giving the exact barrier change along ``x + s dx``."""
        r, ra, slack = st
        ds = -self._combine(dx)
        w_s = np.linalg.eigvalsh(r @ ds @ r.T)
        w_a = np.zeros(0)
        if ra is not None:
            da = np.tensordot(dx[self.ld_index], self.ld_basis, axes=1)
            w_a = np.linalg.eigvalsh(ra @ da @ ra.T)
        w_l = dx[self.bounded] / slack
        return w_s, w_a, w_l

    def delta(self, s, t, dx, prof):
        w_s, w_a, w_l = prof
        val = t * s * float(self.c @ dx)
        if w_a.size:
            val -= t * np.sum(np.log1p(s * w_a))
        return val - np.sum(np.log1p(s * w_s)) - np.sum(np.log1p(s * w_l))

    def slope(self, s, t, dx, prof):
        """Derivative of :meth:`delta` with respect to ``s``."""
        w_s, w_a, w_l = prof
        val = t * float(self.c @ dx)
        if w_a.size:
            val -= t * np.sum(w_a / (1.0 + s * w_a))
        return val - np.sum(w_s / (1.0 + s * w_s)) - np.sum(w_l / (1.0 + s * w_l))

    def line_minimum(self, t, dx, prof, cap=1e3):
        """Minimizer of the (convex) barrier along ``dx`` within the domain."""
        hi = min(cap, 0.99 * self.max_step(prof))
        if self.slope(hi, t, dx, prof) <= 0.0:
            return hi
        lo = 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.slope(mid, t, dx, prof) > 0.0:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-3 * hi:
                break
        return max(lo, 1e-16)

    @staticmethod
    def max_step(prof):
        neg = np.concatenate([w[w < 0.0] for w in prof])
        return np.inf if neg.size == 0 else float(np.min(-1.0 / neg))

    def f0(self, x):
        val = float(self.c @ x)
        if self.ld_index.size:
            a = np.tensordot(x[self.ld_index], self.ld_basis, axes=1)
            val -= 2.0 * float(np.sum(np.log(np.diag(_chol(a)))))
        return val


_EIG_CUTOFF = 1e-12
_STALL_DECREMENT = 0.5
_STALL_STEPS = 4


def _newton_direction(grad, hess):
    d = np.sqrt(np.maximum(np.diag(hess), 1e-300))
    hs = hess / np.outer(d, d)
    gs = grad / d
    for reg in (0.0, 1e-10):
        try:
            cf = scipy.linalg.cho_factor(hs + reg * np.eye(hs.shape[0]), lower=True, check_finite=False)
            dx = -scipy.linalg.cho_solve(cf, gs, check_finite=False) / d
            break
        except np.linalg.LinAlgError:
            continue
    else:
        # curvature lost to rounding along near-null directions: step only where it is resolved
        w, v = np.linalg.eigh(hs)
        if not w[-1] > 0.0:
            raise SolverFailure("barrier Hessian is not positive definite", status=Status.NUMERICAL_FAILURE)
        keep = w > _EIG_CUTOFF * w[-1]
        dx = -(v[:, keep] @ ((v[:, keep].T @ gs) / w[keep])) / d
    if not np.all(np.isfinite(dx)):
        raise SolverFailure("non-finite Newton direction", status=Status.NUMERICAL_FAILURE)
    return dx



class _Run(NamedTuple):
    status: Status
    x: np.ndarray
    outer: int
    newton: int
    history: list
    t: float
    gap: float


def _gap_bound(degree: float, t: float, dec: float) -> float:
    """Duality gap bound at a point with squared Newton decrement ``dec`` on the path at ``t``."""
    return (degree + np.sqrt(degree * max(dec, 0.0))) / t


def _path_follow(bar: _Barrier, x, config: SolverConfig, stop=None) -> _Run:
    """Barrier path following from a strictly feasible ``x``.

    ``stop(x, t, centered)`` may end the run early by returning ``True``.
    """
    t = config.t0
    newton = 0
    history = []
    anchor = None
    st = bar.state(x)
    dual = bar.primal_dual(st)
    for outer in range(1, config.max_outer + 1):
        centered = False
        exact = False
        best, stalled = np.inf, 0
        dec = 0.0
        for _ in range(config.max_newton):
            grad, hess = bar.derivatives(x, t, st, None if exact else dual)
            dx = _newton_direction(grad, hess)
            dec = float(-grad @ dx)
            if dec < 0.5 * best:
                best, stalled = dec, 0
            else:
                stalled += 1
            # at large t rounding keeps the decrement from reaching newton_tol;
            # a moderate decrement that stopped shrinking is accepted and charged to the gap bound
            if dec / 2.0 <= config.newton_tol or (dec / 2.0 <= _STALL_DECREMENT and stalled >= _STALL_STEPS):
                if exact:
                    centered = True
                    break
                # confirm with the exact barrier Hessian before declaring the point centered
                exact = True
                continue
            exact = False
            prof = bar.step_profile(x, dx, st)
            s = bar.line_minimum(t, dx, prof)
            slope = -dec
            while s > 1e-16 and bar.delta(s, t, dx, prof) > config.alpha * s * slope:
                s *= config.beta
            if s <= 1e-16:
                # no representable decrease; the point is as centered as float allows
                centered = dec / 2.0 <= _STALL_DECREMENT
                break
            log.debug("t=%.3g decrement=%.4g step=%.3g", t, dec, s)
            dual_next = bar.dual_step(dx, st, dual)
            st_new = None
            while s > 1e-16:
                try:
                    x_new = x + s * dx
                    st_new = bar.state(x_new)
                    break
                except _NotInDomain:
                    s *= config.beta
            if st_new is None:
                if anchor is None:
                    raise SolverFailure("line search left the domain", status=Status.NUMERICAL_FAILURE)
                break
            st = st_new
            x = x_new
            dual = dual_next
            newton += 1
            if stop is not None and stop(x, t, False):
                return _Run(Status.OPTIMAL, x, outer, newton, history, t, np.inf)
        if centered:
            history.append(bar.f0(x))
            gap = _gap_bound(bar.degree, t, dec)
            anchor = (x, gap)
            if stop is not None and stop(x, t, True):
                return _Run(Status.OPTIMAL, x, outer, newton, history, t, gap)
            if gap <= config.gap_tol:
                return _Run(Status.OPTIMAL, x, outer, newton, history, t, gap)
            t *= config.mu_growth
        elif anchor is not None and anchor[1] <= np.sqrt(config.gap_tol):
            # centering broke down at the precision floor after a small certified gap;
            # fall back to the last centered point at reduced accuracy
            log.debug("centering failed at t=%.3g; keeping gap %.3g", t, anchor[1])
            return _Run(Status.OPTIMAL, anchor[0], outer, newton, history, t / config.mu_growth, anchor[1])
    return _Run(Status.MAX_ITERATIONS, x, config.max_outer, newton, history, t, np.inf)


# -- public entry points ---------------------------------------------------------

def _reduce(problem: LmiProblem, rtol: float = 1e-10):
    """Drop free variables whose coefficients are combinations of other free ones.

    Such directions leave ``M(x)`` and ``A(x)`` unchanged, so they only make
    the barrier Hessian singular.  Returns the reduced problem and the kept
    variable indices (dropped variables are zero in the lifted solution).
    """
    n = problem.n_vars
    free = np.flatnonzero(~problem.nonneg)
    if free.size == 0:
        return problem, np.arange(n)
    iu = np.triu_indices(problem.dim)
    cols = [problem.coeffs[:, iu[0], iu[1]]]
    if problem.is_maxdet:
        ja = np.triu_indices(problem.logdet_basis.shape[1])
        a_part = np.zeros((n, ja[0].size))
        a_part[problem.logdet_index] = problem.logdet_basis[:, ja[0], ja[1]]
        cols.append(a_part)
    vecs = np.hstack(cols)[free].T
    _, r, piv = scipy.linalg.qr(vecs, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > rtol * max(diag[0], 1e-300))) if diag.size else 0
    if rank == free.size:
        return problem, np.arange(n)
    kept_free, dropped = free[np.sort(piv[:rank])], free[piv[rank:]]
    keep = np.sort(np.concatenate([np.flatnonzero(problem.nonneg), kept_free]))
    pos = np.full(n, -1)
    pos[keep] = np.arange(keep.size)

    x0 = None
    if problem.x0 is not None:
        # move the dropped variables' share of the start point onto the kept ones
        full = np.asarray(problem.x0, dtype=float)
        col = {k: vecs[:, i] for i, k in enumerate(free)}
        basis = np.column_stack([col[k] for k in kept_free])
        rhs = np.column_stack([col[k] for k in dropped]) @ full[dropped]
        x0 = full[keep].copy()
        x0[pos[kept_free]] += np.linalg.lstsq(basis, rhs, rcond=None)[0]
    ld_mask = pos[problem.logdet_index] >= 0
    scale = None
    if problem.scale_index is not None:
        scale = pos[problem.scale_index]
        scale = scale[scale >= 0]
    reduced = LmiProblem(problem.M0, problem.coeffs[keep], problem.lower[keep],
                         pos[problem.logdet_index[ld_mask]], problem.logdet_basis[ld_mask],
                         None, x0, scale)
    log.debug("dropped %d redundant free variables", dropped.size)
    return reduced, keep


def _lift(x, keep, n):
    full = np.zeros(n)
    full[keep] = x
    return full


def _default_start(problem: LmiProblem) -> np.ndarray:
    x = np.zeros(problem.n_vars) if problem.x0 is None else np.array(problem.x0, dtype=float)
    bump = problem.nonneg & (x <= 0.0)
    x[bump] = 1e-3
    return x


def _phase1_floor(m0) -> float:
    return 1e3 * (1.0 + float(np.max(np.abs(m0))) if m0.size else 1.0)


def _feasibility_barrier(m0, coeffs, lower):
    """Barrier for ``min s  s.t.  M(x) - s I <= 0`` over ``(x, s)``."""
    n = m0.shape[0]
    m = coeffs.shape[0]
    c_aug = np.concatenate([coeffs, -np.eye(n)[None]], axis=0)
    lo = np.concatenate([lower, [-_phase1_floor(m0)]])
    c = np.zeros(m + 1)
    c[-1] = 1.0
    return _Barrier(m0, c_aug, lo, c, np.zeros(0, dtype=int), np.zeros((0, n, n)))


def _start_margin(m0, coeffs, x):
    return float(np.linalg.eigvalsh(m0 + np.tensordot(x, coeffs, axes=1))[-1])


def _strictly_feasible(problem: LmiProblem, x) -> bool:
    if np.any(x[problem.nonneg] <= 0.0):
        return False
    try:
        _chol(-problem.matrix(x))
        _chol(problem.a_matrix(x))
    except _NotInDomain:
        return False
    return True


def _phase1(problem: LmiProblem, config: SolverConfig):
    """Find a strictly feasible point for a max-det problem (``M(x) < 0``, ``A(x) > 0``)."""
    n = problem.dim
    k = problem.n_vars
    ny = problem.logdet_basis.shape[1]
    # augmented block diag(M(x), -A(x))
    m0 = np.zeros((n + ny, n + ny))
    m0[:n, :n] = problem.M0
    coeffs = np.zeros((k, n + ny, n + ny))
    coeffs[:, :n, :n] = problem.coeffs
    coeffs[problem.logdet_index, n:, n:] = -problem.logdet_basis
    x = _default_start(problem)
    s0 = _start_margin(m0, coeffs, x) + 1.0
    bar = _feasibility_barrier(m0, coeffs, problem.lower)
    xs = np.concatenate([x, [s0]])

    def stop(z, t, centered):
        if z[-1] < 0.0:
            return True
        return centered and z[-1] - bar.degree / t >= 0.0

    run = _path_follow(bar, xs, config, stop)
    return run.x[:-1], run.x[-1] < 0.0, run


def solve_maxdet(problem: LmiProblem, config: SolverConfig | None = None) -> Solution:
    """Maximize ``log det A(x)`` subject to ``M(x) <= 0`` and the sign constraints."""
    config = config or SolverConfig()
    if not problem.is_maxdet:
        raise ValueError("problem has no log-det objective")
    reduced, keep = _reduce(problem)

    def done(status, x, outer, newton, history, phase1, **kw):
        return _solution(problem, status, _lift(x, keep, problem.n_vars), outer, newton,
                         history, phase1, **kw)

    x = _default_start(reduced)
    phase1 = False
    if reduced.scale_index is not None and reduced.scale_index.size:
        for _ in range(config.start_halvings):
            if _strictly_feasible(reduced, x):
                break
            x[reduced.scale_index] *= 0.5
    if not _strictly_feasible(reduced, x):
        phase1 = True
        x, ok, p1 = _phase1(reduced, config)
        if not ok:
            return done(Status.INFEASIBLE, x, p1.outer, p1.newton, [], phase1, feasible=False)
    bar = _Barrier(reduced.M0, reduced.coeffs, reduced.lower, np.zeros(reduced.n_vars),
                   reduced.logdet_index, reduced.logdet_basis)
    try:
        run = _path_follow(bar, x, config)
    except SolverFailure as exc:
        log.warning("max-det solve failed: %s", exc)
        return done(Status.NUMERICAL_FAILURE, x, 0, 0, [], phase1)
    return done(run.status, run.x, run.outer, run.newton, run.history, phase1, gap=run.gap)


def _solution(problem, status, x, outer, newton, history, phase1, feasible=True,
              gap=np.inf) -> Solution:
    mx = _start_margin(problem.M0, problem.coeffs, x)
    nonneg = problem.nonneg
    min_sign = float(np.min(x[nonneg])) if np.any(nonneg) else np.inf
    objective = np.nan
    tau = mult = a = b = None
    if feasible and problem.is_maxdet:
        a_mat = problem.a_matrix(x)
        try:
            objective = -2.0 * float(np.sum(np.log(np.diag(_chol(a_mat)))))
        except _NotInDomain:
            status = Status.NUMERICAL_FAILURE
    if problem.layout is not None:
        tau, mult, a, b = problem.layout.unpack(x)
    if status is Status.OPTIMAL:
        tol = 1e-7 * (1.0 + float(np.max(np.abs(problem.M0))))
        if mx > tol or min_sign < -tol:
            status = Status.NUMERICAL_FAILURE
    return Solution(status, x, objective, outer, newton, mx, min_sign, list(history),
                    tau, mult, a, b, phase1, gap)


def solve_feasibility(problem: LmiProblem, config: SolverConfig | None = None,
                      decide: bool = False) -> Feasibility:
    """Minimize ``s`` subject to ``M(x) <= s I``; feasible iff the optimum is below ``-1e-9``.

    With ``decide=True`` the run stops as soon as the sign of the optimum is
    known (a strictly negative iterate, or a centered lower bound above the
    threshold); the reported margin is then the current iterate's ``s``.
    """
    config = config or SolverConfig()
    full_n = problem.n_vars
    problem, keep = _reduce(problem)
    x = _default_start(problem)
    s0 = _start_margin(problem.M0, problem.coeffs, x) + 1.0
    bar = _feasibility_barrier(problem.M0, problem.coeffs, problem.lower)
    thresh = -1e-9

    stop = None
    if decide:
        def stop(z, t, centered):
            if z[-1] < thresh:
                return True
            return centered and z[-1] - bar.degree / t >= thresh

    run = _path_follow(bar, np.concatenate([x, [s0]]), config, stop)
    if run.status is not Status.OPTIMAL:
        raise SolverFailure(f"feasibility solve ended with {run.status.value}", status=run.status)
    margin = float(run.x[-1])
    return Feasibility(margin < thresh, margin, _lift(run.x[:-1], keep, full_n))
