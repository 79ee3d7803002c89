"""Confidence propagation and probabilistic safety verification.

``propagate_confidence`` pushes a p-level input ellipsoid through a ReLU
network one certified stage at a time.  Every hidden layer except the last
is covered on its own (outer map ``(I, 0)``); the last hidden layer is solved
together with the final affine layer.  ``verify_halfspace`` bisects on the
confidence level to find the largest ``p`` whose ellipsoid provably maps
into a half-space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import linalg
from .ellipsoid import Ellipsoid, Model, confidence_ellipsoid, contains, sample, support
from .errors import (
    DegenerateInput,
    InvalidCount,
    NotPositiveDefinite,
    SolverFailure,
    ZeroNormal,
)
from .ip_solver import SolverConfig, Status, solve_feasibility, solve_maxdet
from .network import Network, forward, preactivation_bounds
from .qc import NeuronStatus, classify_neurons
from .sdp_assembly import build_halfspace_lmi, build_lmi

log = logging.getLogger(__name__)


class CertificateKind(str, Enum):
    PROPAGATION = "propagation"
    SAFETY = "safety"


@dataclass(frozen=True)
class VerifyOptions:
    pairwise: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)
    p_max: float = 1.0 - 1e-6
    bisection_iters: int = 40
    bisection_tol: float = 1e-4


@dataclass(frozen=True)
class StageReport:
    """Solver diagnostics for one certified stage."""

    status: Status
    outer_iterations: int
    newton_steps: int
    objective: float
    max_eig: float
    phase1: bool
    neuron_counts: dict

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "outer_iterations": self.outer_iterations,
            "newton_steps": self.newton_steps,
            "objective": self.objective,
            "max_eig": self.max_eig,
            "phase1": self.phase1,
            "neurons": dict(self.neuron_counts),
        }


@dataclass(frozen=True)
class Certificate:
    kind: CertificateKind
    input_ellipsoid: Ellipsoid | None
    stages: tuple[Ellipsoid, ...] = ()
    output: Ellipsoid | None = None
    p_star: float | None = None
    diagnostics: tuple[StageReport, ...] = ()
    multipliers: tuple = ()
    row_p_star: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind is CertificateKind.SAFETY:
            if self.p_star is None or not (0.0 <= self.p_star < 1.0):
                raise ValueError("a safety certificate needs 0 <= p* < 1")
        elif self.output is None:
            raise ValueError("a propagation certificate needs an output ellipsoid")


def _neuron_counts(statuses) -> dict:
    return {s.value: sum(1 for v in statuses if v is s) for s in NeuronStatus}


def _input_ellipsoid(mu, sigma, p, model) -> Ellipsoid:
    try:
        return confidence_ellipsoid(mu, sigma, p, model)
    except NotPositiveDefinite as exc:
        raise DegenerateInput(f"input covariance is not positive definite: {exc}") from None


def _stages(net: Network):
    """Yield ``(W0, b0, W1, b1)`` per stage; all but the last use the identity outer map."""
    layers = net.layers
    for k in range(len(layers) - 2):
        n = layers[k].n_out
        yield layers[k].W, layers[k].b, np.eye(n), np.zeros(n)
    inner, outer = layers[-2], layers[-1]
    yield inner.W, inner.b, outer.W, outer.b


def propagate_ellipsoid(net: Network, e_in: Ellipsoid,
                        options: VerifyOptions | None = None) -> Certificate:
    """Certified output ellipsoid of ``net`` over the input set ``e_in``."""
    options = options or VerifyOptions()
    if e_in.dim != net.dims[0]:
        raise DegenerateInput(f"input ellipsoid has dimension {e_in.dim}, network expects {net.dims[0]}")
    current = e_in
    stages, reports, mults = [], [], []
    for k, stage in enumerate(_stages(net)):
        lower, upper = preactivation_bounds(current, net.layers[k])
        statuses = classify_neurons(lower, upper)
        problem = build_lmi(stage, current, statuses, pairwise=options.pairwise)
        sol = solve_maxdet(problem, options.solver)
        reports.append(StageReport(sol.status, sol.outer_iterations, sol.newton_steps,
                                   sol.objective, sol.max_eig, sol.phase1,
                                   _neuron_counts(statuses)))
        if sol.status is not Status.OPTIMAL:
            raise SolverFailure(f"stage {k} ended with {sol.status.value}", stage=k, status=sol.status)
        current = sol.ellipsoid
        log.debug("stage %d: logdet %.6g after %d Newton steps", k, current.logdet(), sol.newton_steps)
        stages.append(current)
        mults.append((sol.tau, sol.multipliers))
    return Certificate(CertificateKind.PROPAGATION, e_in, tuple(stages), current,
                       diagnostics=tuple(reports), multipliers=tuple(mults))


def propagate_confidence(net: Network, mu, sigma, p: float, model: Model | str = Model.GAUSSIAN,
                         options: VerifyOptions | None = None) -> Certificate:
    """Ellipsoid holding ``net(X)`` with probability at least ``p``."""
    return propagate_ellipsoid(net, _input_ellipsoid(mu, sigma, p, model), options)


# -- safety ----------------------------------------------------------------------

def _halfspace_probe(net, mu, sigma, a, c, model, options):
    """Return ``test(p) -> (passed, certificate-or-None)`` for the inclusion ``f(E_p)`` in the half-space."""
    def center_test():
        return float(a @ forward(net, np.asarray(mu, dtype=float))) <= c

    def test(p):
        if p == 0.0 and Model(model) is Model.GAUSSIAN:
            # the 0-level Gaussian region is the single point mu
            return center_test(), None
        e_p = _input_ellipsoid(mu, sigma, p, model)
        if net.n_hidden_layers == 1:
            lower, upper = preactivation_bounds(e_p, net.layers[0])
            statuses = classify_neurons(lower, upper)
            problem = build_halfspace_lmi(tuple(_stages(net))[0], e_p, statuses, a, c,
                                          pairwise=options.pairwise)
            try:
                result = solve_feasibility(problem, options.solver, decide=True)
            except SolverFailure as exc:
                if exc.status is Status.NUMERICAL_FAILURE:
                    raise
                return False, None
            return result.feasible, None
        try:
            cert = propagate_ellipsoid(net, e_p, options)
        except SolverFailure as exc:
            if exc.status is Status.NUMERICAL_FAILURE:
                raise
            return False, None
        return support(cert.output, a) <= c, cert

    return test


def verify_halfspace(net: Network, mu, sigma, a, c: float, model: Model | str = Model.GAUSSIAN,
                     options: VerifyOptions | None = None) -> Certificate:
    """Largest certified ``p`` with ``Pr(a^T f(X) <= c) >= p`` (bisection on ``p``)."""
    options = options or VerifyOptions()
    a = np.asarray(a, dtype=float).reshape(-1)
    if not np.any(a != 0.0):
        raise ZeroNormal("half-space normal must be nonzero")
    if a.shape[0] != net.dims[-1]:
        raise DegenerateInput(f"normal has length {a.shape[0]}, network output has {net.dims[-1]}")
    test = _halfspace_probe(net, mu, sigma, a, float(c), model, options)

    lo, hi = 0.0, options.p_max
    ok, best = test(lo)
    if not ok:
        return _safety(net, mu, sigma, model, 0.0, None)
    ok, cert = test(hi)
    if ok:
        return _safety(net, mu, sigma, model, hi, cert)
    for _ in range(options.bisection_iters):
        if hi - lo <= options.bisection_tol:
            break
        mid = 0.5 * (lo + hi)
        ok, cert = test(mid)
        if ok:
            lo, best = mid, cert
        else:
            hi = mid
    return _safety(net, mu, sigma, model, lo, best)


def _safety(net, mu, sigma, model, p_star, cert) -> Certificate:
    e_in = None
    if p_star > 0.0 or Model(model) is Model.MOMENTS:
        e_in = _input_ellipsoid(mu, sigma, p_star, model)
    if cert is None:
        return Certificate(CertificateKind.SAFETY, e_in, p_star=p_star)
    return Certificate(CertificateKind.SAFETY, e_in, cert.stages, cert.output, p_star,
                       cert.diagnostics, cert.multipliers)


def verify_polytope(net: Network, mu, sigma, rows, model: Model | str = Model.GAUSSIAN,
                    options: VerifyOptions | None = None) -> Certificate:
    """Certified probability for ``{y : a_i^T y <= c_i for all i}``: the minimum over rows."""
    rows = list(rows)
    if not rows:
        raise ValueError("at least one half-space row is required")
    certs = [verify_halfspace(net, mu, sigma, a, c, model, options) for a, c in rows]
    worst = min(certs, key=lambda cert: cert.p_star)
    return Certificate(CertificateKind.SAFETY, worst.input_ellipsoid, worst.stages, worst.output,
                       worst.p_star, worst.diagnostics, worst.multipliers,
                       tuple(cert.p_star for cert in certs))


# -- empirical check ---------------------------------------------------------------

def monte_carlo_coverage(net: Network, mu, sigma, e_out: Ellipsoid, n: int, seed: int,
                         model: Model | str = Model.GAUSSIAN, surrogate=None) -> float:
    """Fraction of ``n`` sampled outputs inside ``e_out``.

    Inputs are Gaussian with the given moments.  Under the moments-only model
    ``surrogate(n, rng)`` may supply any input sample with those moments.
    """
    if n < 1:
        raise InvalidCount(f"sample count must be at least 1, got {n}")
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if Model(model) is Model.MOMENTS and surrogate is not None:
        x = np.asarray(surrogate(n, np.random.default_rng(seed)), dtype=float).reshape(n, mu.size)
    else:
        x = sample((mu, linalg.sym(sigma)), n, seed)
    return float(np.mean(contains(e_out, forward(net, x))))
