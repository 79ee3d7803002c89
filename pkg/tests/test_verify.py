import numpy as np
import pytest

from probcert.ellipsoid import Model, chi2_cdf, confidence_ellipsoid, contains, sample
from probcert.errors import DegenerateInput, InvalidCount, SolverFailure, ZeroNormal
from probcert.ip_solver import SolverConfig, Status
from probcert.network import Layer, Network, gen_random_network, preactivation_bounds
from probcert.verify import (
    Certificate,
    CertificateKind,
    VerifyOptions,
    _halfspace_probe,
    monte_carlo_coverage,
    propagate_confidence,
    verify_halfspace,
    verify_polytope,
)

MU = np.array([1.0, 1.0])
SIGMA = np.diag([1.0, 2.0])


def active_network(seed, n1=5, p_cover=1 - 1e-6):
    """One-layer net whose biases keep every neuron active on the ``p_cover`` ellipsoid."""
    net = gen_random_network(seed, (2, n1, 2))
    l0, l1 = net.layers
    lo, _ = preactivation_bounds(confidence_ellipsoid(MU, SIGMA, p_cover), l0)
    return Network((Layer(l0.W, l0.b - lo + 0.5), l1))


def closed_form_p(net, a, c):
    """Largest p with sup over E_p of a^T f(x) <= c for an affine ``f``."""
    l0, l1 = net.layers
    m = l1.W @ l0.W
    off = l1.W @ l0.b + l1.b
    mean = a @ (m @ MU + off)
    spread = np.sqrt(a @ m @ SIGMA @ m.T @ a)
    return chi2_cdf(((c - mean) / spread) ** 2, 2)


def test_propagation_certificate_is_sound_multilayer():
    net = gen_random_network(1, (2, 6, 5, 2))
    cert = propagate_confidence(net, MU, SIGMA, 0.9)
    assert cert.kind is CertificateKind.PROPAGATION
    assert len(cert.stages) == 2 and cert.stages[0].dim == 6 and cert.output.dim == 2
    assert all(r.status is Status.OPTIMAL for r in cert.diagnostics)
    xs = sample(cert.input_ellipsoid, 10_000, 1, mode="uniform")
    assert np.all(contains(cert.output, net(xs)))
    hidden = np.maximum(xs @ net.layers[0].W.T + net.layers[0].b, 0.0)
    assert np.all(contains(cert.stages[0], hidden))


def test_propagation_monotone_in_p():
    net = gen_random_network(2, (2, 6, 2))
    certs = [propagate_confidence(net, MU, SIGMA, p) for p in (0.5, 0.9, 0.95)]
    for small, big in zip(certs, certs[1:]):
        assert contains(big.output, small.output.center)
        assert big.output.logdet() >= small.output.logdet() - 1e-6


def test_propagation_coverage_meets_level():
    net = gen_random_network(3, (2, 8, 2))
    cert = propagate_confidence(net, MU, SIGMA, 0.9)
    cov = monte_carlo_coverage(net, MU, SIGMA, cert.output, 10_000, 3)
    # binomial slack: 4 standard deviations at p = 0.9, N = 10^4
    assert cov >= 0.9 - 4 * np.sqrt(0.9 * 0.1 / 10_000)


def test_moments_model_uses_surrogate():
    net = gen_random_network(4, (2, 6, 2))
    cert = propagate_confidence(net, MU, SIGMA, 0.95, model=Model.MOMENTS)
    half = np.sqrt(3.0 * np.diag(SIGMA))

    def uniform(n, rng):
        return MU + (2.0 * rng.random((n, 2)) - 1.0) * half

    cov = monte_carlo_coverage(net, MU, SIGMA, cert.output, 10_000, 4, Model.MOMENTS, uniform)
    assert cov >= 0.95


def test_dimension_and_count_errors():
    net = gen_random_network(0, (2, 4, 2))
    with pytest.raises(DegenerateInput):
        propagate_confidence(net, [0.0, 0.0, 0.0], np.eye(3), 0.9)
    with pytest.raises(DegenerateInput):
        propagate_confidence(net, MU, np.diag([1.0, 0.0]), 0.9)
    with pytest.raises(ZeroNormal):
        verify_halfspace(net, MU, SIGMA, [0.0, 0.0], 1.0)
    with pytest.raises(DegenerateInput):
        verify_halfspace(net, MU, SIGMA, [1.0, 0.0, 0.0], 1.0)
    e = confidence_ellipsoid(MU, SIGMA, 0.5)
    with pytest.raises(InvalidCount):
        monte_carlo_coverage(net, MU, SIGMA, e, 0, 0)


def test_solver_failure_carries_stage():
    net = gen_random_network(0, (2, 4, 3, 2))
    with pytest.raises(SolverFailure) as info:
        propagate_confidence(net, MU, SIGMA, 0.9, options=
                             VerifyOptions(solver=SolverConfig(max_outer=1)))
    assert info.value.stage == 0


@pytest.mark.parametrize("seed", range(3))
def test_halfspace_matches_closed_form_in_affine_regime(seed):
    net = active_network(seed)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(2)
    y0 = net(MU)
    c = float(a @ y0) + 1.5 * np.linalg.norm(a)
    cert = verify_halfspace(net, MU, SIGMA, a, c)
    assert cert.kind is CertificateKind.SAFETY
    assert cert.p_star == pytest.approx(closed_form_p(net, a, c), abs=1e-2)


def test_halfspace_interval_property():
    net = gen_random_network(5, (2, 5, 2))
    a = np.array([1.0, 0.5])
    # put the boundary halfway between the central output and the sampled extreme
    wide = sample(confidence_ellipsoid(MU, SIGMA, 0.999), 20_000, 5, mode="uniform")
    c = 0.5 * float(a @ net(MU) + np.max(net(wide) @ a))
    opts = VerifyOptions()
    cert = verify_halfspace(net, MU, SIGMA, a, c, options=opts)
    test = _halfspace_probe(net, MU, SIGMA, a, c, Model.GAUSSIAN, opts)
    assert 0.0 < cert.p_star < opts.p_max
    assert test(cert.p_star)[0]
    assert not test(min(cert.p_star + 2 * opts.bisection_tol, opts.p_max))[0]


def test_halfspace_unsafe_center_gives_zero():
    net = gen_random_network(6, (2, 5, 2))
    a = np.array([0.0, 1.0])
    cert = verify_halfspace(net, MU, SIGMA, a, float(a @ net(MU)) - 0.1)
    assert cert.p_star == 0.0
    assert cert.output is None


def test_halfspace_deep_network_uses_propagation():
    net = gen_random_network(7, (2, 4, 4, 2))
    a = np.array([1.0, 0.0])
    c = float(a @ net(MU)) + 2.0
    cert = verify_halfspace(net, MU, SIGMA, a, c)
    assert cert.p_star > 0.0
    assert cert.output is not None
    assert cert.output.center @ a + np.sqrt(a @ cert.output.shape @ a) <= c + 1e-9


def test_safety_certificate_holds_empirically():
    net = gen_random_network(8, (2, 5, 2))
    a, c = np.array([1.0, 1.0]), float(np.array([1.0, 1.0]) @ net(MU)) + 2.0
    cert = verify_halfspace(net, MU, SIGMA, a, c)
    ys = net(sample((MU, SIGMA), 10_000, 8))
    frac = np.mean(ys @ a <= c)
    assert frac >= cert.p_star - 4 * np.sqrt(cert.p_star * (1 - cert.p_star) / 10_000)


def test_polytope_is_minimum_over_rows():
    net = gen_random_network(9, (2, 4, 2))
    y0 = net(MU)
    rows = [(np.array([1.0, 0.0]), y0[0] + 3.0), (np.array([0.0, -1.0]), -y0[1] + 1.0)]
    cert = verify_polytope(net, MU, SIGMA, rows)
    singles = [verify_halfspace(net, MU, SIGMA, a, c).p_star for a, c in rows]
    assert cert.row_p_star == pytest.approx(tuple(singles))
    assert cert.p_star == min(singles)
    with pytest.raises(ValueError):
        verify_polytope(net, MU, SIGMA, [])


def test_certificate_validation():
    with pytest.raises(ValueError):
        Certificate(CertificateKind.SAFETY, None, p_star=1.0)
    with pytest.raises(ValueError):
        Certificate(CertificateKind.PROPAGATION, None)
