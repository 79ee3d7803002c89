import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probcert import linalg
from probcert.errors import NotPositiveDefinite


def random_pd(rng, n):
    a = rng.standard_normal((n, n))
    return linalg.sym(a @ a.T + 0.1 * np.eye(n))


def test_sym_enforces_exact_symmetry():
    s = linalg.sym([[1.0, 2.0], [2.0 + 1e-12, 3.0]])
    assert np.array_equal(s, s.T)


@pytest.mark.parametrize(
    "s, expected",
    [
        ([[4.0, 0.0], [0.0, 9.0]], [[2.0, 0.0], [0.0, 3.0]]),
        ([[2.0, 1.0], [1.0, 2.0]], [[np.sqrt(2.0), 0.0], [1 / np.sqrt(2.0), np.sqrt(1.5)]]),
    ],
)
def test_cholesky_examples(s, expected):
    np.testing.assert_allclose(linalg.cholesky(s), expected, atol=1e-5)


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        linalg.cholesky([[1.0, 2.0], [2.0, 1.0]])


def test_cholesky_relative_pivot_tolerance():
    with pytest.raises(NotPositiveDefinite):
        linalg.cholesky(np.diag([1.0, 1e-13]))
    linalg.cholesky(np.diag([1.0, 1e-11]))


@pytest.mark.parametrize(
    "s, expected",
    [
        (np.eye(2), [1.0, 1.0]),
        ([[2.0, 1.0], [1.0, 2.0]], [1.0, 3.0]),
        (np.diag([5.0, -2.0]), [-2.0, 5.0]),
    ],
)
def test_eig_sym_examples(s, expected):
    w, v = linalg.eig_sym(s)
    np.testing.assert_allclose(w, expected, atol=1e-12)
    np.testing.assert_allclose(np.asarray(s) @ v, v * w, atol=1e-12)


def test_logdet_examples():
    assert linalg.logdet_pd(np.eye(3)) == 0.0
    assert linalg.logdet_pd(np.diag([2.0, 3.0])) == pytest.approx(np.log(6.0), abs=1e-9)
    with pytest.raises(NotPositiveDefinite):
        linalg.logdet_pd([[1.0, 2.0], [2.0, 1.0]])


@pytest.mark.parametrize(
    "s, rhs, expected",
    [
        (np.eye(2), [3.0, 4.0], [3.0, 4.0]),
        (np.diag([2.0, 4.0]), [2.0, 4.0], [1.0, 1.0]),
        ([[2.0, 1.0], [1.0, 2.0]], [3.0, 3.0], [1.0, 1.0]),
    ],
)
def test_solve_pd_examples(s, rhs, expected):
    np.testing.assert_allclose(linalg.solve_pd(s, rhs), expected, atol=1e-12)


@pytest.mark.parametrize(
    "s, expected",
    [(np.eye(2), 1.0), (np.diag([-3.0, -1.0]), -1.0), ([[0.0, 2.0], [2.0, 0.0]], 2.0)],
)
def test_max_eigval_examples(s, expected):
    assert linalg.max_eigval(s) == pytest.approx(expected, abs=1e-12)


def test_cholesky_reconstruction_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        s = random_pd(rng, n)
        low = linalg.cholesky(s)
        assert np.all(np.diag(low) > 0)
        assert np.max(np.abs(low @ low.T - s)) <= 1e-9 * np.max(np.abs(s))


def test_eig_sym_reconstruction_and_orthonormality():
    rng = np.random.default_rng(1)
    for _ in range(60):
        n = int(rng.integers(1, 21))
        s = linalg.sym(rng.standard_normal((n, n)))
        w, v = linalg.eig_sym(s)
        assert np.all(np.diff(w) >= 0)
        assert np.max(np.abs(v.T @ v - np.eye(n))) <= 1e-10
        assert np.max(np.abs(v @ np.diag(w) @ v.T - s)) <= 1e-8 * np.max(np.abs(s))
        # LAPACK as an independent reference
        np.testing.assert_allclose(w, np.linalg.eigvalsh(s), atol=1e-10 * np.max(np.abs(s)))


def test_logdet_matches_eigenvalues():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(1, 21))
        s = random_pd(rng, n)
        w, _ = linalg.eig_sym(s)
        assert linalg.logdet_pd(s) == pytest.approx(np.sum(np.log(w)), abs=1e-8)


def test_solve_pd_residual():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(1, 21))
        s = random_pd(rng, n)
        rhs = rng.standard_normal(n)
        x = linalg.solve_pd(s, rhs)
        assert np.linalg.norm(s @ x - rhs) <= 1e-9 * np.linalg.norm(rhs)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_max_eigval_sign_agrees_with_spectrum(n, seed):
    rng = np.random.default_rng(seed)
    s = linalg.sym(rng.standard_normal((n, n))) - 2.0 * np.eye(n) * rng.random()
    w, _ = linalg.eig_sym(s)
    assert abs(linalg.max_eigval(s) - w[-1]) <= 1e-10
    assert (linalg.max_eigval(s) <= 0) == bool(np.all(w <= 1e-12))
