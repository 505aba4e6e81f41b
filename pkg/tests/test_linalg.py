import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from santw.linalg import (
    AsymmetricMatrixError,
    NotPositiveDefiniteError,
    SingularMatrixError,
    cholesky_logdet,
    eigenvalues,
    is_negative_definite,
    is_positive_definite,
    solve,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def sorted_eigs(M):
    return np.sort_complex(eigenvalues(M).values)


def test_rotation_eigenvalues():
    np.testing.assert_allclose(sorted_eigs([[0, 1], [-1, 0]]), [-1j, 1j], atol=1e-14)


def test_bench_eigenvalues():
    np.testing.assert_allclose(sorted_eigs([[-1, -1], [1, 0]]),
                               [-0.5 - 1j * np.sqrt(3) / 2, -0.5 + 1j * np.sqrt(3) / 2], atol=1e-12)


def test_identity_eigenvalues():
    res = eigenvalues(np.eye(3))
    assert res.converged and len(res) == 3
    np.testing.assert_allclose(res.values, [1, 1, 1])


def test_eigenvalues_reject_nonfinite():
    with pytest.raises(ValueError):
        eigenvalues([[np.nan, 0], [0, 1]])


def test_negative_definite_examples():
    assert is_negative_definite(-np.eye(4))
    assert not is_negative_definite(np.zeros((3, 3)))
    assert not is_negative_definite([[-1, 2], [2, -1]])


def test_negative_definite_rejects_asymmetric():
    with pytest.raises(AsymmetricMatrixError):
        is_negative_definite([[-1, 1], [0, -1]])


def test_solve_examples(rng):
    B = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(solve(np.eye(3), B), B)
    np.testing.assert_allclose(solve([[2, 0], [0, 4]], [[2], [8]]), [[1], [2]])
    A = rng.standard_normal((5, 5)) + 5 * np.eye(5)
    B = rng.standard_normal((5, 3))
    assert np.linalg.norm(A @ solve(A, B) - B) <= 1e-10


def test_solve_singular_reports_condition():
    with pytest.raises(SingularMatrixError) as info:
        solve([[1, 2], [2, 4]], [[1], [1]])
    assert info.value.condition > 1e13


def test_cholesky_logdet_examples(rng):
    assert cholesky_logdet(np.eye(3))[1] == pytest.approx(0.0)
    assert cholesky_logdet(np.diag([2.0, 2.0]))[1] == pytest.approx(2 * np.log(2))
    G = rng.standard_normal((4, 4))
    M = G.T @ G + np.eye(4)
    L, ld = cholesky_logdet(M)
    assert np.exp(ld) == pytest.approx(np.prod(np.diag(L) ** 2), rel=1e-12)
    assert ld == pytest.approx(np.linalg.slogdet(M)[1], rel=1e-12)


def test_cholesky_indefinite_signal():
    with pytest.raises(NotPositiveDefiniteError):
        cholesky_logdet([[1, 2], [2, 1]])


@settings(max_examples=60, deadline=None)
@given(arrays(float, (4, 4), elements=finite))
def test_conjugate_pairs(M):
    w = eigenvalues(M).values
    np.testing.assert_allclose(np.sort_complex(w), np.sort_complex(np.conj(w)), atol=1e-8 * (1 + np.abs(w).max()))


@settings(max_examples=60, deadline=None)
@given(arrays(float, (4, 4), elements=finite), arrays(float, (4, 2), elements=finite))
def test_solve_residual(M, B):
    A = M + 50 * np.eye(4)
    X = solve(A, B)
    assert np.linalg.norm(A @ X - B) <= 1e-10 * max(1.0, np.linalg.norm(B))


@settings(max_examples=60, deadline=None)
@given(arrays(float, (3, 3), elements=finite), arrays(float, (3, 3), elements=finite))
def test_definiteness_invariant_under_congruence(G, T):
    M = -(G @ G.T) - 0.5 * np.eye(3)
    T = T + 12 * np.eye(3)
    C = T.T @ M @ T
    assert is_negative_definite(M) == is_negative_definite(0.5 * (C + C.T), tol=1e-8)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (3, 3), elements=finite))
def test_cholesky_iff_positive_eigenvalues(G):
    M = 0.5 * (G + G.T)
    lam = np.linalg.eigvalsh(M)
    if abs(lam[0]) < 1e-9:
        return
    try:
        cholesky_logdet(M)
        ok = True
    except NotPositiveDefiniteError:
        ok = False
    assert ok == (lam[0] > 0)
    assert is_positive_definite(M, tol=0.0) == (lam[0] > 0)
