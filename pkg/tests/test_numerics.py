import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from invlq import numerics as nx
from invlq.errors import NumericsError

from oracles import jordan_exp, rotation_exp

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def square(n):
    return arrays(np.float64, (n, n), elements=finite)


sizes = st.integers(1, 5)


@st.composite
def square_any(draw):
    return draw(square(draw(sizes)))


def test_expm_zero_is_identity():
    assert np.array_equal(nx.expm(np.zeros((3, 3))), np.eye(3))


@pytest.mark.parametrize("theta", [0.1, 1.0, np.pi, 7.5])
def test_expm_rotation(theta):
    G = np.array([[0.0, -theta], [theta, 0.0]])
    np.testing.assert_allclose(nx.expm(G), rotation_exp(theta), atol=1e-13)


def test_expm_jordan_block():
    M = np.array([[-0.7, 1.0], [0.0, -0.7]])
    np.testing.assert_allclose(nx.expm(2.3 * M), jordan_exp(-0.7, 2.3), rtol=1e-13)


@given(square_any(), st.floats(-1, 1), st.floats(-1, 1))
def test_expm_group_law(M, s, t):
    lhs = nx.expm((s + t) * M)
    rhs = nx.expm(s * M) @ nx.expm(t * M)
    scale = max(1.0, np.max(np.abs(lhs)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * scale


@given(square_any())
def test_logm_inverts_expm_near_identity(M):
    M = 0.3 * M / max(1.0, nx.spectral_norm(M))
    np.testing.assert_allclose(nx.logm_principal(nx.expm(M)), M, atol=1e-10)


def test_logm_rejects_negative_real_eigenvalue():
    with pytest.raises(NumericsError, match="non-principal branch"):
        nx.logm_principal(np.diag([-1.0, 2.0]))


def test_logm_identity():
    assert np.allclose(nx.logm_principal(np.eye(3)), 0)


@given(square_any(), square_any())
def test_sylvester_residual(A, B):
    n, m = A.shape[0], B.shape[0]
    A = A - (nx.spectral_norm(A) + 1) * np.eye(n)
    B = B - (nx.spectral_norm(B) + 1) * np.eye(m)
    C = np.arange(n * m, dtype=float).reshape(n, m) + 1
    X = nx.solve_sylvester(A, B, C)
    res = nx.spectral_norm(A @ X + X @ B - C)
    scale = (nx.spectral_norm(A) + nx.spectral_norm(B)) * nx.spectral_norm(X) + nx.spectral_norm(C)
    assert res <= 1e-12 * scale


def test_sylvester_singular_operator():
    A = np.diag([1.0, 2.0])
    with pytest.raises(NumericsError, match="singular Sylvester"):
        nx.solve_sylvester(A, -A, np.eye(2))


def test_lyapunov_scalar():
    X = nx.solve_lyapunov(np.array([[-1.0]]), np.array([[-2.0]]))
    assert X[0, 0] == pytest.approx(1.0)


@given(square_any())
def test_invariant_subspaces_are_invariant_and_span(M):
    n = M.shape[0]
    w = np.linalg.eigvals(M)
    if np.min(np.abs(w.real)) <= 1e-6 * max(1.0, nx.spectral_norm(M)):
        M = M + 0.5 * np.eye(n)
        w = np.linalg.eigvals(M)
        if np.min(np.abs(w.real)) <= 1e-6 * max(1.0, nx.spectral_norm(M)):
            return
    Us = nx.invariant_subspace(M, "stable")
    Ua = nx.invariant_subspace(M, "antistable")
    assert Us.shape[1] == np.sum(w.real < 0)
    assert Us.shape[1] + Ua.shape[1] == n
    assert np.linalg.matrix_rank(np.hstack([Us, Ua])) == n
    for U in (Us, Ua):
        if U.shape[1]:
            # M U stays in span(U)
            resid = M @ U - U @ (U.T @ M @ U)
            assert nx.spectral_norm(resid) <= 1e-9 * max(1.0, nx.spectral_norm(M))


def test_invariant_subspace_rejects_imaginary_axis():
    with pytest.raises(NumericsError, match="imaginary-axis"):
        nx.invariant_subspace(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_nullspace_and_lstsq():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    N = nx.nullspace(A)
    assert N.shape == (3, 2)
    assert np.allclose(A @ N, 0)
    x = nx.lstsq(np.eye(2), np.array([1.0, 2.0]))
    assert np.allclose(x, [1, 2])
    assert nx.nullspace(np.zeros((2, 3))).shape == (3, 3)


def test_definiteness_helpers():
    assert nx.is_positive_definite(np.eye(2))
    assert not nx.is_positive_definite(np.diag([1.0, 0.0]))
    assert nx.is_negative_definite(-np.eye(2))
    assert not nx.is_positive_definite(np.zeros((2, 2)))


def test_as_matrix_rejects_nonfinite():
    with pytest.raises(NumericsError):
        nx.as_matrix([[np.nan]])
