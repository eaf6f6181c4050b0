import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from panel_bvecm import matrix_kit as mk
from panel_bvecm.errors import NotPD, NotPSD, NotSymmetric, OutOfRange, RankDeficient

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def random_semiorthogonal(rng, n, m):
    Q, _ = np.linalg.qr(rng.standard_normal((n, m)))
    return Q


# -- vec / kron ---------------------------------------------------------


def test_vec_column_stacks():
    assert np.array_equal(mk.vec([[1, 2], [3, 4]]), [1, 3, 2, 4])
    assert np.array_equal(mk.vec(np.eye(2)), [1, 0, 0, 1])


def test_unvec_inverts_vec(rng):
    M = rng.standard_normal((3, 5))
    assert np.array_equal(mk.unvec(mk.vec(M), 3, 5), M)


def test_vec_abc_identity(rng):
    A, B, C = rng.standard_normal((3, 2)), rng.standard_normal((2, 2)), rng.standard_normal((2, 4))
    lhs = mk.vec(A @ B @ C)
    rhs = mk.kron(C.T, A) @ mk.vec(B)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_vec_abc_identity_property(p, q, r, s, seed):
    g = np.random.default_rng(seed)
    A, B, C = g.standard_normal((p, q)), g.standard_normal((q, r)), g.standard_normal((r, s))
    assert np.allclose(mk.vec(A @ B @ C), mk.kron(C.T, A) @ mk.vec(B), atol=1e-12)


def test_kron_identity_and_scalar(rng):
    M = rng.standard_normal((2, 3))
    K = mk.kron(np.eye(2), M)
    assert np.array_equal(K[:2, :3], M) and np.array_equal(K[2:, 3:], M)
    assert np.all(K[:2, 3:] == 0) and np.all(K[2:, :3] == 0)
    assert np.array_equal(mk.kron([[2]], M), 2 * M)


def test_kron_mixed_product(rng):
    A, B, C, D = (rng.standard_normal((2, 2)) for _ in range(4))
    assert np.max(np.abs(mk.kron(A, B) @ mk.kron(C, D) - mk.kron(A @ C, B @ D))) < 1e-12


# -- symmetric square roots ----------------------------------------------


def test_sym_sqrt_simple():
    assert np.allclose(mk.sym_sqrt(np.eye(3)), np.eye(3), atol=1e-15)
    assert np.allclose(mk.sym_sqrt(4 * np.eye(2)), 2 * np.eye(2), atol=1e-15)


def test_sym_sqrt_eigen_oracle(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    lam = np.array([0.0, 0.3, 2.0, 7.0])
    M = Q.T @ np.diag(lam) @ Q
    S = mk.sym_sqrt(M)
    assert np.max(np.abs(S @ S - M)) < 1e-10
    assert np.allclose(S, Q.T @ np.diag(np.sqrt(lam)) @ Q, atol=1e-10)


@given(arrays(float, (4, 3), elements=finite))
def test_sym_sqrt_property(X):
    M = X @ X.T
    S = mk.sym_sqrt(M)
    assert np.allclose(S, S.T, atol=1e-12)
    assert np.max(np.abs(S @ S - M)) <= 1e-10 * max(1.0, np.linalg.norm(M))


def test_sym_sqrt_clamps_tiny_negative():
    M = np.diag([1.0, -5e-11])
    S = mk.sym_sqrt(M)
    assert S[1, 1] == 0.0


def test_sym_sqrt_errors():
    with pytest.raises(NotPSD):
        mk.sym_sqrt(np.diag([1.0, -1e-6]))
    with pytest.raises(NotSymmetric):
        mk.sym_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_inv_sym_sqrt(rng):
    X = rng.standard_normal((5, 3))
    M = X.T @ X
    R = mk.inv_sym_sqrt(M)
    assert np.allclose(R @ M @ R, np.eye(3), atol=1e-10)
    with pytest.raises(RankDeficient):
        mk.inv_sym_sqrt(np.diag([1.0, 0.0]))


# -- orthogonal complement and projectors --------------------------------


def test_orth_complement_worked_example():
    H = mk.normalize_semiorthogonal(np.array([[1.0, 0], [0, 1], [-1, -1]]))
    Hp = mk.orth_complement(H)
    assert np.allclose(Hp[:, 0], np.ones(3) / np.sqrt(3), atol=1e-12)


def test_orth_complement_unit_vector():
    assert np.allclose(mk.orth_complement(np.array([[1.0], [0.0]])), [[0.0], [1.0]], atol=1e-15)


def test_orth_complement_no_columns():
    assert np.array_equal(mk.orth_complement(np.zeros((3, 0))), np.eye(3))


@given(st.integers(2, 7), st.data())
def test_orth_complement_property(n, data):
    m = data.draw(st.integers(1, n - 1))
    seed = data.draw(st.integers(0, 2**32 - 1))
    H = random_semiorthogonal(np.random.default_rng(seed), n, m)
    Hp = mk.orth_complement(H)
    assert Hp.shape == (n, n - m)
    assert np.max(np.abs(H.T @ Hp)) < 1e-12
    assert np.max(np.abs(Hp.T @ Hp - np.eye(n - m))) < 1e-12
    for j in range(n - m):
        col = Hp[:, j]
        assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


def test_orth_complement_rank_deficient():
    with pytest.raises(RankDeficient):
        mk.orth_complement(np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]]))


def test_normalize_semiorthogonal_cases(rng):
    H = random_semiorthogonal(rng, 5, 2)
    assert np.allclose(mk.normalize_semiorthogonal(H), H, atol=1e-12)
    Hg = np.array([[1.0, 0], [0, 1], [-1, -1]])
    Hn = mk.normalize_semiorthogonal(Hg)
    assert np.allclose(Hn.T @ Hn, np.eye(2), atol=1e-12)
    # same span: projection of Hg onto sp(Hn) is Hg
    assert np.allclose(Hn @ Hn.T @ Hg, Hg, atol=1e-12)
    Hs = mk.normalize_semiorthogonal(np.vstack([3 * np.eye(2), np.zeros((2, 2))]))
    assert np.allclose(Hs, np.vstack([np.eye(2), np.zeros((2, 2))]), atol=1e-15)
    with pytest.raises(RankDeficient):
        mk.normalize_semiorthogonal(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_projector_limits(rng):
    H = random_semiorthogonal(rng, 4, 2)
    assert np.allclose(mk.projector(H, 1.0), np.eye(4), atol=1e-12)
    assert np.allclose(mk.projector(H, 0.0), H @ H.T, atol=1e-12)
    with pytest.raises(OutOfRange):
        mk.projector(H, -0.1)


@given(st.floats(0.0, 5.0), st.integers(0, 2**32 - 1))
def test_projector_square_property(eta, seed):
    H = random_semiorthogonal(np.random.default_rng(seed), 5, 2)
    P = mk.projector(H, eta)
    assert np.max(np.abs(P @ P.T - mk.projector(H, eta ** 2))) < 1e-12 * max(1.0, eta ** 2)


# -- AR(1) correlation ---------------------------------------------------


def test_ar1_correlation_examples():
    assert np.array_equal(mk.ar1_correlation(0.0, 4), np.eye(4))
    assert np.array_equal(mk.ar1_correlation(1.0, 2), np.ones((2, 2)))
    expected = np.array([[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
    assert np.allclose(mk.ar1_correlation(0.5, 3), expected, atol=1e-15)
    with pytest.raises(OutOfRange):
        mk.ar1_correlation(1.01, 3)


@given(st.floats(-0.99, 0.99), st.integers(1, 50))
def test_ar1_correlation_pd_and_precision(rho, T):
    F = mk.ar1_correlation(rho, T)
    assert np.linalg.eigvalsh(F).min() > 0
    Q = mk.ar1_precision(rho, T)
    assert np.allclose(Q @ F, np.eye(T), atol=1e-8 / (1 - rho * rho))
    sign, logdet = np.linalg.slogdet(F)
    assert sign > 0 and abs(logdet - mk.ar1_logdet(rho, T)) < 1e-8 * T


def test_ar1_precision_singular():
    with pytest.raises(NotPD):
        mk.ar1_precision(1.0, 3)


# -- Cholesky helpers ----------------------------------------------------


def test_cholesky_jitter_and_failure(caplog):
    M = np.ones((2, 2))  # PSD but singular: first attempt fails, jitter rescues
    L = mk.cholesky(M, "test")
    assert np.allclose(L @ L.T, M, atol=1e-8)
    assert "jitter" in caplog.text
    with pytest.raises(NotPD):
        mk.cholesky(np.diag([1.0, -1.0]), "test")


def test_spd_inverse_and_logdet(rng):
    X = rng.standard_normal((6, 3))
    M = X.T @ X + np.eye(3)
    assert np.allclose(mk.spd_inverse(M) @ M, np.eye(3), atol=1e-12)
    assert np.isclose(mk.logdet_from_chol(mk.cholesky(M)), np.linalg.slogdet(M)[1])
