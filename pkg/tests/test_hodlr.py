import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (
    hodlr_from_dense,
    norm2,
    random_banded,
    smooth_kernel,
    spd_kernel,
    upper_triangular_hodlr,
)
from hsdc.banded import BandedMatrix
from hsdc.errors import IndefiniteMatrix, SingularTriangular, StructureError
from hsdc.hodlr import (
    DEFAULT_TRUNCATION,
    HodlrMatrix,
    IndexPartition,
    LowRank,
    TruncationConfig,
    add,
    append_columns,
    build_from_banded,
    build_from_dense,
    cholesky,
    diagonal,
    diagonal_matrix,
    extract_columns,
    extract_principal_submatrix,
    extract_rows,
    frobenius_norm,
    from_bytes,
    hodlr_rank,
    identity,
    matvec,
    memory_units,
    multiply,
    multiply_triangular_inverse_right,
    norm2_estimate,
    reblock,
    recompress,
    rmatvec,
    scale,
    shift_diagonal,
    solve_triangular_left,
    symmetrize,
    to_bytes,
    to_dense,
    trace,
    transpose,
    zeros_like,
)

EPS = DEFAULT_TRUNCATION.epsilon


def n_blocks(M):
    return sum(1 for _ in M.blocks())


# --- partitions and types ------------------------------------------------------

def test_balanced_partition_invariants():
    p = IndexPartition.balanced(100, 16)
    assert p.n == 100
    assert len(p.leaf_sizes) == 2 ** p.level
    assert max(p.leaf_sizes) <= 16
    q = p.coarsen()
    assert q.leaf_sizes == tuple(p.leaf_sizes[i] + p.leaf_sizes[i + 1] for i in range(0, 8, 2))


def test_partition_rejects_wrong_leaf_count():
    with pytest.raises(ValueError):
        IndexPartition(2, (1, 2, 3))


def test_truncation_config_validates():
    with pytest.raises(ValueError):
        TruncationConfig(0.0)
    assert TruncationConfig(1e-3).keep(np.array([1.0, 1e-2, 1e-4])) == 2
    assert TruncationConfig(1e-3, relative=True).keep(np.array([10.0, 1e-2, 1e-4])) == 1


def test_lowrank_shape_mismatch():
    with pytest.raises(StructureError):
        LowRank(np.zeros((3, 2)), np.zeros((4, 1)))


def test_node_shape_check():
    a = HodlrMatrix.leaf(np.eye(2))
    with pytest.raises(StructureError):
        HodlrMatrix.node(a, a, LowRank.zeros(2, 3), LowRank.zeros(2, 2))


# --- construction ---------------------------------------------------------------

def test_build_from_banded_tridiagonal_exact():
    A = BandedMatrix.tridiagonal(np.full(8, 2.0), np.ones(7))
    H = build_from_banded(A, 2)
    assert hodlr_rank(H) == 1
    assert np.array_equal(to_dense(H), A.to_dense())


def test_build_from_banded_diagonal_rank_zero():
    A = BandedMatrix(np.arange(1.0, 17.0)[None, :])
    H = build_from_banded(A, 3)
    assert all(b.rank == 0 for b in H.blocks())


def test_build_from_banded_random_exact(rng):
    A = random_banded(64, 5, rng)
    H = build_from_banded(A, 8)
    assert hodlr_rank(H) <= 5
    assert np.array_equal(to_dense(H), A.to_dense())


def test_build_from_banded_rejects_nonsymmetric(rng):
    M = rng.standard_normal((6, 6))
    with pytest.raises(StructureError):
        build_from_banded(M, 2)


def test_build_from_dense_identity_and_rank_one(rng):
    H = build_from_dense(np.eye(16), IndexPartition.balanced(16, 4))
    assert hodlr_rank(H) == 0
    u, v = rng.standard_normal(16), rng.standard_normal(16)
    H = build_from_dense(np.outer(u, v), IndexPartition.balanced(16, 4))
    assert hodlr_rank(H) <= 1


def test_build_from_dense_error(rng):
    M = rng.standard_normal((32, 32))
    H = build_from_dense(M, IndexPartition.balanced(32, 8))
    assert norm2(to_dense(H) - M) <= n_blocks(H) * EPS


def test_level0_roundtrip(rng):
    D = rng.standard_normal((5, 5))
    H = HodlrMatrix.leaf(D)
    assert np.array_equal(to_dense(H), D)


# --- matvec -----------------------------------------------------------------------

def test_matvec_identity_and_toeplitz(rng):
    v = rng.standard_normal(12)
    assert np.allclose(matvec(identity(IndexPartition.balanced(12, 3)), v), v, atol=0)
    T = build_from_banded(BandedMatrix.tridiagonal(np.full(4, 2.0), np.ones(3)), 1)
    assert np.array_equal(matvec(T, np.array([1.0, 0, 0, 0])), [2.0, 1.0, 0.0, 0.0])


def test_matvec_random_vs_dense(rng):
    M = smooth_kernel(64, rng)
    H = hodlr_from_dense(M)
    D = to_dense(H)
    x = rng.standard_normal((64, 3))
    assert np.linalg.norm(matvec(H, x) - D @ x) <= 1e-13 * np.linalg.norm(D @ x)
    assert np.linalg.norm(rmatvec(H, x) - D.T @ x) <= 1e-13 * np.linalg.norm(D.T @ x)
    with pytest.raises(StructureError):
        matvec(H, np.ones(63))


# --- add / multiply -------------------------------------------------------------

def test_add_zero_and_negation(rng):
    H = hodlr_from_dense(smooth_kernel(32, rng))
    assert np.array_equal(to_dense(add(H, zeros_like(H))), to_dense(H))
    Z = add(H, scale(H, -1.0))
    assert np.abs(to_dense(Z)).max() <= EPS


def test_add_random_rank2(rng):
    def rank2(n):
        U, V = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
        return U @ V.T + np.diag(rng.standard_normal(n))

    A, B = rank2(32), rank2(32)
    HA, HB = hodlr_from_dense(A), hodlr_from_dense(B)
    S = add(HA, HB)
    assert norm2(to_dense(S) - (A + B)) <= n_blocks(S) * EPS


def test_add_rejects_mismatched():
    A = identity(IndexPartition.balanced(8, 2))
    B = identity(IndexPartition.balanced(8, 4))
    with pytest.raises(StructureError):
        add(A, B)


def test_multiply_identity_and_diagonal(rng):
    p = IndexPartition.balanced(32, 8)
    H = hodlr_from_dense(smooth_kernel(32, rng))
    assert norm2(to_dense(multiply(H, identity(p))) - to_dense(H)) <= EPS
    d1, d2 = rng.standard_normal(32), rng.standard_normal(32)
    P = multiply(diagonal_matrix(d1, p), diagonal_matrix(d2, p))
    assert np.array_equal(to_dense(P), np.diag(d1 * d2))


def test_multiply_random_vs_dense(rng):
    A, B = hodlr_from_dense(smooth_kernel(64, rng)), hodlr_from_dense(smooth_kernel(64, rng))
    P = multiply(A, B)
    assert norm2(to_dense(P) - to_dense(A) @ to_dense(B)) <= 10 * EPS


def test_symmetrize(rng):
    H = hodlr_from_dense(rng.standard_normal((16, 16)), leaf=4, eps=1e-14)
    S = to_dense(symmetrize(H))
    assert np.allclose(S, S.T, atol=1e-12)


# --- Cholesky and triangular solves ---------------------------------------------

def test_cholesky_identity_and_diagonal():
    p = IndexPartition.balanced(16, 4)
    assert np.array_equal(to_dense(cholesky(identity(p))), np.eye(16))
    d = np.arange(1.0, 17.0)
    assert np.allclose(to_dense(cholesky(diagonal_matrix(d, p))), np.diag(np.sqrt(d)), atol=1e-15)


def test_cholesky_spd_random(rng):
    M = spd_kernel(64, rng)
    R = to_dense(cholesky(hodlr_from_dense(M)))
    assert np.allclose(np.tril(R, -1), 0.0)
    assert norm2(R.T @ R - M) <= 1e-8


def test_cholesky_indefinite_reports_path():
    M = np.diag([1.0, 1.0, 1.0, -1.0])
    with pytest.raises(IndefiniteMatrix) as exc:
        cholesky(build_from_dense(M, IndexPartition.balanced(4, 1)))
    assert exc.value.path == (1, 1)
    assert exc.value.level == 2


def test_solve_triangular_trivial(rng):
    p = IndexPartition.balanced(16, 4)
    B = rng.standard_normal((16, 3))
    assert np.array_equal(solve_triangular_left(identity(p), B), B)
    assert np.allclose(solve_triangular_left(scale(identity(p), 2.0), B), B / 2)


def test_solve_triangular_random(rng):
    T = upper_triangular_hodlr(32, rng)
    D = to_dense(T)
    B = rng.standard_normal((32, 4))
    for trans in (False, True):
        X = solve_triangular_left(T, B, trans=trans)
        op = D.T if trans else D
        assert np.linalg.norm(op @ X - B) <= 1e-10 * np.linalg.norm(B)


def test_solve_triangular_singular():
    T = HodlrMatrix.leaf(np.array([[1.0, 2.0], [0.0, 0.0]]))
    with pytest.raises(SingularTriangular):
        solve_triangular_left(T, np.ones(2))


def test_rsolve_trivial(rng):
    p = IndexPartition.balanced(16, 4)
    H = hodlr_from_dense(smooth_kernel(16, rng), leaf=4)
    assert norm2(to_dense(multiply_triangular_inverse_right(H, identity(p))) - to_dense(H)) <= EPS
    T = upper_triangular_hodlr(16, rng, leaf=4)
    X = multiply_triangular_inverse_right(scale(T, 3.0), T)
    assert norm2(to_dense(X) - 3.0 * np.eye(16)) <= 10 * EPS


def test_rsolve_random(rng):
    T = upper_triangular_hodlr(32, rng)
    D = to_dense(T)
    cond = np.linalg.cond(D)
    M = hodlr_from_dense(smooth_kernel(32, rng))
    Md = to_dense(M)
    for trans in (False, True):
        X = to_dense(multiply_triangular_inverse_right(M, T, trans=trans))
        ref = Md @ np.linalg.inv(D.T if trans else D)
        assert norm2(X - ref) <= 1e2 * EPS * cond


# --- extraction and appending -----------------------------------------------------

def test_extract_principal(rng):
    H = hodlr_from_dense(smooth_kernel(64, rng))
    D = to_dense(H)
    assert np.array_equal(to_dense(extract_principal_submatrix(H, np.arange(64))), D)
    S = extract_principal_submatrix(H, [17])
    assert S.is_leaf and S.dense[0, 0] == D[17, 17]
    C = np.sort(rng.choice(64, 40, replace=False))
    S = extract_principal_submatrix(H, C)
    assert np.allclose(to_dense(S), D[np.ix_(C, C)], rtol=0, atol=1e-14)
    assert sum(S.row_leaf_sizes()) == 40


def test_extract_allows_any_order_within_leaf(rng):
    H = hodlr_from_dense(smooth_kernel(16, rng), leaf=4)
    D = to_dense(H)
    C = np.array([2, 0, 5, 4, 11])
    assert np.allclose(to_dense(extract_principal_submatrix(H, C)), D[np.ix_(C, C)], rtol=0, atol=1e-15)
    with pytest.raises(StructureError):
        extract_principal_submatrix(H, [5, 0])


def test_extract_rejects_bad_indices(rng):
    H = hodlr_from_dense(smooth_kernel(16, rng), leaf=4)
    with pytest.raises(StructureError):
        extract_columns(H, [16])
    with pytest.raises(StructureError):
        extract_columns(H, [1, 1])


def test_extract_columns(rng):
    p = IndexPartition.balanced(8, 2)
    E = extract_columns(identity(p), [2])
    assert np.array_equal(to_dense(E)[:, 0], np.eye(8)[:, 2])
    H = hodlr_from_dense(smooth_kernel(32, rng))
    C = np.sort(rng.choice(32, 10, replace=False))
    assert np.allclose(to_dense(extract_columns(H, C)), to_dense(H)[:, C], rtol=0, atol=1e-14)
    assert np.array_equal(to_dense(extract_columns(H, np.arange(32))), to_dense(H))
    R = np.sort(rng.choice(32, 7, replace=False))
    assert np.allclose(to_dense(extract_rows(H, R)), to_dense(H)[R], rtol=0, atol=1e-14)


def test_append_columns(rng):
    H = hodlr_from_dense(smooth_kernel(32, rng))
    C = np.sort(rng.choice(32, 12, replace=False))
    M = extract_columns(H, C)
    X = rng.standard_normal((32, 4))
    A = append_columns(M, X)
    assert A.shape == (32, 16)
    assert norm2(to_dense(A) - np.hstack([to_dense(M), X])) <= n_blocks(A) * EPS
    assert append_columns(M, np.zeros((32, 0))) is M
    L = append_columns(HodlrMatrix.leaf(np.eye(3)), np.ones((3, 1)))
    assert np.array_equal(L.dense, np.hstack([np.eye(3), np.ones((3, 1))]))
    with pytest.raises(StructureError):
        append_columns(M, np.ones((31, 1)))


def test_reblock(rng):
    H = hodlr_from_dense(smooth_kernel(60, rng), leaf=8)
    R = reblock(H, IndexPartition.balanced(60, 16))
    assert max(R.row_leaf_sizes()) <= 16
    assert norm2(to_dense(R) - to_dense(H)) <= n_blocks(R) * EPS


# --- measures and misc ------------------------------------------------------------

def test_rank_and_memory():
    p = IndexPartition.balanced(1024, 256)
    I = identity(p)
    assert hodlr_rank(I) == 0
    assert memory_units(I) == 4 * 256 * 256
    A = BandedMatrix(np.ones((4, 40)))
    assert hodlr_rank(build_from_banded(A, 5)) <= 3


def test_diagonal_trace_norms(rng):
    M = smooth_kernel(32, rng)
    H = hodlr_from_dense(M)
    D = to_dense(H)
    assert np.allclose(diagonal(H), np.diag(D))
    assert np.isclose(trace(H), np.trace(D))
    assert np.isclose(frobenius_norm(H), np.linalg.norm(D), rtol=1e-12)
    est = norm2_estimate(H, rng, iterations=100, tol=1e-12)
    assert est <= norm2(D) * (1 + 1e-12) and est >= 0.99 * norm2(D)
    assert np.allclose(to_dense(shift_diagonal(H, 2.0)), D + 2 * np.eye(32))
    assert np.array_equal(to_dense(transpose(H)), D.T)


def test_recompress_exact_low_rank(rng):
    U, V = rng.standard_normal((50, 3)), rng.standard_normal((40, 3))
    lr = recompress(np.hstack([U, U]), np.hstack([V, V]), DEFAULT_TRUNCATION)
    assert lr.rank == 3
    assert np.allclose(lr.to_dense(), 2 * U @ V.T)


def test_serialization_roundtrip(rng):
    H = hodlr_from_dense(smooth_kernel(40, rng), leaf=6)
    G = from_bytes(to_bytes(H))
    assert np.array_equal(to_dense(G), to_dense(H))
    assert G.row_leaf_sizes() == H.row_leaf_sizes()
    with pytest.raises(StructureError):
        from_bytes(b"NOTHODLR" + bytes(40))
    with pytest.raises(StructureError):
        from_bytes(to_bytes(H)[:-8])


# --- properties ----------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 48), leaf=st.integers(1, 12), seed=st.integers(0, 2 ** 16))
def test_property_add_multiply_match_dense(n, leaf, seed):
    rng = np.random.default_rng(seed)
    A = hodlr_from_dense(smooth_kernel(n, rng), leaf)
    B = hodlr_from_dense(smooth_kernel(n, rng), leaf)
    Ad, Bd = to_dense(A), to_dense(B)
    scale_ = 1.0 + norm2(Ad) * norm2(Bd)
    assert norm2(to_dense(add(A, B)) - (Ad + Bd)) <= n_blocks(A) * EPS + 1e-13 * scale_
    assert norm2(to_dense(multiply(A, B)) - Ad @ Bd) <= 10 * n * EPS + 1e-13 * scale_


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 40), b=st.integers(0, 4), leaf=st.integers(1, 9), seed=st.integers(0, 2 ** 16))
def test_property_banded_build_is_exact(n, b, leaf, seed):
    rng = np.random.default_rng(seed)
    A = BandedMatrix(rng.standard_normal((b + 1, n)))
    H = build_from_banded(A, leaf)
    assert np.array_equal(to_dense(H), A.to_dense())
    assert hodlr_rank(H) <= b
