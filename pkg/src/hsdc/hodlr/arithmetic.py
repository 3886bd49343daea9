"""Truncating HODLR arithmetic: sums, products, Cholesky and triangular solves."""

import numpy as np
import scipy.linalg as sla

from ..errors import IndefiniteMatrix, SingularTriangular, StructureError
from .matrix import (
    DEFAULT_TRUNCATION,
    HodlrMatrix,
    LowRank,
    matvec,
    recompress,
    rmatvec,
    same_structure,
    transpose,
)


def _lr_sum(X, Y, cfg, alpha=1.0, beta=1.0):
    if Y.rank == 0 or beta == 0.0:
        return X if alpha == 1.0 else X.scaled(alpha)
    if X.rank == 0 or alpha == 0.0:
        return Y if beta == 1.0 else Y.scaled(beta)
    return recompress(np.hstack([alpha * X.U, beta * Y.U]), np.hstack([X.V, Y.V]), cfg)


def _lr_product(X, Y):
    """Exact LowRank of ``X @ Y`` with rank ``min(rank X, rank Y)``."""
    if X.rank == 0 or Y.rank == 0:
        return LowRank.zeros(X.shape[0], Y.shape[1])
    inner = X.V.T @ Y.U
    if X.rank <= Y.rank:
        return LowRank(X.U, Y.V @ inner.T)
    return LowRank(X.U @ inner, Y.V)


def add(A, B, cfg=DEFAULT_TRUNCATION, alpha=1.0, beta=1.0):
    """``alpha*A + beta*B`` for matrices on the same partition."""
    if not same_structure(A, B):
        raise StructureError("add needs matrices on the same partition")
    return _add(A, B, cfg, alpha, beta)


def _add(A, B, cfg, alpha, beta):
    if A.is_leaf:
        return HodlrMatrix.leaf(alpha * A.dense + beta * B.dense)
    return HodlrMatrix.node(
        _add(A.a11, B.a11, cfg, alpha, beta),
        _add(A.a22, B.a22, cfg, alpha, beta),
        _lr_sum(A.b12, B.b12, cfg, alpha, beta),
        _lr_sum(A.b21, B.b21, cfg, alpha, beta),
    )


def add_lowrank(M, U, V, cfg=DEFAULT_TRUNCATION):
    """``M + U @ V.T`` with the update split along the block tree."""
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.shape[0] != M.shape[0] or V.shape[0] != M.shape[1] or U.shape[1] != V.shape[1]:
        raise StructureError("low-rank update has incompatible shape")
    if U.shape[1] == 0:
        return M
    return _add_lowrank(M, U, V, cfg)


def _add_lowrank(M, U, V, cfg):
    if M.is_leaf:
        return HodlrMatrix.leaf(M.dense + U @ V.T)
    m1, n1 = M.a11.shape
    U1, U2 = U[:m1], U[m1:]
    V1, V2 = V[:n1], V[n1:]
    return HodlrMatrix.node(
        _add_lowrank(M.a11, U1, V1, cfg),
        _add_lowrank(M.a22, U2, V2, cfg),
        _lr_sum(M.b12, LowRank(U1, V2), cfg),
        _lr_sum(M.b21, LowRank(U2, V1), cfg),
    )


def symmetrize(M, cfg=DEFAULT_TRUNCATION):
    """``(M + M.T) / 2``."""
    return add(M, transpose(M), cfg, 0.5, 0.5)


def multiply(A, B, cfg=DEFAULT_TRUNCATION):
    """``A @ B`` where the column tree of ``A`` matches the row tree of ``B``."""
    if A.shape[1] != B.shape[0]:
        raise StructureError(f"cannot multiply {A.shape} by {B.shape}")
    return _mul(A, B, cfg)


def _mul(A, B, cfg):
    if A.is_leaf and B.is_leaf:
        return HodlrMatrix.leaf(A.dense @ B.dense)
    if A.is_leaf or B.is_leaf:
        raise StructureError("multiply needs matching trees")
    if A.a11.shape[1] != B.a11.shape[0]:
        raise StructureError("multiply needs matching trees")
    C11 = _mul(A.a11, B.a11, cfg)
    p = _lr_product(A.b12, B.b21)
    if p.rank:
        C11 = _add_lowrank(C11, p.U, p.V, cfg)
    C22 = _mul(A.a22, B.a22, cfg)
    p = _lr_product(A.b21, B.b12)
    if p.rank:
        C22 = _add_lowrank(C22, p.U, p.V, cfg)
    # A11 B12 + A12 B22 and A21 B11 + A22 B21
    b, c = B.b12, A.b12
    C12 = _lr_sum(LowRank(matvec(A.a11, b.U), b.V), LowRank(c.U, rmatvec(B.a22, c.V)), cfg)
    b, c = B.b21, A.b21
    C21 = _lr_sum(LowRank(c.U, rmatvec(B.a11, c.V)), LowRank(matvec(A.a22, b.U), b.V), cfg)
    return HodlrMatrix.node(C11, C22, C12, C21)


# ---------------------------------------------------------------------------
# Cholesky and triangular solves (upper triangular factors)
# ---------------------------------------------------------------------------

def cholesky(M, cfg=DEFAULT_TRUNCATION, _path=()):
    """Upper triangular HODLR ``R`` with ``M ~= R.T @ R`` for symmetric positive definite ``M``.

    Only the upper off-diagonal blocks of ``M`` are read.  Raises
    :class:`IndefiniteMatrix` carrying the tree path of the failing leaf.
    """
    if M.shape[0] != M.shape[1]:
        raise StructureError("cholesky needs a square matrix")
    if M.is_leaf:
        D = M.dense
        if D.shape[0] == 0:
            return HodlrMatrix.leaf(np.zeros((0, 0)))
        try:
            L = np.linalg.cholesky(0.5 * (D + D.T))
        except np.linalg.LinAlgError:
            raise IndefiniteMatrix(
                f"leaf at path {list(_path)} is not positive definite",
                path=tuple(_path), level=len(_path)) from None
        return HodlrMatrix.leaf(np.ascontiguousarray(L.T))
    R11 = cholesky(M.a11, cfg, _path + (0,))
    b = M.b12
    R12 = recompress(solve_triangular_left(R11, b.U, trans=True), b.V, cfg)
    S = M.a22
    if R12.rank:
        G = R12.U.T @ R12.U
        S = _add_lowrank(S, -(R12.V @ G), R12.V, cfg)
    R22 = cholesky(S, cfg, _path + (1,))
    m2, n1 = M.b21.shape
    return HodlrMatrix.node(R11, R22, R12, LowRank.zeros(m2, n1))


def _leaf_solve(D, B, trans):
    if D.shape[0] == 0 or B.size == 0:
        return np.zeros((D.shape[1],) + B.shape[1:])
    if np.any(np.diagonal(D) == 0.0):
        raise SingularTriangular("zero on the diagonal of a triangular leaf")
    return sla.solve_triangular(D, B, lower=False, trans="T" if trans else "N",
                                check_finite=False)


def solve_triangular_left(T, B, trans=False):
    """Solve ``T X = B`` (or ``T.T X = B``) for upper triangular HODLR ``T``."""
    B = np.asarray(B, dtype=np.float64)
    if T.shape[0] != T.shape[1] or B.shape[0] != T.shape[0]:
        raise StructureError(f"cannot solve with {T.shape} and right-hand side {B.shape}")
    return _tsolve(T, B, trans)


def _tsolve(T, B, trans):
    if T.is_leaf:
        return _leaf_solve(T.dense, B, trans)
    n1 = T.a11.shape[0]
    B1, B2 = B[:n1], B[n1:]
    b = T.b12
    if trans:
        X1 = _tsolve(T.a11, B1, True)
        X2 = _tsolve(T.a22, B2 - b.V @ (b.U.T @ X1), True)
    else:
        X2 = _tsolve(T.a22, B2, False)
        X1 = _tsolve(T.a11, B1 - b.U @ (b.V.T @ X2), False)
    return np.concatenate([X1, X2])


def multiply_triangular_inverse_right(M, T, cfg=DEFAULT_TRUNCATION, trans=False):
    """``M @ inv(T)`` (or ``M @ inv(T).T``) for upper triangular HODLR ``T``.

    The column tree of ``M`` must match the tree of ``T``.
    """
    if T.shape[0] != T.shape[1] or M.shape[1] != T.shape[0]:
        raise StructureError(f"cannot apply inverse of {T.shape} to {M.shape}")
    return _rsolve(M, T, cfg, trans)


def _rsolve(M, T, cfg, trans):
    if M.is_leaf and T.is_leaf:
        D = T.dense
        if M.dense.size == 0:
            return HodlrMatrix.leaf(np.zeros(M.shape))
        # X D = M  <=>  D.T X.T = M.T
        return HodlrMatrix.leaf(np.ascontiguousarray(_leaf_solve(D, M.dense.T, not trans).T))
    if M.is_leaf or T.is_leaf or M.a11.shape[1] != T.a11.shape[0]:
        raise StructureError("triangular inverse needs matching trees")
    t = T.b12
    if not trans:
        X11 = _rsolve(M.a11, T.a11, cfg, False)
        b = M.b21
        X21 = LowRank(b.U, _tsolve(T.a11, b.V, True))
        b = M.b12
        if t.rank:
            U = np.hstack([b.U, -matvec(X11, t.U)])
            V = _tsolve(T.a22, np.hstack([b.V, t.V]), True)
            X12 = recompress(U, V, cfg)
        else:
            X12 = LowRank(b.U, _tsolve(T.a22, b.V, True))
        S = M.a22
        if t.rank and X21.rank:
            p = _lr_product(X21, t)
            S = _add_lowrank(S, -p.U, p.V, cfg)
        X22 = _rsolve(S, T.a22, cfg, False)
    else:
        b = M.b12
        X12 = LowRank(b.U, _tsolve(T.a22, b.V, False))
        X22 = _rsolve(M.a22, T.a22, cfg, True)
        S = M.a11
        if t.rank and X12.rank:
            p = _lr_product(X12, t.T)
            S = _add_lowrank(S, -p.U, p.V, cfg)
        X11 = _rsolve(S, T.a11, cfg, True)
        b = M.b21
        if t.rank:
            U = np.hstack([b.U, -matvec(X22, t.V)])
            V = _tsolve(T.a11, np.hstack([b.V, t.U]), False)
            X21 = recompress(U, V, cfg)
        else:
            X21 = LowRank(b.U, _tsolve(T.a11, b.V, False))
    return HodlrMatrix.node(X11, X22, X12, X21)
