"""HODLR matrix type, construction and the non-truncating operations."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from ..banded import BandedMatrix
from ..errors import StructureError


@dataclass(frozen=True)
class TruncationConfig:
    """Recompression rule for off-diagonal blocks.

    With ``relative=False`` singular values ``<= epsilon`` are dropped, which
    bounds the 2-norm error of each block by ``epsilon``.  With
    ``relative=True`` the threshold is ``epsilon * sigma_1`` of the block.
    """

    epsilon: float = 1e-10
    max_rank: Optional[int] = None
    relative: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_rank is not None and self.max_rank < 0:
            raise ValueError("max_rank must be nonnegative")

    def scaled(self, factor):
        return TruncationConfig(self.epsilon * factor, self.max_rank, self.relative)

    def keep(self, s):
        if s.size == 0:
            return 0
        tol = self.epsilon * s[0] if self.relative else self.epsilon
        r = int(np.count_nonzero(s > tol))
        if self.max_rank is not None:
            r = min(r, self.max_rank)
        return r


DEFAULT_TRUNCATION = TruncationConfig()


@dataclass(frozen=True)
class IndexPartition:
    """Leaf sizes of a uniform bisection tree with ``2**level`` leaves."""

    level: int
    leaf_sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "leaf_sizes", tuple(int(s) for s in self.leaf_sizes))
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        if len(self.leaf_sizes) != 2 ** self.level:
            raise ValueError(f"need {2 ** self.level} leaves, got {len(self.leaf_sizes)}")
        if any(s < 0 for s in self.leaf_sizes):
            raise ValueError("leaf sizes must be nonnegative")

    @property
    def n(self):
        return sum(self.leaf_sizes)

    @classmethod
    def balanced(cls, n, leaf_size):
        """Bisect ``n`` as ceil/floor halves until every leaf is ``<= leaf_size``."""
        if leaf_size < 1:
            raise ValueError("leaf_size must be positive")
        sizes = [int(n)]
        level = 0
        while max(sizes) > leaf_size:
            sizes = [h for s in sizes for h in ((s + 1) // 2, s // 2)]
            level += 1
        return cls(level, tuple(sizes))

    def coarsen(self):
        """Partition one level up (adjacent leaf pairs merged)."""
        if self.level == 0:
            raise ValueError("level-0 partition has no parent")
        s = self.leaf_sizes
        return IndexPartition(self.level - 1, tuple(s[i] + s[i + 1] for i in range(0, len(s), 2)))

    def halves(self):
        h = len(self.leaf_sizes) // 2
        return (IndexPartition(self.level - 1, self.leaf_sizes[:h]),
                IndexPartition(self.level - 1, self.leaf_sizes[h:]))


class LowRank:
    """Factor pair representing ``U @ V.T``."""

    __slots__ = ("U", "V")

    def __init__(self, U, V):
        U = np.asarray(U, dtype=np.float64)
        V = np.asarray(V, dtype=np.float64)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
            raise StructureError(f"factor shapes {U.shape} and {V.shape} do not match")
        self.U = U
        self.V = V

    @classmethod
    def zeros(cls, m, n):
        return cls(np.zeros((m, 0)), np.zeros((n, 0)))

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def T(self):
        return LowRank(self.V, self.U)

    def to_dense(self):
        return self.U @ self.V.T

    def matvec(self, x):
        return self.U @ (self.V.T @ x)

    def rmatvec(self, x):
        return self.V @ (self.U.T @ x)

    def scaled(self, alpha):
        return LowRank(alpha * self.U, self.V)

    @property
    def size(self):
        return self.U.size + self.V.size


class HodlrMatrix:
    """Recursive 2x2 block matrix with dense leaves and low-rank off-diagonals.

    A leaf holds ``dense``; an internal node holds children ``a11``, ``a22``
    and off-diagonal blocks ``b12`` (upper right) and ``b21`` (lower left).
    Rectangular matrices are allowed; row and column trees have the same shape.
    Instances are treated as immutable.
    """

    __slots__ = ("shape", "dense", "a11", "a22", "b12", "b21")

    def __init__(self, shape, dense=None, a11=None, a22=None, b12=None, b21=None):
        self.shape = (int(shape[0]), int(shape[1]))
        self.dense = dense
        self.a11 = a11
        self.a22 = a22
        self.b12 = b12
        self.b21 = b21

    @classmethod
    def leaf(cls, D):
        D = np.asarray(D, dtype=np.float64)
        if D.ndim != 2:
            raise StructureError("leaf must be a 2-D array")
        return cls(D.shape, dense=D)

    @classmethod
    def node(cls, a11, a22, b12, b21):
        m1, n1 = a11.shape
        m2, n2 = a22.shape
        if b12.shape != (m1, n2) or b21.shape != (m2, n1):
            raise StructureError(
                f"off-diagonal shapes {b12.shape}, {b21.shape} inconsistent with "
                f"diagonal blocks {a11.shape}, {a22.shape}")
        return cls((m1 + m2, n1 + n2), a11=a11, a22=a22, b12=b12, b21=b21)

    @property
    def is_leaf(self):
        return self.dense is not None

    @property
    def depth(self):
        if self.is_leaf:
            return 0
        return 1 + max(self.a11.depth, self.a22.depth)

    @property
    def T(self):
        return transpose(self)

    def __matmul__(self, x):
        return matvec(self, x)

    def leaves(self):
        if self.is_leaf:
            yield self.dense
        else:
            yield from self.a11.leaves()
            yield from self.a22.leaves()

    def blocks(self):
        """Off-diagonal LowRank blocks in pre-order."""
        if not self.is_leaf:
            yield self.b12
            yield self.b21
            yield from self.a11.blocks()
            yield from self.a22.blocks()

    def row_leaf_sizes(self):
        return [D.shape[0] for D in self.leaves()]

    def col_leaf_sizes(self):
        return [D.shape[1] for D in self.leaves()]

    def __repr__(self):
        return (f"HodlrMatrix(shape={self.shape}, depth={self.depth}, "
                f"rank={hodlr_rank(self)})")


# ---------------------------------------------------------------------------
# low-rank compression primitives
# ---------------------------------------------------------------------------

def _svd(B):
    try:
        return np.linalg.svd(B, full_matrices=False)
    except np.linalg.LinAlgError:
        return sla.svd(B, full_matrices=False, lapack_driver="gesvd")


def compress_dense(B, cfg):
    """Truncated SVD of a dense block as a LowRank."""
    m, n = B.shape
    if m == 0 or n == 0 or not np.any(B):
        return LowRank.zeros(m, n)
    U, s, Vt = _svd(B)
    r = cfg.keep(s)
    return LowRank(U[:, :r] * s[:r], Vt[:r].T)


def recompress(U, V, cfg):
    """Truncate ``U @ V.T`` to the tolerance in ``cfg`` (QR of factors + small SVD)."""
    m, k = U.shape
    n = V.shape[0]
    if k == 0 or m == 0 or n == 0:
        return LowRank.zeros(m, n)
    if 2 * k >= min(m, n):
        return compress_dense(U @ V.T, cfg)
    Qu, Ru = np.linalg.qr(U)
    Qv, Rv = np.linalg.qr(V)
    W, s, Zt = _svd(Ru @ Rv.T)
    r = cfg.keep(s)
    return LowRank(Qu @ (W[:, :r] * s[:r]), Qv @ Zt[:r].T)


def recompress_block(block, cfg):
    return recompress(block.U, block.V, cfg)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _as_partition(p, n):
    if isinstance(p, IndexPartition):
        if p.n != n:
            raise StructureError(f"partition covers {p.n} indices, matrix has {n}")
        return p
    raise TypeError("expected an IndexPartition")


def build_from_dense(M, partition, col_partition=None, cfg=DEFAULT_TRUNCATION):
    """HODLR approximation of a dense matrix; off-diagonal blocks by truncated SVD."""
    M = np.asarray(M, dtype=np.float64)
    rp = _as_partition(partition, M.shape[0])
    cp = _as_partition(col_partition if col_partition is not None else partition, M.shape[1])
    if rp.level != cp.level:
        raise StructureError("row and column partitions must have the same level")
    return _build_dense(M, rp.leaf_sizes, cp.leaf_sizes, cfg)


def _build_dense(M, rs, cs, cfg):
    if len(rs) == 1:
        return HodlrMatrix.leaf(M.copy())
    h = len(rs) // 2
    m1 = sum(rs[:h])
    n1 = sum(cs[:h])
    return HodlrMatrix.node(
        _build_dense(M[:m1, :n1], rs[:h], cs[:h], cfg),
        _build_dense(M[m1:, n1:], rs[h:], cs[h:], cfg),
        compress_dense(M[:m1, n1:], cfg),
        compress_dense(M[m1:, :n1], cfg),
    )


def build_from_banded(A, leaf_size, cfg=DEFAULT_TRUNCATION):
    """Exact HODLR representation of a symmetric banded matrix.

    ``A`` is a :class:`BandedMatrix` or a dense symmetric array.  Off-diagonal
    blocks are stored as the nonzero corner columns, so no truncation occurs
    and each block has rank at most the bandwidth.
    """
    if not isinstance(A, BandedMatrix):
        A = BandedMatrix.from_dense(A)
    part = IndexPartition.balanced(A.n, leaf_size)
    return _build_banded(A, 0, A.n, part.leaf_sizes)


def _banded_corner(A, r0, m, r1):
    b = A.band.shape[0] - 1
    top = max(r0, m - b)
    right = min(r1, m + b)
    if top >= m or right <= m:
        return LowRank.zeros(m - r0, r1 - m)
    C = A.block(top, m, m, right)
    nz = np.flatnonzero(np.any(C != 0.0, axis=0))
    k = nz.size
    U = np.zeros((m - r0, k))
    U[top - r0:, :] = C[:, nz]
    V = np.zeros((r1 - m, k))
    V[nz, np.arange(k)] = 1.0
    return LowRank(U, V)


def _build_banded(A, r0, r1, sizes):
    if len(sizes) == 1:
        return HodlrMatrix.leaf(A.block(r0, r1, r0, r1))
    h = len(sizes) // 2
    m = r0 + sum(sizes[:h])
    b12 = _banded_corner(A, r0, m, r1)
    return HodlrMatrix.node(
        _build_banded(A, r0, m, sizes[:h]),
        _build_banded(A, m, r1, sizes[h:]),
        b12,
        b12.T,
    )


def identity(partition):
    return _diag_tree(np.ones(partition.n), partition.leaf_sizes)


def diagonal_matrix(d, partition):
    d = np.asarray(d, dtype=np.float64)
    _as_partition(partition, d.size)
    return _diag_tree(d, partition.leaf_sizes)


def _diag_tree(d, sizes):
    if len(sizes) == 1:
        return HodlrMatrix.leaf(np.diag(d))
    h = len(sizes) // 2
    n1 = sum(sizes[:h])
    n2 = d.size - n1
    return HodlrMatrix.node(_diag_tree(d[:n1], sizes[:h]), _diag_tree(d[n1:], sizes[h:]),
                            LowRank.zeros(n1, n2), LowRank.zeros(n2, n1))


def zeros_like(M):
    if M.is_leaf:
        return HodlrMatrix.leaf(np.zeros(M.shape))
    return HodlrMatrix.node(zeros_like(M.a11), zeros_like(M.a22),
                            LowRank.zeros(*M.b12.shape), LowRank.zeros(*M.b21.shape))


# ---------------------------------------------------------------------------
# exact (non-truncating) operations
# ---------------------------------------------------------------------------

def to_dense(M):
    if M.is_leaf:
        return M.dense.copy()
    m1, n1 = M.a11.shape
    out = np.empty(M.shape)
    out[:m1, :n1] = to_dense(M.a11)
    out[m1:, n1:] = to_dense(M.a22)
    out[:m1, n1:] = M.b12.to_dense()
    out[m1:, :n1] = M.b21.to_dense()
    return out


def _check_vec(x, n):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[0] != n:
        raise StructureError(f"dimension mismatch: operand has {x.shape[0] if x.ndim else 0} rows, expected {n}")
    return x


def matvec(M, x):
    """``M @ x`` for a vector or a block of column vectors."""
    x = _check_vec(x, M.shape[1])
    return _matvec(M, x)


def _matvec(M, x):
    if M.is_leaf:
        return M.dense @ x
    n1 = M.a11.shape[1]
    x1, x2 = x[:n1], x[n1:]
    y1 = _matvec(M.a11, x1) + M.b12.matvec(x2)
    y2 = M.b21.matvec(x1) + _matvec(M.a22, x2)
    return np.concatenate([y1, y2])


def rmatvec(M, x):
    """``M.T @ x`` without forming the transpose."""
    x = _check_vec(x, M.shape[0])
    return _rmatvec(M, x)


def _rmatvec(M, x):
    if M.is_leaf:
        return M.dense.T @ x
    m1 = M.a11.shape[0]
    x1, x2 = x[:m1], x[m1:]
    y1 = _rmatvec(M.a11, x1) + M.b21.rmatvec(x2)
    y2 = M.b12.rmatvec(x1) + _rmatvec(M.a22, x2)
    return np.concatenate([y1, y2])


def transpose(M):
    if M.is_leaf:
        return HodlrMatrix.leaf(M.dense.T)
    return HodlrMatrix.node(transpose(M.a11), transpose(M.a22), M.b21.T, M.b12.T)


def scale(M, alpha):
    if M.is_leaf:
        return HodlrMatrix.leaf(alpha * M.dense)
    return HodlrMatrix.node(scale(M.a11, alpha), scale(M.a22, alpha),
                            M.b12.scaled(alpha), M.b21.scaled(alpha))


def shift_diagonal(M, sigma):
    """``M + sigma * I`` by updating the dense diagonal leaves."""
    if M.is_leaf:
        m, n = M.shape
        if m != n:
            raise StructureError("diagonal shift needs square diagonal leaves")
        D = M.dense.copy()
        D[np.diag_indices(m)] += sigma
        return HodlrMatrix.leaf(D)
    return HodlrMatrix.node(shift_diagonal(M.a11, sigma), shift_diagonal(M.a22, sigma), M.b12, M.b21)


def diagonal(M):
    if M.is_leaf:
        return np.diagonal(M.dense).copy()
    return np.concatenate([diagonal(M.a11), diagonal(M.a22)])


def trace(M):
    return float(sum(np.trace(D) for D in M.leaves()))


def hodlr_rank(M):
    """Maximum rank over all off-diagonal blocks (0 for a single leaf)."""
    return max((b.rank for b in M.blocks()), default=0)


def memory_units(M):
    """Number of stored floating point values."""
    return int(sum(D.size for D in M.leaves()) + sum(b.size for b in M.blocks()))


def frobenius_norm(M):
    total = sum(float(np.sum(D * D)) for D in M.leaves())
    for b in M.blocks():
        if b.rank:
            total += float(np.sum((b.U.T @ b.U) * (b.V.T @ b.V)))
    return float(np.sqrt(max(total, 0.0)))


def norm2_estimate(M, rng, iterations=20, tol=1e-3):
    """Power-iteration estimate of the spectral norm (from below)."""
    n = M.shape[1]
    if n == 0 or M.shape[0] == 0:
        return 0.0
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iterations):
        y = rmatvec(M, matvec(M, x))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        new = np.sqrt(nrm)
        x = y / nrm
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(est)


def same_structure(A, B):
    """True when ``A`` and ``B`` have identical trees and block shapes."""
    if A.shape != B.shape or A.is_leaf != B.is_leaf:
        return False
    if A.is_leaf:
        return True
    return same_structure(A.a11, B.a11) and same_structure(A.a22, B.a22)


# ---------------------------------------------------------------------------
# submatrices and column appending
# ---------------------------------------------------------------------------

def _check_indices(C, n):
    C = np.asarray(C, dtype=np.int64).ravel()
    if C.size and (C.min() < 0 or C.max() >= n):
        raise StructureError(f"indices out of range [0, {n})")
    if np.unique(C).size != C.size:
        raise StructureError("indices must be distinct")
    return C


def extract_principal_submatrix(M, C, prune=True):
    """``M[C][:, C]`` on the induced partition; factor rows are subset, not recompressed.

    Indices may be in any order inside a leaf but must not interleave across
    blocks.  With ``prune=True`` subtrees that lose all indices are removed.
    """
    if M.shape[0] != M.shape[1]:
        raise StructureError("principal submatrix needs a square matrix")
    C = _check_indices(C, M.shape[0])
    if C.size == 0:
        return HodlrMatrix.leaf(np.zeros((0, 0)))
    return _extract(M, C, C, prune)


def extract_columns(M, C):
    """``M[:, C]`` keeping the row tree; empty column leaves are kept for alignment."""
    C = _check_indices(C, M.shape[1])
    return _extract(M, np.arange(M.shape[0]), C, False)


def extract_rows(M, R):
    R = _check_indices(R, M.shape[0])
    return _extract(M, R, np.arange(M.shape[1]), False)


def _extract(M, R, C, prune):
    if M.is_leaf:
        return HodlrMatrix.leaf(M.dense[np.ix_(R, C)])
    m1, n1 = M.a11.shape
    sr = int(np.count_nonzero(R < m1))
    sc = int(np.count_nonzero(C < n1))
    if np.any(R[:sr] >= m1) or np.any(C[:sc] >= n1):
        raise StructureError("indices must follow the block order of the tree")
    R1, R2 = R[:sr], R[sr:] - m1
    C1, C2 = C[:sc], C[sc:] - n1
    if prune:
        if R1.size == 0 and C1.size == 0:
            return _extract(M.a22, R2, C2, prune)
        if R2.size == 0 and C2.size == 0:
            return _extract(M.a11, R1, C1, prune)
    return HodlrMatrix.node(
        _extract(M.a11, R1, C1, prune),
        _extract(M.a22, R2, C2, prune),
        LowRank(M.b12.U[R1], M.b12.V[C2]),
        LowRank(M.b21.U[R2], M.b21.V[C1]),
    )


def append_columns(M, X, cfg=DEFAULT_TRUNCATION):
    """``[M X]`` by enlarging every block that touches the last column."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != M.shape[0]:
        raise StructureError(f"row-count mismatch: {X.shape[0]} != {M.shape[0]}")
    if X.shape[1] == 0:
        return M
    return _append(M, X, cfg)


def _append(M, X, cfg):
    if M.is_leaf:
        return HodlrMatrix.leaf(np.hstack([M.dense, X]))
    m1 = M.a11.shape[0]
    n2 = M.a22.shape[1]
    p = X.shape[1]
    b = M.b12
    V = np.zeros((n2 + p, b.rank + p))
    V[:n2, :b.rank] = b.V
    V[n2:, b.rank:] = np.eye(p)
    b12 = recompress(np.hstack([b.U, X[:m1]]), V, cfg)
    return HodlrMatrix.node(M.a11, _append(M.a22, X[m1:], cfg), b12, M.b21)


# ---------------------------------------------------------------------------
# rebuilding on a new partition
# ---------------------------------------------------------------------------

def _collect(M, r0, r1, c0, c1, ro, co, out):
    """Pieces of M[r0:r1, c0:c1]; offsets (ro, co) locate M inside the query."""
    if r0 >= r1 or c0 >= c1:
        return
    if M.is_leaf:
        out.append((r0 + ro, c0 + co, M.dense[r0:r1, c0:c1], None))
        return
    m1, n1 = M.a11.shape
    _collect(M.a11, r0, min(r1, m1), c0, min(c1, n1), ro, co, out)
    if r0 < m1 and c1 > n1 and M.b12.rank:
        ra, rb = r0, min(r1, m1)
        ca, cb = max(c0, n1), c1
        out.append((ra + ro, ca + co, M.b12.U[ra:rb], M.b12.V[ca - n1:cb - n1]))
    if r1 > m1 and c0 < n1 and M.b21.rank:
        ra, rb = max(r0, m1), r1
        ca, cb = c0, min(c1, n1)
        out.append((ra + ro, ca + co, M.b21.U[ra - m1:rb - m1], M.b21.V[ca:cb]))
    _collect(M.a22, max(r0 - m1, 0), r1 - m1, max(c0 - n1, 0), c1 - n1,
             ro + m1, co + n1, out)


def dense_block(M, r0, r1, c0, c1):
    """Dense copy of ``to_dense(M)[r0:r1, c0:c1]``."""
    pieces = []
    _collect(M, r0, r1, c0, c1, -r0, -c0, pieces)
    out = np.zeros((r1 - r0, c1 - c0))
    for i, j, P, Q in pieces:
        if Q is None:
            out[i:i + P.shape[0], j:j + P.shape[1]] += P
        else:
            out[i:i + P.shape[0], j:j + Q.shape[0]] += P @ Q.T
    return out


def lowrank_block(M, r0, r1, c0, c1, cfg):
    """Recompressed LowRank of ``to_dense(M)[r0:r1, c0:c1]``."""
    pieces = []
    _collect(M, r0, r1, c0, c1, -r0, -c0, pieces)
    m, n = r1 - r0, c1 - c0
    Us, Vs = [], []
    for i, j, P, Q in pieces:
        if Q is None:
            lr = compress_dense(P, cfg)
            P, Q = lr.U, lr.V
        k = P.shape[1]
        if k == 0:
            continue
        U = np.zeros((m, k))
        V = np.zeros((n, k))
        U[i:i + P.shape[0]] = P
        V[j:j + Q.shape[0]] = Q
        Us.append(U)
        Vs.append(V)
    if not Us:
        return LowRank.zeros(m, n)
    return recompress(np.hstack(Us), np.hstack(Vs), cfg)


def reblock(M, partition, cfg=DEFAULT_TRUNCATION):
    """Square HODLR matrix ``M`` rebuilt on a new (balanced) partition."""
    if M.shape[0] != M.shape[1]:
        raise StructureError("reblock needs a square matrix")
    _as_partition(partition, M.shape[0])
    return _reblock(M, 0, partition.leaf_sizes, cfg)


def _reblock(M, r0, sizes, cfg):
    n = sum(sizes)
    if len(sizes) == 1:
        return HodlrMatrix.leaf(dense_block(M, r0, r0 + n, r0, r0 + n))
    h = len(sizes) // 2
    m = r0 + sum(sizes[:h])
    r1 = r0 + n
    return HodlrMatrix.node(
        _reblock(M, r0, sizes[:h], cfg),
        _reblock(M, m, sizes[h:], cfg),
        lowrank_block(M, r0, m, m, r1, cfg),
        lowrank_block(M, m, r1, r0, m, cfg),
    )
