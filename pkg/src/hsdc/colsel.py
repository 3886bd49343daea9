"""Well-conditioned column selection of a spectral projector and range completion.

Column indices are 0-based.  Within a leaf they appear in pivot order, and
leaves are concatenated in tree order, so ``Pi[C][:, C] ~= R.T @ R`` holds
for the returned ``C`` and ``R`` in exactly that order.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import CompletionDeficient, GapTooSmall, NotPSD
from .hodlr import (
    DEFAULT_TRUNCATION,
    HodlrMatrix,
    LowRank,
    add_lowrank,
    append_columns,
    extract_columns,
    extract_principal_submatrix,
    matvec,
    multiply_triangular_inverse_right,
    recompress,
    rmatvec,
    solve_triangular_left,
    symmetrize,
    to_dense,
)

log = logging.getLogger(__name__)


@dataclass
class ColumnSelection:
    indices: np.ndarray
    factor: HodlrMatrix
    delta: float
    diag_min: float
    n: int

    @property
    def r(self):
        return int(self.indices.size)


@dataclass
class RangeBasis:
    q: HodlrMatrix
    selected: int
    completed: int
    oversampling: int


@dataclass
class CertificateReport:
    r: int
    delta: float
    eps_e: float
    eps_f: float
    kappa: float
    hypothesis: bool
    bound: float

    @property
    def eps_h(self):
        return self.eps_e + self.eps_f

    @property
    def holds(self):
        """True when the bound is applicable and respected (vacuously true otherwise)."""
        return (not self.hypothesis) or self.kappa <= self.bound


def cholp_dense(M, tol=None):
    """Pivoted Cholesky ``M[piv][:, piv] = R.T @ R`` of a PSD matrix.

    Returns ``(R, piv, rank)``.  Pivots at or below ``tol`` (default
    ``1e-8 * ||M||_F``) end the factorization; rows of ``R`` past ``rank``
    are zero.  Ties between maximal pivots go to the lowest index.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("cholp_dense needs a square matrix")
    if tol is None:
        tol = 1e-8 * np.linalg.norm(M)
    R, piv, rank, status = _kernels.cholp(M, tol)
    if status:
        raise NotPSD(f"diagonal update below -{tol:.3e} at step {rank}")
    R[rank:] = 0.0
    return R, piv, int(rank)


def hcholp_inc(M, delta=0.4, cfg=DEFAULT_TRUNCATION):
    """Incomplete Cholesky with pivoting restricted to the dense diagonal leaves.

    A leaf keeps its leading pivots ``r_ii >= delta``; the Schur complement of
    the kept columns is passed to the trailing half of the tree.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if M.shape[0] != M.shape[1]:
        raise ValueError("hcholp_inc needs a square matrix")
    C, R, dmin = _hcholp(M, delta, cfg)
    return ColumnSelection(C, R, delta, dmin, M.shape[0])


def _hcholp(M, delta, cfg):
    if M.is_leaf:
        D = 0.5 * (M.dense + M.dense.T)
        if D.shape[0] == 0:
            return np.zeros(0, dtype=np.int64), HodlrMatrix.leaf(np.zeros((0, 0))), np.inf
        # the projector has unit scale, so truncation noise sets an absolute floor
        R, piv, rank = cholp_dense(D, max(1e-8 * np.linalg.norm(D), 10.0 * cfg.epsilon))
        d = np.diagonal(R)[:rank]
        s = int(np.count_nonzero(d >= delta))
        dmin = float(d[s - 1]) if s else np.inf
        return piv[:s].astype(np.int64), HodlrMatrix.leaf(R[:s, :s].copy()), dmin
    n1 = M.a11.shape[0]
    C1, R11, d1 = _hcholp(M.a11, delta, cfg)
    b = M.b12
    Ut = solve_triangular_left(R11, b.U[C1], trans=True)
    R12 = recompress(Ut, b.V, cfg)
    S = M.a22
    if R12.rank:
        G = R12.U.T @ R12.U
        S = symmetrize(add_lowrank(S, -(R12.V @ G), R12.V, cfg), cfg)
    C2, R22, d2 = _hcholp(S, delta, cfg)
    R = HodlrMatrix.node(R11, R22, LowRank(R12.U, R12.V[C2]), LowRank.zeros(C2.size, C1.size))
    return np.concatenate([C1, n1 + C2]), R, min(d1, d2)


def orthonormal_basis_from_selection(pi, sel, cfg=DEFAULT_TRUNCATION):
    """``Pi[:, C] @ inv(R)`` as an n-by-|C| HODLR matrix."""
    return multiply_triangular_inverse_right(extract_columns(pi, sel.indices), sel.factor, cfg)


def _projected_samples(pi, sel, Q0, k, rng):
    X = rng.standard_normal((pi.shape[0], k))
    PX = matvec(pi, X)
    Z = PX - matvec(Q0, solve_triangular_left(sel.factor, matvec(pi, PX)[sel.indices], trans=True))
    if Q0.shape[1]:
        # one reorthogonalization pass against the selected basis
        Z -= matvec(Q0, rmatvec(Q0, Z))
    return Z


def complete_basis(pi, sel, nu, p=10, rng=None, cfg=DEFAULT_TRUNCATION, rank_tol=1e-7):
    """Orthonormal basis of range(pi) with ``nu`` columns built from the selection.

    Missing directions come from a randomized range finder on the complement
    of the selected columns; the first ``nu - r`` of the pivoted-QR columns
    are appended to the HODLR basis.
    """
    rng = np.random.default_rng() if rng is None else rng
    r = sel.r
    if r > nu:
        raise GapTooSmall(f"selected {r} columns but projector rank is {nu}")
    Q0 = orthonormal_basis_from_selection(pi, sel, cfg)
    k = nu - r
    if k == 0:
        return RangeBasis(Q0, r, 0, p)
    pp = p
    for attempt in range(2):
        Z = _projected_samples(pi, sel, Q0, k + pp, rng)
        Qc, Rz, _ = sla.qr(Z, mode="economic", pivoting=True)
        d = np.abs(np.diagonal(Rz))
        if d.size >= k and d[0] > 0.0 and d[k - 1] > rank_tol * d[0]:
            return RangeBasis(append_columns(Q0, Qc[:, :k], cfg), r, k, pp)
        log.warning("range completion deficient (attempt %d), retrying", attempt + 1)
        pp *= 2
    raise CompletionDeficient(f"could not find {k} independent correction directions")


def selection_conditioning(pi, sel, dense_cap=4096):
    """2-norm condition number of ``Pi[:, C]``."""
    if sel.r == 0:
        return 1.0
    if pi.shape[0] <= dense_cap:
        B = to_dense(extract_columns(pi, sel.indices))
        s = np.linalg.svd(B, compute_uv=False)
    else:
        # Pi[:, C].T Pi[:, C] = Pi^2[C, C] ~= Pi[C, C] for a projector
        G = to_dense(extract_principal_submatrix(pi, np.sort(sel.indices)))
        s = np.sqrt(np.clip(np.linalg.eigvalsh(0.5 * (G + G.T)), 0.0, None))[::-1]
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def _operator_norm(apply, n, rng, steps=20):
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(steps):
        y = apply(apply(x))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x = y / nrm
        est = np.sqrt(nrm)
    return float(est)


def certificate(pi, sel, rng=None, dense_cap=512):
    """Evaluate the condition-number bound for the selected columns.

    Measures ``eps_E = ||Pi[C,C] - R.T R||`` and ``eps_F = ||Pi^2 - Pi||``,
    checks ``1 - delta^2 + eps_H < 1/r`` and, when it holds, the bound
    ``(1/r)(1 + eps_H) / (delta^2 - 1 + 1/r - eps_H)``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n, r, delta = pi.shape[0], sel.r, sel.delta
    C = sel.indices
    if n <= dense_cap:
        P = to_dense(pi)
        Rd = to_dense(sel.factor)
        eps_e = float(np.linalg.norm(P[np.ix_(C, C)] - Rd.T @ Rd, 2)) if r else 0.0
        eps_f = float(np.linalg.norm(P @ P - P, 2))
    else:
        Rf = sel.factor
        sub = extract_principal_submatrix(pi, np.sort(C))
        order = np.argsort(C, kind="stable")

        def e_apply(x):
            y = np.empty_like(x)
            y[order] = matvec(sub, x[order])
            return y - rmatvec(Rf, matvec(Rf, x))

        eps_e = _operator_norm(e_apply, r, rng) if r else 0.0
        eps_f = _operator_norm(lambda x: matvec(pi, matvec(pi, x)) - matvec(pi, x), n, rng)
    kappa = selection_conditioning(pi, sel)
    eps_h = eps_e + eps_f
    hyp = r > 0 and (1.0 - delta ** 2 + eps_h) < 1.0 / r
    bound = (1.0 / r) * (1.0 + eps_h) / (delta ** 2 - 1.0 + 1.0 / r - eps_h) if hyp else np.inf
    return CertificateReport(r, delta, eps_e, eps_f, kappa, bool(hyp), float(bound))
