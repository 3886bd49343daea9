"""Test matrices with prescribed spectra, named matrices, dense oracle and error metrics."""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .banded import BandedMatrix
from .hodlr import HodlrMatrix, matvec, to_dense


@dataclass(frozen=True)
class GapSpectrumSpec:
    n: int
    gap: float
    n_stop: int = 256
    interval: tuple = (-1.0, 1.0)
    pin_endpoints: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0.0 < self.gap < 1.0:
            raise ValueError("gap must lie in (0, 1)")
        if self.n_stop < 1:
            raise ValueError("n_stop must be positive")
        c, d = self.interval
        if not c < d:
            raise ValueError("interval must satisfy c < d")


@dataclass(frozen=True)
class ErrorReport:
    e_lambda: float
    e_res: float
    e_orth: float
    e_q: float
    samples: int
    sampled: bool

    def as_dict(self):
        return {"e_lambda": self.e_lambda, "e_res": self.e_res, "e_orth": self.e_orth,
                "e_q": self.e_q, "samples": self.samples, "sampled": self.sampled}


def split_levels(n, n_stop):
    """Number of halvings so that the leaf count is the largest power of two <= n/n_stop (at least one)."""
    k = 1
    while 2 ** (k + 1) <= n / n_stop:
        k += 1
    return k


def _gap_leaves(c, d, count, gap, levels):
    if levels == 0 or count < 2:
        return [(c, d, count)]
    m, h = 0.5 * (c + d), 0.5 * (d - c)
    lo = count // 2
    return (_gap_leaves(c, m - h * gap, lo, gap, levels - 1)
            + _gap_leaves(m + h * gap, d, count - lo, gap, levels - 1))


def gap_spectrum(spec, rng):
    """Sorted eigenvalues whose relative gap equals ``spec.gap`` at every halving.

    The interval is split recursively into two pieces separated by a relative
    gap; each final piece receives an equal share of uniformly drawn
    eigenvalues.  With ``pin_endpoints`` the smallest and largest value of
    every piece sit on its endpoints, so the gap seen at each split is exact.
    """
    c, d = spec.interval
    leaves = _gap_leaves(float(c), float(d), spec.n, spec.gap, split_levels(spec.n, spec.n_stop))
    parts = []
    for lo, hi, k in leaves:
        if spec.pin_endpoints and k >= 2:
            parts.append(np.concatenate([[lo, hi], rng.uniform(lo, hi, k - 2)]))
        else:
            parts.append(rng.uniform(lo, hi, k))
    return np.sort(np.concatenate(parts))


def mid_relative_gap(eigs):
    eigs = np.sort(np.asarray(eigs))
    nu = eigs.size // 2
    return float((eigs[nu] - eigs[nu - 1]) / (eigs[-1] - eigs[0]))


def bordering_angles(weights, rng):
    """Rotation angles that make ``weights`` (normalized) the last row of the eigenvector matrix.

    Bordering index ``k`` with angle ``t`` scales the existing last-row
    entries by ``sin t`` and gives the new eigenvector ``cos t``.
    """
    w = np.abs(np.asarray(weights, dtype=np.float64))
    head = np.sqrt(np.cumsum(w * w))
    sign = rng.choice([-1.0, 1.0], size=w.size - 1)
    return sign * np.arctan2(head[:-1], w[1:])


def banded_from_spectrum(eigs, b, rng, weights="gaussian", widen_sweeps=None):
    """Symmetric ``b``-banded matrix orthogonally similar to ``diag(eigs)``.

    The diagonal is a random permutation of ``eigs``.  Rotations in planes
    ``(k-1, k)`` border in one index at a time and the bulge each one creates
    is chased off the band.  The angles are chosen so the last row of the
    eigenvector matrix is a normalized random Gaussian vector; uniformly
    random angles instead make the weights decay geometrically, which
    yields strongly localized eigenvectors.  ``weights="uniform-angles"``
    keeps that variant.  For ``b > 1`` the tridiagonal matrix is widened by
    ``widen_sweeps`` (default ``b``) passes of random adjacent-plane rotations, with
    every bulge chased off the band.
    """
    eigs = np.asarray(eigs, dtype=np.float64)
    n = eigs.size
    if b < 1:
        raise ValueError("bandwidth must be at least 1")
    if n <= b:
        raise ValueError("need n > b")
    diag = rng.permutation(eigs)
    if weights == "gaussian":
        angles = bordering_angles(rng.standard_normal(n), rng)
    elif weights == "uniform-angles":
        angles = rng.uniform(0.0, 2.0 * np.pi, n - 1)
    else:
        raise ValueError(f"unknown weights {weights!r}")
    if weights == "uniform-angles":
        return BandedMatrix(_kernels.banded_bordering(diag, b, angles))
    band = _kernels.banded_bordering(diag, 1, angles)
    if b > 1:
        band = np.vstack([band, np.zeros((b - 1, n))])
        for _ in range(b if widen_sweeps is None else widen_sweeps):
            band = _kernels.band_rotation_sweep(band, b, rng.uniform(0.0, 2.0 * np.pi, n - 1))
    return BandedMatrix(band)


def named_matrix(kind, n):
    """``toeplitz121`` (tridiag(1, 2, 1)) or ``clement`` (zero diagonal, sqrt(k(n-k)) off-diagonal)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if kind == "toeplitz121":
        return BandedMatrix.tridiagonal(np.full(n, 2.0), np.ones(n - 1))
    if kind == "clement":
        k = np.arange(1, n, dtype=np.float64)
        return BandedMatrix.tridiagonal(np.zeros(n), np.sqrt(k * (n - k)))
    raise ValueError(f"unknown matrix kind {kind!r}")


def named_spectrum(kind, n):
    """Closed-form ascending eigenvalues of the named matrices."""
    if kind == "toeplitz121":
        k = np.arange(1, n + 1)
        return np.sort(2.0 + 2.0 * np.cos(k * np.pi / (n + 1)))
    if kind == "clement":
        return np.arange(-(n - 1), n, 2, dtype=np.float64)
    raise ValueError(f"unknown matrix kind {kind!r}")


def dense_eig(M):
    """Ascending eigenvalues and orthonormal eigenvectors of a dense symmetric matrix."""
    M = np.asarray(M, dtype=np.float64)
    lam, Q = np.linalg.eigh(0.5 * (M + M.T))
    return Q, lam


def _apply_matrix(A, X):
    if isinstance(A, BandedMatrix):
        return A.matvec(X)
    if isinstance(A, HodlrMatrix):
        return matvec(A, X)
    return np.asarray(A) @ X


def _norm2(A):
    if isinstance(A, BandedMatrix):
        return A.norm2()
    if isinstance(A, HodlrMatrix):
        A = to_dense(A)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (A + A.T))).max())


def sample_indices(n, full_limit=2048, count=64):
    if n <= full_limit:
        return np.arange(n), False
    return np.unique(np.linspace(0, n - 1, count).round().astype(np.int64)), True


def _clusters(lam, tol):
    """Start/stop index of the cluster containing each eigenvalue."""
    breaks = np.flatnonzero(np.diff(lam) > tol) + 1
    starts = np.concatenate([[0], breaks])
    stops = np.concatenate([breaks, [lam.size]])
    owner = np.repeat(np.arange(starts.size), stops - starts)
    return starts[owner], stops[owner]


def error_metrics(A, result, reference_eigenvalues=None, reference_vectors=None,
                  full_limit=2048, samples=64, norm=None):
    """Largest relative eigenvalue error, residual, orthogonality loss and eigenvector error.

    ``result`` is a SpectralDecomposition.  Eigenvector quantities use columns
    ``i`` over all indices for ``n <= full_limit`` and a stratified sample
    otherwise.  Metrics needing a reference are NaN when it is absent.
    """
    lam = np.asarray(result.eigenvalues)
    n = lam.size
    nrm = _norm2(A) if norm is None else float(norm)
    idx, sampled = sample_indices(n, full_limit, samples)
    E = np.zeros((n, idx.size))
    E[idx, np.arange(idx.size)] = 1.0
    Qi = result.q.apply_q(E)
    R = _apply_matrix(A, Qi) - Qi * lam[idx]
    e_res = float(np.linalg.norm(R, axis=0).max() / nrm)
    G = result.q.apply_q_transpose(Qi) - E
    e_orth = float(np.linalg.norm(G, axis=0).max())
    e_lambda = e_q = float("nan")
    if reference_eigenvalues is not None:
        ref = np.sort(np.asarray(reference_eigenvalues, dtype=np.float64))
        e_lambda = float(np.abs(lam - ref).max() / nrm)
    if reference_vectors is not None:
        ref = np.asarray(reference_eigenvalues, dtype=np.float64)
        V = np.asarray(reference_vectors)
        lo, hi = _clusters(ref, 1e-10 * nrm)
        cos = np.empty(idx.size)
        for t, i in enumerate(idx):
            q = Qi[:, t]
            W = V[:, lo[i]:hi[i]]
            cos[t] = np.linalg.norm(W.T @ q) / np.linalg.norm(q)
        e_q = float(np.abs(1.0 - cos).max())
    return ErrorReport(e_lambda, e_res, e_orth, e_q, int(idx.size), bool(sampled))
