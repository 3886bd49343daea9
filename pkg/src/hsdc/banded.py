"""Symmetric banded matrices in LAPACK lower band storage."""

import numpy as np

from .errors import StructureError


class BandedMatrix:
    """Symmetric matrix stored as ``band[d, j] = A[j + d, j]`` for ``d <= b``.

    This is the ``lower=True`` layout accepted by :func:`scipy.linalg.eig_banded`.
    Entries ``band[d, n-d:]`` are padding and kept at zero.
    """

    __slots__ = ("band",)

    def __init__(self, band):
        band = np.array(band, dtype=np.float64, ndmin=2)
        if band.ndim != 2 or band.shape[1] == 0:
            raise StructureError("band storage must be a nonempty 2-D array")
        for d in range(1, band.shape[0]):
            band[d, band.shape[1] - d:] = 0.0
        self.band = band

    @property
    def n(self):
        return self.band.shape[1]

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def bandwidth(self):
        """Largest ``d`` with a nonzero subdiagonal (0 for diagonal matrices)."""
        nz = np.flatnonzero(np.any(self.band != 0.0, axis=1))
        return int(nz[-1]) if nz.size else 0

    def diagonal(self):
        return self.band[0].copy()

    @classmethod
    def from_dense(cls, A, bandwidth=None, symmetry_tol=None):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise StructureError(f"expected a square matrix, got shape {A.shape}")
        n = A.shape[0]
        scale = np.abs(A).max() if A.size else 0.0
        tol = 8 * np.finfo(float).eps * scale if symmetry_tol is None else symmetry_tol
        if n and np.abs(A - A.T).max() > tol:
            raise StructureError("matrix is not symmetric")
        if bandwidth is None:
            rows, cols = np.nonzero(A)
            bandwidth = int(np.abs(rows - cols).max()) if rows.size else 0
        band = np.zeros((bandwidth + 1, n))
        for d in range(bandwidth + 1):
            band[d, : n - d] = np.diagonal(A, -d)
        outside = np.tril(A, -bandwidth - 1)
        if np.any(outside != 0.0):
            raise StructureError(f"matrix has entries outside bandwidth {bandwidth}")
        return cls(band)

    @classmethod
    def tridiagonal(cls, diag, offdiag):
        diag = np.asarray(diag, dtype=np.float64)
        band = np.zeros((2, diag.size))
        band[0] = diag
        band[1, : diag.size - 1] = offdiag
        return cls(band)

    def to_dense(self):
        n, b = self.n, self.band.shape[0] - 1
        A = np.zeros((n, n))
        for d in range(b + 1):
            idx = np.arange(n - d)
            A[idx + d, idx] = self.band[d, : n - d]
            A[idx, idx + d] = self.band[d, : n - d]
        return A

    def block(self, r0, r1, c0, c1):
        """Dense copy of ``A[r0:r1, c0:c1]`` without materializing ``A``."""
        out = np.zeros((r1 - r0, c1 - c0))
        b = self.band.shape[0] - 1
        for d in range(-b, b + 1):
            # entries A[i, i - d]
            i_lo = max(r0, c0 + d)
            i_hi = min(r1, c1 + d)
            if i_lo >= i_hi:
                continue
            i = np.arange(i_lo, i_hi)
            j = i - d
            vals = self.band[d, j] if d >= 0 else self.band[-d, i]
            out[i - r0, j - c0] = vals
        return out

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        n = self.n
        if x.shape[0] != n:
            raise StructureError(f"dimension mismatch: {x.shape[0]} != {n}")
        y = self.band[0].reshape((n,) + (1,) * (x.ndim - 1)) * x
        for d in range(1, self.band.shape[0]):
            v = self.band[d, : n - d].reshape((n - d,) + (1,) * (x.ndim - 1))
            y[d:] += v * x[: n - d]
            y[: n - d] += v * x[d:]
        return y

    def __matmul__(self, x):
        return self.matvec(x)

    def norm2(self):
        from scipy.linalg import eigvals_banded

        lam = eigvals_banded(self.band, lower=True)
        return float(np.abs(lam).max())

    def __eq__(self, other):
        if not isinstance(other, BandedMatrix):
            return NotImplemented
        return self.band.shape == other.band.shape and np.array_equal(self.band, other.band)

    def __repr__(self):
        return f"BandedMatrix(n={self.n}, bandwidth={self.bandwidth})"
