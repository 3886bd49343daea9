import numpy as np
import pytest

from hsdc.banded import BandedMatrix
from hsdc.hodlr import IndexPartition, TruncationConfig, build_from_dense


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_banded(n, b, rng):
    band = rng.standard_normal((b + 1, n))
    return BandedMatrix(band)


def smooth_kernel(n, rng, shift=0.0):
    """Symmetric matrix with numerically low-rank off-diagonal blocks."""
    x = np.sort(rng.uniform(0.0, 1.0, n))
    K = 1.0 / (1.0 + 10.0 * np.abs(x[:, None] - x[None, :]))
    return K + shift * np.eye(n)


def hodlr_from_dense(M, leaf=8, eps=1e-12):
    part = IndexPartition.balanced(M.shape[0], leaf)
    return build_from_dense(M, part, cfg=TruncationConfig(eps))


def spd_kernel(n, rng):
    K = smooth_kernel(n, rng)
    return K @ K.T / n + np.eye(n)


def upper_triangular_hodlr(n, rng, leaf=8):
    """Well-conditioned upper triangular HODLR matrix with exact dense form."""
    from hsdc.hodlr import cholesky

    H = hodlr_from_dense(spd_kernel(n, rng), leaf)
    return cholesky(H, TruncationConfig(1e-14))


def norm2(A):
    return float(np.linalg.norm(A, 2)) if A.size else 0.0
