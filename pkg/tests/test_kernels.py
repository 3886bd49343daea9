import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.linalg import eigvals_banded

from hsdc import _kernels

needs_numba = pytest.mark.skipif(not _kernels.NUMBA_AVAILABLE, reason="numba not installed")


def psd(n, r, rng):
    G = rng.standard_normal((n, r))
    return G @ G.T


@needs_numba
@pytest.mark.parametrize("n,r", [(1, 1), (5, 5), (12, 5), (40, 17)])
def test_cholp_backends_agree(n, r, rng):
    M = psd(n, r, rng)
    tol = 1e-8 * np.linalg.norm(M)
    R1, p1, k1, s1 = _kernels.cholp_numba(M, tol)
    R2, p2, k2, s2 = _kernels.cholp_numpy(M, tol)
    assert (k1, s1) == (k2, s2) == (r, 0)
    assert np.array_equal(p1, p2)
    assert np.allclose(R1, R2, atol=1e-12 * np.linalg.norm(M))


@needs_numba
def test_cholp_backends_flag_indefinite():
    M = np.diag([2.0, 1.0, -1.0])
    assert _kernels.cholp_numba(M, 1e-8)[3] == 1
    assert _kernels.cholp_numpy(M, 1e-8)[3] == 1


@needs_numba
@pytest.mark.parametrize("n,b", [(3, 2), (9, 2), (30, 3), (64, 5)])
def test_sweep_backends_agree(n, b, rng):
    band = np.zeros((b + 1, n))
    band[0] = rng.standard_normal(n)
    band[1, : n - 1] = rng.standard_normal(n - 1)
    angles = rng.uniform(0, 2 * np.pi, n - 1)
    c, s = np.cos(angles), np.sin(angles)
    B1 = _kernels.sweep_numba(band, b, c, s)
    B2 = _kernels.sweep_numpy(band, b, c, s)
    assert np.allclose(B1, B2, atol=1e-13)


@pytest.mark.parametrize("n,b", [(10, 1), (40, 3), (80, 6)])
def test_sweep_preserves_spectrum_and_band(n, b, rng):
    lam = np.sort(rng.standard_normal(n))
    band = _kernels.banded_bordering(lam, b, rng.uniform(0, 2 * np.pi, n - 1))
    for _ in range(3 if b > 1 else 0):
        band = _kernels.band_rotation_sweep(band, b, rng.uniform(0, 2 * np.pi, n - 1))
    assert band.shape == (b + 1, n)
    assert np.allclose(np.sort(eigvals_banded(band, lower=True)), lam, atol=1e-12 * n)


def test_sweep_rejects_wider_input():
    with pytest.raises(ValueError):
        _kernels.band_rotation_sweep(np.zeros((4, 8)), 2, np.zeros(7))


def test_bandwidth_one_sweep_needs_diagonal_input():
    band = np.ones((2, 6))
    with pytest.raises(ValueError):
        _kernels.band_rotation_sweep(band, 1, np.zeros(5))


def _backend_in_subprocess(value):
    env = dict(os.environ, HSDC_DISABLE_NUMBA=value)
    out = subprocess.run([sys.executable, "-c", "from hsdc import _kernels; print(_kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    return out.stdout.strip()


def test_env_var_selects_numpy_backend():
    assert _backend_in_subprocess("1") == "numpy"
    expected = "numba" if _kernels.NUMBA_AVAILABLE else "numpy"
    assert _backend_in_subprocess("0") == expected
