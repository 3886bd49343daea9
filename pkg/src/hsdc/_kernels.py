"""Hot inner loops, each with a numba implementation and a numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``HSDC_DISABLE_NUMBA`` is unset (or ``0``).  Both paths consume the
same inputs, so random draws happen outside the kernels and results agree to
round-off.
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _env_disabled():
    return os.environ.get("HSDC_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and not _env_disabled()


def backend():
    """Name of the active kernel backend (``"numba"`` or ``"numpy"``)."""
    return "numba" if USE_NUMBA else "numpy"


def _jit(fn):
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# pivoted Cholesky (dense, symmetric positive semidefinite)
# ---------------------------------------------------------------------------

def _cholp_loops(M, tol):
    n = M.shape[0]
    A = M.copy()
    R = np.zeros((n, n))
    piv = np.arange(n)
    rank = n
    status = 0
    for i in range(n):
        j = i
        dmax = A[i, i]
        dmin = A[i, i]
        for t in range(i + 1, n):
            d = A[t, t]
            if d > dmax:
                dmax = d
                j = t
            if d < dmin:
                dmin = d
        if dmin < -tol:
            status = 1
            rank = i
            break
        if dmax <= tol:
            rank = i
            break
        if j != i:
            for t in range(n):
                tmp = A[i, t]
                A[i, t] = A[j, t]
                A[j, t] = tmp
            for t in range(n):
                tmp = A[t, i]
                A[t, i] = A[t, j]
                A[t, j] = tmp
            for t in range(i):
                tmp = R[t, i]
                R[t, i] = R[t, j]
                R[t, j] = tmp
            tp = piv[i]
            piv[i] = piv[j]
            piv[j] = tp
        rii = math.sqrt(A[i, i])
        R[i, i] = rii
        for t in range(i + 1, n):
            R[i, t] = A[i, t] / rii
        for u in range(i + 1, n):
            ru = R[i, u]
            for v in range(i + 1, n):
                A[u, v] -= ru * R[i, v]
    return R, piv, rank, status


cholp_numba = _jit(_cholp_loops)


def cholp_numpy(M, tol):
    n = M.shape[0]
    A = np.array(M, dtype=float, copy=True)
    R = np.zeros((n, n))
    piv = np.arange(n)
    for i in range(n):
        d = np.diagonal(A)[i:]
        if d.min() < -tol:
            return R, piv, i, 1
        j = i + int(np.argmax(d))
        if A[j, j] <= tol:
            return R, piv, i, 0
        if j != i:
            A[[i, j], :] = A[[j, i], :]
            A[:, [i, j]] = A[:, [j, i]]
            R[:i, [i, j]] = R[:i, [j, i]]
            piv[[i, j]] = piv[[j, i]]
        rii = math.sqrt(A[i, i])
        R[i, i] = rii
        R[i, i + 1:] = A[i, i + 1:] / rii
        A[i + 1:, i + 1:] -= np.outer(R[i, i + 1:], R[i, i + 1:])
    return R, piv, n, 0


def cholp(M, tol):
    """Pivoted Cholesky ``M[piv][:, piv] = R.T @ R``; returns (R, piv, rank, status).

    ``status`` is 1 when a remaining diagonal entry dropped below ``-tol``.
    """
    M = np.ascontiguousarray(M, dtype=np.float64)
    if USE_NUMBA:
        return cholp_numba(M, float(tol))
    return cholp_numpy(M, float(tol))


# ---------------------------------------------------------------------------
# banded orthogonal similarity: adjacent-plane rotations + two-sided bulge chase
# ---------------------------------------------------------------------------
# Working storage is a row band R[i, j - i + w] = A[i, j] with w = b + 1, one
# diagonal wider than the target so a single bulge fits.

def _rotate_loops(R, p, c, s, w):
    n = R.shape[0]
    q = p + 1
    lo = max(0, p - w)
    hi = min(n - 1, q + w)
    for x in range(lo, hi + 1):
        if x == p or x == q:
            continue
        dp = x - p
        dq = x - q
        ap = R[p, dp + w] if -w <= dp <= w else 0.0
        aq = R[q, dq + w] if -w <= dq <= w else 0.0
        np_ = c * ap - s * aq
        nq = s * ap + c * aq
        if -w <= dp <= w:
            R[p, dp + w] = np_
            R[x, w - dp] = np_
        if -w <= dq <= w:
            R[q, dq + w] = nq
            R[x, w - dq] = nq
    app = R[p, w]
    aqq = R[q, w]
    apq = R[p, w + 1]
    R[p, w] = c * c * app - 2.0 * c * s * apq + s * s * aqq
    R[q, w] = s * s * app + 2.0 * c * s * apq + c * c * aqq
    npq = c * s * (app - aqq) + (c * c - s * s) * apq
    R[p, w + 1] = npq
    R[q, w - 1] = npq


def _sweep_loops(band0, b, cosines, sines):
    n = band0.shape[1]
    w = b + 1
    R = np.zeros((n, 2 * w + 1))
    for d in range(band0.shape[0]):
        for j in range(n - d):
            R[j + d, w - d] = band0[d, j]
            R[j, w + d] = band0[d, j]
    for k in range(1, n):
        _rotate(R, k - 1, cosines[k - 1], sines[k - 1], w)
        i = k - 1
        while i - b >= 0:
            qq = i - b
            x = R[qq, (i + 1 - qq) + w]
            y = R[qq + 1, (i + 1 - qq - 1) + w]
            r = math.hypot(x, y)
            if r == 0.0:
                c = 1.0
                s = 0.0
            else:
                c = y / r
                s = x / r
            _rotate(R, qq, c, s, w)
            R[qq, (i + 1 - qq) + w] = 0.0
            R[i + 1, (qq - i - 1) + w] = 0.0
            i = qq
        # bulge below the plane (only present when the start matrix is banded)
        j = k - 1 + b
        while j + 1 < n:
            y = R[j + 1, 0]
            if y == 0.0:
                break
            x = R[j, 1]
            r = math.hypot(x, y)
            _rotate(R, j, x / r, -y / r, w)
            R[j + 1, 0] = 0.0
            R[j - b, 2 * w] = 0.0
            j += b
    band = np.zeros((b + 1, n))
    for d in range(b + 1):
        for j in range(n - d):
            band[d, j] = R[j + d, w - d]
    return band


if NUMBA_AVAILABLE:
    _rotate = _jit(_rotate_loops)
    sweep_numba = _jit(_sweep_loops)
else:  # pragma: no cover
    _rotate = _rotate_loops
    sweep_numba = None


def _rotate_numpy(R, p, c, s, w):
    n = R.shape[0]
    q = p + 1
    # common columns x in [p - w + 1, p + w], stored in both rows
    ap = R[p, 1:].copy()
    aq = R[q, :-1].copy()
    xs = np.arange(p - w + 1, p + w + 1)
    keep = (xs >= 0) & (xs < n) & (xs != p) & (xs != q)
    np_ = c * ap - s * aq
    nq = s * ap + c * aq
    xk = xs[keep]
    R[p, 1:][keep] = np_[keep]
    R[q, :-1][keep] = nq[keep]
    R[xk, w - (xk - p)] = np_[keep]
    R[xk, w - (xk - q)] = nq[keep]
    app, aqq, apq = R[p, w], R[q, w], R[p, w + 1]
    R[p, w] = c * c * app - 2.0 * c * s * apq + s * s * aqq
    R[q, w] = s * s * app + 2.0 * c * s * apq + c * c * aqq
    npq = c * s * (app - aqq) + (c * c - s * s) * apq
    R[p, w + 1] = npq
    R[q, w - 1] = npq


def sweep_numpy(band0, b, cosines, sines):
    n = band0.shape[1]
    w = b + 1
    R = np.zeros((n, 2 * w + 1))
    for d in range(band0.shape[0]):
        R[d:, w - d] = band0[d, : n - d]
        R[: n - d, w + d] = band0[d, : n - d]
    for k in range(1, n):
        _rotate_numpy(R, k - 1, cosines[k - 1], sines[k - 1], w)
        i = k - 1
        while i - b >= 0:
            qq = i - b
            x = R[qq, b + 1 + w]
            y = R[qq + 1, b + w]
            r = math.hypot(x, y)
            c, s = (1.0, 0.0) if r == 0.0 else (y / r, x / r)
            _rotate_numpy(R, qq, c, s, w)
            R[qq, b + 1 + w] = 0.0
            R[i + 1, w - b - 1] = 0.0
            i = qq
        j = k - 1 + b
        while j + 1 < n and R[j + 1, 0] != 0.0:
            x, y = R[j, 1], R[j + 1, 0]
            r = math.hypot(x, y)
            _rotate_numpy(R, j, x / r, -y / r, w)
            R[j + 1, 0] = 0.0
            R[j - b, 2 * w] = 0.0
            j += b
    band = np.zeros((b + 1, n))
    for d in range(b + 1):
        band[d, : n - d] = R[d:, w - d]
    return band


def band_rotation_sweep(band, b, angles):
    """One similarity sweep over planes ``(k-1, k)``, k = 1..n-1, keeping bandwidth ``b``.

    ``band`` is lower band storage of bandwidth ``<= b``.  Each rotation with
    angle ``angles[k-1]`` may push entries one diagonal past ``b``; the bulge
    above is chased to the top and the one below to the bottom with
    annihilating rotations.  Returns (b+1, n) storage.

    The two bulges only stay independent for ``b >= 2``; with ``b = 1`` the
    input must be diagonal (a pure bordering pass).
    """
    band = np.asarray(band, dtype=np.float64)
    if band.shape[0] > b + 1:
        raise ValueError("input bandwidth exceeds the target")
    if b == 1 and band.shape[0] > 1 and np.any(band[1:] != 0.0):
        raise ValueError("a bandwidth-1 sweep needs a diagonal input")
    angles = np.asarray(angles, dtype=np.float64)
    cosines = np.ascontiguousarray(np.cos(angles))
    sines = np.ascontiguousarray(np.sin(angles))
    band = np.ascontiguousarray(band)
    if USE_NUMBA:
        return sweep_numba(band, int(b), cosines, sines)
    return sweep_numpy(band, int(b), cosines, sines)


def banded_bordering(diag, b, angles):
    """Lower band storage (b+1, n) of an orthogonal similarity of ``diag(diag)``.

    Row k is bordered in with a rotation of angle ``angles[k-1]`` in the plane
    (k-1, k); the bulge this creates is chased to the top with rotations that
    annihilate it, so the bandwidth never exceeds ``b``.
    """
    diag = np.asarray(diag, dtype=np.float64)
    return band_rotation_sweep(diag[None, :], b, angles)
