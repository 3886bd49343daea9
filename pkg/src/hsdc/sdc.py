"""Recursive spectral divide-and-conquer eigensolver in HODLR arithmetic."""

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .banded import BandedMatrix
from .colsel import complete_basis, hcholp_inc, selection_conditioning
from .errors import DegenerateSplit, DepthExceeded, GapTooSmall, StructureError
from .hodlr import (
    HodlrMatrix,
    IndexPartition,
    TruncationConfig,
    build_from_banded,
    build_from_dense,
    diagonal,
    frobenius_norm,
    hodlr_rank,
    matvec,
    memory_units,
    multiply,
    reblock,
    rmatvec,
    symmetrize,
    to_dense,
    transpose,
)
from .matgen import dense_eig
from .sign import SignConfig, hdwh

log = logging.getLogger(__name__)

SHIFT_MODES = ("median", "spectrum_median")


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters; ``None`` for ``n_stop``/``leaf_size`` picks bandwidth-based defaults."""

    epsilon: float = 1e-10
    relative_truncation: bool = False
    stop_tol: float = 1e-15
    max_iterations: int = 25
    delta: float = 0.4
    oversampling: int = 10
    n_stop: Optional[int] = None
    leaf_size: Optional[int] = None
    seed: int = 0
    max_depth: int = 48
    shift_mode: str = "median"
    measure_conditioning: bool = False
    probe_deltas: tuple = ()

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.oversampling < 0:
            raise ValueError("oversampling must be nonnegative")
        if self.shift_mode not in SHIFT_MODES:
            raise ValueError(f"shift_mode must be one of {SHIFT_MODES}")
        if self.n_stop is not None and self.n_stop < 1:
            raise ValueError("n_stop must be positive")
        if self.leaf_size is not None and self.leaf_size < 1:
            raise ValueError("leaf_size must be positive")
        if self.n_stop is not None and self.leaf_size is not None and self.n_stop < self.leaf_size:
            raise ValueError("n_stop must be at least leaf_size")

    @property
    def truncation(self):
        return TruncationConfig(self.epsilon, relative=self.relative_truncation)

    @property
    def sign(self):
        return SignConfig(self.truncation, self.stop_tol, self.max_iterations)

    def resolve(self, bandwidth=None):
        """Effective ``(n_stop, leaf_size)`` for an input of the given bandwidth."""
        if self.n_stop is not None:
            n_stop = self.n_stop
        elif bandwidth == 1:
            n_stop = 3250
        elif bandwidth == 2:
            n_stop = 1750
        else:
            n_stop = 2500
        if self.leaf_size is not None:
            leaf = self.leaf_size
        else:
            leaf = min(250 if bandwidth == 1 else 500, n_stop)
        return n_stop, leaf


class FactoredEigenvectors:
    """Eigenvector matrix kept as a product of block-diagonal orthonormal factors.

    ``levels[d]`` lists ``(offset, block)`` pairs for recursion depth ``d``.  A
    block is either a pair ``(H1, H2)`` of HODLR bases acting as ``[H1 H2]``
    on rows ``offset:offset+n``, or a dense orthogonal matrix from a base
    case.  Rows a level does not touch are left unchanged.  ``perm`` sorts the
    leaf eigenvalue order into ascending order.
    """

    def __init__(self, n, levels, perm):
        self.n = int(n)
        self.levels = levels
        self.perm = np.asarray(perm, dtype=np.int64)

    @staticmethod
    def _block_size(block):
        if isinstance(block, tuple):
            return block[0].shape[0]
        return block.shape[0]

    def _check(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim not in (1, 2) or v.shape[0] != self.n:
            raise StructureError(f"dimension mismatch: expected {self.n} rows")
        return v

    def apply_q(self, v):
        """``Q @ v`` with columns of ``Q`` in ascending-eigenvalue order."""
        v = self._check(v)
        y = np.zeros_like(v)
        y[self.perm] = v
        for level in reversed(self.levels):
            for off, block in level:
                m = self._block_size(block)
                seg = y[off:off + m]
                if isinstance(block, tuple):
                    H1, H2 = block
                    k = H1.shape[1]
                    y[off:off + m] = matvec(H1, seg[:k]) + matvec(H2, seg[k:])
                else:
                    y[off:off + m] = block @ seg
        return y

    def apply_q_transpose(self, v):
        """``Q.T @ v``."""
        y = self._check(v).copy()
        for level in self.levels:
            for off, block in level:
                m = self._block_size(block)
                seg = y[off:off + m]
                if isinstance(block, tuple):
                    H1, H2 = block
                    y[off:off + m] = np.concatenate([rmatvec(H1, seg), rmatvec(H2, seg)])
                else:
                    y[off:off + m] = block.T @ seg
        return y[self.perm]

    def materialize_q(self, cap=4096):
        if self.n > cap:
            raise ValueError(f"n = {self.n} exceeds the dense cap {cap}")
        return self.apply_q(np.eye(self.n))

    def memory_units(self):
        total = self.perm.size
        for level in self.levels:
            for _, block in level:
                if isinstance(block, tuple):
                    total += memory_units(block[0]) + memory_units(block[1])
                else:
                    total += block.size
        return int(total)

    def max_rank(self):
        return max((hodlr_rank(H) for level in self.levels for _, b in level
                    if isinstance(b, tuple) for H in b), default=0)


@dataclass
class SpectralDecomposition:
    eigenvalues: np.ndarray
    q: FactoredEigenvectors
    diagnostics: list = field(default_factory=list)
    config: Optional[SolverConfig] = None

    def selection_percentage(self):
        """Average over divide steps of ``(|C_lo| + |C_hi|) / n``."""
        steps = [d for d in self.diagnostics if d["kind"] == "split"]
        if not steps:
            return float("nan")
        return float(np.mean([(d["selected_lo"] + d["selected_hi"]) / d["n"] for d in steps]))


def choose_shift(A):
    """Median of the diagonal."""
    return float(np.median(diagonal(A)))


def to_hodlr(A, leaf_size, cfg=None):
    """HODLR form of a banded, dense or HODLR input plus its bandwidth (None if unknown)."""
    if isinstance(A, HodlrMatrix):
        return A, None
    if isinstance(A, BandedMatrix):
        return build_from_banded(A, leaf_size), A.bandwidth
    A = np.asarray(A, dtype=np.float64)
    B = BandedMatrix.from_dense(A)
    if B.bandwidth <= max(1, A.shape[0] // 8):
        return build_from_banded(B, leaf_size), B.bandwidth
    cfg = cfg or TruncationConfig()
    return build_from_dense(A, IndexPartition.balanced(A.shape[0], leaf_size), cfg=cfg), None


def congruence(A, Q, cfg, leaf_size):
    """``Q.T A Q`` symmetrized and rebuilt on a balanced partition."""
    AQ = multiply(A, Q, cfg)
    B = symmetrize(multiply(transpose(Q), AQ, cfg), cfg)
    return reblock(B, IndexPartition.balanced(B.shape[0], leaf_size), cfg)


class _Driver:
    def __init__(self, cfg, n_stop, leaf_size):
        self.cfg = cfg
        self.n_stop = n_stop
        self.leaf_size = leaf_size
        self.tc = cfg.truncation
        self.sign_cfg = cfg.sign
        self.rng = np.random.default_rng(cfg.seed)
        self.levels = []
        self.diagnostics = []

    def _level(self, depth):
        while len(self.levels) <= depth:
            self.levels.append([])
        return self.levels[depth]

    def shifts(self, A, ref):
        if self.cfg.shift_mode == "spectrum_median" and ref is not None:
            k = ref.size // 2
            yield 0.5 * (ref[k - 1] + ref[k])
            return
        d = diagonal(A)
        mu = float(np.median(d))
        lo, hi = float(d.min()), float(d.max())
        width = hi - lo
        if width == 0.0:
            width = frobenius_norm(A) / np.sqrt(A.shape[0])
        yield mu
        for f in (0.05, -0.05, 0.10):
            yield mu + f * width
        yield 0.5 * (lo + hi)

    def solve(self, A, depth=0, path="", offset=0, ref=None):
        n = A.shape[0]
        if depth > self.cfg.max_depth:
            raise DepthExceeded(f"recursion depth {depth} exceeds {self.cfg.max_depth}")
        if n <= self.n_stop:
            t0 = time.perf_counter()
            V, lam = dense_eig(to_dense(A))
            self._level(depth).append((offset, V))
            self.diagnostics.append({"kind": "leaf", "path": path, "depth": depth, "n": n,
                                     "time": time.perf_counter() - t0})
            return lam
        rec = {"kind": "split", "path": path, "depth": depth, "n": n}
        t0 = time.perf_counter()
        pp = cand = first_error = None
        tried = []
        for mu in self.shifts(A, ref):
            tried.append(mu)
            try:
                cand = hdwh(A, self.sign_cfg, self.rng, shift=mu)
            except GapTooSmall as exc:
                # a shift on (or next to) an eigenvalue: move on to the next candidate
                exc.node = path
                if exc.shift is None:
                    exc.shift = mu
                exc.diagnostics = self.diagnostics
                first_error = first_error or exc
                log.info("breakdown at node %r with shift %.6g: %s", path, mu, exc)
                continue
            if 0 < cand.nu < n:
                pp = cand
                break
            log.info("degenerate split at node %r with shift %.6g (nu=%d)", path, mu, cand.nu)
        if pp is None:
            if cand is None:
                raise first_error
            raise DegenerateSplit(f"no shift among {tried} splits the spectrum at node {path!r}",
                                  nu=cand.nu, shift=tried[-1])
        nu = pp.nu
        rec.update(shift=tried[-1], attempts=len(tried), nu=nu, iterations=pp.iterations,
                   alpha=pp.alpha, l0=pp.l0, trace=pp.trace,
                   involution_error=pp.involution_error, rank_sign=hodlr_rank(pp.pi_lo))
        t1 = time.perf_counter()
        sel_lo = hcholp_inc(pp.pi_lo, self.cfg.delta, self.tc)
        sel_hi = hcholp_inc(pp.pi_hi, self.cfg.delta, self.tc)
        t2 = time.perf_counter()
        if self.cfg.measure_conditioning:
            rec["kappa_lo"] = selection_conditioning(pp.pi_lo, sel_lo)
            rec["kappa_hi"] = selection_conditioning(pp.pi_hi, sel_hi)
        if self.cfg.probe_deltas:
            rec["probe"] = [self._probe(pp, d) for d in self.cfg.probe_deltas]
        t3 = time.perf_counter()
        q_lo = complete_basis(pp.pi_lo, sel_lo, nu, self.cfg.oversampling, self.rng, self.tc)
        q_hi = complete_basis(pp.pi_hi, sel_hi, n - nu, self.cfg.oversampling, self.rng, self.tc)
        t4 = time.perf_counter()
        A_lo = congruence(A, q_lo.q, self.tc, self.leaf_size)
        A_hi = congruence(A, q_hi.q, self.tc, self.leaf_size)
        t5 = time.perf_counter()
        rec.update(selected_lo=sel_lo.r, selected_hi=sel_hi.r,
                   completed_lo=q_lo.completed, completed_hi=q_hi.completed,
                   rank_q=max(hodlr_rank(q_lo.q), hodlr_rank(q_hi.q)),
                   time_sign=t1 - t0, time_select=t2 - t1, time_complete=t4 - t3,
                   time_congruence=t5 - t4)
        self.diagnostics.append(rec)
        log.info("split node %r: n=%d shift=%.6g nu=%d |C|=%d+%d its=%d", path, n, rec["shift"],
                 nu, sel_lo.r, sel_hi.r, pp.iterations)
        self._level(depth).append((offset, (q_lo.q, q_hi.q)))
        del pp, sel_lo, sel_hi, q_lo, q_hi
        ref_lo = ref[:nu] if ref is not None else None
        ref_hi = ref[nu:] if ref is not None else None
        lam_lo = self.solve(A_lo, depth + 1, path + "0", offset, ref_lo)
        del A_lo
        lam_hi = self.solve(A_hi, depth + 1, path + "1", offset + nu, ref_hi)
        return np.concatenate([lam_lo, lam_hi])

    def _probe(self, pp, delta):
        out = {"delta": delta}
        for side, pi in (("lo", pp.pi_lo), ("hi", pp.pi_hi)):
            sel = hcholp_inc(pi, delta, self.tc)
            out[f"selected_{side}"] = sel.r
            if self.cfg.measure_conditioning:
                out[f"kappa_{side}"] = selection_conditioning(pi, sel)
        return out


def hsdc(A, cfg=SolverConfig(), reference_spectrum=None):
    """Eigenvalues (ascending) and factored eigenvectors of a symmetric matrix.

    ``A`` may be a :class:`BandedMatrix`, a dense symmetric array or a
    :class:`HodlrMatrix`.  ``reference_spectrum`` is only consulted with
    ``shift_mode="spectrum_median"``, where each divide step splits at the
    median of the known eigenvalues instead of the median of the diagonal.
    """
    bandwidth = A.bandwidth if isinstance(A, BandedMatrix) else None
    if not isinstance(A, (BandedMatrix, HodlrMatrix)):
        bandwidth = BandedMatrix.from_dense(A).bandwidth
    n_stop, leaf = cfg.resolve(bandwidth)
    H, _ = to_hodlr(A, leaf, cfg.truncation)
    if H.shape[0] != H.shape[1]:
        raise StructureError("matrix must be square")
    ref = None
    if cfg.shift_mode == "spectrum_median":
        if reference_spectrum is None:
            raise ValueError("spectrum_median shift mode needs a reference spectrum")
        ref = np.sort(np.asarray(reference_spectrum, dtype=np.float64))
        if ref.size != H.shape[0]:
            raise ValueError("reference spectrum has the wrong length")
    drv = _Driver(cfg, n_stop, leaf)
    lam = drv.solve(H, ref=ref)
    perm = np.argsort(lam, kind="stable")
    q = FactoredEigenvectors(H.shape[0], drv.levels, perm)
    return SpectralDecomposition(lam[perm], q, drv.diagnostics, cfg)
