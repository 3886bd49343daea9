"""Dynamically weighted Halley iteration for the matrix sign function in HODLR arithmetic."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GapTooSmall, IndefiniteMatrix, NoConvergence, ShiftTooCloseToEigenvalue
from .hodlr import (
    DEFAULT_TRUNCATION,
    TruncationConfig,
    add,
    cholesky,
    hodlr_rank,
    matvec,
    multiply,
    multiply_triangular_inverse_right,
    scale,
    shift_diagonal,
    solve_triangular_left,
    symmetrize,
    trace,
    transpose,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignConfig:
    truncation: TruncationConfig = DEFAULT_TRUNCATION
    stop_tol: float = 1e-15
    max_iterations: int = 25
    power_steps: int = 20
    power_tol: float = 1e-3
    safety: float = 1.05
    # after the weighted loop: keep taking plain Halley steps while ||X^2 - I|| exceeds this
    involution_tol: float = 1e-9
    # an iterate further than this from an involution is reported as a breakdown
    involution_fail: float = 1e-2
    # X0^2 + tau*I is factored when X0^2 itself is numerically indefinite
    l0_regularization: float = 1e2
    # l0 used when the regularized estimate cannot resolve sigma_min
    l0_floor: float = 1e-10
    # |X0| = sign(X0) X0 minus resolution * eps must stay positive definite
    resolution: float = 10.0

    def __post_init__(self):
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class HalleyParams:
    a: float
    b: float
    c: float
    l: float


@dataclass
class ProjectorPair:
    pi_lo: object
    pi_hi: object
    nu: int
    iterations: int
    alpha: float
    l0: float
    trace: float
    involution_error: float
    history: list = field(default_factory=list)


def h_weight(l):
    """The optimal weight ``a = h(l)`` of the dynamically weighted Halley step."""
    l2 = l * l
    gamma = np.cbrt(4.0 * (1.0 - l2) / (l2 * l2))
    sg = math.sqrt(1.0 + gamma)
    return sg + 0.5 * math.sqrt(8.0 - 4.0 * gamma + 8.0 * (2.0 - l2) / (l2 * sg))


def halley_step_params(l):
    if not 0.0 < l <= 1.0:
        raise ValueError(f"l must lie in (0, 1], got {l}")
    a = h_weight(l)
    b = (a - 1.0) ** 2 / 4.0
    return HalleyParams(a, b, a + b - 1.0, l)


def update_l(l, params):
    a, b, c = params.a, params.b, params.c
    return min(1.0, l * (a + b * l * l) / (1.0 + c * l * l))


def scalar_iteration_count(l0, stop_tol=1e-15, cap=100):
    """Number of weighted steps the scalar recurrence needs from ``l0``."""
    l, k = l0, 0
    while abs(1.0 - l) > stop_tol and k < cap:
        l = update_l(l, halley_step_params(l))
        k += 1
    return k


def _unit(rng, n):
    x = rng.standard_normal(n)
    return x / np.linalg.norm(x)


def estimate_alpha(A, cfg=SignConfig(), rng=None):
    """Upper estimate of ``||A||_2`` from power iteration on ``A^2``."""
    rng = np.random.default_rng() if rng is None else rng
    n = A.shape[0]
    if n == 0:
        return 1.0
    x = _unit(rng, n)
    est = 0.0
    for _ in range(cfg.power_steps):
        y = matvec(A, matvec(A, x))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            break
        new = math.sqrt(nrm)
        x = y / nrm
        done = abs(new - est) <= cfg.power_tol * new
        est = new
        if done:
            break
    return cfg.safety * est if est > 0.0 else 1.0


def estimate_l0(X0, cfg=SignConfig(), rng=None):
    """Lower estimate of ``sigma_min(X0)`` from inverse power iteration on ``X0^2``.

    The square is factored once with H-Cholesky.  When truncation noise makes
    it indefinite, ``X0^2 + tau*I`` with ``tau = l0_regularization * eps`` is
    factored instead; if ``sigma_min^2`` then stays below ``tau`` the
    conservative ``l0_floor`` is returned.  Failure of the regularized
    factorization means the shift sits (numerically) on an eigenvalue.
    """
    rng = np.random.default_rng() if rng is None else rng
    n = X0.shape[0]
    if n == 0:
        return 1.0
    tc = cfg.truncation
    S = symmetrize(multiply(transpose(X0), X0, tc), tc)
    tau = 0.0
    try:
        R = cholesky(S, tc)
    except IndefiniteMatrix:
        tau = cfg.l0_regularization * tc.epsilon
        try:
            R = cholesky(shift_diagonal(S, tau), tc)
        except IndefiniteMatrix as exc:
            raise ShiftTooCloseToEigenvalue(
                "square of the shifted matrix is numerically singular", iteration=0) from exc
    x = _unit(rng, n)
    est = 0.0
    for _ in range(cfg.power_steps):
        y = solve_triangular_left(R, solve_triangular_left(R, x, trans=True))
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm) or nrm == 0.0:
            raise ShiftTooCloseToEigenvalue("inverse iteration broke down", iteration=0)
        x = y / nrm
        done = abs(nrm - est) <= cfg.power_tol * nrm
        est = nrm
        if done:
            break
    s2 = 1.0 / est - tau
    if tau and s2 < tau:
        return min(1.0, cfg.l0_floor)
    return min(1.0, math.sqrt(s2) / cfg.safety)


def involution_error(X, rng, steps=20):
    """Power-iteration estimate of ``||X^2 - I||_2`` for symmetric ``X``."""
    n = X.shape[0]
    if n == 0:
        return 0.0
    x = _unit(rng, n)
    est = 0.0
    for _ in range(steps):
        y = matvec(X, matvec(X, x)) - x
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x = y / nrm
        done = abs(nrm - est) <= 1e-2 * nrm
        est = nrm
        if done:
            break
    return float(est)


def _halley_step(X, p, cfg, k):
    # Truncation is applied on the scale each term enters the update with:
    # c * X^T X is truncated at eps, and V (weighted by ~a) at eps / a.
    tc = cfg.truncation
    G = multiply(transpose(X), X, tc.scaled(1.0 / p.c))
    M = shift_diagonal(scale(G, p.c), 1.0)
    try:
        W = cholesky(M, tc)
    except IndefiniteMatrix as exc:
        raise GapTooSmall(f"H-Cholesky broke down in sign iteration {k}", iteration=k) from exc
    tv = tc.scaled(1.0 / p.a)
    Y = multiply_triangular_inverse_right(X, W, tv)
    V = multiply_triangular_inverse_right(Y, W, tv, trans=True)
    return symmetrize(add(X, V, tc, p.b / p.c, p.a - p.b / p.c), tc)


def _check_resolved(X0, X, cfg, k, shift):
    # eigenvalues of the polar factor X X0 are the singular values of X0
    tc = cfg.truncation
    theta = cfg.resolution * tc.epsilon
    H = symmetrize(multiply(X, X0, tc), tc)
    try:
        cholesky(shift_diagonal(H, -theta), tc)
    except IndefiniteMatrix as exc:
        raise GapTooSmall(f"an eigenvalue lies within {theta:.1e} (relative) of the shift",
                          iteration=k, shift=shift) from exc


def hdwh(A, cfg=SignConfig(), rng=None, shift=0.0):
    """Spectral projectors of ``A - shift*I`` onto its negative and positive eigenspaces."""
    rng = np.random.default_rng() if rng is None else rng
    n = A.shape[0]
    X = shift_diagonal(A, -shift) if shift else A
    alpha = estimate_alpha(X, cfg, rng)
    X = X0 = scale(X, 1.0 / alpha)
    l = l0 = estimate_l0(X, cfg, rng)
    history = []
    k = 0
    while abs(1.0 - l) > cfg.stop_tol:
        if k >= cfg.max_iterations:
            raise NoConvergence(f"sign iteration exceeded {cfg.max_iterations} steps")
        p = halley_step_params(l)
        X = _halley_step(X, p, cfg, k)
        l = update_l(l, p)
        k += 1
        rec = {"k": k, "l": l, "a": p.a, "b": p.b, "c": p.c, "rank": hodlr_rank(X)}
        history.append(rec)
        log.debug("halley step", extra={"record": rec})
    # the scalar bound can reach 1 before the matrix iterate does when l0 overshoots
    err = involution_error(X, rng)
    plain = halley_step_params(1.0)
    while err > cfg.involution_tol and k < cfg.max_iterations:
        X_new = _halley_step(X, plain, cfg, k)
        err_new = involution_error(X_new, rng)
        k += 1
        history.append({"k": k, "l": 1.0, "a": 3.0, "b": 1.0, "c": 3.0,
                        "rank": hodlr_rank(X_new), "involution_error": err_new})
        improved = err_new < 0.5 * err
        X, err = X_new, err_new
        if not improved:
            break
    if err > cfg.involution_fail:
        msg = f"sign iterate is not an involution (||X^2-I|| ~ {err:.2e})"
        if k >= cfg.max_iterations:
            raise NoConvergence(msg)
        raise GapTooSmall(msg, iteration=k, shift=shift)
    _check_resolved(X0, X, cfg, k, shift)
    pi_lo = scale(shift_diagonal(X, -1.0), -0.5)
    pi_hi = scale(shift_diagonal(X, 1.0), 0.5)
    t = trace(pi_lo)
    nu = int(round(t))
    if abs(t - nu) > 0.1:
        raise GapTooSmall(f"projector trace {t:.4f} is not close to an integer",
                          iteration=k, shift=shift)
    return ProjectorPair(pi_lo, pi_hi, nu, k, alpha, l0, t, err, history)
