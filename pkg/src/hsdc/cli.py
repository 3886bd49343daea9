"""Command-line front end: ``hsdc generate | solve | verify | sweep``.

Exit codes: 0 success, 2 numerical breakdown, 3 I/O error, 4 bad configuration.
The log level is read from ``HSDC_LOG_LEVEL`` (default ``WARNING``).
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from . import __version__, _kernels
from . import io as hio
from .banded import BandedMatrix
from .errors import (
    CompletionDeficient,
    DegenerateSplit,
    DepthExceeded,
    GapTooSmall,
    HsdcError,
    NoConvergence,
    StructureError,
)
from .hodlr import serialize, to_dense
from .matgen import (
    GapSpectrumSpec,
    banded_from_spectrum,
    dense_eig,
    error_metrics,
    gap_spectrum,
    named_matrix,
    named_spectrum,
)
from .sdc import SHIFT_MODES, SolverConfig, hsdc

log = logging.getLogger("hsdc")

EXIT_OK, EXIT_BREAKDOWN, EXIT_IO, EXIT_CONFIG = 0, 2, 3, 4
BREAKDOWN = (GapTooSmall, NoConvergence, DegenerateSplit, CompletionDeficient, DepthExceeded)
KINDS = ("gap", "toeplitz121", "clement")
SWEEP_FIELDS = ["sweep", "value", "status", "error", "node", "n", "bandwidth", "gap", "delta",
                "selection_pct", "max_kappa", "e_lambda", "e_res", "e_orth", "e_q", "time",
                "memory_units", "max_rank", "seed"]


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _configure_logging():
    level = os.environ.get("HSDC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def sidecar_path(path):
    return Path(path).with_suffix(".json")


def read_input(path):
    """BandedMatrix from Matrix Market or HodlrMatrix from a binary container."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(len(serialize.MAGIC))
    if head == serialize.MAGIC:
        return serialize.load_path(path)
    return hio.read_matrix_market(path)


def solver_config(args, **overrides):
    kw = dict(epsilon=args.epsilon, delta=args.delta, oversampling=args.oversampling,
              n_stop=args.n_stop, leaf_size=args.leaf_size, seed=args.seed)
    kw.update(overrides)
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def make_matrix(kind, n, b, gap, seed, n_stop):
    """Matrix plus its exact spectrum (ascending)."""
    if kind == "gap":
        rng = np.random.default_rng(seed)
        eigs = gap_spectrum(GapSpectrumSpec(n, gap, n_stop), rng)
        return banded_from_spectrum(eigs, b, rng), eigs
    return named_matrix(kind, n), named_spectrum(kind, n)


def reference(A, spectrum=None, dense_cap=4096):
    """Reference eigenvalues and (under the dense cap) eigenvectors."""
    V = None
    n = A.shape[0]
    if n <= dense_cap:
        D = A.to_dense() if isinstance(A, BandedMatrix) else to_dense(A)
        V, lam = dense_eig(D)
        if spectrum is None:
            spectrum = lam
    elif spectrum is None and isinstance(A, BandedMatrix):
        spectrum = sla.eigvals_banded(A.band, lower=True)
    return spectrum, V


def write_rows(rows, path, fmt, fields):
    out = open(path, "w", newline="") if path else sys.stdout
    try:
        if fmt == "csv":
            w = csv.DictWriter(out, fieldnames=fields, extrasaction="ignore")
            w.writeheader()
            for r in rows:
                w.writerow(r)
        else:
            for r in rows:
                out.write(json.dumps(hio.jsonable(r), sort_keys=True) + "\n")
    finally:
        if path:
            out.close()


def _max_kappa(diags, key_lo="kappa_lo", key_hi="kappa_hi"):
    vals = [max(d[key_lo], d[key_hi]) for d in diags if key_lo in d]
    return max(vals) if vals else float("nan")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args):
    if args.out is None:
        raise ConfigError("generate needs --out")
    A, eigs = make_matrix(args.kind, args.n, args.bandwidth, args.gap, args.seed,
                          args.n_stop or 256)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    nnz = hio.write_matrix_market(out, A, comments=[f"hsdc {__version__} kind={args.kind} seed={args.seed}"])
    meta = {"kind": args.kind, "n": args.n, "bandwidth": A.band.shape[0] - 1, "gap": args.gap,
            "seed": args.seed, "n_stop": args.n_stop or 256, "nnz": nnz,
            "sha256": hio.sha256_file(out), "spectrum": [float(x) for x in eigs]}
    hio.write_sidecar(sidecar_path(out), meta)
    log.info("wrote %s (%d entries)", out, nnz)
    return EXIT_OK


def _load_reference_spectrum(args, n):
    path = Path(args.reference) if args.reference else sidecar_path(args.input)
    if not path.exists():
        return None
    data = hio.read_sidecar(path)
    spec = data.get("spectrum")
    if spec is None or len(spec) != n:
        return None
    return np.asarray(spec, dtype=np.float64)


def cmd_solve(args):
    if args.out is None:
        raise ConfigError("solve needs --out")
    A = read_input(args.input)
    ref = None
    if args.shift_mode == "spectrum_median":
        ref = _load_reference_spectrum(args, A.shape[0])
        if ref is None:
            raise ConfigError("spectrum_median needs a sidecar with the spectrum (--reference)")
    cfg = solver_config(args, shift_mode=args.shift_mode)
    manifest = {"command": "solve", "input": str(args.input),
                "input_sha256": hio.sha256_file(args.input), "backend": _kernels.backend(),
                "version": __version__}
    out = Path(args.out)
    t0 = time.perf_counter()
    try:
        res = hsdc(A, cfg, reference_spectrum=ref)
    except BREAKDOWN as exc:
        out.mkdir(parents=True, exist_ok=True)
        node = getattr(exc, "node", None)
        err = {"kind": "error", "error": type(exc).__name__, "message": str(exc), "node": node,
               "shift": getattr(exc, "shift", None), "iteration": getattr(exc, "iteration", None)}
        with open(out / hio.DIAGNOSTICS, "w") as f:
            for rec in getattr(exc, "diagnostics", []) or []:
                f.write(json.dumps(hio.jsonable(rec), sort_keys=True) + "\n")
            f.write(json.dumps(hio.jsonable(err), sort_keys=True) + "\n")
        manifest.update(config=hio.config_dict(cfg), seed=cfg.seed, status="failed", error=err)
        hio.write_sidecar(out / hio.MANIFEST, hio.jsonable(manifest))
        print(f"{type(exc).__name__} at node {node!r}: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    manifest.update(status="ok", time=time.perf_counter() - t0, n=int(A.shape[0]),
                    memory_units=res.q.memory_units(), max_rank=res.q.max_rank(),
                    selection_pct=res.selection_percentage())
    hio.save_decomposition(out, res, manifest)
    log.info("solved n=%d in %.2fs", A.shape[0], manifest["time"])
    return EXIT_OK


def cmd_verify(args):
    A = read_input(args.input)
    res, manifest = hio.load_decomposition(args.result)
    if res.eigenvalues.size != A.shape[0]:
        raise StructureError("decomposition does not match the matrix size")
    spectrum = _load_reference_spectrum(args, A.shape[0])
    spectrum, V = reference(A, spectrum, args.dense_cap)
    rep = error_metrics(A, res, spectrum, V)
    row = dict(rep.as_dict(), n=int(A.shape[0]), input=str(args.input), result=str(args.result),
               input_sha256=hio.sha256_file(args.input), seed=manifest.get("seed"))
    if manifest.get("input_sha256") not in (None, row["input_sha256"]):
        log.warning("input hash differs from the one recorded at solve time")
    fields = ["n", "e_lambda", "e_res", "e_orth", "e_q", "samples", "sampled", "seed",
              "input_sha256"]
    write_rows([row], args.out, args.format, fields)
    return EXIT_OK


def _sweep_point(kind, n, b, gap, cfg, spectrum_shift, dense_cap):
    A, eigs = make_matrix(kind, n, b, gap, cfg.seed, cfg.n_stop or 256)
    t0 = time.perf_counter()
    res = hsdc(A, cfg, reference_spectrum=eigs if spectrum_shift else None)
    elapsed = time.perf_counter() - t0
    _, V = reference(A, eigs, dense_cap)
    rep = error_metrics(A, res, eigs, V)
    return A, res, rep, elapsed


def cmd_sweep(args):
    grid = args.grid
    if not grid:
        raise ConfigError("sweep needs a nonempty --grid")
    spectrum_shift = args.kind == "gap"
    mode = "spectrum_median" if spectrum_shift else "median"
    base = {"sweep": args.parameter, "bandwidth": args.bandwidth, "seed": args.seed}
    rows = []
    if args.parameter == "delta":
        deltas = tuple(float(d) for d in grid)
        for d in deltas:
            if not 0.0 < d < 1.0:
                raise ConfigError("delta values must lie in (0, 1)")
        cfg = solver_config(args, shift_mode=mode, probe_deltas=deltas,
                            measure_conditioning=True)
        try:
            A, res, rep, elapsed = _sweep_point(args.kind, args.n, args.bandwidth, args.gap, cfg,
                                                spectrum_shift, args.dense_cap)
        except BREAKDOWN as exc:
            rows = [dict(base, value=d, delta=d, n=args.n, gap=args.gap, status="failed",
                         error=type(exc).__name__, node=getattr(exc, "node", None)) for d in deltas]
        else:
            steps = [s for s in res.diagnostics if s["kind"] == "split"]
            for i, d in enumerate(deltas):
                probes = [s["probe"][i] for s in steps]
                pct = float(np.mean([(p["selected_lo"] + p["selected_hi"]) / s["n"]
                                     for p, s in zip(probes, steps)])) if steps else float("nan")
                rows.append(dict(base, value=d, delta=d, n=args.n, gap=args.gap, status="ok",
                                 selection_pct=pct, max_kappa=_max_kappa(probes),
                                 time=elapsed, memory_units=res.q.memory_units(),
                                 max_rank=res.q.max_rank(), **rep.as_dict()))
    else:
        for v in grid:
            n = int(v) if args.parameter == "n" else args.n
            gap = float(v) if args.parameter == "gap" else args.gap
            cfg = solver_config(args, shift_mode=mode)
            row = dict(base, value=v, n=n, gap=gap, delta=cfg.delta)
            try:
                A, res, rep, elapsed = _sweep_point(args.kind, n, args.bandwidth, gap, cfg,
                                                    spectrum_shift, args.dense_cap)
            except BREAKDOWN as exc:
                row.update(status="failed", error=type(exc).__name__,
                           node=getattr(exc, "node", None))
                log.warning("sweep point %s=%s failed: %s", args.parameter, v, exc)
            else:
                row.update(status="ok", selection_pct=res.selection_percentage(), time=elapsed,
                           memory_units=res.q.memory_units(), max_rank=res.q.max_rank(),
                           **rep.as_dict())
            rows.append(row)
    write_rows(rows, args.out, args.format, SWEEP_FIELDS)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _solver_flags(p):
    p.add_argument("--delta", type=float, default=0.4, help="pivot threshold for column selection")
    p.add_argument("--epsilon", type=float, default=1e-10, help="truncation tolerance")
    p.add_argument("--n-stop", type=int, default=None, help="dense base-case size")
    p.add_argument("--leaf-size", type=int, default=None, help="HODLR leaf size")
    p.add_argument("--oversampling", type=int, default=10, help="range finder oversampling")
    p.add_argument("--seed", type=int, default=0)


def _matrix_flags(p, n_default=1024):
    p.add_argument("--kind", choices=KINDS, default="gap")
    p.add_argument("--n", type=int, default=n_default)
    p.add_argument("--bandwidth", type=int, default=1)
    p.add_argument("--gap", type=float, default=1e-2)


def build_parser():
    parser = _Parser(prog="hsdc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hsdc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a test matrix in Matrix Market format")
    _matrix_flags(g)
    g.add_argument("--n-stop", type=int, default=None,
                   help="base-case size the gap spectrum is designed for (default 256)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="compute the factored eigendecomposition")
    s.add_argument("input")
    _solver_flags(s)
    s.add_argument("--shift-mode", choices=SHIFT_MODES, default="median")
    s.add_argument("--reference", default=None, help="sidecar JSON with the exact spectrum")
    s.add_argument("--out", required=True, help="output directory")

    v = sub.add_parser("verify", help="error metrics of a stored decomposition")
    v.add_argument("input")
    v.add_argument("result", help="directory written by solve")
    v.add_argument("--reference", default=None)
    v.add_argument("--dense-cap", type=int, default=4096)
    v.add_argument("--format", choices=("csv", "json"), default="json")
    v.add_argument("--out", default=None)

    w = sub.add_parser("sweep", help="parameter sweep emitting one row per grid point")
    w.add_argument("parameter", choices=("delta", "gap", "n"))
    w.add_argument("--grid", type=float, nargs="+", required=True)
    _matrix_flags(w)
    _solver_flags(w)
    w.add_argument("--dense-cap", type=int, default=4096)
    w.add_argument("--format", choices=("csv", "json"), default="csv")
    w.add_argument("--out", default=None)
    return parser


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "verify": cmd_verify,
            "sweep": cmd_sweep}


def _validate(args):
    for name in ("n", "bandwidth"):
        if getattr(args, name, 1) is not None and getattr(args, name, 1) < 1:
            raise ConfigError(f"--{name} must be positive")
    gap = getattr(args, "gap", 0.5)
    if gap is not None and not 0.0 < gap < 1.0:
        raise ConfigError("--gap must lie in (0, 1)")
    if getattr(args, "kind", None) == "gap" and args.n <= args.bandwidth:
        raise ConfigError("--n must exceed --bandwidth")


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        _validate(args)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"hsdc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, StructureError, json.JSONDecodeError) as exc:
        print(f"hsdc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BREAKDOWN as exc:
        print(f"hsdc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except (ValueError, HsdcError) as exc:
        print(f"hsdc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
