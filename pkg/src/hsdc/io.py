"""File formats: Matrix Market band matrices, JSON sidecars and solver output.

A solve writes one directory holding

    eigenvalues.npy      ascending eigenvalues (float64)
    q.hsdcq              factored eigenvector container (layout below)
    diagnostics.jsonl    one JSON record per divide step or dense leaf
    manifest.json        solver config, seed, backend and input sha256

Factored eigenvector container (little-endian):

    magic    8 bytes  b"HSDCFACQ"
    version  u32      currently 1
    n        u64
    nlevels  u32
    perm     i64 * n
    per level: u64 block count, then per block
        u64 offset, u8 tag
        tag 0 (dense):  u64 m, m*m floats (row-major)
        tag 1 (pair):   two HODLR containers back to back
"""

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .banded import BandedMatrix
from .errors import StructureError
from .hodlr import serialize
from .sdc import FactoredEigenvectors, SolverConfig, SpectralDecomposition

MAGIC_Q = b"HSDCFACQ"
VERSION_Q = 1
_F8 = np.dtype("<f8")

EIGENVALUES = "eigenvalues.npy"
Q_FILE = "q.hsdcq"
DIAGNOSTICS = "diagnostics.jsonl"
MANIFEST = "manifest.json"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Matrix Market
# ---------------------------------------------------------------------------

def write_matrix_market(path, A, comments=()):
    """Write the lower band of ``A`` as ``coordinate real symmetric``, 1-indexed.

    Every band position is stored, zeros included, so the file records the
    bandwidth exactly.  Values use the shortest repr that round-trips.
    """
    n, b = A.n, A.band.shape[0] - 1
    lines = ["%%MatrixMarket matrix coordinate real symmetric"]
    lines += [f"% {c}" for c in comments]
    entries = []
    for j in range(n):
        for d in range(min(b, n - 1 - j) + 1):
            entries.append(f"{j + d + 1} {j + 1} {float(A.band[d, j])!r}")
    lines.append(f"{n} {n} {len(entries)}")
    lines += entries
    Path(path).write_text("\n".join(lines) + "\n")
    return len(entries)


def read_matrix_market(path):
    """Read a real symmetric (or symmetric-valued general) Matrix Market file as a BandedMatrix."""
    try:
        M = sp.coo_matrix(scipy.io.mmread(str(path)))
    except ValueError as exc:
        raise StructureError(f"{path}: {exc}") from exc
    if M.shape[0] != M.shape[1]:
        raise StructureError(f"matrix is not square: {M.shape}")
    n = M.shape[0]
    r, c, v = M.row, M.col, M.data.astype(np.float64)
    lower = r >= c
    upper = sp.coo_matrix((v[~lower], (c[~lower], r[~lower])), shape=M.shape).tocsr()
    low = sp.coo_matrix((v[lower], (r[lower], c[lower])), shape=M.shape).tocsr()
    strict = sp.tril(low, -1).tocsr()
    if upper.nnz and (abs(upper - strict)).max() > 0.0:
        raise StructureError("matrix is not symmetric")
    low = low.tocoo()
    b = int((low.row - low.col).max()) if low.nnz else 0
    band = np.zeros((b + 1, n))
    band[low.row - low.col, low.col] = low.data
    return BandedMatrix(band)


def write_sidecar(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_sidecar(path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# factored eigenvectors
# ---------------------------------------------------------------------------

def dump_factored(q, f):
    f.write(MAGIC_Q)
    f.write(struct.pack("<IQI", VERSION_Q, q.n, len(q.levels)))
    f.write(np.ascontiguousarray(q.perm, dtype="<i8").tobytes())
    for level in q.levels:
        f.write(struct.pack("<Q", len(level)))
        for off, block in level:
            if isinstance(block, tuple):
                f.write(struct.pack("<QB", off, 1))
                serialize.dump(block[0], f)
                serialize.dump(block[1], f)
            else:
                f.write(struct.pack("<QBQ", off, 0, block.shape[0]))
                f.write(np.ascontiguousarray(block, dtype=_F8).tobytes())


def _read(f, fmt):
    size = struct.calcsize(fmt)
    buf = f.read(size)
    if len(buf) != size:
        raise StructureError("truncated eigenvector container")
    return struct.unpack(fmt, buf)


def load_factored(f):
    if f.read(len(MAGIC_Q)) != MAGIC_Q:
        raise StructureError("not a factored eigenvector container")
    version, n, nlevels = _read(f, "<IQI")
    if version != VERSION_Q:
        raise StructureError(f"unsupported container version {version}")
    buf = f.read(8 * n)
    if len(buf) != 8 * n:
        raise StructureError("truncated eigenvector container")
    perm = np.frombuffer(buf, dtype="<i8").astype(np.int64)
    levels = []
    for _ in range(nlevels):
        (count,) = _read(f, "<Q")
        level = []
        for _ in range(count):
            off, tag = _read(f, "<QB")
            if tag == 1:
                level.append((off, (serialize.load(f), serialize.load(f))))
            elif tag == 0:
                (m,) = _read(f, "<Q")
                buf = f.read(8 * m * m)
                if len(buf) != 8 * m * m:
                    raise StructureError("truncated eigenvector container")
                level.append((off, np.frombuffer(buf, dtype=_F8).astype(np.float64).reshape(m, m)))
            else:
                raise StructureError(f"bad block tag {tag}")
        levels.append(level)
    return FactoredEigenvectors(n, levels, perm)


# ---------------------------------------------------------------------------
# solver output directory
# ---------------------------------------------------------------------------

def jsonable(x):
    if isinstance(x, dict):
        return {k: jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        # JSON has no NaN or infinity
        return float(x) if np.isfinite(x) else None
    return x


def config_dict(cfg):
    return jsonable(dataclasses.asdict(cfg))


def save_decomposition(out, result, manifest=None):
    """Write eigenvalues, factored Q, diagnostics and a manifest into directory ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / EIGENVALUES, np.asarray(result.eigenvalues, dtype=np.float64))
    with open(out / Q_FILE, "wb") as f:
        dump_factored(result.q, f)
    with open(out / DIAGNOSTICS, "w") as f:
        for rec in result.diagnostics:
            f.write(json.dumps(jsonable(rec), sort_keys=True) + "\n")
    data = dict(manifest or {})
    if result.config is not None:
        data.setdefault("config", config_dict(result.config))
        data.setdefault("seed", result.config.seed)
    write_sidecar(out / MANIFEST, jsonable(data))
    return out


def load_decomposition(out):
    out = Path(out)
    lam = np.load(out / EIGENVALUES)
    with open(out / Q_FILE, "rb") as f:
        q = load_factored(f)
    diags = []
    if (out / DIAGNOSTICS).exists():
        diags = [json.loads(line) for line in (out / DIAGNOSTICS).read_text().splitlines() if line]
    manifest = read_sidecar(out / MANIFEST) if (out / MANIFEST).exists() else {}
    cfg = None
    if "config" in manifest:
        c = dict(manifest["config"])
        c["probe_deltas"] = tuple(c.get("probe_deltas", ()))
        cfg = SolverConfig(**c)
    if q.n != lam.size:
        raise StructureError("eigenvalue file and eigenvector container disagree on n")
    return SpectralDecomposition(lam, q, diags, cfg), manifest
