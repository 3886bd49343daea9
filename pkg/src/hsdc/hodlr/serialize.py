"""Binary container for HODLR matrices.

Layout (all integers unsigned little-endian, floats IEEE float64 little-endian):

    magic      8 bytes  b"HSDCHODL"
    version    u32      currently 1
    m, n       u64 u64  matrix shape
    level      u32      tree depth
    nleaves    u64      number of leaves
    row sizes  u64 * nleaves
    col sizes  u64 * nleaves
    node stream, pre-order:
        leaf:     u8 tag 0, u64 rows, u64 cols, rows*cols floats (row-major)
        internal: u8 tag 1, then b12 and b21 each as
                  u64 rows, u64 cols, u64 rank, U (rows*rank), V (cols*rank),
                  then the a11 subtree, then the a22 subtree

Several containers may be written back to back into one stream.
"""

import io
import struct

import numpy as np

from ..errors import StructureError
from .matrix import HodlrMatrix, LowRank

MAGIC = b"HSDCHODL"
VERSION = 1
_F8 = np.dtype("<f8")


def _write_array(f, A):
    f.write(np.ascontiguousarray(A, dtype=_F8).tobytes())


def _read_exact(f, nbytes):
    buf = f.read(nbytes)
    if len(buf) != nbytes:
        raise StructureError("truncated HODLR container")
    return buf


def _read_array(f, shape):
    count = int(np.prod(shape))
    return np.frombuffer(_read_exact(f, 8 * count), dtype=_F8).astype(np.float64).reshape(shape)


def _unpack(f, fmt):
    return struct.unpack(fmt, _read_exact(f, struct.calcsize(fmt)))


def dump(M, f):
    """Write ``M`` to the binary file object ``f``."""
    rows = M.row_leaf_sizes()
    cols = M.col_leaf_sizes()
    f.write(MAGIC)
    f.write(struct.pack("<IQQIQ", VERSION, M.shape[0], M.shape[1], M.depth, len(rows)))
    f.write(struct.pack(f"<{len(rows)}Q", *rows))
    f.write(struct.pack(f"<{len(cols)}Q", *cols))
    _dump_node(M, f)


def _dump_node(M, f):
    if M.is_leaf:
        f.write(struct.pack("<BQQ", 0, *M.shape))
        _write_array(f, M.dense)
        return
    f.write(struct.pack("<B", 1))
    for b in (M.b12, M.b21):
        f.write(struct.pack("<QQQ", b.shape[0], b.shape[1], b.rank))
        _write_array(f, b.U)
        _write_array(f, b.V)
    _dump_node(M.a11, f)
    _dump_node(M.a22, f)


def load(f):
    """Read one HODLR matrix from the binary file object ``f``."""
    if _read_exact(f, len(MAGIC)) != MAGIC:
        raise StructureError("not a HODLR container")
    version, m, n, level, nleaves = _unpack(f, "<IQQIQ")
    if version != VERSION:
        raise StructureError(f"unsupported container version {version}")
    rows = _unpack(f, f"<{nleaves}Q")
    cols = _unpack(f, f"<{nleaves}Q")
    M = _load_node(f)
    if M.shape != (m, n) or M.depth != level:
        raise StructureError("container header does not match node stream")
    if tuple(M.row_leaf_sizes()) != rows or tuple(M.col_leaf_sizes()) != cols:
        raise StructureError("container leaf sizes do not match node stream")
    return M


def _load_node(f):
    (tag,) = _unpack(f, "<B")
    if tag == 0:
        m, n = _unpack(f, "<QQ")
        return HodlrMatrix.leaf(_read_array(f, (m, n)))
    if tag != 1:
        raise StructureError(f"bad node tag {tag}")
    blocks = []
    for _ in range(2):
        m, n, k = _unpack(f, "<QQQ")
        blocks.append(LowRank(_read_array(f, (m, k)), _read_array(f, (n, k))))
    a11 = _load_node(f)
    a22 = _load_node(f)
    return HodlrMatrix.node(a11, a22, blocks[0], blocks[1])


def to_bytes(M):
    buf = io.BytesIO()
    dump(M, buf)
    return buf.getvalue()


def from_bytes(data):
    return load(io.BytesIO(data))


def save(M, path):
    with open(path, "wb") as f:
        dump(M, f)


def load_path(path):
    with open(path, "rb") as f:
        return load(f)
