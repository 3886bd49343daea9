"""Hierarchically off-diagonal low-rank (HODLR) matrices."""

from .arithmetic import (
    add,
    add_lowrank,
    cholesky,
    multiply,
    multiply_triangular_inverse_right,
    solve_triangular_left,
    symmetrize,
)
from .matrix import (
    DEFAULT_TRUNCATION,
    HodlrMatrix,
    IndexPartition,
    LowRank,
    TruncationConfig,
    append_columns,
    build_from_banded,
    build_from_dense,
    compress_dense,
    dense_block,
    diagonal,
    diagonal_matrix,
    extract_columns,
    extract_principal_submatrix,
    extract_rows,
    frobenius_norm,
    hodlr_rank,
    identity,
    lowrank_block,
    matvec,
    memory_units,
    norm2_estimate,
    reblock,
    recompress,
    rmatvec,
    same_structure,
    scale,
    shift_diagonal,
    to_dense,
    trace,
    transpose,
    zeros_like,
)
from .serialize import dump, from_bytes, load, load_path, save, to_bytes

__all__ = [
    "DEFAULT_TRUNCATION", "HodlrMatrix", "IndexPartition", "LowRank", "TruncationConfig",
    "add", "add_lowrank", "append_columns", "build_from_banded", "build_from_dense",
    "cholesky", "compress_dense", "dense_block", "diagonal", "diagonal_matrix", "dump",
    "extract_columns", "extract_principal_submatrix", "extract_rows", "frobenius_norm",
    "from_bytes", "hodlr_rank", "identity", "load", "load_path", "lowrank_block", "matvec",
    "memory_units", "multiply", "multiply_triangular_inverse_right", "norm2_estimate",
    "reblock", "recompress", "rmatvec", "same_structure", "save", "scale", "shift_diagonal",
    "solve_triangular_left", "symmetrize", "to_bytes", "to_dense", "trace", "transpose",
    "zeros_like",
]
