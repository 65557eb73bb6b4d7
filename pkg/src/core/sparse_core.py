"""
Serial sparse-matrix primitives on CSR storage.

Column indices are always global. A SegmentedCsr routes a global row index either
to the owned CSR block or to the auxiliary CSR of rows harvested from other ranks,
so products see the second operand as if it were entirely local.
"""
import logging
import zlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

from .errors import ContractViolation, MatrixMarketError, MissingRowError, SingularSmootherError

logger = logging.getLogger(__name__)

INDEX_DTYPE = np.int64
VALUE_DTYPE = np.float64

# rows whose hash table would need more slots than this are accumulated by sort-merge
HASH_CAPACITY = 4096
_HASH_SCALE = 107


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed sparse row matrix with sorted, duplicate-free rows."""
    nrows: int
    ncols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nrows", int(self.nrows))
        object.__setattr__(self, "ncols", int(self.ncols))
        object.__setattr__(self, "row_ptr", np.ascontiguousarray(self.row_ptr, dtype=INDEX_DTYPE))
        object.__setattr__(self, "col_idx", np.ascontiguousarray(self.col_idx, dtype=INDEX_DTYPE))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=VALUE_DTYPE))
        if self.nrows < 0 or self.ncols < 0:
            raise ContractViolation(f"negative shape ({self.nrows}, {self.ncols})")
        if len(self.row_ptr) != self.nrows + 1:
            raise ContractViolation(f"row_ptr has length {len(self.row_ptr)}, expected {self.nrows + 1}")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != len(self.col_idx) or len(self.col_idx) != len(self.values):
            raise ContractViolation("row_ptr does not frame col_idx/values")

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[self.nrows])

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nrows, self.ncols)

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.nrows, dtype=INDEX_DTYPE), self.row_lengths())

    def validate(self) -> "CsrMatrix":
        """Full structural check: monotone row_ptr, sorted in-range columns, no duplicates."""
        lengths = self.row_lengths()
        if np.any(lengths < 0):
            raise ContractViolation("row_ptr is decreasing")
        if self.nnz:
            if self.col_idx.min() < 0 or self.col_idx.max() >= self.ncols:
                raise ContractViolation(f"column index outside [0, {self.ncols})")
            step = np.diff(self.col_idx)
            same_row = np.diff(self.row_ids()) == 0
            if np.any(step[same_row] <= 0):
                raise ContractViolation("columns are not strictly increasing within a row")
        return self

    def fingerprint(self) -> Tuple[int, int, int, int]:
        """Content key of the sparsity pattern for plan invalidation, computed once per matrix."""
        return self._structure_key

    @cached_property
    def _structure_key(self) -> Tuple[int, int, int, int]:
        # row_ptr and col_idx are never modified after construction
        return (
            self.nrows,
            self.nnz,
            zlib.crc32(self.row_ptr.tobytes()),
            zlib.crc32(self.col_idx.tobytes()),
        )

    # --- constructors -----------------------------------------------------

    @classmethod
    def empty(cls, nrows: int, ncols: int) -> "CsrMatrix":
        return cls(nrows, ncols, np.zeros(nrows + 1, dtype=INDEX_DTYPE),
                   np.zeros(0, dtype=INDEX_DTYPE), np.zeros(0, dtype=VALUE_DTYPE))

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        idx = np.arange(n, dtype=INDEX_DTYPE)
        return cls(n, n, np.arange(n + 1, dtype=INDEX_DTYPE), idx, np.ones(n))

    @classmethod
    def from_coo(cls, rows, cols, vals, shape: Tuple[int, int]) -> "CsrMatrix":
        """Build from triplets; duplicates are summed in input order."""
        nrows, ncols = int(shape[0]), int(shape[1])
        rows = np.asarray(rows, dtype=INDEX_DTYPE)
        cols = np.asarray(cols, dtype=INDEX_DTYPE)
        vals = np.asarray(vals, dtype=VALUE_DTYPE)
        if not (len(rows) == len(cols) == len(vals)):
            raise ContractViolation("triplet arrays differ in length")
        if len(rows) == 0:
            return cls.empty(nrows, ncols)
        if rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols:
            raise ContractViolation(f"triplet index outside shape {shape}")
        keys = rows * ncols + cols
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        vals = vals[order]
        first = np.ones(len(keys), dtype=bool)
        first[1:] = keys[1:] != keys[:-1]
        starts = np.flatnonzero(first)
        uniq = keys[starts]
        summed = np.add.reduceat(vals, starts)
        out_rows = uniq // ncols
        row_ptr = np.zeros(nrows + 1, dtype=INDEX_DTYPE)
        np.cumsum(np.bincount(out_rows, minlength=nrows), out=row_ptr[1:])
        return cls(nrows, ncols, row_ptr, uniq % ncols, summed)

    @classmethod
    def from_dense(cls, dense) -> "CsrMatrix":
        dense = np.asarray(dense, dtype=VALUE_DTYPE)
        rows, cols = np.nonzero(dense)
        return cls.from_coo(rows, cols, dense[rows, cols], dense.shape)

    @classmethod
    def from_scipy(cls, matrix) -> "CsrMatrix":
        csr = sp.csr_matrix(matrix)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    # --- conversions and views ----------------------------------------------

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.shape)
        dense[self.row_ids(), self.col_idx] = self.values
        return dense

    def row_block(self, start: int, stop: int) -> "CsrMatrix":
        """Rows [start, stop) with columns untouched."""
        lo, hi = self.row_ptr[start], self.row_ptr[stop]
        return CsrMatrix(stop - start, self.ncols, self.row_ptr[start:stop + 1] - lo,
                         self.col_idx[lo:hi].copy(), self.values[lo:hi].copy())

    def take_rows(self, rows: np.ndarray) -> "CsrMatrix":
        """Selected rows, in the given order."""
        rows = np.asarray(rows, dtype=INDEX_DTYPE)
        lens = self.row_ptr[rows + 1] - self.row_ptr[rows]
        row_ptr = np.zeros(len(rows) + 1, dtype=INDEX_DTYPE)
        np.cumsum(lens, out=row_ptr[1:])
        src = np.repeat(self.row_ptr[rows] - row_ptr[:-1], lens) + np.arange(row_ptr[-1], dtype=INDEX_DTYPE)
        return CsrMatrix(len(rows), self.ncols, row_ptr, self.col_idx[src], self.values[src])

    def restrict_columns(self, lo: int, hi: int) -> "CsrMatrix":
        """Keep entries with column in [lo, hi) and renumber them from zero."""
        keep = (self.col_idx >= lo) & (self.col_idx < hi)
        counts = np.bincount(self.row_ids()[keep], minlength=self.nrows)
        row_ptr = np.zeros(self.nrows + 1, dtype=INDEX_DTYPE)
        np.cumsum(counts, out=row_ptr[1:])
        return CsrMatrix(self.nrows, hi - lo, row_ptr, self.col_idx[keep] - lo, self.values[keep])

    def shift_columns(self, offset: int, ncols: int) -> "CsrMatrix":
        return CsrMatrix(self.nrows, ncols, self.row_ptr, self.col_idx + offset, self.values)

    def with_values(self, values: np.ndarray) -> "CsrMatrix":
        return CsrMatrix(self.nrows, self.ncols, self.row_ptr, self.col_idx, values)


@dataclass(frozen=True, eq=False)
class SegmentedCsr:
    """Owned row block [h, k] plus an auxiliary CSR of harvested remote rows."""
    local: CsrMatrix
    aux: CsrMatrix
    aux_row_map: np.ndarray
    owned_range: Tuple[int, int]
    global_nrows: int

    def __post_init__(self):
        object.__setattr__(self, "aux_row_map", np.asarray(self.aux_row_map, dtype=INDEX_DTYPE))
        h, k = self.owned_range
        if k - h + 1 != self.local.nrows:
            raise ContractViolation(f"owned range [{h}, {k}] does not match {self.local.nrows} local rows")
        if self.aux.nrows != len(self.aux_row_map):
            raise ContractViolation("aux_row_map length differs from aux rows")
        if self.aux.ncols != self.local.ncols:
            raise ContractViolation("local and aux column counts differ")
        amap = self.aux_row_map
        if len(amap):
            if np.any(np.diff(amap) <= 0):
                raise ContractViolation("aux_row_map is not strictly increasing")
            if np.any((amap >= h) & (amap <= k)):
                raise ContractViolation("aux_row_map overlaps the owned range")

    @classmethod
    def from_local(cls, local: CsrMatrix, row_offset: int = 0,
                   global_nrows: Optional[int] = None) -> "SegmentedCsr":
        n = local.nrows if global_nrows is None else global_nrows
        return cls(local, CsrMatrix.empty(0, local.ncols), np.zeros(0, dtype=INDEX_DTYPE),
                   (row_offset, row_offset + local.nrows - 1), n)

    @property
    def ncols(self) -> int:
        return self.local.ncols

    def resolve(self, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Map global rows to (is_local, slot); slot indexes local or aux rows."""
        rows = np.asarray(rows, dtype=INDEX_DTYPE)
        h, k = self.owned_range
        is_local = (rows >= h) & (rows <= k)
        slot = rows - h
        remote = ~is_local
        if np.any(remote):
            wanted = rows[remote]
            pos = np.searchsorted(self.aux_row_map, wanted)
            pos_c = np.minimum(pos, max(len(self.aux_row_map) - 1, 0))
            found = (pos < len(self.aux_row_map)) & (self.aux_row_map[pos_c] == wanted) \
                if len(self.aux_row_map) else np.zeros(len(wanted), dtype=bool)
            if not np.all(found):
                raise MissingRowError(wanted[~found][0])
            slot = slot.copy()
            slot[remote] = pos
        return is_local, slot


CsrOperand = Union[CsrMatrix, SegmentedCsr]


def _as_segmented(B: CsrOperand) -> SegmentedCsr:
    return B if isinstance(B, SegmentedCsr) else SegmentedCsr.from_local(B)


def segment_sum(products: np.ndarray, row_ptr: np.ndarray) -> np.ndarray:
    """Per-row sums of a row-ordered product array, each row summed in stored order."""
    nrows = len(row_ptr) - 1
    y = np.zeros(nrows)
    if len(products) == 0:
        return y
    starts = row_ptr[:-1]
    nonempty = row_ptr[1:] > starts
    y[nonempty] = np.add.reduceat(products, starts[nonempty])
    return y


def spmv_local(A: CsrMatrix, x: np.ndarray, out: Optional[np.ndarray] = None,
               accumulate: bool = False) -> np.ndarray:
    """y = A x, or y += A x when accumulate is set (out required)."""
    x = np.asarray(x, dtype=VALUE_DTYPE)
    if x.shape != (A.ncols,):
        raise ContractViolation(f"vector of length {x.shape} does not match {A.ncols} columns")
    y = segment_sum(A.values * x[A.col_idx], A.row_ptr)
    if accumulate:
        if out is None or out.shape != (A.nrows,):
            raise ContractViolation("accumulate requires an output vector of matching length")
        out += y
        return out
    if out is not None:
        out[:] = y
        return out
    return y


@dataclass(frozen=True)
class SpgemmStructure:
    """
    Result of the symbolic phase: exact pattern plus per-row upper bounds.

    entry_pos maps every expanded product a_ik * b_kj (in A-row order, then
    B-row order) to its position in col_idx; merged_rows lists the rows that
    were too long for the hash accumulator.
    """
    nrows: int
    ncols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    row_upper_bound: np.ndarray
    entry_pos: np.ndarray
    merged_rows: np.ndarray


@dataclass(frozen=True)
class _Expansion:
    rows: np.ndarray
    cols: np.ndarray
    products: Optional[np.ndarray]
    bound: np.ndarray


def _expand(A: CsrMatrix, B: SegmentedCsr, with_values: bool) -> _Expansion:
    if A.ncols != B.global_nrows:
        raise ContractViolation(f"inner dimensions differ: {A.ncols} vs {B.global_nrows}")
    is_local, slot = B.resolve(A.col_idx)
    begins = np.empty(A.nnz, dtype=INDEX_DTYPE)
    lens = np.empty(A.nnz, dtype=INDEX_DTYPE)
    for source, mask in ((B.local, is_local), (B.aux, ~is_local)):
        s = slot[mask]
        begins[mask] = source.row_ptr[s]
        lens[mask] = source.row_ptr[s + 1] - source.row_ptr[s]

    a_rows = A.row_ids()
    bound = np.bincount(a_rows, weights=lens, minlength=A.nrows).astype(INDEX_DTYPE)
    total = int(lens.sum())
    entry = np.repeat(np.arange(A.nnz, dtype=INDEX_DTYPE), lens)
    offsets = np.arange(total, dtype=INDEX_DTYPE) - np.repeat(np.cumsum(lens) - lens, lens)
    src = begins[entry] + offsets
    from_local = is_local[entry]

    cols = np.empty(total, dtype=INDEX_DTYPE)
    cols[from_local] = B.local.col_idx[src[from_local]]
    cols[~from_local] = B.aux.col_idx[src[~from_local]]
    products = None
    if with_values:
        b_vals = np.empty(total)
        b_vals[from_local] = B.local.values[src[from_local]]
        b_vals[~from_local] = B.aux.values[src[~from_local]]
        products = A.values[entry] * b_vals
    return _Expansion(a_rows[entry], cols, products, bound)


def _table_sizes(bound: np.ndarray) -> np.ndarray:
    """Smallest power of two >= 2 * bound per row (load factor at most 1/2); empty rows get no table."""
    exponent = np.frexp(np.maximum(2 * bound - 1, 0).astype(np.float64))[1]
    return np.where(bound > 0, np.left_shift(1, exponent.astype(INDEX_DTYPE)), 0)


def _hash_insert(rows: np.ndarray, cols: np.ndarray, start: np.ndarray,
                 mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Insert column keys into per-row open-addressing tables, scanning linearly for a free slot.

    Row r owns table[start[r]:start[r + 1]]. All keys advance in lock-step; when
    several claim the same free slot, the first in expansion order wins and the
    others move on unless they carry the same column. Returns the slot of every
    key and the table (-1 marks a free slot).
    """
    table = np.full(int(start[-1]), -1, dtype=INDEX_DTYPE)
    slot = np.empty(len(cols), dtype=INDEX_DTYPE)
    cursor = (cols * _HASH_SCALE) & mask[rows]
    pending = np.arange(len(cols), dtype=INDEX_DTYPE)
    while len(pending):
        s = start[rows[pending]] + cursor[pending]
        free = table[s] < 0
        claimed, first = np.unique(s[free], return_index=True)
        table[claimed] = cols[pending[free][first]]
        hit = table[s] == cols[pending]
        slot[pending[hit]] = s[hit]
        pending = pending[~hit]
        cursor[pending] = (cursor[pending] + 1) & mask[rows[pending]]
    return slot, table


def _symbolic(A: CsrMatrix, B: SegmentedCsr, exp: _Expansion, hash_capacity: int) -> SpgemmStructure:
    if hash_capacity < 0:
        raise ContractViolation(f"hash capacity must be non-negative, got {hash_capacity}")
    ncols = B.ncols
    sizes = _table_sizes(exp.bound)
    hashed_row = sizes <= hash_capacity
    sizes[~hashed_row] = 0
    start = np.zeros(A.nrows + 1, dtype=INDEX_DTYPE)
    np.cumsum(sizes, out=start[1:])
    n_slots = int(start[-1])

    # every distinct (row, col) gets an id: its table slot, or n_slots + its merged-key index
    hashed = hashed_row[exp.rows]
    uid = np.empty(len(exp.rows), dtype=INDEX_DTYPE)
    slot, table = _hash_insert(exp.rows[hashed], exp.cols[hashed], start, sizes - 1)
    uid[hashed] = slot
    merged_keys, inverse = np.unique(exp.rows[~hashed] * ncols + exp.cols[~hashed], return_inverse=True)
    uid[~hashed] = n_slots + inverse.reshape(-1)

    occupied = np.flatnonzero(table >= 0)
    slot_rows = np.repeat(np.arange(A.nrows, dtype=INDEX_DTYPE), sizes)
    out_rows = np.concatenate([slot_rows[occupied], merged_keys // max(ncols, 1)])
    out_cols = np.concatenate([table[occupied], merged_keys % max(ncols, 1)])
    ids = np.concatenate([occupied, n_slots + np.arange(len(merged_keys), dtype=INDEX_DTYPE)])
    order = np.lexsort((out_cols, out_rows))
    position = np.zeros(n_slots + len(merged_keys), dtype=INDEX_DTYPE)
    position[ids[order]] = np.arange(len(order), dtype=INDEX_DTYPE)

    row_ptr = np.zeros(A.nrows + 1, dtype=INDEX_DTYPE)
    np.cumsum(np.bincount(out_rows, minlength=A.nrows), out=row_ptr[1:])
    merged_rows = np.flatnonzero(~hashed_row)
    if len(merged_rows):
        logger.debug("spgemm: %d of %d rows exceed the hash capacity %d", len(merged_rows), A.nrows, hash_capacity)
    return SpgemmStructure(A.nrows, ncols, row_ptr, out_cols[order], exp.bound,
                           position[uid], merged_rows)


def _numeric(exp: _Expansion, structure: SpgemmStructure) -> np.ndarray:
    if len(exp.products) != len(structure.entry_pos):
        raise ContractViolation("operands do not match the symbolic structure")
    values = np.zeros(len(structure.col_idx))
    # unbuffered, so each c_ij sums its products sequentially in expansion order
    np.add.at(values, structure.entry_pos, exp.products)
    return values


def spgemm_symbolic(A: CsrMatrix, B_view: CsrOperand, hash_capacity: int = HASH_CAPACITY) -> SpgemmStructure:
    """Exact sparsity of A*B: hash accumulation per row, sort-merge for rows past hash_capacity slots."""
    B = _as_segmented(B_view)
    return _symbolic(A, B, _expand(A, B, with_values=False), hash_capacity)


def spgemm_numeric(A: CsrMatrix, B_view: CsrOperand, structure: SpgemmStructure) -> np.ndarray:
    """Values of A*B on a pattern produced by spgemm_symbolic with the same operand pattern."""
    B = _as_segmented(B_view)
    return _numeric(_expand(A, B, with_values=True), structure)


def spgemm_local(A: CsrMatrix, B_view: CsrOperand, hash_capacity: int = HASH_CAPACITY) -> CsrMatrix:
    """
    C = A * B with all indices global.

    Entries touched by the symbolic phase are kept even when their numeric
    value cancels to zero. Contributions to each c_ij are accumulated in
    A-row order, then B-row order, so the result does not depend on how B's
    rows are split between local and auxiliary storage, nor on which rows
    took the hash or the sort-merge path.
    """
    B = _as_segmented(B_view)
    exp = _expand(A, B, with_values=True)
    structure = _symbolic(A, B, exp, hash_capacity)
    return CsrMatrix(A.nrows, structure.ncols, structure.row_ptr, structure.col_idx,
                     _numeric(exp, structure))


def transpose(A: CsrMatrix) -> CsrMatrix:
    order = np.argsort(A.col_idx, kind="stable")
    row_ptr = np.zeros(A.ncols + 1, dtype=INDEX_DTYPE)
    np.cumsum(np.bincount(A.col_idx, minlength=A.ncols), out=row_ptr[1:])
    return CsrMatrix(A.ncols, A.nrows, row_ptr, A.row_ids()[order], A.values[order])


def l1_diagonal(A: CsrMatrix, row_offset: int = 0) -> np.ndarray:
    """d_i = a_ii + sum_{j != i} |a_ij| for the rows of A (global row = local + row_offset)."""
    rows = A.row_ids()
    diag_mask = A.col_idx == rows + row_offset
    diag = np.bincount(rows[diag_mask], weights=A.values[diag_mask], minlength=A.nrows)
    off = np.bincount(rows[~diag_mask], weights=np.abs(A.values[~diag_mask]), minlength=A.nrows)
    d = diag + off
    zero = np.flatnonzero(d == 0)
    if len(zero):
        raise SingularSmootherError(zero + row_offset)
    return d


# --- MatrixMarket ------------------------------------------------------------

_MM_FIELDS = {"real", "integer", "pattern", "double"}
_MM_SYMMETRY = {"general", "symmetric", "skew-symmetric"}


def read_matrix_market(path: Union[str, Path]) -> CsrMatrix:
    """Read a coordinate MatrixMarket file (1-based) into CSR, expanding symmetric storage."""
    path = Path(path)
    with path.open("r") as handle:
        header = handle.readline()
        parts = header.strip().split()
        if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
            raise MatrixMarketError("missing '%%MatrixMarket matrix' banner", line=1)
        fmt, field, symmetry = (p.lower() for p in parts[2:])
        if fmt != "coordinate":
            raise MatrixMarketError(f"unsupported format '{fmt}'", line=1)
        if field not in _MM_FIELDS:
            raise MatrixMarketError(f"unsupported field '{field}'", line=1)
        if symmetry not in _MM_SYMMETRY:
            raise MatrixMarketError(f"unsupported symmetry '{symmetry}'", line=1)

        size = None
        count = 0
        rows, cols, vals = [], [], []
        for lineno, raw in enumerate(handle, start=2):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            tokens = line.split()
            try:
                if size is None:
                    if len(tokens) != 3:
                        raise ValueError("size line needs 'rows cols nnz'")
                    size = tuple(int(t) for t in tokens)
                    continue
                expected = 2 if field == "pattern" else 3
                if len(tokens) != expected:
                    raise ValueError(f"expected {expected} fields, got {len(tokens)}")
                i, j = int(tokens[0]) - 1, int(tokens[1]) - 1
                v = 1.0 if field == "pattern" else float(tokens[2])
            except ValueError as exc:
                raise MatrixMarketError(str(exc), line=lineno) from None
            if not (0 <= i < size[0] and 0 <= j < size[1]):
                raise MatrixMarketError(f"entry ({i + 1}, {j + 1}) outside {size[0]}x{size[1]}", line=lineno)
            count += 1
            rows.append(i)
            cols.append(j)
            vals.append(v)
            if symmetry != "general" and i != j:
                rows.append(j)
                cols.append(i)
                vals.append(-v if symmetry == "skew-symmetric" else v)

    if size is None:
        raise MatrixMarketError("missing size line")
    if count != size[2]:
        raise MatrixMarketError(f"declared {size[2]} entries, found {count}")
    logger.debug("read %s: %dx%d, %d stored entries (%s)", path, size[0], size[1], size[2], symmetry)
    return CsrMatrix.from_coo(rows, cols, vals, (size[0], size[1]))


def write_matrix_market(path: Union[str, Path], A: CsrMatrix, symmetric: bool = False) -> None:
    """Write coordinate real MatrixMarket; with symmetric=True only the lower triangle is stored."""
    # a handle keeps scipy from appending ".mtx" to the given name
    with Path(path).open("wb") as handle:
        mmwrite(handle, A.to_scipy().tocoo(), symmetry="symmetric" if symmetric else "general", precision=17)
    logger.debug("wrote %s: %dx%d, %d stored entries", path, A.nrows, A.ncols, A.nnz)
