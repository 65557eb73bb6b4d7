"""
Distributed kernels over row-block partitioned operands.

- spmm_dist: harvest the remote rows of B that the owned rows of A reference
  (count exchange, then point-to-point payload), merge them into a segmented
  CSR and run a single local SpGEMM.
- spmv_dist: post the halo sends, form the products with owned entries of x
  while the messages are in flight, then the products with received entries.
  Each row is summed in stored order afterwards, so the result is the same
  with or without overlap and for any rank count.
- dot/axpy/norm on distributed vectors; reductions go through the runtime in
  rank order.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dist_runtime import Partition, RankCtx
from .errors import ContractViolation, StalePlanError
from .sparse_core import CsrMatrix, SegmentedCsr, segment_sum, spgemm_local, spmv_local

logger = logging.getLogger(__name__)

_SPMV_TAG = "spmv-halo"
_SPMM_TAG = "spmm-rows"


@dataclass(eq=False)
class DistVector:
    """Owned entries of a row-block partitioned vector."""
    part: Partition
    rank: int
    local: np.ndarray

    def __post_init__(self):
        self.local = np.asarray(self.local, dtype=np.float64)
        if self.local.shape != (self.part.extent(self.rank),):
            raise ContractViolation(
                f"rank {self.rank} holds {self.local.shape} entries, partition says {self.part.extent(self.rank)}")

    @classmethod
    def zeros(cls, part: Partition, rank: int) -> "DistVector":
        return cls(part, rank, np.zeros(part.extent(rank)))

    @classmethod
    def full(cls, part: Partition, rank: int, value: float) -> "DistVector":
        return cls(part, rank, np.full(part.extent(rank), float(value)))

    def like(self, values: np.ndarray) -> "DistVector":
        return DistVector(self.part, self.rank, values)

    def copy(self) -> "DistVector":
        return DistVector(self.part, self.rank, self.local.copy())


@dataclass(eq=False)
class HaloPlan:
    """
    Communication plan for one matrix: which global indices this rank receives
    and from whom, and which owned indices it sends to every other rank.
    """
    rank: int
    part: Partition
    recv_ids: np.ndarray
    sources: List[Tuple[int, int, int]]
    send_ids: Dict[int, np.ndarray]
    fingerprint: tuple
    local_pos: Optional[np.ndarray] = None
    local_cols: Optional[np.ndarray] = None
    remote_pos: Optional[np.ndarray] = None
    remote_slots: Optional[np.ndarray] = None
    recv_buffer: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def message_count(self) -> int:
        return len(self.send_ids)


@dataclass(eq=False)
class DistMatrix:
    """Owned row block of a matrix; column indices are global."""
    part: Partition
    col_part: Partition
    rank: int
    local: CsrMatrix
    _plan: Optional[HaloPlan] = field(default=None, repr=False)
    _block: Optional[CsrMatrix] = field(default=None, repr=False)

    def __post_init__(self):
        if self.local.nrows != self.part.extent(self.rank):
            raise ContractViolation(
                f"rank {self.rank} block has {self.local.nrows} rows, partition says {self.part.extent(self.rank)}")
        if self.local.ncols != self.col_part.global_n:
            raise ContractViolation(
                f"block has {self.local.ncols} columns, column partition spans {self.col_part.global_n}")

    @property
    def global_shape(self) -> Tuple[int, int]:
        return (self.part.global_n, self.col_part.global_n)

    def owned_range(self) -> Tuple[int, int]:
        return self.part.range(self.rank)

    def halo_plan(self, ctx: RankCtx) -> HaloPlan:
        """Cached SpMV plan; rebuilt (collectively) when the matrix content changed."""
        if self._plan is None or self._plan.fingerprint != self.local.fingerprint():
            self._plan = build_halo_plan(ctx, self)
        return self._plan

    def diagonal_block(self) -> CsrMatrix:
        """Entries whose column is owned by this rank, renumbered from zero."""
        lo, hi = self.col_part.range(self.rank)
        return self.local.restrict_columns(lo, hi)

    def block_local(self) -> CsrMatrix:
        """Diagonal block of a block-diagonal matrix (P or R); off-block entries are an error."""
        if self._block is None:
            block = self.diagonal_block()
            if block.nnz != self.local.nnz:
                raise ContractViolation(f"rank {self.rank} block has {self.local.nnz - block.nnz} off-block entries")
            self._block = block
        return self._block


def build_rows_to_receive(A_local: CsrMatrix, part: Partition, rank: int) -> np.ndarray:
    """Sorted distinct column indices of A_local outside the rank's owned range."""
    lo, hi = part.range(rank)
    cols = A_local.col_idx
    return np.unique(cols[(cols < lo) | (cols >= hi)])


def _negotiate(ctx: RankCtx, recv_ids: np.ndarray, part: Partition):
    owners = part.owner(recv_ids)
    requests = []
    sources = []
    for r in range(ctx.nranks):
        ids = recv_ids[owners == r]
        requests.append(ids)
        if len(ids):
            start = int(np.searchsorted(recv_ids, ids[0]))
            sources.append((r, start, start + len(ids)))
    incoming = ctx.alltoallv(requests)
    send_ids = {d: ids for d, ids in enumerate(incoming) if d != ctx.rank and len(ids)}
    return sources, send_ids


def build_halo_plan(ctx: RankCtx, A: DistMatrix) -> HaloPlan:
    """Collective: every rank must call it for its block of A."""
    recv_ids = build_rows_to_receive(A.local, A.col_part, ctx.rank)
    sources, send_ids = _negotiate(ctx, recv_ids, A.col_part)
    lo, hi = A.col_part.range(ctx.rank)
    cols = A.local.col_idx
    is_local = (cols >= lo) & (cols < hi)
    local_pos = np.flatnonzero(is_local)
    remote_pos = np.flatnonzero(~is_local)
    plan = HaloPlan(
        rank=ctx.rank,
        part=A.col_part,
        recv_ids=recv_ids,
        sources=sources,
        send_ids=send_ids,
        fingerprint=A.local.fingerprint(),
        local_pos=local_pos,
        local_cols=cols[local_pos] - lo,
        remote_pos=remote_pos,
        remote_slots=np.searchsorted(recv_ids, cols[remote_pos]),
        recv_buffer=np.empty(len(recv_ids)),
    )
    logger.debug("rank %d halo plan: receive %d entries from %d ranks, send to %d ranks",
                 ctx.rank, len(recv_ids), len(sources), len(send_ids))
    return plan


def spmv_dist(ctx: RankCtx, A: DistMatrix, x: DistVector, plan: Optional[HaloPlan] = None,
              overlap: bool = True) -> DistVector:
    """y = A x for the owned rows."""
    plan = A.halo_plan(ctx) if plan is None else plan
    if plan.rank != ctx.rank or plan.fingerprint != A.local.fingerprint():
        raise StalePlanError(f"rank {ctx.rank}: halo plan was built for a different matrix")
    if x.part != A.col_part or x.rank != ctx.rank:
        raise ContractViolation("vector does not conform to the matrix column partition")

    lo = int(A.col_part.starts[ctx.rank])
    values = A.local.values
    products = np.empty(A.local.nnz)
    halo = plan.recv_buffer

    for dest, ids in plan.send_ids.items():
        ctx.isend(dest, x.local[ids - lo], _SPMV_TAG)
    if overlap:
        products[plan.local_pos] = values[plan.local_pos] * x.local[plan.local_cols]
    for src, start, stop in plan.sources:
        halo[start:stop] = ctx.recv(src, _SPMV_TAG)
    if not overlap:
        products[plan.local_pos] = values[plan.local_pos] * x.local[plan.local_cols]
    products[plan.remote_pos] = values[plan.remote_pos] * halo[plan.remote_slots]
    return DistVector(A.part, ctx.rank, segment_sum(products, A.local.row_ptr))


def spmv_block(M: DistMatrix, x: DistVector) -> DistVector:
    """Product with a block-diagonal matrix (prolongator or restrictor); no messages."""
    if x.part != M.col_part:
        raise ContractViolation("vector does not conform to the block matrix columns")
    return DistVector(M.part, M.rank, spmv_local(M.block_local(), x.local))


@dataclass(eq=False)
class RowExchange:
    """Rows of the second SpMM operand this rank harvests, and the rows it serves."""
    rank: int
    part: Partition
    recv_ids: np.ndarray
    sources: List[Tuple[int, int, int]]
    send_ids: Dict[int, np.ndarray]
    fingerprint: tuple


def prepare_row_exchange(ctx: RankCtx, A: DistMatrix, B_part: Partition) -> RowExchange:
    """
    Rows-to-receive and the request exchange of a distributed SpMM.

    Depends only on A's sparsity, so it can be posted before B is built.
    """
    if A.col_part != B_part:
        raise ContractViolation("A's column partition must match B's row partition")
    with ctx.phase("spmm_comm"):
        recv_ids = build_rows_to_receive(A.local, B_part, ctx.rank)
        sources, send_ids = _negotiate(ctx, recv_ids, B_part)
    return RowExchange(ctx.rank, B_part, recv_ids, sources, send_ids, A.local.fingerprint())


def spmm_dist(ctx: RankCtx, A: DistMatrix, B: DistMatrix,
              exchange: Optional[RowExchange] = None) -> DistMatrix:
    """C = A B restricted to the owned rows of A."""
    if A.col_part != B.part:
        raise ContractViolation(
            f"inner dimensions differ: {A.col_part.global_n} columns vs {B.part.global_n} rows")
    if exchange is None:
        exchange = prepare_row_exchange(ctx, A, B.part)
    elif exchange.fingerprint != A.local.fingerprint() or exchange.rank != ctx.rank:
        raise StalePlanError(f"rank {ctx.rank}: row exchange was prepared for a different matrix")

    lo, hi = B.part.range(ctx.rank)
    with ctx.phase("spmm_comm"):
        lengths = B.local.row_lengths()
        counts_out = [lengths[exchange.send_ids[d] - lo] if d in exchange.send_ids
                      else np.zeros(0, dtype=np.int64) for d in range(ctx.nranks)]
        counts_in = ctx.alltoallv(counts_out)

        row_nnz = np.zeros(len(exchange.recv_ids), dtype=np.int64)
        for src, start, stop in exchange.sources:
            row_nnz[start:stop] = counts_in[src]
        aux_ptr = np.zeros(len(row_nnz) + 1, dtype=np.int64)
        np.cumsum(row_nnz, out=aux_ptr[1:])
        aux_cols = np.empty(aux_ptr[-1], dtype=np.int64)
        aux_vals = np.empty(aux_ptr[-1])

        for dest, ids in exchange.send_ids.items():
            rows = B.local.take_rows(ids - lo)
            ctx.isend(dest, (rows.col_idx, rows.values), _SPMM_TAG)
        for src, start, stop in exchange.sources:
            cols, vals = ctx.recv(src, _SPMM_TAG)
            aux_cols[aux_ptr[start]:aux_ptr[stop]] = cols
            aux_vals[aux_ptr[start]:aux_ptr[stop]] = vals

        aux = CsrMatrix(len(row_nnz), B.local.ncols, aux_ptr, aux_cols, aux_vals)
        segmented = SegmentedCsr(B.local, aux, exchange.recv_ids, (lo, hi - 1), B.part.global_n)

    with ctx.phase("spmm"):
        C = spgemm_local(A.local, segmented)
    return DistMatrix(A.part, B.col_part, ctx.rank, C)


def _check_conforming(x: DistVector, y: DistVector) -> None:
    if x.part != y.part or x.rank != y.rank:
        raise ContractViolation("vectors live on different partitions")


def dot_dist(ctx: RankCtx, x: DistVector, y: DistVector) -> float:
    _check_conforming(x, y)
    return float(ctx.allreduce_sum(float(np.dot(x.local, y.local))))


def fused_dots(ctx: RankCtx, pairs: Sequence[Tuple[DistVector, DistVector]]) -> np.ndarray:
    """Several dot products reduced with a single allreduce message."""
    for x, y in pairs:
        _check_conforming(x, y)
    partial = np.array([np.dot(x.local, y.local) for x, y in pairs])
    return ctx.allreduce_sum(partial)


def norm_dist(ctx: RankCtx, x: DistVector) -> float:
    return float(np.sqrt(dot_dist(ctx, x, x)))


def axpy_local(alpha: float, x: DistVector, y: DistVector) -> DistVector:
    """alpha * x + y as a new vector; purely local."""
    _check_conforming(x, y)
    return y.like(y.local + alpha * x.local)
