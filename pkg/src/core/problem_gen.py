"""
Benchmark systems: the 3D Poisson 7-point problem assembled rank by rank, and
MatrixMarket matrices scattered from a root rank.
"""
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .dist_runtime import Partition, RankCtx
from .errors import ContractViolation
from .halo_kernels import DistMatrix, DistVector
from .sparse_core import CsrMatrix, read_matrix_market

logger = logging.getLogger(__name__)

__all__ = ["gen_poisson7", "distribute", "load_matrix_market", "read_matrix_market"]

_DISTRIBUTE_TAG = "distribute"


def gen_poisson7(ctx: RankCtx, nd: int, part: Optional[Partition] = None,
                 scaled: bool = True) -> Tuple[DistMatrix, DistVector]:
    """
    Owned rows of the 7-point Laplacian on an nd^3 grid with homogeneous
    Dirichlet boundaries, lexicographic ordering (x fastest) and f = 1.

    The scaled system has entries 6 and -1; the unscaled one divides them by
    h^2 with h = 1/(nd+1). Neighbours are stored in ascending column order.
    """
    if nd < 1:
        raise ContractViolation(f"nd must be >= 1, got {nd}")
    n = nd ** 3
    part = part or Partition.uniform(n, ctx.nranks)
    if part.global_n != n or part.nranks != ctx.nranks:
        raise ContractViolation(f"partition over {part.global_n} rows on {part.nranks} ranks does not fit nd={nd}")

    lo, hi = part.range(ctx.rank)
    idx = np.arange(lo, hi, dtype=np.int64)
    i, j, k = idx % nd, (idx // nd) % nd, idx // (nd * nd)
    offsets = np.array([-nd * nd, -nd, -1, 0, 1, nd, nd * nd], dtype=np.int64)
    present = np.stack([k > 0, j > 0, i > 0, np.ones_like(i, dtype=bool),
                        i < nd - 1, j < nd - 1, k < nd - 1], axis=1)
    stencil = np.array([-1.0, -1.0, -1.0, 6.0, -1.0, -1.0, -1.0])
    if not scaled:
        stencil = stencil * float(nd + 1) ** 2

    cols = (idx[:, None] + offsets[None, :])[present]
    vals = np.broadcast_to(stencil, present.shape)[present]
    row_ptr = np.zeros(len(idx) + 1, dtype=np.int64)
    np.cumsum(present.sum(axis=1), out=row_ptr[1:])

    A = DistMatrix(part, part, ctx.rank, CsrMatrix(len(idx), n, row_ptr, cols, vals))
    b = DistVector.full(part, ctx.rank, 1.0)
    logger.debug("rank %d assembled rows [%d, %d) of poisson7 nd=%d", ctx.rank, lo, hi, nd)
    return A, b


def distribute(ctx: RankCtx, A: Optional[CsrMatrix], part: Optional[Partition] = None,
               root: int = 0) -> DistMatrix:
    """
    Scatter the row blocks of a matrix held by `root`; the other ranks pass None.

    Without a partition the rows are split uniformly.
    """
    if ctx.rank == root:
        if A is None:
            raise ContractViolation("the root rank must hold the matrix")
        if A.nrows != A.ncols:
            raise ContractViolation(f"system matrix must be square, got {A.shape}")
        part = part or Partition.uniform(A.nrows, ctx.nranks)
        if part.global_n != A.nrows:
            raise ContractViolation(f"partition spans {part.global_n} rows, matrix has {A.nrows}")
        for dest in range(ctx.nranks):
            if dest != root:
                block = A.row_block(*part.range(dest))
                ctx.isend(dest, (part.starts, block.ncols, block.row_ptr, block.col_idx, block.values),
                          _DISTRIBUTE_TAG)
        local = A.row_block(*part.range(root))
    else:
        starts, ncols, row_ptr, col_idx, values = ctx.recv(root, _DISTRIBUTE_TAG)
        part = Partition(starts)
        local = CsrMatrix(len(row_ptr) - 1, ncols, row_ptr, col_idx, values)
    return DistMatrix(part, part, ctx.rank, local)


def load_matrix_market(ctx: RankCtx, path: Union[str, Path],
                       root: int = 0) -> Tuple[DistMatrix, DistVector]:
    """Read on `root`, scatter uniformly, right-hand side of ones."""
    A = read_matrix_market(path) if ctx.rank == root else None
    if A is not None:
        logger.info("read %s: %d rows, %d nnz", path, A.nrows, A.nnz)
    A_dist = distribute(ctx, A, root=root)
    return A_dist, DistVector.full(A_dist.part, ctx.rank, 1.0)
