"""
Shared builders and gatherers for the distributed tests.
"""
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from src.core.dist_runtime import Partition, RankCtx
from src.core.halo_kernels import DistMatrix, DistVector
from src.core.sparse_core import CsrMatrix


def scatter_matrix(ctx: RankCtx, A: CsrMatrix, part: Partition,
                   col_part: Optional[Partition] = None) -> DistMatrix:
    """Every rank slices its own rows out of a globally known matrix."""
    col_part = col_part or part
    return DistMatrix(part, col_part, ctx.rank, A.row_block(*part.range(ctx.rank)))


def scatter_vector(ctx: RankCtx, x: np.ndarray, part: Partition) -> DistVector:
    lo, hi = part.range(ctx.rank)
    return DistVector(part, ctx.rank, np.asarray(x, dtype=np.float64)[lo:hi].copy())


def gather_matrix(blocks: List[DistMatrix]) -> CsrMatrix:
    """Stack per-rank row blocks back into the global matrix."""
    return CsrMatrix.from_scipy(sp.vstack([b.local.to_scipy() for b in blocks], format="csr"))


def gather_vector(parts: List[DistVector]) -> np.ndarray:
    return np.concatenate([v.local for v in parts])


def laplace_1d(n: int) -> CsrMatrix:
    return CsrMatrix.from_scipy(sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n), format="csr"))


def random_sparse(rng: np.random.Generator, nrows: int, ncols: int, density: float) -> CsrMatrix:
    M = sp.random(nrows, ncols, density=density, format="csr", random_state=rng,
                  data_rvs=lambda k: rng.uniform(-1.0, 1.0, k))
    return CsrMatrix.from_scipy(M)


def random_spd(rng: np.random.Generator, n: int, density: float = 0.1) -> CsrMatrix:
    """Symmetric, strictly diagonally dominant with positive diagonal."""
    M = sp.random(n, n, density=density, format="csr", random_state=rng,
                  data_rvs=lambda k: -rng.uniform(0.1, 1.0, k))
    S = sp.triu(M, k=1)
    S = S + S.T
    diag = np.asarray(abs(S).sum(axis=1)).ravel() + rng.uniform(0.5, 1.5, n)
    return CsrMatrix.from_scipy((S + sp.diags(diag)).tocsr())
