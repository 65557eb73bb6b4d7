"""
Hierarchy setup by decoupled pairwise aggregation.

Every pairwise step matches the rank's diagonal block, builds a block-diagonal
pairwise prolongator and forms the Galerkin operator. Every `s` steps are
composed into one hierarchy level, so aggregates hold at most 2^s unknowns.
The Galerkin product communicates only for A*P; R*(AP) is local because R's
rows live on the rank that owns the aggregate.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..state import SetupConfig
from .dist_runtime import Partition, RankCtx
from .errors import CoarseningStagnationError, ContractViolation
from .halo_kernels import (DistMatrix, DistVector, HaloPlan, RowExchange, prepare_row_exchange,
                           spmm_dist, spmv_block)
from .matching import Matching, build_weights, suitor_match
from .sparse_core import CsrMatrix, SegmentedCsr, l1_diagonal, spgemm_local, transpose

logger = logging.getLogger(__name__)

SHRINK_WARNING = 0.9


@dataclass(eq=False)
class Level:
    """One hierarchy level; P and R connect it to the next coarser level."""
    A: DistMatrix
    m_l1: DistVector
    spmv_plan: HaloPlan
    w: DistVector
    global_nnz: int
    P: Optional[DistMatrix] = None
    R: Optional[DistMatrix] = None
    pairwise_steps: int = 0

    @property
    def global_rows(self) -> int:
        return self.A.part.global_n


@dataclass(eq=False)
class Hierarchy:
    levels: List[Level]
    opc: float
    matchings: List[np.ndarray] = field(default_factory=list)

    @property
    def nl(self) -> int:
        return len(self.levels)

    def level_sizes(self) -> List[Tuple[int, int]]:
        """(global rows, global nnz) for every level, finest first."""
        return [(lvl.global_rows, lvl.global_nnz) for lvl in self.levels]

    def recompute_opc(self) -> float:
        return sum(lvl.global_nnz for lvl in self.levels) / self.levels[0].global_nnz


def initial_smooth_vector(part: Partition, rank: int, kind: str = "ones", seed: int = 0) -> DistVector:
    """Owned slice of the starting smooth vector; the random variant does not depend on the partition."""
    if kind == "ones":
        return DistVector.full(part, rank, 1.0)
    if kind == "random":
        rng = np.random.default_rng(seed)
        lo, hi = part.range(rank)
        return DistVector(part, rank, rng.uniform(0.5, 1.5, part.global_n)[lo:hi])
    raise ContractViolation(f"unknown smooth vector kind {kind!r}")


def build_pairwise_prolongator(match: Matching, w_local: np.ndarray,
                               coarse_part: Optional[Partition] = None, rank: int = 0) -> CsrMatrix:
    """
    Pairwise prolongator block: one entry per row, one or two per column.

    Aggregates are numbered by their smallest member. A pair (i, j) gets the
    column (w_i, w_j) / ||(w_i, w_j)||; a singleton gets sign(w_i), or 1 when
    w_i is zero. With a coarse partition the columns are global coarse indices.
    """
    w_local = np.asarray(w_local, dtype=np.float64)
    n = match.n
    if w_local.shape != (n,):
        raise ContractViolation(f"smooth vector has {w_local.shape} entries for {n} vertices")
    idx = np.arange(n, dtype=np.int64)
    mate = match.mate
    partner = np.where(mate < 0, idx, mate)
    leader = partner >= idx
    agg_of = np.cumsum(leader) - 1
    agg = agg_of[np.minimum(idx, partner)]
    nc = int(np.count_nonzero(leader))

    paired = mate >= 0
    values = np.where(w_local > 0, 1.0, np.where(w_local < 0, -1.0, 1.0))
    wi, wj = w_local[paired], w_local[partner[paired]]
    norm = np.sqrt(wi * wi + wj * wj)
    with np.errstate(invalid="ignore", divide="ignore"):
        values[paired] = np.where(norm > 0, wi / norm, 1.0 / np.sqrt(2.0))

    offset, ncols = 0, nc
    if coarse_part is not None:
        if coarse_part.extent(rank) != nc:
            raise ContractViolation(
                f"coarse partition gives rank {rank} {coarse_part.extent(rank)} aggregates, matching has {nc}")
        offset, ncols = int(coarse_part.starts[rank]), coarse_part.global_n
    return CsrMatrix(n, ncols, np.arange(n + 1, dtype=np.int64), agg + offset, values)


def _owned_view(M: DistMatrix) -> SegmentedCsr:
    lo, hi = M.part.range(M.rank)
    return SegmentedCsr(M.local, CsrMatrix.empty(0, M.local.ncols), np.zeros(0, dtype=np.int64),
                        (lo, hi - 1), M.part.global_n)


def compose_prolongators(P_list: Sequence[DistMatrix]) -> DistMatrix:
    """P_1 P_2 ... P_s of block-diagonal prolongators; local products only."""
    if not P_list:
        raise ContractViolation("nothing to compose")
    result = P_list[0]
    for P in P_list[1:]:
        if result.col_part != P.part or result.rank != P.rank:
            raise ContractViolation(
                f"cannot compose {result.global_shape} with {P.global_shape}")
        result = DistMatrix(result.part, P.col_part, result.rank, spgemm_local(result.local, _owned_view(P)))
    return result


def restrictor(P: DistMatrix) -> DistMatrix:
    """R = P^T, built from the local block of P alone."""
    fine_lo, _ = P.part.range(P.rank)
    R_local = transpose(P.block_local()).shift_columns(fine_lo, P.part.global_n)
    return DistMatrix(P.col_part, P.part, P.rank, R_local)


def galerkin_product(ctx: RankCtx, A: DistMatrix, P: DistMatrix,
                     exchange: Optional[RowExchange] = None) -> Tuple[DistMatrix, DistMatrix]:
    """Coarse operator R (A P) and the restrictor R."""
    AP = spmm_dist(ctx, A, P, exchange)
    R = restrictor(P)
    with ctx.phase("spmm"):
        Ac_local = spgemm_local(R.local, _owned_view(AP))
    return DistMatrix(P.col_part, P.col_part, ctx.rank, Ac_local), R


def _replayed_matching(A: DistMatrix, mate_global: np.ndarray) -> Matching:
    """Owned slice of a global mate array, renumbered into the diagonal block."""
    mate_global = np.asarray(mate_global, dtype=np.int64)
    if mate_global.shape != (A.part.global_n,):
        raise ContractViolation(
            f"replayed matching has {mate_global.shape} entries for {A.part.global_n} vertices")
    lo, hi = A.owned_range()
    owned = mate_global[lo:hi]
    matched = owned >= 0
    if np.any((owned[matched] < lo) | (owned[matched] >= hi)):
        raise ContractViolation(f"rank {A.rank}: replayed matching pairs vertices across rank blocks")
    return Matching(np.where(matched, owned - lo, -1)).validate()


def pairwise_step(ctx: RankCtx, A: DistMatrix, w: DistVector, mate: Optional[np.ndarray] = None) -> DistMatrix:
    """
    Match the diagonal block and return the distributed pairwise prolongator.

    A global mate array replaces the Suitor matching; it must pair vertices
    inside the rank blocks of A only.
    """
    with ctx.phase("matching"):
        if mate is None:
            match = suitor_match(build_weights(A.diagonal_block(), w.local))
        else:
            match = _replayed_matching(A, mate)
    nc = A.part.extent(ctx.rank) - match.size
    coarse_part = Partition.from_counts(ctx.allgather(nc))
    P_local = build_pairwise_prolongator(match, w.local, coarse_part, ctx.rank)
    return DistMatrix(A.part, coarse_part, ctx.rank, P_local)


def owned_mates(P: DistMatrix) -> np.ndarray:
    """Mates of the owned fine rows of a pairwise prolongator in global numbering, -1 if unpaired."""
    lo, _ = P.owned_range()
    cols = P.block_local().col_idx
    order = np.argsort(cols, kind="stable")
    pair = cols[order][1:] == cols[order][:-1]
    first, second = order[:-1][pair], order[1:][pair]
    mates = np.full(P.local.nrows, -1, dtype=np.int64)
    mates[first] = second + lo
    mates[second] = first + lo
    return mates


def _make_level(ctx: RankCtx, A: DistMatrix, w: DistVector) -> Level:
    lo, _ = A.part.range(ctx.rank)
    m_l1 = DistVector(A.part, ctx.rank, l1_diagonal(A.local, row_offset=lo))
    global_nnz = int(ctx.allreduce_sum(A.local.nnz))
    return Level(A=A, m_l1=m_l1, spmv_plan=A.halo_plan(ctx), w=w, global_nnz=global_nnz)


def setup_hierarchy(ctx: RankCtx, A: DistMatrix, w0: DistVector, cfg: SetupConfig,
                    replay: Optional[Sequence[np.ndarray]] = None) -> Hierarchy:
    """
    Collective: build levels until the coarse size target or the level cap is reached.

    `replay` holds one global mate array per pairwise step, used in order
    instead of the computed matchings. The matchings actually used are kept in
    `Hierarchy.matchings` (owned slices), so a run on a finer partition can be
    replayed on any coarser one whose rank blocks are unions of its blocks.
    """
    if A.part != A.col_part:
        raise ContractViolation("the system matrix must be square with matching row and column partitions")
    coarse_size = cfg.resolved_coarse_size(A.part.global_n)
    levels = [_make_level(ctx, A, w0)]
    matchings: List[np.ndarray] = []

    while levels[-1].global_rows > coarse_size and len(levels) < cfg.max_levels:
        fine = levels[-1]
        A_step, w_step = fine.A, fine.w
        steps: List[DistMatrix] = []
        R = None
        for _ in range(cfg.aggregation_exponent):
            mate = None
            if replay is not None:
                if len(matchings) >= len(replay):
                    raise ContractViolation(f"replay holds only {len(replay)} matchings")
                mate = replay[len(matchings)]
            exchange = prepare_row_exchange(ctx, A_step, A_step.col_part)
            P = pairwise_step(ctx, A_step, w_step, mate)
            matchings.append(owned_mates(P))
            n_fine, n_coarse = P.part.global_n, P.col_part.global_n
            if n_coarse == n_fine:
                raise CoarseningStagnationError(len(levels), n_fine)
            if n_coarse > SHRINK_WARNING * n_fine and ctx.rank == 0:
                logger.warning("level %d: pairwise step only shrinks %d -> %d", len(levels), n_fine, n_coarse)
            A_step, R = galerkin_product(ctx, A_step, P, exchange)
            w_step = spmv_block(R, w_step)
            steps.append(P)
            if n_coarse <= coarse_size:
                break

        if len(steps) > 1:
            P = compose_prolongators(steps)
            A_step, R = galerkin_product(ctx, fine.A, P)
            w_step = spmv_block(R, fine.w)
        else:
            P = steps[0]
        fine.P, fine.R, fine.pairwise_steps = P, R, len(steps)
        levels.append(_make_level(ctx, A_step, w_step))
        logger.debug("level %d: %d rows, %d nnz after %d pairwise steps",
                     len(levels), levels[-1].global_rows, levels[-1].global_nnz, len(steps))

    opc = sum(lvl.global_nnz for lvl in levels) / levels[0].global_nnz
    if ctx.rank == 0:
        logger.info("hierarchy built: %d levels, coarsest %d rows, opc %.3f",
                    len(levels), levels[-1].global_rows, opc)
    return Hierarchy(levels, opc, matchings)
