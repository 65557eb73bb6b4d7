"""
Graph weights from a smooth vector and the Suitor half-approximate
maximum-weight matching.

Both run on the rank's diagonal block only: connections to unknowns owned by
other ranks are ignored, so nothing here talks to other ranks.
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import ContractViolation
from .sparse_core import CsrMatrix

logger = logging.getLogger(__name__)

UNMATCHED = -1
CLAMPED_WEIGHT = -1e300


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Symmetric adjacency without self-loops; `adjacency.values` are edge weights."""
    adjacency: CsrMatrix
    clamped: int = 0

    @property
    def n(self) -> int:
        return self.adjacency.nrows

    @property
    def num_edges(self) -> int:
        return self.adjacency.nnz // 2

    def edge_weight(self, i: int, j: int) -> float:
        lo, hi = self.adjacency.row_ptr[i], self.adjacency.row_ptr[i + 1]
        pos = lo + np.searchsorted(self.adjacency.col_idx[lo:hi], j)
        if pos >= hi or self.adjacency.col_idx[pos] != j:
            raise KeyError((i, j))
        return float(self.adjacency.values[pos])

    @classmethod
    def from_edges(cls, n: int, edges) -> "WeightedGraph":
        """Graph from (i, j, weight) triples; each undirected edge listed once."""
        edges = list(edges)
        if not edges:
            return cls(CsrMatrix.empty(n, n))
        i, j, wt = (np.asarray(c) for c in zip(*edges))
        if np.any(i == j):
            raise ContractViolation("self-loops are not allowed")
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        return cls(CsrMatrix.from_coo(rows, cols, np.concatenate([wt, wt]), (n, n)))


@dataclass(frozen=True, eq=False)
class Matching:
    mate: np.ndarray

    @property
    def n(self) -> int:
        return len(self.mate)

    def pairs(self) -> List[Tuple[int, int]]:
        idx = np.flatnonzero(self.mate > np.arange(self.n))
        return [(int(i), int(self.mate[i])) for i in idx]

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.mate >= 0)) // 2

    def weight(self, g: WeightedGraph) -> float:
        return float(sum(g.edge_weight(i, j) for i, j in self.pairs()))

    def validate(self) -> "Matching":
        mate = self.mate
        matched = np.flatnonzero(mate >= 0)
        if np.any(mate[matched] == matched):
            raise ContractViolation("vertex matched to itself")
        if np.any(mate[matched] >= self.n) or np.any(mate[mate[matched]] != matched):
            raise ContractViolation("mate array is not an involution")
        return self


def build_weights(A_block: CsrMatrix, w: np.ndarray) -> WeightedGraph:
    """
    Edge weights 1 - 2 a_ij w_i w_j / (a_ii w_i^2 + a_jj w_j^2) on the
    symmetrized off-diagonal pattern of a square block.

    Explicitly stored zeros are not edges. Non-finite weights are clamped to
    CLAMPED_WEIGHT and counted.
    """
    if A_block.nrows != A_block.ncols:
        raise ContractViolation(f"matching needs a square block, got {A_block.shape}")
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (A_block.nrows,):
        raise ContractViolation(f"smooth vector has {w.shape} entries for {A_block.nrows} vertices")
    if A_block.nrows == 0:
        return WeightedGraph(CsrMatrix.empty(0, 0))

    S = A_block.to_scipy()
    S = ((S + S.T) * 0.5).tocoo()
    rows, cols, vals = S.row.astype(np.int64), S.col.astype(np.int64), S.data
    is_diag = rows == cols
    diag = np.bincount(rows[is_diag], weights=vals[is_diag], minlength=A_block.nrows)
    edge = ~is_diag & (vals != 0)
    rows, cols, vals = rows[edge], cols[edge], vals[edge]

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        num = 2.0 * vals * (w[rows] * w[cols])
        den = diag[rows] * w[rows] ** 2 + diag[cols] * w[cols] ** 2
        weights = 1.0 - num / den
    bad = ~np.isfinite(weights)
    clamped = int(np.count_nonzero(bad)) // 2
    if clamped:
        weights[bad] = CLAMPED_WEIGHT
        logger.warning("clamped %d non-finite matching weights (zero denominators)", clamped)
    return WeightedGraph(CsrMatrix.from_coo(rows, cols, weights, A_block.shape), clamped)


def suitor_match(g: WeightedGraph) -> Matching:
    """
    Sequential Suitor matching.

    Edges are totally ordered by (weight, smaller endpoint first, then the
    other endpoint), so a vertex prefers the lighter index among equal weights
    and accepts the smaller proposer. The result is deterministic and weighs
    at least half of the maximum-weight matching.
    """
    n = g.n
    row_ptr = g.adjacency.row_ptr.tolist()
    col_idx = g.adjacency.col_idx.tolist()
    weights = g.adjacency.values.tolist()
    suitor = [UNMATCHED] * n
    ws = [float("-inf")] * n

    def beats(wt: float, a: int, b: int, wt_old: float, c: int) -> bool:
        # edge (a, b) against edge (c, b)
        if wt != wt_old:
            return wt > wt_old
        if c == UNMATCHED:
            return False
        return (min(a, b), max(a, b)) < (min(c, b), max(c, b))

    for u in range(n):
        current = u
        while current != UNMATCHED:
            partner = UNMATCHED
            best = float("-inf")
            for pos in range(row_ptr[current], row_ptr[current + 1]):
                v = col_idx[pos]
                wt = weights[pos]
                if not beats(wt, current, v, ws[v], suitor[v]):
                    continue
                if partner == UNMATCHED or wt > best or (wt == best and v < partner):
                    partner, best = v, wt
            if partner == UNMATCHED:
                break
            displaced = suitor[partner]
            suitor[partner] = current
            ws[partner] = best
            current = displaced

    mate = np.full(n, UNMATCHED, dtype=np.int64)
    for v in range(n):
        s = suitor[v]
        if s != UNMATCHED and suitor[s] == v:
            mate[v] = s
    logger.debug("suitor matched %d of %d vertices", int(np.count_nonzero(mate >= 0)), n)
    return Matching(mate)
