"""
Distributed AMG-preconditioned conjugate gradient on an in-process rank runtime.
"""
from .amg_setup import (Hierarchy, Level, build_pairwise_prolongator, compose_prolongators,
                        galerkin_product, initial_smooth_vector, setup_hierarchy)
from .cycle import AmgPreconditioner, l1_jacobi_sweeps, vcycle_apply
from .dist_runtime import CommStats, Partition, RankCtx, spawn_ranks
from .errors import MatchAmgError
from .halo_kernels import (DistMatrix, DistVector, build_halo_plan, dot_dist, norm_dist, spmm_dist,
                           spmv_dist)
from .krylov import pcg_solve, residual
from .matching import Matching, WeightedGraph, build_weights, suitor_match
from .problem_gen import distribute, gen_poisson7, load_matrix_market
from .sparse_core import CsrMatrix, SegmentedCsr, read_matrix_market, spgemm_local, write_matrix_market

__all__ = [
    "AmgPreconditioner", "CommStats", "CsrMatrix", "DistMatrix", "DistVector", "Hierarchy", "Level",
    "MatchAmgError", "Matching", "Partition", "RankCtx", "SegmentedCsr", "WeightedGraph",
    "build_halo_plan", "build_pairwise_prolongator", "build_weights", "compose_prolongators",
    "distribute", "dot_dist", "galerkin_product", "gen_poisson7", "initial_smooth_vector",
    "l1_jacobi_sweeps", "load_matrix_market", "norm_dist", "pcg_solve", "read_matrix_market",
    "residual", "setup_hierarchy", "spawn_ranks", "spgemm_local", "spmm_dist", "spmv_dist",
    "suitor_match", "vcycle_apply", "write_matrix_market",
]
