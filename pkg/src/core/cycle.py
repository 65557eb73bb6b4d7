"""
l1-Jacobi relaxation and the symmetric V-cycle.
"""
import logging
from typing import Optional

import numpy as np

from ..state import CycleConfig
from .amg_setup import Hierarchy
from .dist_runtime import RankCtx
from .errors import ContractViolation, SingularSmootherError
from .halo_kernels import DistMatrix, DistVector, HaloPlan, spmv_block, spmv_dist

logger = logging.getLogger(__name__)


def l1_jacobi_sweeps(ctx: RankCtx, A: DistMatrix, d_l1: DistVector, r: DistVector,
                     x0: Optional[DistVector] = None, nu: int = 1, weight: float = 1.0,
                     plan: Optional[HaloPlan] = None) -> DistVector:
    """nu sweeps of x <- x + weight * D^{-1} (r - A x); a missing x0 means a zero start."""
    if nu < 0:
        raise ContractViolation(f"sweep count must be >= 0, got {nu}")
    d = d_l1.local
    zero = np.flatnonzero(d == 0)
    if len(zero):
        raise SingularSmootherError(zero + A.part.starts[ctx.rank])
    if nu == 0:
        return DistVector.zeros(r.part, r.rank) if x0 is None else x0.copy()

    if x0 is None:
        x = r.like(weight * r.local / d)
        remaining = nu - 1
    else:
        x = x0
        remaining = nu
    for _ in range(remaining):
        Ax = spmv_dist(ctx, A, x, plan)
        x = x.like(x.local + weight * (r.local - Ax.local) / d)
    return x


def vcycle_apply(ctx: RankCtx, h: Hierarchy, cfg: CycleConfig, r: DistVector, level: int = 0) -> DistVector:
    """x = B^k r for level k of the hierarchy."""
    if not 0 <= level < h.nl:
        raise ContractViolation(f"level {level} outside a {h.nl}-level hierarchy")
    lvl = h.levels[level]
    if r.part != lvl.A.part:
        raise ContractViolation(f"residual does not conform to level {level}")
    omega = cfg.relaxation_weight

    if level == h.nl - 1:
        return l1_jacobi_sweeps(ctx, lvl.A, lvl.m_l1, r, None, cfg.coarsest_sweeps, omega, lvl.spmv_plan)

    x = l1_jacobi_sweeps(ctx, lvl.A, lvl.m_l1, r, None, cfg.pre_sweeps, omega, lvl.spmv_plan)
    if cfg.pre_sweeps:
        residual = r.like(r.local - spmv_dist(ctx, lvl.A, x, lvl.spmv_plan).local)
    else:
        residual = r
    e = vcycle_apply(ctx, h, cfg, spmv_block(lvl.R, residual), level + 1)
    x = x.like(x.local + spmv_block(lvl.P, e).local)
    return l1_jacobi_sweeps(ctx, lvl.A, lvl.m_l1, r, x, cfg.post_sweeps, omega, lvl.spmv_plan)


class AmgPreconditioner:
    """r -> B r through one V-cycle from the finest level."""

    def __init__(self, ctx: RankCtx, hierarchy: Hierarchy, cfg: CycleConfig):
        self.ctx = ctx
        self.hierarchy = hierarchy
        self.cfg = cfg
        self.applications = 0
        if cfg.pre_sweeps != cfg.post_sweeps and ctx.rank == 0:
            logger.warning("pre_sweeps=%d differs from post_sweeps=%d: the V-cycle is not symmetric",
                           cfg.pre_sweeps, cfg.post_sweeps)

    def __call__(self, r: DistVector) -> DistVector:
        self.applications += 1
        return vcycle_apply(self.ctx, self.hierarchy, self.cfg, r, 0)


def identity_preconditioner(r: DistVector) -> DistVector:
    return r.copy()
