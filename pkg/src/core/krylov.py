"""
Flexible preconditioned conjugate gradient with grouped reductions.

Each iteration applies the preconditioner once, performs one SpMV and reduces
alpha, beta, gamma and ||r||^2 together in a single allreduce; the four vector
updates that follow are local.
"""
import logging
import math
from typing import Callable, Optional, Tuple

from ..state import SolveConfig, SolveStats
from .cycle import identity_preconditioner
from .dist_runtime import RankCtx
from .errors import ContractViolation, PcgBreakdownError
from .halo_kernels import DistMatrix, DistVector, HaloPlan, axpy_local, fused_dots, spmv_dist

logger = logging.getLogger(__name__)

Preconditioner = Callable[[DistVector], DistVector]


def residual(ctx: RankCtx, A: DistMatrix, b: DistVector, u: DistVector,
             plan: Optional[HaloPlan] = None) -> DistVector:
    """r = b - A u."""
    return axpy_local(-1.0, spmv_dist(ctx, A, u, plan), b)


def _check_scalars(iteration: int, **scalars: float) -> None:
    for name, value in scalars.items():
        if not math.isfinite(value):
            raise PcgBreakdownError(iteration, f"{name} = {value}")
    if scalars.get("rho", 1.0) == 0.0:
        raise PcgBreakdownError(iteration, "rho = 0")


def pcg_solve(ctx: RankCtx, A: DistMatrix, b: DistVector, u0: Optional[DistVector] = None,
              precond: Optional[Preconditioner] = None,
              cfg: Optional[SolveConfig] = None) -> Tuple[DistVector, SolveStats]:
    """
    Solve A u = b from u0 (zero by default).

    Stops when ||r_i|| / ||r_0|| < rtol or after max_iters iterations. A missing
    preconditioner means B = I.
    """
    cfg = cfg or SolveConfig()
    if b.part != A.part or A.part != A.col_part:
        raise ContractViolation("right-hand side does not conform to the system matrix")
    if u0 is not None and u0.part != A.col_part:
        raise ContractViolation("initial guess does not conform to the system matrix")
    apply_b = precond or identity_preconditioner

    with ctx.phase("solve"):
        plan = A.halo_plan(ctx)
        u = DistVector.zeros(A.col_part, ctx.rank) if u0 is None else u0.copy()
        r = residual(ctx, A, b, u, plan)
        w = apply_b(r)
        d = w
        v = spmv_dist(ctx, A, w, plan)
        q = v
        alpha, rho, rr = fused_dots(ctx, [(w, r), (w, v), (r, r)])
        norm0 = math.sqrt(rr)
        if norm0 == 0.0:
            return u, SolveStats(iterations=0, final_relres=0.0, history=[0.0], converged=True)
        _check_scalars(0, alpha=alpha, rho=rho)

        history = [1.0]
        u = axpy_local(alpha / rho, d, u)
        r = axpy_local(-alpha / rho, q, r)
        converged = False
        i = 1
        while True:
            w = apply_b(r)
            v = spmv_dist(ctx, A, w, plan)
            alpha, beta, gamma, rr = fused_dots(ctx, [(w, r), (w, v), (w, q), (r, r)])
            relres = math.sqrt(rr) / norm0
            history.append(relres)
            if relres < cfg.rtol:
                converged = True
                break
            if i >= cfg.max_iters:
                break

            rho_next = beta - gamma * gamma / rho
            _check_scalars(i, alpha=alpha, beta=beta, gamma=gamma, rho=rho_next)
            d = axpy_local(-gamma / rho, d, w)
            u = axpy_local(alpha / rho_next, d, u)
            q = axpy_local(-gamma / rho, q, v)
            r = axpy_local(-alpha / rho_next, q, r)
            rho = rho_next
            i += 1

    stats = SolveStats(iterations=i, final_relres=history[-1], history=history, converged=converged)
    if ctx.rank == 0:
        if converged:
            logger.info("PCG converged in %d iterations (relres %.3e)", i, stats.final_relres)
        else:
            logger.warning("PCG stopped after %d iterations at relres %.3e (rtol %.1e)",
                           i, stats.final_relres, cfg.rtol)
    return u, stats
