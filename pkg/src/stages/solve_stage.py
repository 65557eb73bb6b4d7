"""
Solve stage: flexible PCG with the V-cycle (or the identity when precflag is off).
"""
import logging
import time

from ..core.cycle import AmgPreconditioner
from ..core.dist_runtime import spawn_ranks
from ..core.krylov import pcg_solve
from ..state import RunConfig

logger = logging.getLogger(__name__)


def solve_system(state: dict) -> dict:
    cfg: RunConfig = state["config"]
    systems = state["systems"]
    hierarchies = state["hierarchies"]

    def program(ctx):
        A, b = systems[ctx.rank]
        precond = AmgPreconditioner(ctx, hierarchies[ctx.rank], cfg.cycle) if cfg.solve.precflag else None
        ctx.barrier()
        start = time.perf_counter()
        u, stats = pcg_solve(ctx, A, b, precond=precond, cfg=cfg.solve)
        elapsed = time.perf_counter() - start
        return u, stats, elapsed, ctx.stats

    results = spawn_ranks(cfg.ranks, program)
    stats = results[0][1]
    tsolve = max(t for _, _, t, _ in results)
    return {
        "solutions": [u for u, _, _, _ in results],
        "solve_stats": stats,
        "tsolve": tsolve,
        "solve_comm": [comm for _, _, _, comm in results],
    }
