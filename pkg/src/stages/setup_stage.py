"""
Setup stage: builds the AMG hierarchy on every rank and times it.

Without preconditioning the hierarchy holds the system level only, so the
report still carries its size and nnz.
"""
import logging
import time

from ..core.amg_setup import initial_smooth_vector, setup_hierarchy
from ..core.dist_runtime import spawn_ranks
from ..state import RunConfig

logger = logging.getLogger(__name__)


def setup_preconditioner(state: dict) -> dict:
    cfg: RunConfig = state["config"]
    systems = state["systems"]
    setup_cfg = cfg.setup if cfg.solve.precflag else cfg.setup.model_copy(update={"max_levels": 1})

    def program(ctx):
        A, _ = systems[ctx.rank]
        w0 = initial_smooth_vector(A.part, ctx.rank, setup_cfg.smooth_vector, cfg.seed)
        ctx.barrier()
        start = time.perf_counter()
        hierarchy = setup_hierarchy(ctx, A, w0, setup_cfg)
        elapsed = time.perf_counter() - start
        return hierarchy, elapsed, ctx.stats

    results = spawn_ranks(cfg.ranks, program)
    hierarchies = [h for h, _, _ in results]
    tsetup = max(t for _, t, _ in results)
    logger.info("setup finished in %.3fs: %d levels, opc %.3f", tsetup, hierarchies[0].nl, hierarchies[0].opc)
    return {
        "hierarchies": hierarchies,
        "tsetup": tsetup,
        "setup_comm": [(t, stats) for _, t, stats in results],
    }
