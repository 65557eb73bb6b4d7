"""
Problem stage: generates the Poisson system or reads and scatters a MatrixMarket file.
"""
import logging

from ..core.dist_runtime import spawn_ranks
from ..core.problem_gen import gen_poisson7, load_matrix_market
from ..state import RunConfig

logger = logging.getLogger(__name__)


def build_problem(state: dict) -> dict:
    """Distributed system (A, b) for every rank."""
    cfg: RunConfig = state["config"]

    def program(ctx):
        if cfg.nd is not None:
            return gen_poisson7(ctx, cfg.nd, scaled=cfg.scaled)
        return load_matrix_market(ctx, cfg.matrix_path)

    systems = spawn_ranks(cfg.ranks, program)
    A0 = systems[0][0]
    logger.info("problem %s: %d rows on %d ranks", cfg.problem_label, A0.part.global_n, cfg.ranks)
    return {"systems": systems}
