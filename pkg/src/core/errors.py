"""
Exception hierarchy shared by the solver modules.
"""
from typing import Iterable, Optional


class MatchAmgError(Exception):
    """Base class for every error raised by the library."""


class ContractViolation(MatchAmgError, ValueError):
    """Operands do not satisfy an operation's preconditions (shapes, partitions)."""


class MissingRowError(MatchAmgError):
    """A product referenced a global row that is neither owned nor harvested."""

    def __init__(self, global_row: int):
        self.global_row = int(global_row)
        super().__init__(f"row {self.global_row} is neither local nor present in the auxiliary CSR")


class SingularSmootherError(MatchAmgError):
    """The l1-Jacobi diagonal has zero entries."""

    def __init__(self, rows: Iterable[int]):
        self.rows = [int(r) for r in rows]
        shown = ", ".join(str(r) for r in self.rows[:8])
        more = "" if len(self.rows) <= 8 else f" (+{len(self.rows) - 8} more)"
        super().__init__(f"zero l1-Jacobi diagonal at rows {shown}{more}")


class StalePlanError(MatchAmgError):
    """A halo plan was used with a matrix it was not built for."""


class DeadlockError(MatchAmgError):
    """Ranks stayed blocked on a receive past the runtime timeout."""

    def __init__(self, blocked_ranks: Iterable[int], timeout: float, detail: str = ""):
        self.blocked_ranks = sorted(int(r) for r in blocked_ranks)
        self.timeout = timeout
        msg = f"ranks {self.blocked_ranks} blocked for more than {timeout:g}s"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class RankAborted(MatchAmgError):
    """Raised inside surviving ranks after another rank failed."""


class CoarseningStagnationError(MatchAmgError):
    """A pairwise coarsening step produced no aggregates (empty matching everywhere)."""

    def __init__(self, level: int, size: int):
        self.level = level
        self.size = size
        super().__init__(f"coarsening stagnated at level {level}: size stays {size}")


class PcgBreakdownError(MatchAmgError):
    """rho vanished or a PCG scalar became non-finite."""

    def __init__(self, iteration: int, detail: str):
        self.iteration = iteration
        super().__init__(f"PCG breakdown at iteration {iteration}: {detail}")


class MatrixMarketError(MatchAmgError):
    """Malformed MatrixMarket input."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ConfigError(MatchAmgError, ValueError):
    """Invalid benchmark configuration."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
