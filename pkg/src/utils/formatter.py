"""
Text rendering of benchmark reports: hierarchy table, solve summary and setup breakdown.
"""
from typing import List

from ..state import LevelStats, RunReport


class ReportFormatter:
    """Format benchmark results as fixed-width text."""

    def __init__(self):
        self.page_width = 60
        self.number_width = 12

    def rule(self, char: str = "=") -> str:
        return char * self.page_width

    def format_grid_stats(self, levels: List[LevelStats], opc: float) -> str:
        """
        Per-level sizes of the hierarchy.

        Example:
            level        rows         nnz     nnz/row
                1       4096       27136        6.62
        """
        w = self.number_width
        lines = [f"{'level':>6}{'rows':>{w}}{'nnz':>{w}}{'nnz/row':>{w}}"]
        for lvl in levels:
            lines.append(f"{lvl.level:>6}{lvl.rows:>{w}}{lvl.nnz:>{w}}{lvl.nnz_per_row:>{w}.2f}")
        lines.append(f"operator complexity: {opc:.4f}")
        return "\n".join(lines) + "\n"

    def format_setup_breakdown(self, report: RunReport) -> str:
        bd = report.setup_breakdown
        total = bd.total or 1.0
        lines = []
        for name in ("matching", "spmm", "spmm_comm", "other"):
            seconds = getattr(bd, name)
            lines.append(f"  {name:<12}{seconds:>10.4f}s {100.0 * seconds / total:>6.1f}%")
        return "\n".join(lines) + "\n"

    def format_solve_summary(self, report: RunReport) -> str:
        status = "converged" if report.converged else "NOT converged"
        return (
            f"  iterations:     {report.iterations} ({status})\n"
            f"  final relres:   {report.final_relres:.3e}\n"
            f"  tsetup:         {report.tsetup:.4f}s\n"
            f"  tsolve:         {report.tsolve:.4f}s\n"
            f"  titer:          {report.titer:.6f}s\n"
            f"  solve messages: {report.comm.solve_messages} ({report.comm.solve_bytes} bytes)\n"
        )

    def format_report(self, report: RunReport) -> str:
        """Complete text report."""
        text = f"{self.rule()}\n"
        text += f"{report.problem}: {report.global_rows} rows, {report.global_nnz} nnz, {report.ranks} rank(s)\n"
        text += f"{self.rule()}\n\n"
        if report.precflag:
            text += "Hierarchy\n"
            text += self.format_grid_stats(report.levels, report.opc)
            text += "\nSetup breakdown\n"
            text += self.format_setup_breakdown(report)
        else:
            text += "Preconditioner: none (B = I)\n"
        text += "\nSolve\n"
        text += self.format_solve_summary(report)
        return text
