"""
Benchmark entry point.
Wires the pipeline stages into a LangGraph graph and exports it for the
LangGraph server; `main` is the command-line harness.
"""
import argparse
import logging
import os
import sys
from collections import defaultdict
from typing import List, Optional

from dotenv import load_dotenv
from langgraph.graph import END, StateGraph

from src.core.errors import ConfigError, ContractViolation, MatchAmgError, MatrixMarketError
from src.stages.problem_stage import build_problem
from src.stages.setup_stage import setup_preconditioner
from src.stages.solve_stage import solve_system
from src.state import (BenchmarkState, CommCounters, LevelStats, RunConfig, RunReport,
                       SetupBreakdown)
from src.utils.config_parser import parse_config
from src.utils.formatter import ReportFormatter
from src.utils.pdf_exporter import ReportPDFExporter

logger = logging.getLogger(__name__)

formatter = ReportFormatter()


def assemble_report(state: dict) -> dict:
    """Collect per-rank results into one RunReport."""
    cfg: RunConfig = state["config"]
    hierarchy = state["hierarchies"][0]
    stats = state["solve_stats"]

    levels = [LevelStats(level=k + 1, rows=rows, nnz=nnz)
              for k, (rows, nnz) in enumerate(hierarchy.level_sizes())]

    # breakdown of the slowest rank
    elapsed, slowest = max(state["setup_comm"], key=lambda item: item[0])
    phases = {name: slowest.phase_seconds.get(name, 0.0) for name in ("matching", "spmm", "spmm_comm")}
    breakdown = SetupBreakdown(**phases, other=max(elapsed - sum(phases.values()), 0.0))

    setup_messages, setup_bytes = defaultdict(int), defaultdict(int)
    for _, comm in state["setup_comm"]:
        for phase, count in comm.messages.items():
            setup_messages[phase] += count
        for phase, count in comm.bytes.items():
            setup_bytes[phase] += count
    solve_comm = state["solve_comm"]
    counters = CommCounters(
        setup_messages=dict(sorted(setup_messages.items())),
        setup_bytes=dict(sorted(setup_bytes.items())),
        solve_messages=sum(c.messages.get("solve", 0) for c in solve_comm),
        solve_bytes=sum(c.bytes.get("solve", 0) for c in solve_comm),
        solve_allreduces=solve_comm[0].collectives.get("allreduce", 0),
    )

    tsolve = state["tsolve"]
    report = RunReport(
        problem=cfg.problem_label,
        ranks=cfg.ranks,
        global_rows=levels[0].rows,
        global_nnz=levels[0].nnz,
        precflag=cfg.solve.precflag,
        levels=levels,
        nl=hierarchy.nl,
        opc=hierarchy.opc,
        iterations=stats.iterations,
        final_relres=stats.final_relres,
        converged=stats.converged,
        residual_history=stats.history,
        tsetup=state["tsetup"],
        tsolve=tsolve,
        titer=tsolve / stats.iterations if stats.iterations else 0.0,
        setup_breakdown=breakdown,
        comm=counters,
        config=cfg,
    )
    return {"report": report}


def export_report(state: dict) -> dict:
    """Write the PDF report when one was requested."""
    cfg: RunConfig = state["config"]
    if cfg.pdf_path is None:
        return {"pdf_path": None}
    pdf_path = ReportPDFExporter().export_pdf(state["report"], filename=cfg.pdf_path or None)
    return {"pdf_path": pdf_path}


# Build the workflow
workflow = StateGraph(BenchmarkState)

workflow.add_node("build_problem", build_problem)
workflow.add_node("setup_preconditioner", setup_preconditioner)
workflow.add_node("solve_system", solve_system)
workflow.add_node("assemble_report", assemble_report)
workflow.add_node("export_report", export_report)

workflow.set_entry_point("build_problem")
workflow.add_edge("build_problem", "setup_preconditioner")
workflow.add_edge("setup_preconditioner", "solve_system")
workflow.add_edge("solve_system", "assemble_report")
workflow.add_edge("assemble_report", "export_report")
workflow.add_edge("export_report", END)

# Export the compiled graph for LangGraph server
graph = workflow.compile()


def run_benchmark(cfg: RunConfig) -> RunReport:
    """Generate or read the system, set up, solve and report."""
    final_state = graph.invoke({"config": cfg})
    report = final_state["report"]
    if final_state.get("pdf_path"):
        logger.info("report PDF: %s", final_state["pdf_path"])
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matchamg-bench",
        description="Matching-based AMG preconditioned flexible CG on simulated distributed ranks.")
    problem = parser.add_mutually_exclusive_group(required=True)
    problem.add_argument("-n", type=int, metavar="ND", help="Poisson 7-point problem on an ND^3 grid")
    problem.add_argument("-m", metavar="FILE", help="MatrixMarket system matrix (right-hand side of ones)")
    parser.add_argument("-P", type=int, metavar="RANKS", help="number of ranks (default MATCHAMG_RANKS or 1)")
    parser.add_argument("-p", type=int, choices=(0, 1), help="1: AMG preconditioner, 0: none")
    parser.add_argument("-c", metavar="CONFIG", help="configuration file (key = value)")
    parser.add_argument("--json", action="store_true", help="print the report as JSON")
    parser.add_argument("--pdf", nargs="?", const="", metavar="PATH", help="also write a PDF report")
    parser.add_argument("--seed", type=int, help="seed for the random smooth vector")
    parser.add_argument("--unscaled", action="store_true", help="assemble the 1/h^2 Poisson system")
    parser.add_argument("--log-level", default=os.getenv("MATCHAMG_LOG_LEVEL", "WARNING"),
                        type=str.upper, choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point; exit code 0 when the solve converged."""
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        cfg = parse_config(
            args.c,
            nd=args.n,
            matrix_path=args.m,
            ranks=args.P,
            precflag=None if args.p is None else bool(args.p),
            seed=args.seed,
            scaled=False if args.unscaled else None,
            report_format="json" if args.json else "text",
            pdf_path=args.pdf,
        )
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    text_mode = cfg.report_format == "text"
    if text_mode:
        print(f"\n{'='*60}")
        print(f"🧮 MATCHING AMG BENCHMARK")
        print(f"{'='*60}\n")
        print(f"📐 Problem: {cfg.problem_label}")
        print(f"🖥️  Ranks: {cfg.ranks}   Preconditioner: {'AMG' if cfg.solve.precflag else 'none'}\n")

    try:
        report = run_benchmark(cfg)
    except (MatrixMarketError, ContractViolation, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except MatchAmgError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1

    if text_mode:
        print(formatter.format_report(report))
        mark = "✅" if report.converged else "❌"
        print(f"{mark} {'CONVERGED' if report.converged else 'DID NOT CONVERGE'} "
              f"in {report.iterations} iterations\n")
    else:
        print(report.model_dump_json(indent=2))
    return 0 if report.converged else 1


if __name__ == "__main__":
    sys.exit(main())
