"""
PDF export of a benchmark report.
Uses ReportLab: title block, run configuration, hierarchy, setup breakdown
and residual history.
"""
import logging
import os
from pathlib import Path
from typing import List, Optional

from reportlab.lib import colors
from reportlab.lib.enums import TA_CENTER, TA_LEFT
from reportlab.lib.pagesizes import letter
from reportlab.lib.styles import ParagraphStyle
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from ..state import RunReport

logger = logging.getLogger(__name__)

HISTORY_ROWS = 40


class ReportPDFExporter:
    """Lay out an already computed RunReport; no solver logic here."""

    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = Path(output_dir or os.getenv("MATCHAMG_OUTPUT_DIR", "bench_reports"))
        self.margin = 1.0 * inch

    def create_styles(self):
        styles = {}
        styles['Title'] = ParagraphStyle(
            'Title',
            fontName='Helvetica-Bold',
            fontSize=16,
            alignment=TA_CENTER,
            spaceAfter=12
        )
        styles['Heading'] = ParagraphStyle(
            'Heading',
            fontName='Helvetica-Bold',
            fontSize=12,
            spaceBefore=12,
            spaceAfter=6
        )
        styles['Body'] = ParagraphStyle(
            'Body',
            fontName='Helvetica',
            fontSize=10,
            alignment=TA_LEFT,
            spaceAfter=4
        )
        return styles

    def _table(self, rows: List[List[str]]) -> Table:
        table = Table(rows, hAlign='LEFT')
        table.setStyle(TableStyle([
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('FONTNAME', (0, 1), (-1, -1), 'Courier'),
            ('FONTSIZE', (0, 0), (-1, -1), 9),
            ('LINEBELOW', (0, 0), (-1, 0), 0.5, colors.black),
            ('ALIGN', (1, 0), (-1, -1), 'RIGHT'),
        ]))
        return table

    def create_config_section(self, report: RunReport) -> List:
        styles = self.create_styles()
        cfg = report.config
        rows = [["parameter", "value"],
                ["ranks", str(report.ranks)],
                ["precflag", str(int(report.precflag))],
                ["aggregation_exponent", str(cfg.setup.aggregation_exponent)],
                ["coarse_size", str(cfg.setup.resolved_coarse_size(report.global_rows))],
                ["max_levels", str(cfg.setup.max_levels)],
                ["pre/post sweeps", f"{cfg.cycle.pre_sweeps}/{cfg.cycle.post_sweeps}"],
                ["coarsest_sweeps", str(cfg.cycle.coarsest_sweeps)],
                ["rtol", f"{cfg.solve.rtol:g}"],
                ["max_iters", str(cfg.solve.max_iters)]]
        return [Paragraph("Run configuration", styles['Heading']), self._table(rows)]

    def create_hierarchy_section(self, report: RunReport) -> List:
        styles = self.create_styles()
        rows = [["level", "rows", "nnz", "nnz/row"]]
        for lvl in report.levels:
            rows.append([str(lvl.level), str(lvl.rows), str(lvl.nnz), f"{lvl.nnz_per_row:.2f}"])
        story = [Paragraph("Hierarchy", styles['Heading']), self._table(rows)]
        story.append(Paragraph(f"Operator complexity: {report.opc:.4f}", styles['Body']))

        bd = report.setup_breakdown
        rows = [["phase", "seconds"]] + [[name, f"{getattr(bd, name):.4f}"]
                                         for name in ("matching", "spmm", "spmm_comm", "other")]
        story.append(Paragraph("Setup breakdown", styles['Heading']))
        story.append(self._table(rows))
        return story

    def create_solve_section(self, report: RunReport) -> List:
        styles = self.create_styles()
        status = "converged" if report.converged else "not converged"
        story = [Paragraph("Solve", styles['Heading'])]
        story.append(Paragraph(f"{report.iterations} iterations, {status}, final relative residual "
                               f"{report.final_relres:.3e}", styles['Body']))
        story.append(Paragraph(f"tsetup {report.tsetup:.4f}s, tsolve {report.tsolve:.4f}s, "
                               f"titer {report.titer:.6f}s", styles['Body']))

        history = list(enumerate(report.residual_history))
        if len(history) > HISTORY_ROWS:
            history = history[:HISTORY_ROWS // 2] + history[-HISTORY_ROWS // 2:]
        rows = [["iteration", "relative residual"]] + [[str(i), f"{r:.6e}"] for i, r in history]
        story.append(self._table(rows))
        return story

    def export_pdf(self, report: RunReport, filename: Optional[str] = None) -> str:
        """
        Write the report and return the path of the PDF.

        A bare filename lands in the output directory.
        """
        if not filename:
            safe = report.problem.replace(" ", "_").replace("=", "").replace(".", "_").lower()
            filename = f"{safe}_p{report.ranks}.pdf"
        output_path = Path(filename)
        if not output_path.parent.parts:
            output_path = self.output_dir / output_path
        output_path.parent.mkdir(parents=True, exist_ok=True)

        doc = SimpleDocTemplate(
            str(output_path),
            pagesize=letter,
            leftMargin=self.margin,
            rightMargin=self.margin,
            topMargin=self.margin,
            bottomMargin=self.margin
        )

        styles = self.create_styles()
        story = [Paragraph(f"AMG-PCG benchmark: {report.problem}", styles['Title']),
                 Paragraph(f"{report.global_rows} rows, {report.global_nnz} nonzeros, {report.ranks} rank(s)",
                           styles['Body']),
                 Spacer(1, 0.2 * inch)]
        story.extend(self.create_config_section(report))
        if report.precflag:
            story.extend(self.create_hierarchy_section(report))
        story.extend(self.create_solve_section(report))
        doc.build(story)

        logger.info("PDF report written to %s", output_path)
        return str(output_path)
