"""
結果グリッドの作成

評価レポート（eval_*.json）を集めて、(次元 × 超解像) を1行とする表を
CSV・整列テキスト・PDF の3形式で出力する。
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import ParagraphStyle
from reportlab.lib.units import inch
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from constants import ReportConstants
from exceptions import FileOperationError, ReportError
from recognition import EvalReport

logger = logging.getLogger(__name__)

REPORT_GLOB = "eval_*.json"


def format_accuracy(value: float) -> str:
    """正解率をパーセント表記（小数2桁まで、末尾の0は省略）"""
    return _strip(f"{value * 100.0:.2f}")


def format_auc(value: Optional[float]) -> str:
    """AUC を小数4桁まで（末尾の0は省略）、未定義は NA"""
    if value is None:
        return ReportConstants.UNDEFINED
    return _strip(f"{value:.4f}")


def _strip(text: str) -> str:
    return text.rstrip("0").rstrip(".") if "." in text else text


@dataclass
class GridRow:
    """グリッドの1行"""
    dim: int
    dcscn: bool
    accuracy: str
    aucs: List[str]

    def cells(self) -> List[str]:
        return [str(self.dim), "yes" if self.dcscn else "no", self.accuracy] + self.aucs


@dataclass
class ResultGrid:
    """
    タスク1つ分の結果グリッド

    二値タスクは陽性クラスの AUC 1列、多クラスはクラスごとに auc_0..auc_k-1。
    """
    task: str
    class_names: List[str]
    rows: List[GridRow] = field(default_factory=list)

    @property
    def headers(self) -> List[str]:
        base = ["dim", "dcscn", "test_acc"]
        if len(self.class_names) == 2:
            return base + ["auc"]
        return base + [f"auc_{c}" for c in range(len(self.class_names))]


def _row_key(cell: Tuple[int, bool]) -> Tuple[int, int, int]:
    if cell in ReportConstants.ROW_ORDER:
        return (0, ReportConstants.ROW_ORDER.index(cell), 0)
    return (1, -cell[0], int(cell[1]))


def build_grid(reports: Sequence[EvalReport]) -> ResultGrid:
    """
    評価レポートをグリッドにまとめる

    Raises:
        ReportError: レポートがない、タスクやクラス数が混在、または同じセルが重複
    """
    if not reports:
        raise ReportError("評価レポートがありません")
    tasks = sorted({r.task for r in reports})
    if len(tasks) != 1:
        raise ReportError(f"タスクが混在しています: {tasks}")
    sizes = sorted({len(r.auc) for r in reports})
    if len(sizes) != 1:
        raise ReportError(f"クラス数が混在しています: {sizes}")

    seen = set()
    for r in reports:
        cell = (r.dim, r.dcscn)
        if cell in seen:
            raise ReportError(f"同じセルのレポートが重複しています: dim={r.dim}, dcscn={r.dcscn}")
        seen.add(cell)

    class_names = list(reports[0].class_names) or [str(c) for c in range(sizes[0])]
    grid = ResultGrid(task=tasks[0], class_names=class_names)
    for r in sorted(reports, key=lambda rep: _row_key((rep.dim, rep.dcscn))):
        aucs = r.auc[1:] if len(r.auc) == 2 else r.auc
        grid.rows.append(GridRow(r.dim, r.dcscn, format_accuracy(r.test_accuracy), [format_auc(a) for a in aucs]))
    return grid


def load_reports(report_dir: Union[str, Path]) -> List[EvalReport]:
    """
    ディレクトリ内の eval_*.json を名前順に読み込む

    Raises:
        ReportError: 該当ファイルがない、または形式不正
    """
    report_dir = Path(report_dir)
    paths = sorted(report_dir.glob(REPORT_GLOB))
    if not paths:
        raise ReportError(f"評価レポートが見つかりません: {report_dir}/{REPORT_GLOB}")
    reports = []
    for path in paths:
        try:
            reports.append(EvalReport.from_json(path.read_text(encoding="utf-8")))
        except ReportError as e:
            raise ReportError(f"{path.name}: {e}") from e
    logger.info(f"評価レポートを読み込みました: {len(reports)}件 ({report_dir})")
    return reports


def render_text(grid: ResultGrid) -> str:
    """列幅を揃えたテキスト表"""
    table = [grid.headers] + [row.cells() for row in grid.rows]
    widths = [max(len(line[c]) for line in table) for c in range(len(grid.headers))]
    lines = [f"task: {grid.task}", "classes: " + ", ".join(grid.class_names), ""]
    for index, line in enumerate(table):
        lines.append("  ".join(cell.rjust(width) for cell, width in zip(line, widths)).rstrip())
        if index == 0:
            lines.append("  ".join("-" * width for width in widths))
    baseline = next((row for row in grid.rows if row.dim == max(r.dim for r in grid.rows) and not row.dcscn), None)
    if baseline is not None and len(grid.rows) > 1:
        better = [
            f"{row.dim}/{'yes' if row.dcscn else 'no'}"
            for row in grid.rows
            if row is not baseline and float(row.accuracy) > float(baseline.accuracy)
        ]
        lines.append("")
        lines.append(f"{baseline.dim}/no を上回ったセル: {', '.join(better) if better else 'なし'}")
    return "\n".join(lines) + "\n"


def write_csv(grid: ResultGrid, path: Path) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(grid.headers)
        for row in grid.rows:
            writer.writerow(row.cells())
    return path


def write_pdf(grid: ResultGrid, path: Path) -> Path:
    """
    結果グリッドの PDF（invariant モードなので同じ内容なら同じバイト列）
    """
    doc = SimpleDocTemplate(str(path), pagesize=A4, invariant=1, title=f"results: {grid.task}")
    table = Table([grid.headers] + [row.cells() for row in grid.rows])
    table.setStyle(TableStyle([
        ('ALIGN', (0, 0), (-1, -1), 'RIGHT'),
        ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
        ('FONTNAME', (0, 1), (-1, -1), 'Helvetica'),
        ('FONTSIZE', (0, 0), (-1, -1), 10),
        ('LINEBELOW', (0, 0), (-1, 0), 0.5, colors.black),
        ('LINEBELOW', (0, 1), (-1, -1), 0.25, colors.grey),
    ]))
    title_style = ParagraphStyle('grid_title', fontName='Helvetica-Bold', fontSize=14, spaceAfter=12)
    story = [
        Paragraph(f"Task: {grid.task}", title_style),
        Paragraph("Classes: " + ", ".join(grid.class_names), ParagraphStyle('grid_classes', fontName='Helvetica', fontSize=9)),
        Spacer(1, 0.2 * inch),
        table,
    ]
    doc.build(story)
    return path


def build_report(report_dir: Union[str, Path], output_dir: Optional[Union[str, Path]] = None) -> Tuple[Path, Path, Path]:
    """
    評価レポートから report.csv / report.txt / report.pdf を作成

    Returns:
        Tuple[Path, Path, Path]: (CSV, テキスト, PDF) のパス

    Raises:
        ReportError: レポートがない、または不整合
        FileOperationError: 書き込み失敗
    """
    grid = build_grid(load_reports(report_dir))
    out_dir = Path(output_dir) if output_dir is not None else Path(report_dir)
    csv_path = out_dir / ReportConstants.CSV_NAME
    text_path = out_dir / ReportConstants.TEXT_NAME
    pdf_path = out_dir / ReportConstants.PDF_NAME
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(grid, csv_path)
        text_path.write_text(render_text(grid), encoding="utf-8")
        write_pdf(grid, pdf_path)
    except OSError as e:
        raise FileOperationError(str(e), file_path=str(out_dir), operation="書き込み", original_error=e) from e
    logger.info(f"結果グリッドを作成しました: {csv_path} ({len(grid.rows)}行)")
    return csv_path, text_path, pdf_path
