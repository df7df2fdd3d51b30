"""
Comparison Module - Tabla comparativa y gráfico de ociosidad
Responsabilidad: Reunir los resultados de varias evaluaciones, ordenarlos por ociosidad media,
y emitir la tabla (CSV y Excel) y el gráfico SVG de la ociosidad media en el tiempo.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("svg")
# SVG reproducible: ids de recorte fijos
matplotlib.rcParams["svg.hashsalt"] = "magec-patrol"
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.core.file_manager import FileManager, load_json, read_csv  # noqa: E402

logger = logging.getLogger(__name__)

TABLE_COLUMNS = [
    "rank", "label", "policy", "n_agents", "obs_radius", "comm_success",
    "time_avg_idleness", "final_avg_idleness", "peak_max_idleness", "mean_std_idleness",
    "worst_visit_gap", "post_attrition_avg_idleness", "source",
]


class ComparisonError(ValueError):
    """Resultados no comparables (p.ej. horizontes distintos)."""


@dataclass
class ComparisonRun:
    """Resultado promedio de una evaluación listo para comparar."""

    label: str
    steps: np.ndarray
    avg_idleness: np.ndarray
    summary: Dict[str, Any]
    attrition_steps: List[int]
    source: str = ""

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def table_row(self) -> Dict[str, Any]:
        mean = self.summary.get("mean", self.summary)
        post = mean.get("post_attrition", {})
        return {
            "label": self.label,
            "policy": self.summary.get("policy", ""),
            "n_agents": self.summary.get("n_agents", ""),
            "obs_radius": self.summary.get("obs_radius", ""),
            "comm_success": self.summary.get("comm_success", ""),
            "time_avg_idleness": mean["time_avg_idleness"],
            "final_avg_idleness": mean["final_avg_idleness"],
            "peak_max_idleness": mean.get("peak_max_idleness", ""),
            "mean_std_idleness": mean.get("mean_std_idleness", ""),
            "worst_visit_gap": max(mean.get("max_visit_gap", [0.0])),
            "post_attrition_avg_idleness": post.get("time_avg_idleness", ""),
            "source": self.source,
        }


def run_from_evaluation(result) -> ComparisonRun:
    """Adapta un EvaluationResult en memoria."""
    return ComparisonRun(
        label=result.config.display_label(),
        steps=result.mean.steps,
        avg_idleness=result.mean.avg_idleness,
        summary=result.summary,
        attrition_steps=[e.step for e in result.config.attrition],
        source=str(result.output_dir or ""),
    )


def load_run_directory(path: Path, label: Optional[str] = None) -> ComparisonRun:
    """Lee summary.json y metrics_mean.csv de una carpeta de evaluación."""
    path = Path(path)
    summary_path = path / "summary.json"
    series_path = path / "metrics_mean.csv"
    if not summary_path.exists() or not series_path.exists():
        raise ComparisonError(f"{path}: faltan summary.json o metrics_mean.csv")
    summary = load_json(summary_path)
    rows = read_csv(series_path)
    return ComparisonRun(
        label=label or summary.get("label") or path.name,
        steps=np.asarray([int(r["step"]) for r in rows]),
        avg_idleness=np.asarray([float(r["avg_idleness"]) for r in rows]),
        summary=summary,
        attrition_steps=[int(e["step"]) for e in summary.get("attrition", [])],
        source=str(path),
    )


def check_horizons(runs: Sequence[ComparisonRun]) -> None:
    if not runs:
        raise ComparisonError("No hay resultados que comparar")
    reference = runs[0]
    for run in runs[1:]:
        if run.horizon != reference.horizon:
            raise ComparisonError(
                f"Horizontes distintos: '{reference.label}' tiene {reference.horizon} pasos y "
                f"'{run.label}' tiene {run.horizon}"
            )


def comparison_table(runs: Sequence[ComparisonRun]) -> List[Dict[str, Any]]:
    """Filas ordenadas por ociosidad media en el tiempo (menor es mejor)."""
    check_horizons(runs)
    rows = sorted((run.table_row() for run in runs), key=lambda r: r["time_avg_idleness"])
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    return rows


def plot_series(series: Sequence[Tuple[str, np.ndarray, np.ndarray]], attrition_steps: Sequence[int],
                output_path: Path, title: str = "Ociosidad media en el tiempo") -> Path:
    """
    Gráfico SVG de la ociosidad media por política, con líneas verticales en cada baja.
    """
    fig, ax = plt.subplots(figsize=(8, 4.5))
    try:
        for label, steps, values in series:
            ax.plot(steps, values, label=label, linewidth=1.2)
        for i, step in enumerate(sorted(set(attrition_steps))):
            ax.axvline(step, color="black", linestyle="--", linewidth=0.8,
                       label="baja de agente" if i == 0 else None)
        ax.set_xlabel("paso")
        ax.set_ylabel("ociosidad media")
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="upper left", fontsize=8)
        fig.tight_layout()
        fig.savefig(output_path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return Path(output_path)


def write_excel(rows: List[Dict[str, Any]], output_path: Path) -> Path:
    """Tabla comparativa en Excel con encabezado estilizado y anchos ajustados."""
    from openpyxl import Workbook
    from openpyxl.styles import Alignment, Font, PatternFill
    from openpyxl.utils import get_column_letter

    wb = Workbook()
    ws = wb.active
    ws.title = "Comparacion"

    header_fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
    header_font = Font(bold=True, color="FFFFFF", size=11)
    header_alignment = Alignment(horizontal="center", vertical="center", wrap_text=True)

    for col_idx, name in enumerate(TABLE_COLUMNS, start=1):
        cell = ws.cell(row=1, column=col_idx, value=name)
        cell.fill = header_fill
        cell.font = header_font
        cell.alignment = header_alignment

    for row_idx, row in enumerate(rows, start=2):
        for col_idx, name in enumerate(TABLE_COLUMNS, start=1):
            value = row.get(name, "")
            cell = ws.cell(row=row_idx, column=col_idx, value=value)
            if isinstance(value, float):
                cell.number_format = '#,##0.00'

    for col_idx, name in enumerate(TABLE_COLUMNS, start=1):
        max_length = len(name)
        for row_idx in range(2, len(rows) + 2):
            cell_value = ws.cell(row=row_idx, column=col_idx).value
            if cell_value is not None:
                max_length = max(max_length, len(str(cell_value)))
        ws.column_dimensions[get_column_letter(col_idx)].width = min(max(max_length + 2, 10), 50)
    ws.freeze_panes = "A2"

    wb.save(output_path)
    return Path(output_path)


def compare(runs: Sequence[ComparisonRun], output_dir: str) -> List[Dict[str, Any]]:
    """
    Escribe comparison.csv, comparison.xlsx y plot.svg.

    Raises:
        ComparisonError: sin resultados o con horizontes distintos
    """
    rows = comparison_table(runs)
    files = FileManager(output_dir)
    files.save_csv(rows, TABLE_COLUMNS, "comparison.csv")
    write_excel(rows, files.path("comparison.xlsx"))
    attrition = sorted({s for run in runs for s in run.attrition_steps})
    plot_series([(run.label, run.steps, run.avg_idleness) for run in runs], attrition, files.path("plot.svg"))
    logger.info(f"Comparación de {len(rows)} resultado(s) escrita en {files.get_output_folder()}")
    for row in rows:
        logger.info(f"  #{row['rank']} {row['label']}: ociosidad media {row['time_avg_idleness']:.2f}")
    return rows
