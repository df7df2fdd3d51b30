"""
File Manager Module - Gestión de carpetas y archivos de resultados
Responsabilidad: Carpetas de salida de entrenamiento/evaluación y escritura de JSON y CSV
"""

import csv
import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import orjson

logger = logging.getLogger(__name__)


def truncate_filename_for_path(filename: str, max_length: int = 50) -> str:
    """
    Trunca un nombre de archivo para evitar rutas demasiado largas en Windows.

    Args:
        filename: Nombre del archivo (puede incluir extensión)
        max_length: Longitud máxima permitida (default: 50)

    Returns:
        Nombre truncado manteniendo la extensión si existe

    Examples:
        truncate_filename_for_path("comparacion_magec_vs_greedy.csv", 50) -> sin cambios
        truncate_filename_for_path("barrido_comm_0.25_radio_40_muy_largo.csv", 20) -> "barrido_comm_0.2.csv"
    """
    if len(filename) <= max_length:
        return filename

    if '.' in filename:
        name_part, ext = filename.rsplit('.', 1)
        ext_with_dot = f".{ext}"
    else:
        name_part = filename
        ext_with_dot = ""

    available_length = max_length - len(ext_with_dot)
    if available_length <= 0:
        return filename[:max_length]
    return f"{name_part[:available_length]}{ext_with_dot}"


def safe_folder_name(label: str, max_length: int = 40) -> str:
    """Convierte una etiqueta libre (p.ej. 'magec comm=0.5') en nombre de carpeta."""
    cleaned = re.sub(r"[^A-Za-z0-9._=-]+", "_", label).strip("_") or "run"
    return cleaned[:max_length]


class FileManager:
    """
    Gestor de la carpeta de salida de una ejecución.

    Responsabilidades:
    - Resolver rutas relativas contra la raíz del proyecto
    - Crear la carpeta de salida (y subcarpetas) si no existen
    - Escribir artefactos JSON (orjson) y CSV
    """

    def __init__(self, output_dir: str, project_root: Optional[Path] = None):
        """Inicializa el FileManager y crea la carpeta de salida."""
        self.project_root = project_root or Path.cwd()
        path = Path(output_dir)
        self.output_dir = path if path.is_absolute() else self.project_root / path
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def get_output_folder(self) -> Path:
        return self.output_dir

    def subfolder(self, name: str) -> Path:
        """Retorna (y crea) una subcarpeta de la salida."""
        folder = self.output_dir / name
        folder.mkdir(parents=True, exist_ok=True)
        return folder

    def path(self, filename: str, subfolder: Optional[str] = None) -> Path:
        folder = self.subfolder(subfolder) if subfolder else self.output_dir
        return folder / truncate_filename_for_path(filename, max_length=80)

    def save_json(self, data: Dict[str, Any], filename: str, subfolder: Optional[str] = None) -> Path:
        """
        Guarda un diccionario como JSON indentado.

        Args:
            data: Diccionario con datos a guardar (se admiten arreglos numpy)
            filename: Nombre del archivo
            subfolder: Subcarpeta dentro de la salida
        """
        output_path = self.path(filename, subfolder)
        output_path.write_bytes(
            orjson.dumps(data, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_NON_STR_KEYS)
        )
        logger.debug(f"JSON guardado: {output_path}")
        return output_path

    def save_csv(self, rows: Iterable[Dict[str, Any]], columns: Sequence[str], filename: str,
                 subfolder: Optional[str] = None) -> Path:
        """Guarda filas (diccionarios) como CSV con las columnas en el orden dado."""
        output_path = self.path(filename, subfolder)
        with open(output_path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction='ignore')
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        logger.debug(f"CSV guardado: {output_path}")
        return output_path


def load_json(path: Path) -> Dict[str, Any]:
    try:
        return orjson.loads(Path(path).read_bytes())
    except FileNotFoundError:
        raise FileNotFoundError(f"Archivo no encontrado: {path}")
    except orjson.JSONDecodeError as e:
        raise ValueError(f"JSON inválido en {path}: {e}")


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))
