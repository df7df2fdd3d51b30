"""
Checkpoint Module - Persistencia de parámetros
Responsabilidad: Guardar y cargar los pesos del actor y del crítico en archivos JSON
versionados (nombre, forma, valores) con ida y vuelta exacta en float64.
"""

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import orjson

from .autodiff import Tensor
from .critic import CriticParams, init_critic
from .policy_gnn import ActorParams, ActorShape, init_actor

logger = logging.getLogger(__name__)

FORMAT_NAME = "magec-params"
FORMAT_VERSION = 1
ACTOR_FILE = "actor.json"
CRITIC_FILE = "critic.json"


class CheckpointError(RuntimeError):
    """Archivo de parámetros ausente, corrupto o incompatible con la arquitectura."""


def write_parameters(path: Path, kind: str, named: List[Tuple[str, Tensor]],
                     metadata: Dict[str, Any]) -> Path:
    entries = []
    for name, tensor in named:
        values = tensor.value
        if not np.all(np.isfinite(values)):
            raise CheckpointError(f"Parámetro '{name}' con valores no finitos: no se guarda")
        entries.append({"name": name, "shape": list(values.shape), "values": values.reshape(-1).tolist()})
    payload = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": kind,
        "metadata": metadata,
        "parameters": entries,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2))
    return path


def read_parameters(path: Path, kind: str) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint no encontrado: {path}")
    try:
        payload = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise CheckpointError(f"Checkpoint ilegible {path}: {e}")
    if payload.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path}: formato '{payload.get('format')}' desconocido")
    if payload.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: versión {payload.get('version')} no soportada (se espera {FORMAT_VERSION})")
    if payload.get("kind") != kind:
        raise CheckpointError(f"{path}: contiene '{payload.get('kind')}', se esperaba '{kind}'")

    arrays = {}
    for entry in payload["parameters"]:
        values = np.asarray(entry["values"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if values.size != math.prod(shape):
            raise CheckpointError(f"{path}: '{entry['name']}' tiene {values.size} valores para la forma {shape}")
        arrays[entry["name"]] = values.reshape(shape)
    return payload.get("metadata", {}), arrays


def _assign(named: List[Tuple[str, Tensor]], arrays: Dict[str, np.ndarray], path: Path) -> None:
    expected = {name for name, _ in named}
    if set(arrays) != expected:
        missing = sorted(expected - set(arrays))
        extra = sorted(set(arrays) - expected)
        raise CheckpointError(f"{path}: parámetros faltantes {missing}, sobrantes {extra}")
    for name, tensor in named:
        if arrays[name].shape != tensor.shape:
            raise CheckpointError(f"{path}: '{name}' con forma {arrays[name].shape}, se esperaba {tensor.shape}")
        tensor.value = arrays[name].copy()


def save_actor(directory: Path, actor: ActorParams, metadata: Optional[Dict[str, Any]] = None) -> Path:
    meta = {"shape": actor.shape.to_dict(), **(metadata or {})}
    return write_parameters(Path(directory) / ACTOR_FILE, "actor", actor.named_parameters(), meta)


def save_critic(directory: Path, critic: CriticParams, metadata: Optional[Dict[str, Any]] = None) -> Path:
    meta = {
        "node_count": critic.node_count,
        "max_agents": critic.max_agents,
        "hidden": critic.mlp.layers[0].fan_out,
        **(metadata or {}),
    }
    return write_parameters(Path(directory) / CRITIC_FILE, "critic", critic.named_parameters(), meta)


def save_checkpoint(directory: Path, actor: ActorParams, critic: Optional[CriticParams],
                    metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Escribe actor.json (y critic.json si se pasa) en `directory`."""
    directory = Path(directory)
    save_actor(directory, actor, metadata)
    if critic is not None:
        save_critic(directory, critic, metadata)
    logger.debug(f"Checkpoint guardado en {directory}")
    return directory


def resolve_actor_path(path: Path) -> Path:
    """Acepta el directorio del checkpoint o la ruta directa a actor.json."""
    path = Path(path)
    return path / ACTOR_FILE if path.is_dir() else path


def load_actor(path: Path) -> Tuple[ActorParams, Dict[str, Any]]:
    """
    Carga sólo los pesos del actor (el crítico nunca se lee en ejecución).

    Returns:
        (ActorParams, metadatos)
    """
    actor_path = resolve_actor_path(path)
    metadata, arrays = read_parameters(actor_path, "actor")
    try:
        shape = ActorShape(**metadata["shape"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{actor_path}: metadatos de arquitectura inválidos ({e})")
    actor = init_actor(shape)
    _assign(actor.named_parameters(), arrays, actor_path)
    logger.info(f"Actor cargado desde {actor_path} (K={shape.layers}, max_neighbors={shape.max_neighbors})")
    return actor, metadata


def load_critic(directory: Path) -> Tuple[CriticParams, Dict[str, Any]]:
    critic_path = Path(directory) / CRITIC_FILE
    metadata, arrays = read_parameters(critic_path, "critic")
    try:
        critic = init_critic(metadata["node_count"], metadata["max_agents"], metadata["hidden"])
    except KeyError as e:
        raise CheckpointError(f"{critic_path}: metadato {e} ausente")
    _assign(critic.named_parameters(), arrays, critic_path)
    return critic, metadata
