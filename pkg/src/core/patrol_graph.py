"""
Patrol Graph Module - Modelo de grafo de patrullaje
Responsabilidad: Cargar, validar y escribir grafos de patrullaje, y construir la vista
bidireccional con índices de vecinos que hace posible la navegación discreta.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np

Position = Tuple[float, float]

# Tolerancia relativa de validación de pesos
WEIGHT_REL_TOL = 1e-6
# Margen de redondeo del formato canónico (6 decimales): media unidad del sexto decimal.
# Sólo domina en aristas de menos de 0.5 m.
WEIGHT_ABS_TOL = 5e-7 + 1e-12


class GraphParseError(ValueError):
    """Línea mal formada en un archivo de grafo."""

    def __init__(self, line_number: int, line: str, reason: str):
        self.line_number = line_number
        self.line = line
        super().__init__(f"Línea {line_number}: {reason} -> {line!r}")


class GraphValidationError(ValueError):
    """El grafo viola algún invariante (nombra la entidad culpable)."""


def euclidean_distance(p: Sequence[float], q: Sequence[float]) -> float:
    """Distancia L2 entre dos posiciones 2D (metros)."""
    return math.hypot(float(p[0]) - float(q[0]), float(p[1]) - float(q[1]))


@dataclass(frozen=True)
class PatrolGraph:
    """
    Grafo no dirigido y ponderado con posiciones 2D.

    Los nodos son 0..m-1; las aristas se guardan como (a, b, peso) con a < b,
    ordenadas. Es inmutable tras la construcción.
    """

    positions: Tuple[Position, ...]
    edges: Tuple[Tuple[int, int, float], ...]
    _adjacency: Dict[int, Dict[int, float]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        adjacency: Dict[int, Dict[int, float]] = {v: {} for v in range(len(self.positions))}
        for a, b, w in self.edges:
            adjacency[a][b] = w
            adjacency[b][a] = w
        object.__setattr__(self, "_adjacency", adjacency)

    @property
    def node_count(self) -> int:
        return len(self.positions)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def weight(self, a: int, b: int) -> float:
        """Longitud de la arista {a, b} en metros."""
        try:
            return self._adjacency[a][b]
        except KeyError:
            raise GraphValidationError(f"La arista ({a}, {b}) no existe en el grafo")

    def position(self, v: int) -> Position:
        return self.positions[v]

    def max_weight(self) -> float:
        return max(w for _, _, w in self.edges) if self.edges else 1.0

    def degree(self, v: int) -> int:
        return len(self._adjacency[v])

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        for v, (x, y) in enumerate(self.positions):
            g.add_node(v, pos=(x, y))
        for a, b, w in self.edges:
            g.add_edge(a, b, weight=w)
        return g

    def positions_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)


def build_graph(positions: Sequence[Position],
                edges: Sequence[Tuple[int, int, Optional[float]]]) -> PatrolGraph:
    """
    Construye y valida un PatrolGraph.

    Args:
        positions: Posición (x, y) de cada nodo, indexada por id
        edges: Aristas (a, b, peso); un peso None se completa con la distancia euclidiana

    Returns:
        PatrolGraph válido

    Raises:
        GraphValidationError: si hay lazos, aristas duplicadas, pesos incoherentes
            o el grafo no es conexo
    """
    positions = tuple((float(x), float(y)) for x, y in positions)
    m = len(positions)
    if m == 0:
        raise GraphValidationError("El grafo no tiene nodos")

    for v, (x, y) in enumerate(positions):
        if not (math.isfinite(x) and math.isfinite(y)):
            raise GraphValidationError(f"Nodo {v}: posición no finita ({x}, {y})")

    seen: Set[Tuple[int, int]] = set()
    canonical: List[Tuple[int, int, float]] = []
    for a, b, w in edges:
        if not (0 <= a < m) or not (0 <= b < m):
            raise GraphValidationError(f"Arista ({a}, {b}): referencia a un nodo inexistente")
        if a == b:
            raise GraphValidationError(f"Arista ({a}, {b}): lazo no permitido")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise GraphValidationError(f"Arista ({a}, {b}): duplicada")
        seen.add(key)

        distance = euclidean_distance(positions[a], positions[b])
        if w is None:
            w = distance
        w = float(w)
        if not w > 0:
            raise GraphValidationError(f"Arista ({a}, {b}): peso {w} debe ser positivo")
        if not math.isclose(w, distance, rel_tol=WEIGHT_REL_TOL, abs_tol=WEIGHT_ABS_TOL):
            raise GraphValidationError(
                f"Arista ({a}, {b}): peso {w} no coincide con la distancia euclidiana {distance:.6f}"
            )
        canonical.append((key[0], key[1], w))

    canonical.sort(key=lambda e: (e[0], e[1]))
    graph = PatrolGraph(positions=positions, edges=tuple(canonical))

    if m > 1 and not nx.is_connected(graph.to_networkx()):
        components = sorted(sorted(c) for c in nx.connected_components(graph.to_networkx()))
        raise GraphValidationError(
            f"El grafo no es conexo: {len(components)} componentes, p.ej. {components[-1]}"
        )
    return graph


def _parse_int(token: str, line_number: int, line: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise GraphParseError(line_number, line, f"entero inválido '{token}'")


def _parse_float(token: str, line_number: int, line: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise GraphParseError(line_number, line, f"número inválido '{token}'")


def load_graph(text: str) -> PatrolGraph:
    """
    Lee un grafo en el formato de texto propio.

    Formato:
        nodes <m>
        node <id> <x> <y>        (m líneas)
        edges <count>
        edge <a> <b> [peso]      (count líneas)
    Las líneas que empiezan por '#' son comentarios.
    """
    lines = [
        (number, raw.strip())
        for number, raw in enumerate(text.splitlines(), start=1)
        if raw.strip() and not raw.strip().startswith("#")
    ]
    if not lines:
        raise GraphParseError(0, "", "archivo vacío")

    cursor = 0
    number, line = lines[cursor]
    tokens = line.split()
    if len(tokens) != 2 or tokens[0] != "nodes":
        raise GraphParseError(number, line, "se esperaba 'nodes <m>'")
    m = _parse_int(tokens[1], number, line)
    if m < 1:
        raise GraphParseError(number, line, "el número de nodos debe ser >= 1")
    cursor += 1

    positions: Dict[int, Position] = {}
    for _ in range(m):
        if cursor >= len(lines):
            raise GraphParseError(number, line, f"faltan líneas 'node' (se esperaban {m})")
        number, line = lines[cursor]
        tokens = line.split()
        if len(tokens) != 4 or tokens[0] != "node":
            raise GraphParseError(number, line, "se esperaba 'node <id> <x> <y>'")
        node_id = _parse_int(tokens[1], number, line)
        if node_id in positions:
            raise GraphValidationError(f"Nodo {node_id}: id duplicado (línea {number})")
        if not 0 <= node_id < m:
            raise GraphValidationError(f"Nodo {node_id}: id fuera del rango 0..{m - 1} (línea {number})")
        positions[node_id] = (_parse_float(tokens[2], number, line), _parse_float(tokens[3], number, line))
        cursor += 1

    if cursor >= len(lines):
        raise GraphParseError(number, line, "se esperaba 'edges <count>'")
    number, line = lines[cursor]
    tokens = line.split()
    if len(tokens) != 2 or tokens[0] != "edges":
        raise GraphParseError(number, line, "se esperaba 'edges <count>'")
    edge_count = _parse_int(tokens[1], number, line)
    cursor += 1

    edges: List[Tuple[int, int, Optional[float]]] = []
    for _ in range(edge_count):
        if cursor >= len(lines):
            raise GraphParseError(number, line, f"faltan líneas 'edge' (se esperaban {edge_count})")
        number, line = lines[cursor]
        tokens = line.split()
        if len(tokens) not in (3, 4) or tokens[0] != "edge":
            raise GraphParseError(number, line, "se esperaba 'edge <a> <b> [peso]'")
        a = _parse_int(tokens[1], number, line)
        b = _parse_int(tokens[2], number, line)
        w = _parse_float(tokens[3], number, line) if len(tokens) == 4 else None
        edges.append((a, b, w))
        cursor += 1

    if cursor < len(lines):
        number, line = lines[cursor]
        raise GraphParseError(number, line, "contenido sobrante tras las aristas")

    return build_graph([positions[v] for v in range(m)], edges)


def write_graph(graph: PatrolGraph) -> str:
    """Escribe el grafo en forma canónica (ids ordenados, 6 decimales)."""
    out = [f"nodes {graph.node_count}"]
    for v, (x, y) in enumerate(graph.positions):
        out.append(f"node {v} {x:.6f} {y:.6f}")
    out.append(f"edges {graph.edge_count}")
    for a, b, w in graph.edges:
        out.append(f"edge {a} {b} {w:.6f}")
    return "\n".join(out) + "\n"


@dataclass(frozen=True)
class BidirectedView:
    """
    Vista bidireccional de un grafo.

    neighbors[v] es la lista ordenada de vecinos de v; index_of[(u, v)] es el índice
    de u dentro de la lista de v (la etiqueta de la arista dirigida u -> v).
    """

    neighbors: Tuple[Tuple[int, ...], ...]
    index_of: Dict[Tuple[int, int], int]

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(len(n) for n in self.neighbors)

    @property
    def max_degree(self) -> int:
        return max(self.degrees) if self.neighbors else 0

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    def neighbor_at(self, v: int, index: int) -> int:
        """Nodo destino de la acción `index` tomada desde v."""
        return self.neighbors[v][index]

    def directed_edges(self) -> List[Tuple[int, int]]:
        return [(u, v) for v, ns in enumerate(self.neighbors) for u in ns]

    def undirected_edges(self) -> Set[Tuple[int, int]]:
        return {(min(u, v), max(u, v)) for u, v in self.directed_edges()}


def bidirect(graph: PatrolGraph) -> BidirectedView:
    """Convierte el grafo en bidireccional con vecinos ordenados por id ascendente."""
    neighbors = tuple(
        tuple(sorted(graph._adjacency[v].keys())) for v in range(graph.node_count)
    )
    index_of = {
        (u, v): i
        for v, ns in enumerate(neighbors)
        for i, u in enumerate(ns)
    }
    return BidirectedView(neighbors=neighbors, index_of=index_of)
