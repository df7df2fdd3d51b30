"""
Graph Generator Module - Generación de grafos geométricos aleatorios
Responsabilidad: Producir grafos conexos, ponderados y reproducibles para entrenar y evaluar
sobre mapas distintos.
"""

import logging
from typing import Dict, Tuple

import networkx as nx
import numpy as np

from .patrol_graph import PatrolGraph, build_graph, euclidean_distance

logger = logging.getLogger(__name__)


def _cap_degree(g: nx.Graph, max_degree: int) -> None:
    """Elimina las aristas más largas de nodos con grado excesivo sin desconectar el grafo."""
    for v in sorted(g.nodes):
        if g.degree(v) <= max_degree:
            continue
        candidates = sorted(
            g.edges(v, data="weight"),
            key=lambda e: (-e[2], min(e[0], e[1]), max(e[0], e[1])),
        )
        for a, b, w in candidates:
            if g.degree(v) <= max_degree:
                break
            g.remove_edge(a, b)
            if not nx.is_connected(g):
                g.add_edge(a, b, weight=w)


def generate_geometric_graph(n_nodes: int,
                             seed: int,
                             size: float = 40.0,
                             radius: float = 18.0,
                             max_degree: int = 6,
                             max_attempts: int = 50) -> PatrolGraph:
    """
    Genera un grafo geométrico aleatorio conexo en el cuadrado [0, size]^2.

    Args:
        n_nodes: Número de nodos
        seed: Semilla (misma semilla -> mismo grafo)
        size: Lado del cuadrado en metros
        radius: Radio de conexión en metros
        max_degree: Grado máximo permitido tras la poda
        max_attempts: Reintentos de posiciones antes de ampliar el radio

    Returns:
        PatrolGraph con pesos euclidianos
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes debe ser >= 1 (recibido {n_nodes})")
    if max_degree < 1:
        raise ValueError(f"max_degree debe ser >= 1 (recibido {max_degree})")

    rng = np.random.default_rng(seed)
    current_radius = radius
    attempt = 0
    while True:
        # 6 decimales: el grafo escrito y releído es idéntico
        coords = np.round(rng.uniform(0.0, size, size=(n_nodes, 2)), 6)
        pos: Dict[int, Tuple[float, float]] = {
            v: (float(coords[v, 0]), float(coords[v, 1])) for v in range(n_nodes)
        }
        g = nx.random_geometric_graph(n_nodes, current_radius, pos=pos)
        if nx.is_connected(g):
            break
        attempt += 1
        if attempt % max_attempts == 0:
            current_radius *= 1.1
            logger.debug(f"Grafo no conexo tras {attempt} intentos, radio ampliado a {current_radius:.3f}")

    for a, b in g.edges:
        g.edges[a, b]["weight"] = round(euclidean_distance(pos[a], pos[b]), 6)
    _cap_degree(g, max_degree)

    edges = [(a, b, None) for a, b in sorted((min(a, b), max(a, b)) for a, b in g.edges)]
    graph = build_graph([pos[v] for v in range(n_nodes)], edges)
    logger.info(
        f"Grafo generado: {graph.node_count} nodos, {graph.edge_count} aristas "
        f"(semilla {seed}, radio {current_radius:.2f} m)"
    )
    return graph
