"""
World State Module - Estado real de la simulación
Responsabilidad: Tipos del estado del mundo (agentes, ociosidad, reloj) y métricas de
ociosidad derivadas.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from .patrol_graph import BidirectedView, PatrolGraph, Position, bidirect

# Tolerancia para decidir que un agente completó su arista
ARRIVAL_TOLERANCE = 1e-9


class AgentStateError(ValueError):
    """Agente desconocido, muerto o en un estado incompatible con la operación."""


@dataclass(frozen=True)
class AtNode:
    node: int


@dataclass(frozen=True)
class OnEdge:
    source: int
    target: int
    progress: float  # fracción recorrida en [0, 1]


Location = Union[AtNode, OnEdge]


def location_position(graph: PatrolGraph, location: Location) -> Position:
    """Posición 2D (metros) de una ubicación sobre el grafo."""
    if isinstance(location, AtNode):
        return graph.position(location.node)
    (x0, y0), (x1, y1) = graph.position(location.source), graph.position(location.target)
    p = location.progress
    return (x0 + (x1 - x0) * p, y0 + (y1 - y0) * p)


@dataclass
class AgentState:
    agent_id: int
    location: Location
    alive: bool = True

    def position(self, graph: PatrolGraph) -> Position:
        return location_position(graph, self.location)

    @property
    def at_node(self) -> bool:
        return isinstance(self.location, AtNode)


@dataclass
class WorldState:
    """Estado real: ociosidad por nodo, agentes y reloj en pasos."""

    graph: PatrolGraph
    view: BidirectedView
    clock: int
    idleness: np.ndarray
    agents: List[AgentState]
    seed: int
    rng: np.random.Generator = field(repr=False)

    def agent(self, agent_id: int) -> AgentState:
        if not 0 <= agent_id < len(self.agents):
            raise AgentStateError(f"Agente {agent_id} desconocido")
        return self.agents[agent_id]

    def living_agents(self) -> List[AgentState]:
        return [a for a in self.agents if a.alive]

    def living_count(self) -> int:
        return sum(1 for a in self.agents if a.alive)


def reset(graph: PatrolGraph, n_agents: int, seed: int,
          view: Optional[BidirectedView] = None) -> WorldState:
    """
    Estado inicial: ociosidad 0, reloj 0, agente i en el nodo i.

    Raises:
        AgentStateError: si n_agents < 1 o hay más agentes que nodos
    """
    if n_agents < 1:
        raise AgentStateError(f"Se requiere al menos un agente (recibido {n_agents})")
    if n_agents > graph.node_count:
        raise AgentStateError(
            f"{n_agents} agentes no caben en nodos distintos de un grafo de {graph.node_count} nodos"
        )
    agents = [AgentState(agent_id=i, location=AtNode(i % graph.node_count)) for i in range(n_agents)]
    return WorldState(
        graph=graph,
        view=view if view is not None else bidirect(graph),
        clock=0,
        idleness=np.zeros(graph.node_count, dtype=np.float64),
        agents=agents,
        seed=seed,
        rng=np.random.default_rng(seed),
    )


def _idleness_of(source) -> np.ndarray:
    if isinstance(source, WorldState):
        return source.idleness
    return np.asarray(source, dtype=np.float64)


def average_idleness(source) -> float:
    """Media de la ociosidad sobre todos los nodos."""
    return float(np.mean(_idleness_of(source)))


def worst_idleness(source) -> float:
    """Ociosidad máxima sobre todos los nodos."""
    return float(np.max(_idleness_of(source)))


def idleness_std(source) -> float:
    return float(np.std(_idleness_of(source)))


def local_reward(source, node: int, epsilon: float = 1e-5) -> float:
    """
    Recompensa local zeta(v) / (zeta_media + eps).

    Se evalúa con la ociosidad previa al reinicio del nodo visitado.
    """
    idleness = _idleness_of(source)
    return float(idleness[node] / (np.mean(idleness) + epsilon))


def terminal_reward(source, step: Optional[int] = None, epsilon: float = 1e-5) -> float:
    """
    Recompensa terminal t / (zeta_media + eps), pagada en el último paso del episodio.

    Args:
        source: WorldState (o vector de ociosidad si se pasa `step`)
        step: Índice del paso final; por defecto el reloj del estado
    """
    if step is None:
        if not isinstance(source, WorldState):
            raise ValueError("terminal_reward requiere `step` cuando no recibe un WorldState")
        step = source.clock
    return float(step / (average_idleness(source) + epsilon))


def nodes_within(graph: PatrolGraph, center: Position, radius: float) -> np.ndarray:
    """Máscara booleana de nodos a distancia <= radius."""
    positions = graph.positions_array()
    distances = np.hypot(positions[:, 0] - center[0], positions[:, 1] - center[1])
    return distances <= radius
