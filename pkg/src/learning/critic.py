"""
Critic Module - Función de valor centralizada (sólo entrenamiento)
Responsabilidad: Codificar el estado global completo y estimar V(s) con un MLP.
"""

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.core.world_state import AtNode, WorldState

from .autodiff import ShapeError, Tensor, constant, reshape
from .layers import MLP


def critic_input_size(node_count: int, max_agents: int) -> int:
    return node_count + node_count * node_count + max_agents * (2 * node_count + 2)


def build_critic_features(state: WorldState, zeta_scale: float, max_agents: int) -> np.ndarray:
    """
    Vector de estado global con todas las entradas en [0, 1]:

    - ociosidad / zeta_scale (recortada a 1), longitud m
    - matriz de adyacencia ponderada / peso máximo, aplanada, longitud m^2
    - por agente (hasta max_agents, relleno con ceros): one-hot del nodo actual, one-hot del
      destino, progreso y bandera de vida. Un agente dado de baja deja su bloque en cero.

    Raises:
        ShapeError: si hay más agentes que max_agents
    """
    graph = state.graph
    m = graph.node_count
    if len(state.agents) > max_agents:
        raise ShapeError(f"{len(state.agents)} agentes exceden max_agents={max_agents} del crítico")

    idleness = np.minimum(state.idleness / zeta_scale, 1.0)

    adjacency = np.zeros((m, m), dtype=np.float64)
    max_w = graph.max_weight()
    for a, b, w in graph.edges:
        adjacency[a, b] = adjacency[b, a] = w / max_w

    agents = np.zeros((max_agents, 2 * m + 2), dtype=np.float64)
    for agent in state.agents:
        if not agent.alive:
            continue
        row = agents[agent.agent_id]
        loc = agent.location
        if isinstance(loc, AtNode):
            row[loc.node] = 1.0
            row[m + loc.node] = 1.0
        else:
            row[loc.source] = 1.0
            row[m + loc.target] = 1.0
            row[2 * m] = loc.progress
        row[2 * m + 1] = 1.0

    return np.concatenate([idleness, adjacency.reshape(-1), agents.reshape(-1)])


@dataclass
class CriticParams:
    node_count: int
    max_agents: int
    mlp: MLP

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return [(p.name, p) for p in self.mlp.parameters()]

    def parameters(self) -> List[Tensor]:
        return self.mlp.parameters()

    @property
    def input_size(self) -> int:
        return critic_input_size(self.node_count, self.max_agents)


def init_critic(node_count: int, max_agents: int, hidden: int = 128, seed: int = 0) -> CriticParams:
    rng = np.random.default_rng(seed)
    size = critic_input_size(node_count, max_agents)
    return CriticParams(node_count=node_count, max_agents=max_agents,
                        mlp=MLP.create(rng, [size, hidden, hidden, 1], "critic"))


def value(features, params: CriticParams) -> Tensor:
    """
    V(s) para un lote de vectores de estado.

    Args:
        features: arreglo (D,) o (B, D)

    Returns:
        Tensor (B,)
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if x.shape[1] != params.input_size:
        raise ShapeError(f"El crítico espera {params.input_size} entradas, recibió {x.shape[1]}")
    out = params.mlp(constant(x))
    return reshape(out, (x.shape[0],))
