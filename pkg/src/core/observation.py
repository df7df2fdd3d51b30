"""
Observation Module - Observación en forma de grafo por agente
Responsabilidad: Construir el grafo local de características (nodos de patrulla + agentes),
con índices de vecinos, máscara de acciones y nodo de decisión.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .beliefs import BeliefState
from .models import EnvironmentConfig
from .world_state import AgentStateError, AtNode, Location, OnEdge, WorldState, nodes_within

NODE_TYPE_PATROL = 0
NODE_TYPE_AGENT = 1
NODE_FEATURE_DIM = 4  # tipo (2), ociosidad normalizada, grado normalizado


def edge_feature_dim(max_neighbors: int) -> int:
    return 1 + max_neighbors


@dataclass(frozen=True)
class Observation:
    """
    Grafo de características visto por un agente.

    Los nodos se almacenan en orden ascendente de etiqueta: nodo de patrulla v -> v,
    agente a -> m + a. Las aristas son dirigidas (edge_src -> edge_dst).
    """

    labels: Tuple[int, ...]
    node_features: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_features: np.ndarray
    ego: int
    decision_node: int
    decision_neighbors: np.ndarray   # índices de nodo, -1 = relleno
    action_mask: np.ndarray
    neighbor_idleness: np.ndarray    # ociosidad creída (sin normalizar) por ranura
    neighbor_lengths: np.ndarray     # longitud de arista (m) por ranura
    forced: bool

    @property
    def node_count(self) -> int:
        return len(self.labels)

    @property
    def max_neighbors(self) -> int:
        return len(self.action_mask)

    @property
    def degree(self) -> int:
        return int(np.sum(self.decision_neighbors >= 0))

    def node_index(self, label: int) -> int:
        return self.labels.index(label)


def continue_action(state: WorldState, location: OnEdge) -> int:
    """Índice de acción que mantiene al agente en su arista actual."""
    return state.view.index_of[(location.target, location.source)]


def action_mask(state: WorldState, agent_id: int, max_neighbors: int) -> np.ndarray:
    """
    Máscara de acciones válidas: deg(c) entradas si está en el nodo c, una sola
    (continuar) si está recorriendo una arista.
    """
    agent = state.agent(agent_id)
    mask = np.zeros(max_neighbors, dtype=bool)
    if isinstance(agent.location, AtNode):
        mask[: state.view.degree(agent.location.node)] = True
    else:
        mask[continue_action(state, agent.location)] = True
    return mask


def _agent_attachments(state: WorldState, location: Location) -> List[Tuple[int, float]]:
    """Nodos de patrulla a los que se conecta un nodo-agente y la distancia de cada conexión."""
    if isinstance(location, AtNode):
        return [(location.node, 0.0)]
    w = state.graph.weight(location.source, location.target)
    return [(location.source, location.progress * w), (location.target, (1.0 - location.progress) * w)]


def observe(state: WorldState,
            beliefs: Dict[int, BeliefState],
            agent_id: int,
            config: EnvironmentConfig) -> Observation:
    """
    Construye la observación del agente `agent_id`.

    - nodos de patrulla dentro del radio: ociosidad exacta; resto de nodos creídos:
      ociosidad extrapolada desde la última marca
    - el propio agente siempre; otros agentes si están dentro del radio o en la creencia
    - vecindario del nodo de decisión siempre presente (la topología es conocida)
    - atributo de arista: longitud normalizada y one-hot del índice del origen en la lista
      del destino; índices >= max_neighbors (nodos-agente de más) quedan sin one-hot
    """
    agent = state.agent(agent_id)
    if not agent.alive:
        raise AgentStateError(f"Agente {agent_id} dado de baja: no puede observar")

    graph = state.graph
    view = state.view
    m = graph.node_count
    max_neighbors = config.max_neighbors
    radius = config.obs_radius
    belief = beliefs[agent_id]
    center = agent.position(graph)

    visible = nodes_within(graph, center, radius)
    idleness = np.where(visible, state.idleness, belief.believed_idleness(state.clock))
    included = visible | belief.known_nodes()

    if isinstance(agent.location, AtNode):
        decision = agent.location.node
        forced = False
    else:
        decision = agent.location.source
        forced = True
    included[decision] = True
    included[list(view.neighbors[decision])] = True

    # Agentes visibles (exactos) y creídos (posiblemente obsoletos)
    agent_locations: Dict[int, Location] = {}
    for other in state.agents:
        if not other.alive:
            continue
        x, y = other.position(graph)
        if other.agent_id == agent_id or np.hypot(x - center[0], y - center[1]) <= radius:
            agent_locations[other.agent_id] = other.location
    for other_id, (location, stamp) in belief.agent_locations.items():
        if other_id in agent_locations:
            continue
        if state.clock - stamp > config.agent_belief_ttl:
            continue
        agent_locations[other_id] = location

    patrol_labels = [v for v in range(m) if included[v]]
    agent_labels = []
    attachments: Dict[int, List[Tuple[int, float]]] = {}
    for other_id in sorted(agent_locations):
        links = _agent_attachments(state, agent_locations[other_id])
        if all(included[v] for v, _ in links):
            agent_labels.append(m + other_id)
            attachments[m + other_id] = links
    labels = tuple(patrol_labels + agent_labels)
    position_of = {label: i for i, label in enumerate(labels)}

    max_w = graph.max_weight()
    adjacency: Dict[int, Dict[int, float]] = {label: {} for label in labels}
    for a, b, w in graph.edges:
        if included[a] and included[b]:
            adjacency[a][b] = w
            adjacency[b][a] = w
    for label, links in attachments.items():
        for v, distance in links:
            adjacency[label][v] = distance
            adjacency[v][label] = distance

    ordered = {label: sorted(adjacency[label]) for label in labels}
    src, dst, edge_features = [], [], []
    for v in labels:
        for i, u in enumerate(ordered[v]):
            feature = np.zeros(1 + max_neighbors, dtype=np.float64)
            feature[0] = adjacency[v][u] / max_w
            # Los nodos-agente van tras los vecinos de patrulla; si su posición en la lista
            # llega a max_neighbors la arista sólo lleva la longitud, sin índice
            if i < max_neighbors:
                feature[1 + i] = 1.0
            src.append(position_of[u])
            dst.append(position_of[v])
            edge_features.append(feature)

    node_features = np.zeros((len(labels), NODE_FEATURE_DIM), dtype=np.float64)
    for i, label in enumerate(labels):
        if label < m:
            node_features[i, NODE_TYPE_PATROL] = 1.0
            node_features[i, 2] = min(idleness[label] / config.zeta_scale, 1.0)
            node_features[i, 3] = view.degree(label) / max_neighbors
        else:
            node_features[i, NODE_TYPE_AGENT] = 1.0
            node_features[i, 3] = len(ordered[label]) / max_neighbors

    degree = view.degree(decision)
    if degree > max_neighbors:
        raise ValueError(f"Nodo {decision}: grado {degree} excede max_neighbors={max_neighbors}")
    decision_neighbors = np.full(max_neighbors, -1, dtype=np.int64)
    neighbor_idleness = np.zeros(max_neighbors, dtype=np.float64)
    neighbor_lengths = np.zeros(max_neighbors, dtype=np.float64)
    for i, u in enumerate(view.neighbors[decision]):
        decision_neighbors[i] = position_of[u]
        neighbor_idleness[i] = idleness[u]
        neighbor_lengths[i] = graph.weight(decision, u)

    return Observation(
        labels=labels,
        node_features=node_features,
        edge_src=np.asarray(src, dtype=np.int64),
        edge_dst=np.asarray(dst, dtype=np.int64),
        edge_features=np.asarray(edge_features, dtype=np.float64).reshape(-1, 1 + max_neighbors),
        ego=position_of[m + agent_id],
        decision_node=position_of[decision],
        decision_neighbors=decision_neighbors,
        action_mask=action_mask(state, agent_id, max_neighbors),
        neighbor_idleness=neighbor_idleness,
        neighbor_lengths=neighbor_lengths,
        forced=forced,
    )
