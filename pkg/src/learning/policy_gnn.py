"""
Policy GNN Module - Actor MAGEC compartido por todos los agentes
Responsabilidad: Embedding GraphSAGE con atributos de arista, concatenación jumping-knowledge,
puntuación de vecinos y distribución categórica enmascarada sobre las acciones.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.observation import NODE_FEATURE_DIM, Observation, edge_feature_dim

from .autodiff import (
    ShapeError,
    Tensor,
    concat,
    constant,
    gather_rows,
    l2_normalize_rows,
    masked_entropy,
    masked_log_softmax,
    relu,
    reshape,
    segment_mean,
    take_along_rows,
)
from .layers import MLP, Dense

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ActorShape:
    """Dimensiones del actor; se guardan junto a los pesos en el checkpoint."""

    layers: int = 10
    hidden_size: int = 64
    scorer_hidden: int = 64
    selector_hidden: int = 64
    max_neighbors: int = 10
    node_dim: int = NODE_FEATURE_DIM
    edge_dim: Optional[int] = None

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"El actor necesita al menos una capa GNN (recibido {self.layers})")
        if self.edge_dim is None:
            object.__setattr__(self, "edge_dim", edge_feature_dim(self.max_neighbors))

    @property
    def embedding_size(self) -> int:
        return self.layers * self.hidden_size

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)


@dataclass
class ActorParams:
    """Pesos W_k de cada capa GNN, MLP de puntuación y MLP de selección."""

    shape: ActorShape
    gnn: List[Dense]
    scorer: MLP
    selector: MLP

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        params = [p for layer in self.gnn for p in layer.parameters()]
        params += self.scorer.parameters() + self.selector.parameters()
        return [(p.name, p) for p in params]

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(p.value.size for p in self.parameters()))


def init_actor(shape: ActorShape, seed: int = 0) -> ActorParams:
    """Inicializa el actor con pesos Glorot uniformes y sesgos nulos."""
    rng = np.random.default_rng(seed)
    gnn = []
    in_dim = shape.node_dim
    for k in range(shape.layers):
        # concat(h_v, media_u concat(h_u, x_uv))
        gnn.append(Dense.create(rng, 2 * in_dim + shape.edge_dim, shape.hidden_size, f"gnn.{k}"))
        in_dim = shape.hidden_size
    scorer = MLP.create(rng, [shape.embedding_size, shape.scorer_hidden, 1], "scorer")
    selector = MLP.create(rng, [shape.max_neighbors, shape.selector_hidden, shape.max_neighbors], "selector")
    return ActorParams(shape=shape, gnn=gnn, scorer=scorer, selector=selector)


@dataclass(frozen=True)
class ObservationBatch:
    """Unión disjunta de observaciones (índices de nodo desplazados por observación)."""

    node_features: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_features: np.ndarray
    decision_nodes: np.ndarray      # (B,), índices globales
    decision_neighbors: np.ndarray  # (B, max_n), índices globales, -1 = relleno
    action_mask: np.ndarray         # (B, max_n)
    offsets: np.ndarray             # primer nodo de cada observación

    @property
    def size(self) -> int:
        return self.action_mask.shape[0]

    @property
    def node_count(self) -> int:
        return self.node_features.shape[0]


def batch_observations(observations: Sequence[Observation]) -> ObservationBatch:
    if not observations:
        raise ValueError("batch_observations requiere al menos una observación")
    max_n = observations[0].max_neighbors
    offsets, total = [], 0
    for obs in observations:
        if obs.max_neighbors != max_n:
            raise ValueError(f"Observaciones con max_neighbors distinto ({obs.max_neighbors} vs {max_n})")
        offsets.append(total)
        total += obs.node_count
    neighbors = np.stack([
        np.where(obs.decision_neighbors >= 0, obs.decision_neighbors + off, -1)
        for obs, off in zip(observations, offsets)
    ])
    return ObservationBatch(
        node_features=np.concatenate([obs.node_features for obs in observations]),
        edge_src=np.concatenate([obs.edge_src + off for obs, off in zip(observations, offsets)]),
        edge_dst=np.concatenate([obs.edge_dst + off for obs, off in zip(observations, offsets)]),
        edge_features=np.concatenate([obs.edge_features for obs in observations]),
        decision_nodes=np.asarray([obs.decision_node + off for obs, off in zip(observations, offsets)],
                                  dtype=np.int64),
        decision_neighbors=neighbors,
        action_mask=np.stack([obs.action_mask for obs in observations]),
        offsets=np.asarray(offsets, dtype=np.int64),
    )


def _as_batch(data: Union[Observation, ObservationBatch]) -> ObservationBatch:
    return batch_observations([data]) if isinstance(data, Observation) else data


def hop_distances(batch: ObservationBatch, max_hops: int) -> np.ndarray:
    """Saltos desde el nodo de decisión de cada observación (-1 = más de max_hops)."""
    distance = np.full(batch.node_count, -1, dtype=np.int64)
    distance[batch.decision_nodes] = 0
    frontier = np.zeros(batch.node_count, dtype=bool)
    frontier[batch.decision_nodes] = True
    for hop in range(1, max_hops + 1):
        reached = np.zeros(batch.node_count, dtype=bool)
        reached[batch.edge_dst[frontier[batch.edge_src]]] = True
        reached[batch.edge_src[frontier[batch.edge_dst]]] = True
        frontier = reached & (distance < 0)
        distance[frontier] = hop
    return distance


def restrict_to_hops(data: Union[Observation, ObservationBatch], max_hops: int) -> ObservationBatch:
    """
    Subgrafo inducido por los nodos a lo sumo a max_hops saltos del nodo de decisión.

    Con max_hops = K los atributos de nodos más lejanos no llegan a la distribución de
    acciones; los vecinos del nodo de decisión (1 salto) se conservan siempre.
    """
    batch = _as_batch(data)
    keep = hop_distances(batch, max(max_hops, 1)) >= 0
    if keep.all():
        return batch
    new_index = np.cumsum(keep) - 1
    kept_before = np.concatenate([[0], np.cumsum(keep)])
    edges = keep[batch.edge_src] & keep[batch.edge_dst]
    neighbors = np.where(batch.decision_neighbors >= 0, new_index[batch.decision_neighbors], -1)
    return ObservationBatch(
        node_features=batch.node_features[keep],
        edge_src=new_index[batch.edge_src[edges]],
        edge_dst=new_index[batch.edge_dst[edges]],
        edge_features=batch.edge_features[edges],
        decision_nodes=new_index[batch.decision_nodes],
        decision_neighbors=neighbors,
        action_mask=batch.action_mask,
        offsets=kept_before[batch.offsets],
    )


@dataclass
class EmbeddingSet:
    hidden: List[Tensor]  # h^1..h^K, filas normalizadas
    z: Tensor             # concatenación jumping-knowledge


def embed(data: Union[Observation, ObservationBatch], params: ActorParams) -> EmbeddingSet:
    """
    Propagación hacia adelante de las K capas GraphSAGE con atributos de arista.

    Para cada nodo v el mensaje de un vecino u es concat(h_u, x_uv); los mensajes se
    promedian (un nodo sin vecinos agrega el vector nulo) y
    h_v = normalizar(relu(W_k concat(h_v, agregado))).
    """
    batch = _as_batch(data)
    shape = params.shape
    if batch.node_features.shape[1] != shape.node_dim:
        raise ShapeError(f"Características de nodo de dimensión {batch.node_features.shape[1]}, "
                         f"el actor espera {shape.node_dim}")
    if batch.edge_features.shape[1] != shape.edge_dim:
        raise ShapeError(f"Características de arista de dimensión {batch.edge_features.shape[1]}, "
                         f"el actor espera {shape.edge_dim}")

    n = batch.node_count
    edge_x = constant(batch.edge_features)
    h = constant(batch.node_features)
    hidden = []
    for layer in params.gnn:
        messages = concat([gather_rows(h, batch.edge_src), edge_x], axis=1)
        aggregate = segment_mean(messages, batch.edge_dst, n)
        h = l2_normalize_rows(relu(layer(concat([h, aggregate], axis=1))))
        hidden.append(h)
    return EmbeddingSet(hidden=hidden, z=concat(hidden, axis=1))


def score_neighbors(emb: EmbeddingSet, data: Union[Observation, ObservationBatch],
                    params: ActorParams) -> Tensor:
    """
    Puntúa los vecinos del nodo de decisión en orden de índice de vecino.

    Returns:
        Tensor (B, max_neighbors) con ceros en las ranuras de relleno

    Raises:
        ValueError: si algún nodo de decisión no tiene vecinos
    """
    batch = _as_batch(data)
    slots = batch.decision_neighbors
    valid = slots >= 0
    if not valid.any(axis=1).all():
        raise ValueError("Nodo de decisión sin vecinos: no hay acciones que puntuar")

    chosen = slots[valid]
    scores = params.scorer(gather_rows(emb.z, chosen))
    # Fila extra nula para las ranuras de relleno
    padded = concat([scores, constant(np.zeros((1, 1)))], axis=0)
    lookup = np.full(slots.shape, len(chosen), dtype=np.int64)
    lookup[valid] = np.arange(len(chosen))
    return reshape(gather_rows(padded, lookup.reshape(-1)), slots.shape)


def action_distribution(scores: Tensor, mask, params: ActorParams) -> Tensor:
    """Log-probabilidades (B, max_neighbors) del MLP de selección con la máscara aplicada."""
    return masked_log_softmax(params.selector(scores), mask)


def action_log_probs(data: Union[Observation, ObservationBatch], params: ActorParams) -> Tensor:
    """restrict_to_hops(K) -> embed -> score_neighbors -> action_distribution."""
    batch = restrict_to_hops(data, params.shape.layers)
    emb = embed(batch, params)
    return action_distribution(score_neighbors(emb, batch, params), batch.action_mask, params)


@dataclass(frozen=True)
class ActionDistribution:
    """Distribución categórica de un agente (valores numéricos, sin registro)."""

    log_probs: np.ndarray
    mask: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return np.where(self.mask, np.exp(np.where(self.mask, self.log_probs, 0.0)), 0.0)

    def entropy(self) -> float:
        p = self.probs
        return float(-np.sum(np.where(self.mask, p * np.where(self.mask, self.log_probs, 0.0), 0.0)))


def distributions(data: Union[Observation, ObservationBatch], params: ActorParams) -> List[ActionDistribution]:
    batch = _as_batch(data)
    log_probs = action_log_probs(batch, params).value
    return [ActionDistribution(log_probs[i], batch.action_mask[i]) for i in range(batch.size)]


def sample_action(dist: ActionDistribution, rng: np.random.Generator) -> Tuple[int, float]:
    """Muestrea una acción; las acciones enmascaradas tienen probabilidad exactamente 0."""
    p = dist.probs
    p = p / p.sum()
    action = int(rng.choice(len(p), p=p))
    return action, float(dist.log_probs[action])


def greedy_action(dist: ActionDistribution) -> Tuple[int, float]:
    """Acción de máxima probabilidad (empates: menor índice)."""
    action = int(np.argmax(np.where(dist.mask, dist.log_probs, -np.inf)))
    return action, float(dist.log_probs[action])


def evaluate(log_probs: Tensor, mask, actions: Sequence[int]) -> Tuple[Tensor, Tensor]:
    """Log-probabilidad de las acciones tomadas y entropía por fila (diferenciables)."""
    return take_along_rows(log_probs, actions), masked_entropy(log_probs, mask)


def act(observations: Sequence[Observation], params: ActorParams,
        rng: Optional[np.random.Generator] = None, greedy: bool = False) -> List[Tuple[int, float]]:
    """Acción y log-probabilidad para cada observación (una pasada por lote)."""
    if not observations:
        return []
    chosen = []
    for dist in distributions(batch_observations(observations), params):
        if greedy or rng is None:
            chosen.append(greedy_action(dist))
        else:
            chosen.append(sample_action(dist, rng))
    return chosen


def policy_info(params: ActorParams) -> Dict[str, object]:
    """Resumen reproducible de la arquitectura del actor."""
    shape = params.shape
    return {
        **shape.to_dict(),
        "embedding_size": shape.embedding_size,
        "aggregator": "mean",
        "nonlinearity": "relu",
        "jumping_knowledge": "concat",
        "scorer_sizes": list(params.scorer.sizes()),
        "selector_sizes": list(params.selector.sizes()),
        "parameter_count": params.parameter_count(),
    }


def format_policy_info(info: Dict[str, object]) -> str:
    width = max(len(key) for key in info)
    return "\n".join(f"{key.ljust(width)} : {value}" for key, value in info.items())
