"""
Beliefs Module - Creencias locales y comunicación con pérdidas
Responsabilidad: Mantener lo que cada agente sabe del estado global (ociosidad y posiciones
con su marca de tiempo) y fusionar la telemetría recibida bajo un modelo de pérdida Bernoulli.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .world_state import Location, WorldState, location_position, nodes_within

logger = logging.getLogger(__name__)


@dataclass
class BeliefState:
    """
    Conocimiento parcial de un agente.

    node_idleness/node_stamp: último valor conocido por nodo y paso en que se conoció
    (-1 = nunca). agent_locations: agente -> (ubicación, paso).
    """

    owner: int
    node_idleness: np.ndarray
    node_stamp: np.ndarray
    agent_locations: Dict[int, Tuple[Location, int]] = field(default_factory=dict)

    def believed_idleness(self, clock: int) -> np.ndarray:
        """Ociosidad extrapolada: último valor + tiempo transcurrido desde la marca."""
        elapsed = np.where(self.node_stamp >= 0, clock - self.node_stamp, 0)
        return self.node_idleness + elapsed

    def known_nodes(self) -> np.ndarray:
        return self.node_stamp >= 0

    def staleness(self, clock: int) -> float:
        """Antigüedad media (pasos) de la información por nodo."""
        known = self.known_nodes()
        if not known.any():
            return float(clock)
        return float(np.mean(np.where(known, clock - self.node_stamp, clock)))

    def copy(self) -> "BeliefState":
        return BeliefState(
            owner=self.owner,
            node_idleness=self.node_idleness.copy(),
            node_stamp=self.node_stamp.copy(),
            agent_locations=dict(self.agent_locations),
        )


def initial_beliefs(state: WorldState) -> Dict[int, BeliefState]:
    """
    Creencias al inicio: la ociosidad inicial (0) y las posiciones de despliegue son
    conocidas por todos.
    """
    beliefs = {}
    for agent in state.agents:
        beliefs[agent.agent_id] = BeliefState(
            owner=agent.agent_id,
            node_idleness=state.idleness.copy(),
            node_stamp=np.full(state.graph.node_count, state.clock, dtype=np.int64),
            agent_locations={
                other.agent_id: (other.location, state.clock)
                for other in state.agents if other.alive
            },
        )
    return beliefs


def observe_locally(state: WorldState, belief: BeliefState, radius: float, ttl: int) -> None:
    """
    Incorpora a la creencia propia lo observado directamente dentro del radio.

    - ubicación propia y nodos dentro del radio: valor exacto con marca = reloj
    - agentes vivos visibles: ubicación exacta
    - agentes creídos dentro del radio que no se ven allí: se descartan
    - agentes con información más antigua que `ttl` pasos: se descartan
    """
    owner = state.agent(belief.owner)
    center = owner.position(state.graph)
    clock = state.clock

    visible_nodes = nodes_within(state.graph, center, radius)
    belief.node_idleness[visible_nodes] = state.idleness[visible_nodes]
    belief.node_stamp[visible_nodes] = clock

    seen = set()
    for agent in state.agents:
        if not agent.alive:
            continue
        x, y = agent.position(state.graph)
        if agent.agent_id == owner.agent_id or np.hypot(x - center[0], y - center[1]) <= radius:
            belief.agent_locations[agent.agent_id] = (agent.location, clock)
            seen.add(agent.agent_id)

    for other_id in list(belief.agent_locations):
        if other_id in seen:
            continue
        location, stamp = belief.agent_locations[other_id]
        bx, by = location_position(state.graph, location)
        if np.hypot(bx - center[0], by - center[1]) <= radius or clock - stamp > ttl:
            del belief.agent_locations[other_id]


def merge_belief(receiver: BeliefState, message: BeliefState) -> None:
    """Fusiona un mensaje recibido conservando la entrada con la marca más reciente."""
    newer = message.node_stamp > receiver.node_stamp
    receiver.node_idleness[newer] = message.node_idleness[newer]
    receiver.node_stamp[newer] = message.node_stamp[newer]

    for agent_id, (location, stamp) in message.agent_locations.items():
        if agent_id == receiver.owner:
            continue
        current = receiver.agent_locations.get(agent_id)
        if current is None or stamp > current[1]:
            receiver.agent_locations[agent_id] = (location, stamp)


def broadcast_and_merge(state: WorldState,
                        beliefs: Dict[int, BeliefState],
                        comm_success: float,
                        rng: np.random.Generator) -> Dict[int, BeliefState]:
    """
    Un intercambio de telemetría entre todos los pares (emisor, receptor) de agentes vivos.

    Cada mensaje llega con probabilidad `comm_success`. Los sorteos siguen el orden
    (emisor, receptor) ascendente, por lo que la secuencia es reproducible con la semilla.
    Los mensajes transportan la creencia del emisor antes del intercambio.
    """
    living: List[int] = [a.agent_id for a in state.agents if a.alive]
    snapshot = {agent_id: beliefs[agent_id].copy() for agent_id in living}
    delivered = 0
    for sender in living:
        for receiver in living:
            if receiver == sender:
                continue
            if rng.random() < comm_success:
                merge_belief(beliefs[receiver], snapshot[sender])
                delivered += 1
    logger.debug(f"t={state.clock}: {delivered} mensajes de telemetría entregados")
    return beliefs
