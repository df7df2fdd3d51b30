"""
Environment Module - Simulador de patrullaje Dec-POMDP
Responsabilidad: Dinámica de ociosidad, movimiento de agentes, recompensas, bajas de agentes
y el ciclo observación/telemetría con pérdidas.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .beliefs import BeliefState, broadcast_and_merge, initial_beliefs, observe_locally
from .models import EnvironmentConfig
from .observation import Observation, action_mask, continue_action, observe
from .patrol_graph import BidirectedView, PatrolGraph, bidirect
from .world_state import (
    ARRIVAL_TOLERANCE,
    AgentStateError,
    AtNode,
    OnEdge,
    WorldState,
    average_idleness,
    reset,
    terminal_reward,
)

logger = logging.getLogger(__name__)

AGENT_SPEED = 1.0  # metros por paso
STEP_DT = 1


class InvalidActionError(ValueError):
    """Acción fuera de la máscara del agente (se rechaza antes de mutar el estado)."""


@dataclass
class StepResult:
    state: WorldState
    rewards: Dict[int, float]
    arrivals: List[Tuple[int, int]] = field(default_factory=list)  # (agente, nodo)


def validate_actions(state: WorldState, joint_action: Mapping[int, int], max_neighbors: int) -> None:
    """Comprueba todas las acciones sin modificar nada."""
    for agent_id, action in joint_action.items():
        agent = state.agent(agent_id)
        if not agent.alive:
            raise InvalidActionError(f"Agente {agent_id} dado de baja no puede actuar")
        mask = action_mask(state, agent_id, max_neighbors)
        if not (0 <= int(action) < max_neighbors) or not mask[int(action)]:
            raise InvalidActionError(
                f"Agente {agent_id}: acción {action} inválida (máscara {mask.astype(int).tolist()})"
            )
    for agent in state.living_agents():
        if agent.at_node and agent.agent_id not in joint_action:
            raise InvalidActionError(f"Agente {agent.agent_id} está en un nodo y no recibió acción")


def commit_actions(state: WorldState, joint_action: Mapping[int, int], max_neighbors: int) -> None:
    """Los agentes en un nodo empiezan a recorrer la arista elegida (progreso 0)."""
    validate_actions(state, joint_action, max_neighbors)
    for agent_id, action in joint_action.items():
        agent = state.agents[agent_id]
        if isinstance(agent.location, AtNode):
            source = agent.location.node
            target = state.view.neighbor_at(source, int(action))
            agent.location = OnEdge(source=source, target=target, progress=0.0)


def advance(state: WorldState, config: EnvironmentConfig) -> StepResult:
    """
    Avanza un paso con todos los movimientos ya comprometidos.

    La ociosidad de todos los nodos crece dt; cada llegada reinicia su nodo a 0 y paga
    alpha * r_local calculada con los valores previos al reinicio. En el último paso del
    episodio se suma beta * r_terminal a todos los agentes vivos.
    """
    graph = state.graph
    rewards = {agent.agent_id: 0.0 for agent in state.living_agents()}
    arrivals: List[Tuple[int, int]] = []

    for agent in state.living_agents():
        loc = agent.location
        if isinstance(loc, AtNode):
            raise AgentStateError(f"Agente {agent.agent_id} en el nodo {loc.node} sin acción comprometida")
        length = graph.weight(loc.source, loc.target)
        progress = loc.progress + AGENT_SPEED * STEP_DT / length
        if progress >= 1.0 - ARRIVAL_TOLERANCE:
            agent.location = AtNode(loc.target)
            arrivals.append((agent.agent_id, loc.target))
        else:
            agent.location = OnEdge(loc.source, loc.target, progress)

    pre_reset = state.idleness + STEP_DT
    paid = set()
    for agent_id, node in sorted(arrivals):
        # Llegadas simultáneas al mismo nodo: cobra el agente de menor id
        if node in paid:
            continue
        paid.add(node)
        rewards[agent_id] += config.reward_alpha * float(
            pre_reset[node] / (np.mean(pre_reset) + config.reward_epsilon)
        )

    state.idleness = pre_reset
    for _, node in arrivals:
        state.idleness[node] = 0.0

    if config.episode_len is not None and state.clock == config.episode_len - 1:
        bonus = config.reward_beta * terminal_reward(state, epsilon=config.reward_epsilon)
        for agent_id in rewards:
            rewards[agent_id] += bonus

    state.clock += STEP_DT
    return StepResult(state=state, rewards=rewards, arrivals=arrivals)


def step(state: WorldState, joint_action: Mapping[int, int], config: EnvironmentConfig) -> StepResult:
    """Paso completo: comprometer acciones de los agentes en nodo y avanzar dt = 1."""
    commit_actions(state, joint_action, config.max_neighbors)
    return advance(state, config)


def apply_attrition(state: WorldState, agent_id: int) -> WorldState:
    """
    Retira un agente de la simulación sin notificar a nadie.

    Raises:
        AgentStateError: si el agente no existe o ya estaba dado de baja
    """
    agent = state.agent(agent_id)
    if not agent.alive:
        raise AgentStateError(f"Agente {agent_id} ya estaba dado de baja")
    agent.alive = False
    logger.info(f"t={state.clock}: baja del agente {agent_id} ({state.living_count()} vivos)")
    return state


class PatrolEnvironment:
    """
    Entorno de patrullaje con creencias, comunicación con pérdidas y bajas programadas.

    Responsabilidades:
    - Mantener el WorldState y las creencias de cada agente
    - Aplicar el calendario de bajas y la telemetría periódica
    - Construir observaciones por agente
    """

    def __init__(self, graph: PatrolGraph, n_agents: int, config: EnvironmentConfig,
                 view: Optional[BidirectedView] = None):
        """
        Args:
            graph: Grafo de patrullaje
            n_agents: Número de agentes desplegados
            config: Configuración del entorno (perturbaciones incluidas)
        """
        self.graph = graph
        self.view = view if view is not None else bidirect(graph)
        self.n_agents = n_agents
        self.config = config
        if self.view.max_degree > config.max_neighbors:
            raise ValueError(
                f"El grafo tiene grado máximo {self.view.max_degree} > max_neighbors={config.max_neighbors}"
            )
        for event in config.attrition:
            if event.agent >= n_agents:
                raise AgentStateError(f"Baja programada del agente {event.agent}, sólo hay {n_agents}")
        self._schedule = config.attrition_schedule()
        self.state: Optional[WorldState] = None
        self.beliefs: Dict[int, BeliefState] = {}
        self._comm_rng: Optional[np.random.Generator] = None

    def reset(self, seed: Optional[int] = None) -> WorldState:
        seed = self.config.seed if seed is None else seed
        self.state = reset(self.graph, self.n_agents, seed, view=self.view)
        # Flujo aleatorio propio para la comunicación, derivado de la semilla
        self._comm_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        self.beliefs = initial_beliefs(self.state)
        self._apply_scheduled_attrition()
        self._refresh_beliefs()
        return self.state

    def _apply_scheduled_attrition(self) -> None:
        for agent_id in self._schedule.get(self.state.clock, []):
            if self.state.agents[agent_id].alive:
                apply_attrition(self.state, agent_id)

    def _refresh_beliefs(self) -> None:
        for agent in self.state.living_agents():
            observe_locally(self.state, self.beliefs[agent.agent_id],
                            self.config.obs_radius, self.config.agent_belief_ttl)
        if self.state.clock % self.config.telemetry_period == 0:
            broadcast_and_merge(self.state, self.beliefs, self.config.comm_success, self._comm_rng)

    def living_agent_ids(self) -> List[int]:
        return [a.agent_id for a in self.state.living_agents()]

    def needs_decision(self, agent_id: int) -> bool:
        agent = self.state.agent(agent_id)
        return agent.alive and agent.at_node

    def observe(self, agent_id: int) -> Observation:
        return observe(self.state, self.beliefs, agent_id, self.config)

    def forced_action(self, agent_id: int) -> int:
        location = self.state.agent(agent_id).location
        if not isinstance(location, OnEdge):
            raise AgentStateError(f"Agente {agent_id} no está recorriendo una arista")
        return continue_action(self.state, location)

    def commit_actions(self, joint_action: Mapping[int, int]) -> None:
        commit_actions(self.state, joint_action, self.config.max_neighbors)

    def advance(self) -> StepResult:
        result = advance(self.state, self.config)
        self._apply_scheduled_attrition()
        self._refresh_beliefs()
        return result

    def step(self, joint_action: Mapping[int, int]) -> StepResult:
        self.commit_actions(joint_action)
        return self.advance()

    def belief_staleness(self) -> float:
        living = self.state.living_agents()
        if not living:
            return 0.0
        return float(np.mean([self.beliefs[a.agent_id].staleness(self.state.clock) for a in living]))

    def average_idleness(self) -> float:
        return average_idleness(self.state)
