"""
Baselines Module - Políticas de referencia sin aprendizaje
Responsabilidad: Paseo aleatorio y política voraz de ociosidad por distancia, más la interfaz
común de políticas usada por la evaluación (incluido el actor MAGEC entrenado).
"""

from typing import Dict, List, Optional

import numpy as np

from src.core.environment import PatrolEnvironment
from src.core.observation import Observation
from src.learning.policy_gnn import ActorParams, act


def random_walk_policy(obs: Observation, rng: np.random.Generator) -> int:
    """Acción uniforme entre las no enmascaradas."""
    valid = np.flatnonzero(obs.action_mask)
    if len(valid) == 1:
        return int(valid[0])
    return int(rng.choice(valid))


def greedy_idleness_policy(obs: Observation) -> int:
    """
    Vecino con mayor ociosidad creída por metro de arista; empates -> menor índice.
    """
    ratios = np.full(obs.max_neighbors, -np.inf)
    valid = obs.action_mask
    ratios[valid] = obs.neighbor_idleness[valid] / obs.neighbor_lengths[valid]
    return int(np.argmax(ratios))


class Policy:
    """Interfaz de política: decide para los agentes que están en un nodo."""

    name = "policy"

    def reset(self, seed: int) -> None:
        pass

    def decide(self, observations: Dict[int, Observation]) -> Dict[int, int]:
        raise NotImplementedError

    def choose(self, env: PatrolEnvironment) -> Dict[int, int]:
        deciders = [a for a in env.living_agent_ids() if env.needs_decision(a)]
        if not deciders:
            return {}
        return self.decide({a: env.observe(a) for a in deciders})


class RandomWalkPolicy(Policy):
    name = "random"

    def __init__(self):
        self.rng = np.random.default_rng(0)

    def reset(self, seed: int) -> None:
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))

    def decide(self, observations: Dict[int, Observation]) -> Dict[int, int]:
        return {a: random_walk_policy(observations[a], self.rng) for a in sorted(observations)}


class GreedyIdlenessPolicy(Policy):
    name = "greedy"

    def decide(self, observations: Dict[int, Observation]) -> Dict[int, int]:
        return {a: greedy_idleness_policy(obs) for a, obs in observations.items()}


class MagecPolicy(Policy):
    """Actor compartido: argmax por defecto, muestreo si `stochastic`."""

    name = "magec"

    def __init__(self, actor: ActorParams, stochastic: bool = False):
        self.actor = actor
        self.stochastic = stochastic
        self.rng: Optional[np.random.Generator] = None

    def reset(self, seed: int) -> None:
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))

    def decide(self, observations: Dict[int, Observation]) -> Dict[int, int]:
        agents: List[int] = sorted(observations)
        chosen = act([observations[a] for a in agents], self.actor,
                     rng=self.rng, greedy=not self.stochastic)
        return {a: action for a, (action, _) in zip(agents, chosen)}
