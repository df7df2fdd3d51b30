"""
Rollout Buffer Module - Experiencia recolectada y GAE con saltos de pasos
Responsabilidad: Almacenar las entradas por agente en los pasos de decisión, calcular la
ventaja generalizada modificada (descuentos elevados a dt) y normalizar ventajas por lote.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.observation import Observation

ADVANTAGE_STD_FLOOR = 1e-12


@dataclass
class RolloutEntry:
    """Una decisión de un agente: <s(t), o(t), a(t), r, v, dt>."""

    env_index: int
    agent_id: int
    step: int
    critic_features: np.ndarray
    observation: Observation
    action: int
    log_prob: float
    value: float
    dt: int
    reward: float = 0.0   # suma de las recompensas de los dt pasos
    forced: bool = False  # acción de continuar en una arista (no entra en la pérdida del actor)
    alive: bool = True
    advantage: float = 0.0
    ret: float = 0.0

    @property
    def mask(self) -> np.ndarray:
        return self.observation.action_mask


@dataclass
class EpisodeLog:
    """Bitácora de un episodio: recompensa total por paso del entorno (todos los agentes)."""

    env_index: int
    seed: int
    step_rewards: List[float] = field(default_factory=list)

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.step_rewards))


def compute_modified_gae(rewards: Sequence[float], values: Sequence[float], dts: Sequence[int],
                         gamma: float, lam: float,
                         bootstrap: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    GAE sobre una cadena de decisiones de un agente separadas por dt pasos.

    delta_j = R_j + gamma^dt_j * V_{j+1} - V_j
    A_j     = delta_j + (gamma * lambda)^dt_j * A_{j+1}

    Con dt = 1 en todas las entradas se reduce al GAE estándar.

    Returns:
        (ventajas, retornos = ventajas + valores)

    Raises:
        ValueError: cadena vacía o longitudes distintas
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dts = np.asarray(dts, dtype=np.float64)
    n = len(rewards)
    if n == 0:
        raise ValueError("compute_modified_gae sobre un buffer vacío")
    if len(values) != n or len(dts) != n:
        raise ValueError(f"Longitudes distintas: {n} recompensas, {len(values)} valores, {len(dts)} dt")
    if np.any(dts < 1):
        raise ValueError("Todos los dt deben ser >= 1")

    advantages = np.zeros(n, dtype=np.float64)
    next_value = bootstrap
    next_advantage = 0.0
    for j in range(n - 1, -1, -1):
        delta = rewards[j] + gamma ** dts[j] * next_value - values[j]
        next_advantage = delta + (gamma * lam) ** dts[j] * next_advantage
        advantages[j] = next_advantage
        next_value = values[j]
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.size == 0:
        return advantages
    centered = advantages - advantages.mean()
    return centered / max(float(centered.std()), ADVANTAGE_STD_FLOOR)


class RolloutBuffer:
    """
    Entradas de todos los entornos y episodios de una iteración.

    Las cadenas para GAE se forman por (entorno, agente) en orden temporal; cada entorno
    aporta un episodio por iteración.
    """

    def __init__(self):
        self.entries: List[RolloutEntry] = []
        self.episodes: List[EpisodeLog] = []

    def __len__(self) -> int:
        return len(self.entries)

    def extend(self, entries: Sequence[RolloutEntry], episode: Optional[EpisodeLog] = None) -> None:
        self.entries.extend(entries)
        if episode is not None:
            self.episodes.append(episode)

    def chains(self) -> Dict[Tuple[int, int], List[RolloutEntry]]:
        chains: Dict[Tuple[int, int], List[RolloutEntry]] = {}
        for entry in self.entries:
            chains.setdefault((entry.env_index, entry.agent_id), []).append(entry)
        for chain in chains.values():
            chain.sort(key=lambda e: e.step)
        return chains

    def compute_advantages(self, gamma: float, lam: float, normalize: bool = True) -> None:
        """
        Calcula ventajas y retornos por cadena y normaliza las ventajas de las entradas no
        forzadas de todo el lote (media 0, desviación 1).
        """
        if not self.entries:
            raise ValueError("compute_advantages sobre un buffer vacío")
        for chain in self.chains().values():
            advantages, returns = compute_modified_gae(
                [e.reward for e in chain], [e.value for e in chain], [e.dt for e in chain], gamma, lam
            )
            for entry, adv, ret in zip(chain, advantages, returns):
                entry.advantage = float(adv)
                entry.ret = float(ret)
        if normalize:
            actor_entries = self.actor_entries()
            normalized = normalize_advantages([e.advantage for e in actor_entries])
            for entry, adv in zip(actor_entries, normalized):
                entry.advantage = float(adv)

    def actor_entries(self) -> List[RolloutEntry]:
        return [e for e in self.entries if not e.forced]

    def total_reward(self) -> float:
        return float(sum(e.reward for e in self.entries))

    def logged_reward(self) -> float:
        return float(sum(ep.total_reward for ep in self.episodes))

    def mean_episode_reward(self) -> float:
        if not self.episodes:
            return 0.0
        return float(np.mean([ep.total_reward for ep in self.episodes]))
