"""
Trainer Module - Entrenamiento MAPPO con salto sincronizado de pasos
Responsabilidad: Recolectar episodios en copias paralelas del entorno (acciones sólo en pasos
de decisión, recompensas acumuladas sobre los pasos saltados), calcular GAE modificado y
actualizar actor y crítico con PPO recortado.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.environment import AGENT_SPEED, STEP_DT, PatrolEnvironment
from src.core.file_manager import FileManager
from src.core.models import TrainConfig
from src.core.patrol_graph import PatrolGraph, bidirect
from src.core.world_state import ARRIVAL_TOLERANCE, AgentStateError, AtNode, WorldState
from src.services.baselines import MagecPolicy
from src.services.evaluation import simulate

from .autodiff import (
    Adam,
    ComputationRecord,
    Tensor,
    backward,
    clip,
    clip_grad_norm,
    constant,
    exp,
    mean_all,
    minimum,
    mul,
    sub,
)
from .checkpoint import save_checkpoint
from .critic import CriticParams, build_critic_features, init_critic, value
from .policy_gnn import (
    ActorParams,
    ActorShape,
    action_log_probs,
    batch_observations,
    distributions,
    evaluate,
    init_actor,
    sample_action,
)
from .rollout_buffer import EpisodeLog, RolloutBuffer, RolloutEntry

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ["step", "mean_episode_reward", "eval_avg_idleness", "actor_loss", "value_loss", "entropy"]


class TrainingDivergedError(RuntimeError):
    """Pérdida no finita durante la actualización PPO."""

    def __init__(self, message: str, diagnostics: Dict[str, float]):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


def steps_to_arrival(state: WorldState, agent_id: int) -> int:
    """Pasos enteros hasta que el agente llegue al final de su arista (misma aritmética que advance)."""
    location = state.agent(agent_id).location
    if isinstance(location, AtNode):
        return 0
    length = state.graph.weight(location.source, location.target)
    progress, steps = location.progress, 0
    while progress < 1.0 - ARRIVAL_TOLERANCE:
        progress += AGENT_SPEED * STEP_DT / length
        steps += 1
    return steps


def steps_until_next_action(state: WorldState) -> int:
    """
    Mínimo, sobre los agentes vivos, de los pasos hasta que alguno llegue a un nodo (>= 1).

    Raises:
        AgentStateError: si no quedan agentes vivos
    """
    living = state.living_agents()
    if not living:
        raise AgentStateError("No quedan agentes vivos: no hay próxima decisión")
    return max(1, min(steps_to_arrival(state, a.agent_id) for a in living))


@dataclass
class EpisodeResult:
    entries: List[RolloutEntry]
    log: EpisodeLog


def collect_episode(env: PatrolEnvironment, actor: ActorParams, critic: CriticParams,
                    config: TrainConfig, seed: int, env_index: int = 0,
                    rng: Optional[np.random.Generator] = None,
                    skip_steps: bool = True) -> EpisodeResult:
    """
    Un episodio de `config.episode_len` pasos.

    En cada paso de decisión los agentes en un nodo muestrean su acción y los que recorren
    una arista reciben la acción forzada de continuar (log-prob 0). Luego el entorno avanza
    dt pasos (recortado al final del episodio) y cada entrada acumula sus recompensas.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    env.reset(seed)
    horizon = config.episode_len
    log = EpisodeLog(env_index=env_index, seed=seed)
    entries: List[RolloutEntry] = []

    while env.state.clock < horizon:
        state = env.state
        features = build_critic_features(state, config.zeta_scale, config.max_agents)
        v = float(value(features, critic).value[0])

        living = env.living_agent_ids()
        deciders = [a for a in living if env.needs_decision(a)]
        observations = {a: env.observe(a) for a in living}
        decisions: Dict[int, Tuple[int, float]] = {}
        if deciders:
            for a, dist in zip(deciders, distributions(batch_observations([observations[a] for a in deciders]), actor)):
                decisions[a] = sample_action(dist, rng)

        step_entries = {}
        for a in living:
            forced = a not in decisions
            action, log_prob = (env.forced_action(a), 0.0) if forced else decisions[a]
            step_entries[a] = RolloutEntry(
                env_index=env_index, agent_id=a, step=state.clock, critic_features=features,
                observation=observations[a], action=action, log_prob=log_prob, value=v, dt=0,
                forced=forced,
            )

        env.commit_actions({a: decisions[a][0] for a in decisions})
        dt = steps_until_next_action(env.state) if skip_steps else 1
        dt = min(dt, horizon - env.state.clock)
        for _ in range(dt):
            result = env.advance()
            log.step_rewards.append(float(sum(result.rewards.values())))
            for a, r in result.rewards.items():
                if a in step_entries:
                    step_entries[a].reward += r
        for entry in step_entries.values():
            entry.dt = dt
            entries.append(entry)

    return EpisodeResult(entries=entries, log=log)


def clipped_surrogate(ratio: Tensor, advantages: Tensor, clip_ratio: float) -> Tensor:
    """min(r * A, clip(r, 1 - eps, 1 + eps) * A) por muestra."""
    return minimum(mul(ratio, advantages), mul(clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio), advantages))


@dataclass
class UpdateStats:
    actor_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    grad_norm: float = 0.0


class PPOLearner:
    """Actor y crítico con sus optimizadores Adam (un único hilo de actualización)."""

    def __init__(self, actor: ActorParams, critic: CriticParams, config: TrainConfig):
        self.actor = actor
        self.critic = critic
        self.config = config
        opt = dict(lr=config.learning_rate, beta1=config.adam_beta1, beta2=config.adam_beta2, eps=config.adam_eps)
        self.actor_opt = Adam(actor.parameters(), **opt)
        self.critic_opt = Adam(critic.parameters(), **opt)
        self.rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3]))

    def losses(self, entries: Sequence[RolloutEntry]) -> Tuple[Tensor, Tensor, Tensor]:
        """(pérdida del actor, pérdida de valor, entropía media) de un minilote, registrados."""
        cfg = self.config
        actor_entries = [e for e in entries if not e.forced]
        if actor_entries:
            batch = batch_observations([e.observation for e in actor_entries])
            log_probs = action_log_probs(batch, self.actor)
            new_logp, entropy = evaluate(log_probs, batch.action_mask, [e.action for e in actor_entries])
            ratio = exp(sub(new_logp, constant([e.log_prob for e in actor_entries])))
            advantages = constant([e.advantage for e in actor_entries])
            surrogate = mean_all(clipped_surrogate(ratio, advantages, cfg.clip_ratio))
            mean_entropy = mean_all(entropy)
            actor_loss = sub(mul(surrogate, constant(-1.0)), mul(mean_entropy, constant(cfg.entropy_coef)))
        else:
            actor_loss = constant(0.0)
            mean_entropy = constant(0.0)

        features = np.stack([e.critic_features for e in entries])
        error = sub(value(features, self.critic), constant([e.ret for e in entries]))
        value_loss = mean_all(mul(error, error))
        return actor_loss, value_loss, mean_entropy

    def update(self, buffer: RolloutBuffer) -> UpdateStats:
        """
        epochs x minibatches pasadas sobre el lote con barajado sembrado.

        Raises:
            TrainingDivergedError: si alguna pérdida no es finita
        """
        cfg = self.config
        entries = buffer.entries
        stats = UpdateStats()
        count = 0
        for epoch in range(cfg.epochs):
            order = self.rng.permutation(len(entries))
            for chunk in np.array_split(order, min(cfg.minibatches, len(entries))):
                minibatch = [entries[i] for i in chunk]
                self.actor_opt.zero_grad()
                self.critic_opt.zero_grad()
                with ComputationRecord():
                    actor_loss, value_loss, entropy = self.losses(minibatch)
                    total = actor_loss + value_loss * cfg.value_coef
                diagnostics = {
                    "epoch": float(epoch),
                    "actor_loss": actor_loss.item(),
                    "value_loss": value_loss.item(),
                    "entropy": entropy.item(),
                }
                if not all(math.isfinite(x) for x in diagnostics.values()):
                    raise TrainingDivergedError("Pérdida no finita en la actualización PPO", diagnostics)
                backward(total)
                norm = 0.0
                if cfg.max_grad_norm is not None:
                    norm = clip_grad_norm(self.actor.parameters(), cfg.max_grad_norm)
                    clip_grad_norm(self.critic.parameters(), cfg.max_grad_norm)
                if not math.isfinite(norm):
                    raise TrainingDivergedError("Gradiente no finito", {**diagnostics, "grad_norm": norm})
                self.actor_opt.step()
                self.critic_opt.step()
                stats.actor_loss += diagnostics["actor_loss"]
                stats.value_loss += diagnostics["value_loss"]
                stats.entropy += diagnostics["entropy"]
                stats.grad_norm += norm
                count += 1
        if count:
            stats.actor_loss /= count
            stats.value_loss /= count
            stats.entropy /= count
            stats.grad_norm /= count
        return stats


def ppo_update(buffer: RolloutBuffer, learner: PPOLearner) -> UpdateStats:
    buffer.compute_advantages(learner.config.gamma, learner.config.gae_lambda)
    return learner.update(buffer)


def actor_shape(config: TrainConfig) -> ActorShape:
    return ActorShape(
        layers=config.gnn_layers,
        hidden_size=config.hidden_size,
        scorer_hidden=config.scorer_hidden,
        selector_hidden=config.selector_hidden,
        max_neighbors=config.max_neighbors,
    )


def _episode_seed(seed: int, iteration: int, env_index: int) -> int:
    return int(np.random.SeedSequence([seed, iteration, env_index]).generate_state(1)[0])


def collect_rollout(envs: Sequence[PatrolEnvironment], actor: ActorParams, critic: CriticParams,
                    config: TrainConfig, iteration: int) -> RolloutBuffer:
    """Un episodio por copia del entorno, en hilos; el buffer se ordena por índice de copia."""
    results: Dict[int, EpisodeResult] = {}
    with ThreadPoolExecutor(max_workers=len(envs)) as executor:
        futures = {}
        for i, env in enumerate(envs):
            seed = _episode_seed(config.seed, iteration, i)
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, iteration, i, 2]))
            futures[executor.submit(collect_episode, env, actor, critic, config, seed, i, rng)] = i
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    buffer = RolloutBuffer()
    for i in range(len(envs)):
        buffer.extend(results[i].entries, results[i].log)
    return buffer


def greedy_average_idleness(graph: PatrolGraph, actor: ActorParams, config: TrainConfig,
                            seed: int) -> float:
    """Ociosidad media en el tiempo de un episodio con acciones argmax."""
    env = PatrolEnvironment(graph, config.n_agents, config.environment_config())
    series = simulate(env, MagecPolicy(actor), config.episode_len, seed)
    return float(np.mean(series.avg_idleness))


@dataclass
class TrainingResult:
    actor: ActorParams
    critic: CriticParams
    curves: List[Dict[str, float]] = field(default_factory=list)
    checkpoint_dir: Optional[Path] = None


def train(graph: PatrolGraph, config: TrainConfig, write: bool = True,
          progress: Optional[Callable[[Dict[str, float]], None]] = None) -> TrainingResult:
    """
    Bucle MAPPO hasta agotar `total_env_steps`.

    Cada iteración recolecta un episodio de `episode_len` pasos en cada una de las
    `n_envs` copias (sin bajas), actualiza con PPO y registra una fila de métricas.
    Con presupuesto menor que una iteración se devuelve el checkpoint inicial.
    """
    view = bidirect(graph)
    if view.max_degree > config.max_neighbors:
        raise ValueError(f"El grafo tiene grado máximo {view.max_degree} > max_neighbors={config.max_neighbors}")

    actor = init_actor(actor_shape(config), seed=config.seed)
    critic = init_critic(graph.node_count, config.max_agents, config.critic_hidden, seed=config.seed + 1)
    learner = PPOLearner(actor, critic, config)
    env_config = config.environment_config()
    envs = [PatrolEnvironment(graph, config.n_agents, env_config, view=view) for _ in range(config.n_envs)]

    steps_per_iteration = config.n_envs * config.episode_len
    iterations = config.total_env_steps // steps_per_iteration
    files = FileManager(config.output_dir) if write else None
    metadata = {"zeta_scale": config.zeta_scale, "n_agents": config.n_agents, "seed": config.seed}

    logger.info(
        f"Entrenamiento: {graph.node_count} nodos, {config.n_agents} agentes, K={config.gnn_layers}, "
        f"{iterations} iteraciones de {steps_per_iteration} pasos"
    )

    curves: List[Dict[str, float]] = []
    for iteration in range(iterations):
        buffer = collect_rollout(envs, actor, critic, config, iteration)
        stats = ppo_update(buffer, learner)
        row = {
            "step": (iteration + 1) * steps_per_iteration,
            "mean_episode_reward": buffer.mean_episode_reward(),
            "eval_avg_idleness": "",
            "actor_loss": stats.actor_loss,
            "value_loss": stats.value_loss,
            "entropy": stats.entropy,
        }
        if (iteration + 1) % config.eval_every == 0 or iteration == iterations - 1:
            row["eval_avg_idleness"] = greedy_average_idleness(graph, actor, config, config.seed)
        curves.append(row)
        logger.info(
            f"Iteración {iteration + 1}/{iterations} paso {row['step']}: recompensa {row['mean_episode_reward']:.3f}, "
            f"actor {stats.actor_loss:.4f}, valor {stats.value_loss:.4f}, entropía {stats.entropy:.4f}"
        )
        if progress:
            progress(row)
        if files and (iteration + 1) % config.checkpoint_every == 0:
            save_checkpoint(files.subfolder(f"checkpoints/iter_{iteration + 1:04d}"), actor, critic,
                            {**metadata, "env_steps": row["step"]})

    result = TrainingResult(actor=actor, critic=critic, curves=curves)
    if files:
        files.save_csv(curves, METRICS_COLUMNS, "metrics.csv")
        result.checkpoint_dir = save_checkpoint(
            files.subfolder("final"), actor, critic, {**metadata, "env_steps": iterations * steps_per_iteration}
        )
        logger.info(f"Checkpoint final en {result.checkpoint_dir}")
    return result
