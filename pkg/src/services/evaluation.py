"""
Evaluation Module - Ejecución de políticas bajo perturbaciones
Responsabilidad: Simular una política durante el horizonte con bajas, observación limitada y
comunicación con pérdidas; repetir con semillas distintas y persistir series y resúmenes.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.core.environment import PatrolEnvironment
from src.core.file_manager import FileManager, safe_folder_name
from src.core.models import EnvironmentConfig, ExperimentConfig
from src.core.patrol_graph import PatrolGraph, bidirect, load_graph
from src.core.world_state import idleness_std, worst_idleness
from src.learning.checkpoint import load_actor

from .baselines import GreedyIdlenessPolicy, MagecPolicy, Policy, RandomWalkPolicy
from .comparison import plot_series

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ["step", "avg_idleness", "max_idleness", "std_idleness", "living_agents", "belief_staleness"]
DEFAULT_MAX_NEIGHBORS = 10


@dataclass
class RunSeries:
    """Serie por paso de una ejecución (una fila por paso, 1..horizonte)."""

    steps: np.ndarray
    avg_idleness: np.ndarray
    max_idleness: np.ndarray
    std_idleness: np.ndarray
    living_agents: np.ndarray
    belief_staleness: np.ndarray
    node_idleness: np.ndarray  # (horizonte, m)

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def rows(self) -> List[Dict[str, Any]]:
        rows = []
        for t in range(self.horizon):
            row = {
                "step": int(self.steps[t]),
                "avg_idleness": float(self.avg_idleness[t]),
                "max_idleness": float(self.max_idleness[t]),
                "std_idleness": float(self.std_idleness[t]),
                "living_agents": float(self.living_agents[t]),
                "belief_staleness": float(self.belief_staleness[t]),
            }
            for v in range(self.node_idleness.shape[1]):
                row[f"zeta_{v}"] = float(self.node_idleness[t, v])
            rows.append(row)
        return rows

    def columns(self) -> List[str]:
        return SERIES_COLUMNS + [f"zeta_{v}" for v in range(self.node_idleness.shape[1])]


def mean_series(runs: List[RunSeries]) -> RunSeries:
    """Media aritmética paso a paso de varias ejecuciones del mismo horizonte."""
    return RunSeries(
        steps=runs[0].steps.copy(),
        avg_idleness=np.mean([r.avg_idleness for r in runs], axis=0),
        max_idleness=np.mean([r.max_idleness for r in runs], axis=0),
        std_idleness=np.mean([r.std_idleness for r in runs], axis=0),
        living_agents=np.mean([r.living_agents for r in runs], axis=0),
        belief_staleness=np.mean([r.belief_staleness for r in runs], axis=0),
        node_idleness=np.mean([r.node_idleness for r in runs], axis=0),
    )


def visit_gaps(node_idleness: np.ndarray, rows: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Máximo intervalo entre visitas por nodo.

    Es la ociosidad previa al reinicio: la del paso anterior más un paso (antes del primer
    paso todos los nodos están a 0). Un nodo nunca visitado reporta el horizonte.
    """
    previous = np.vstack([np.zeros((1, node_idleness.shape[1])), node_idleness[:-1]])
    if rows is not None:
        previous = previous[rows]
    return np.max(previous, axis=0) + 1.0


def summarize(series: RunSeries, attrition_steps: Optional[List[int]] = None) -> Dict[str, Any]:
    """
    Resumen recomputable desde la serie persistida.

    Si hay bajas, se añaden las mismas métricas restringidas a los pasos posteriores a la primera.
    """
    summary: Dict[str, Any] = {
        "horizon": series.horizon,
        "time_avg_idleness": float(np.mean(series.avg_idleness)),
        "final_avg_idleness": float(series.avg_idleness[-1]),
        "peak_max_idleness": float(np.max(series.max_idleness)),
        "mean_std_idleness": float(np.mean(series.std_idleness)),
        "max_visit_gap": [float(g) for g in visit_gaps(series.node_idleness)],
    }
    if attrition_steps:
        first = min(attrition_steps)
        after = series.steps >= first
        if after.any():
            summary["post_attrition"] = {
                "from_step": int(first),
                "time_avg_idleness": float(np.mean(series.avg_idleness[after])),
                "max_visit_gap": [float(g) for g in visit_gaps(series.node_idleness, after)],
            }
    return summary


def simulate(env: PatrolEnvironment, policy: Policy, horizon: int, seed: int) -> RunSeries:
    """Ejecuta `horizon` pasos; registra el estado tras cada paso (columna step = reloj)."""
    env.reset(seed)
    policy.reset(seed)
    m = env.graph.node_count
    steps = np.arange(1, horizon + 1)
    avg = np.zeros(horizon)
    peak = np.zeros(horizon)
    std = np.zeros(horizon)
    living = np.zeros(horizon)
    staleness = np.zeros(horizon)
    nodes = np.zeros((horizon, m))

    for t in range(horizon):
        env.step(policy.choose(env))
        state = env.state
        avg[t] = env.average_idleness()
        peak[t] = worst_idleness(state)
        std[t] = idleness_std(state)
        living[t] = state.living_count()
        staleness[t] = env.belief_staleness()
        nodes[t] = state.idleness

    return RunSeries(steps, avg, peak, std, living, staleness, nodes)


def build_policy(cfg: ExperimentConfig) -> Tuple[Policy, int, Optional[float]]:
    """
    Política, max_neighbors y escala de ociosidad a usar.

    Para 'magec' sólo se lee el actor del checkpoint.
    """
    if cfg.policy == "magec":
        actor, metadata = load_actor(Path(cfg.checkpoint))
        return MagecPolicy(actor, stochastic=cfg.stochastic_eval), actor.shape.max_neighbors, metadata.get("zeta_scale")
    if cfg.policy == "random":
        return RandomWalkPolicy(), DEFAULT_MAX_NEIGHBORS, None
    return GreedyIdlenessPolicy(), DEFAULT_MAX_NEIGHBORS, None


@dataclass
class EvaluationResult:
    config: ExperimentConfig
    seeds: List[int]
    runs: List[RunSeries]
    mean: RunSeries
    summary: Dict[str, Any] = field(default_factory=dict)
    output_dir: Optional[Path] = None


def _run_one(graph: PatrolGraph, cfg: ExperimentConfig, env_config: EnvironmentConfig,
             policy: Policy, seed: int) -> RunSeries:
    env = PatrolEnvironment(graph, cfg.n_agents, env_config)
    return simulate(env, policy, cfg.horizon, seed)


def run_evaluation(cfg: ExperimentConfig, graph: Optional[PatrolGraph] = None,
                   write: bool = True, max_workers: int = 4) -> EvaluationResult:
    """
    Evalúa la política de `cfg` en `cfg.repeats` ejecuciones paralelas con semillas distintas.

    Escribe metrics_run<i>.csv, metrics_mean.csv, summary.json y plot.svg en la carpeta de salida.

    Raises:
        CheckpointError: si el checkpoint de 'magec' no existe o es inválido
    """
    if graph is None:
        graph = load_graph(Path(cfg.graph_path).read_text(encoding="utf-8"))
    view = bidirect(graph)
    seeds = cfg.run_seeds()
    base_policy, checkpoint_neighbors, checkpoint_scale = build_policy(cfg)
    max_neighbors = max(checkpoint_neighbors, view.max_degree) if cfg.policy != "magec" else checkpoint_neighbors
    zeta_scale = checkpoint_scale or 50.0

    logger.info(
        f"Evaluando '{cfg.display_label()}' en {graph.node_count} nodos, {cfg.n_agents} agentes, "
        f"horizonte {cfg.horizon}, semillas {seeds}"
    )

    results: Dict[int, RunSeries] = {}
    with ThreadPoolExecutor(max_workers=max(1, min(max_workers, len(seeds)))) as executor:
        futures = {}
        for i, seed in enumerate(seeds):
            # Cada ejecución tiene su propia instancia de política (rng independiente)
            policy = base_policy if i == 0 else _clone_policy(base_policy)
            env_config = cfg.environment_config(seed, max_neighbors, zeta_scale)
            futures[executor.submit(_run_one, graph, cfg, env_config, policy, seed)] = i
        for future in as_completed(futures):
            i = futures[future]
            results[i] = future.result()
            logger.info(
                f"Ejecución {i} (semilla {seeds[i]}) completada: "
                f"ociosidad media {np.mean(results[i].avg_idleness):.2f}"
            )

    runs = [results[i] for i in range(len(seeds))]
    mean = mean_series(runs)
    attrition_steps = [e.step for e in cfg.attrition]
    summary = {
        "label": cfg.display_label(),
        "policy": cfg.policy,
        "graph": cfg.graph_path,
        "n_agents": cfg.n_agents,
        "obs_radius": cfg.obs_radius if np.isfinite(cfg.obs_radius) else "inf",
        "comm_success": cfg.comm_success,
        "attrition": [{"step": e.step, "agent": e.agent} for e in cfg.attrition],
        "seeds": seeds,
        "runs": [summarize(r, attrition_steps) for r in runs],
        "mean": summarize(mean, attrition_steps),
    }
    result = EvaluationResult(config=cfg, seeds=seeds, runs=runs, mean=mean, summary=summary)
    if write:
        result.output_dir = write_evaluation(result)
    return result


def _clone_policy(policy: Policy) -> Policy:
    if isinstance(policy, MagecPolicy):
        return MagecPolicy(policy.actor, stochastic=policy.stochastic)
    return type(policy)()


def write_evaluation(result: EvaluationResult) -> Path:
    """Persistencia serializada en el hilo llamante, después de que terminan las ejecuciones."""
    files = FileManager(result.config.output_dir)
    for i, run in enumerate(result.runs):
        files.save_csv(run.rows(), run.columns(), f"metrics_run{i}.csv")
    files.save_csv(result.mean.rows(), result.mean.columns(), "metrics_mean.csv")
    files.save_json(result.summary, "summary.json")
    plot_series(
        [(result.config.display_label(), result.mean.steps, result.mean.avg_idleness)],
        [e.step for e in result.config.attrition],
        files.path("plot.svg"),
    )
    logger.info(f"Resultados de evaluación en {files.get_output_folder()}")
    return files.get_output_folder()


def run_sweep(cfg: ExperimentConfig, comm_values: List[float],
              radii: Optional[List[float]] = None) -> List[EvaluationResult]:
    """
    Repite la evaluación para cada combinación de tasa de éxito de comunicación y radio.

    Cada combinación escribe en su propia subcarpeta de `cfg.output_dir`.
    """
    graph = load_graph(Path(cfg.graph_path).read_text(encoding="utf-8"))
    results = []
    for radius in radii or [cfg.obs_radius]:
        for comm in comm_values:
            label = f"{cfg.display_label()} comm={comm:g}"
            if radii:
                label += f" r={radius:g}"
            variant = cfg.model_copy(update={
                "comm_success": comm,
                "obs_radius": radius,
                "label": label,
                "output_dir": str(Path(cfg.output_dir) / safe_folder_name(label)),
            })
            results.append(run_evaluation(ExperimentConfig.model_validate(variant.model_dump()), graph=graph))
    return results
