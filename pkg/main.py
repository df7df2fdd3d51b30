"""
MAGEC Patrol v1.0 - Banco de trabajo de patrullaje multiagente sobre grafos

Subcomandos:
- train: Entrena el actor GNN compartido con MAPPO
- evaluate: Evalúa una política (magec, random, greedy) bajo perturbaciones
- compare: Tabla y gráfico comparativo de varias evaluaciones
- sweep: Evaluaciones para varias tasas de éxito de comunicación (y radios)
- graph validate / graph generate: Validación y generación de grafos
- policy-info: Arquitectura del actor guardado en un checkpoint
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Configurar encoding para Windows
if sys.platform == 'win32':
    sys.stdout.reconfigure(encoding='utf-8')
    sys.stderr.reconfigure(encoding='utf-8')
    os.environ['PYTHONIOENCODING'] = 'utf-8'

# Raíz del proyecto en el path para importar src.*
sys.path.insert(0, str(Path(__file__).parent))

from pydantic import ValidationError  # noqa: E402

from src.core.graph_generator import generate_geometric_graph  # noqa: E402
from src.core.models import (  # noqa: E402
    ExperimentConfig,
    TrainConfig,
    load_settings,
    merge_overrides,
    split_settings,
)
from src.core.patrol_graph import (  # noqa: E402
    GraphParseError,
    GraphValidationError,
    bidirect,
    load_graph,
    write_graph,
)
from src.core.world_state import AgentStateError  # noqa: E402
from src.learning.autodiff import AutodiffError, ShapeError  # noqa: E402
from src.learning.checkpoint import CheckpointError, load_actor  # noqa: E402
from src.learning.policy_gnn import format_policy_info, policy_info  # noqa: E402
from src.learning.trainer import TrainingDivergedError, train  # noqa: E402
from src.services.comparison import ComparisonError, compare, load_run_directory, run_from_evaluation  # noqa: E402
from src.services.evaluation import run_evaluation, run_sweep  # noqa: E402

logger = logging.getLogger("magec")

DOMAIN_ERRORS = (
    GraphParseError, GraphValidationError, AgentStateError, ShapeError, AutodiffError,
    CheckpointError, TrainingDivergedError, ComparisonError, FileNotFoundError,
)

EXPERIMENT_FLAGS = [
    "graph_path", "policy", "checkpoint", "n_agents", "obs_radius", "comm_success", "attrition",
    "horizon", "repeats", "seeds", "output_dir", "telemetry_period", "agent_belief_ttl",
    "zeta_scale", "label",
]
TRAIN_FLAGS = [
    "total_env_steps", "episode_len", "n_envs", "n_agents", "seed", "gnn_layers", "hidden_size",
    "max_neighbors", "max_agents", "learning_rate", "gamma", "gae_lambda", "eval_every",
    "checkpoint_every", "output_dir",
]


def _float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Lista de números inválida: '{value}'")


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=str, help='Archivo clave = valor con los campos de ExperimentConfig')
    parser.add_argument('--graph', dest='graph_path', type=str, help='Archivo del grafo')
    parser.add_argument('--policy', choices=['magec', 'random', 'greedy'])
    parser.add_argument('--checkpoint', type=str, help='Directorio del checkpoint o actor.json')
    parser.add_argument('--n-agents', dest='n_agents', type=int)
    parser.add_argument('--obs-radius', dest='obs_radius', type=float, help="Radio de observación en metros ('inf' por defecto)")
    parser.add_argument('--comm-success', dest='comm_success', type=float)
    parser.add_argument('--attrition', type=str, help="Bajas 'paso:agente,paso:agente'")
    parser.add_argument('--horizon', type=int)
    parser.add_argument('--repeats', type=int)
    parser.add_argument('--seeds', type=str, help="Semillas separadas por comas")
    parser.add_argument('--output-dir', dest='output_dir', type=str)
    parser.add_argument('--telemetry-period', dest='telemetry_period', type=int)
    parser.add_argument('--agent-belief-ttl', dest='agent_belief_ttl', type=int)
    parser.add_argument('--zeta-scale', dest='zeta_scale', type=float)
    parser.add_argument('--label', type=str)
    parser.add_argument('--stochastic-eval', dest='stochastic_eval', action='store_true', default=None,
                        help='Muestrear acciones en lugar de argmax')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="MAGEC Patrol v1.0 - Patrullaje multiagente con GNN y MAPPO",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Ejemplos de uso:
  python main.py graph generate --nodes 8 --seed 1 --output graphs/g8.txt
  python main.py train --graph graphs/g8.txt --config config/train_desk.cfg
  python main.py evaluate --config config/eval_attrition.cfg --checkpoint output/train/final
  python main.py compare output/eval/magec output/eval/greedy --output-dir output/compare
        """
    )
    parser.add_argument('--verbose', '-v', action='store_true', help='Logs de depuración')
    sub = parser.add_subparsers(dest='command', required=True)

    p_train = sub.add_parser('train', help='Entrenar el actor con MAPPO')
    p_train.add_argument('--config', type=str, help='Archivo clave = valor con los campos de TrainConfig')
    p_train.add_argument('--graph', dest='graph_path', type=str)
    p_train.add_argument('--total-env-steps', dest='total_env_steps', type=int)
    p_train.add_argument('--episode-len', dest='episode_len', type=int)
    p_train.add_argument('--n-envs', dest='n_envs', type=int)
    p_train.add_argument('--n-agents', dest='n_agents', type=int)
    p_train.add_argument('--seed', type=int)
    p_train.add_argument('--gnn-layers', dest='gnn_layers', type=int)
    p_train.add_argument('--hidden-size', dest='hidden_size', type=int)
    p_train.add_argument('--max-neighbors', dest='max_neighbors', type=int)
    p_train.add_argument('--max-agents', dest='max_agents', type=int)
    p_train.add_argument('--learning-rate', dest='learning_rate', type=float)
    p_train.add_argument('--gamma', type=float)
    p_train.add_argument('--gae-lambda', dest='gae_lambda', type=float)
    p_train.add_argument('--eval-every', dest='eval_every', type=int)
    p_train.add_argument('--checkpoint-every', dest='checkpoint_every', type=int)
    p_train.add_argument('--output-dir', dest='output_dir', type=str)

    p_eval = sub.add_parser('evaluate', help='Evaluar una política')
    _add_experiment_flags(p_eval)

    p_sweep = sub.add_parser('sweep', help='Evaluar con varias tasas de comunicación y comparar')
    _add_experiment_flags(p_sweep)
    p_sweep.add_argument('--comm-values', dest='comm_values', type=_float_list, default=[1.0, 0.75, 0.5, 0.25])
    p_sweep.add_argument('--radii', type=_float_list, default=None)

    p_compare = sub.add_parser('compare', help='Comparar carpetas de evaluación')
    p_compare.add_argument('runs', nargs='+', help='Carpetas con summary.json y metrics_mean.csv')
    p_compare.add_argument('--labels', type=str, help='Etiquetas separadas por comas')
    p_compare.add_argument('--output-dir', dest='output_dir', type=str, default='output/compare')

    p_graph = sub.add_parser('graph', help='Herramientas de grafos')
    graph_sub = p_graph.add_subparsers(dest='graph_command', required=True)
    p_validate = graph_sub.add_parser('validate', help='Validar un archivo de grafo')
    p_validate.add_argument('path')
    p_validate.add_argument('--max-neighbors', dest='max_neighbors', type=int, default=10)
    p_generate = graph_sub.add_parser('generate', help='Generar un grafo geométrico aleatorio conexo')
    p_generate.add_argument('--nodes', type=int, required=True)
    p_generate.add_argument('--seed', type=int, default=0)
    p_generate.add_argument('--size', type=float, default=40.0)
    p_generate.add_argument('--radius', type=float, default=18.0)
    p_generate.add_argument('--max-degree', dest='max_degree', type=int, default=6)
    p_generate.add_argument('--output', type=str, help='Archivo de salida (por defecto stdout)')

    p_info = sub.add_parser('policy-info', help='Arquitectura del actor guardado')
    p_info.add_argument('--checkpoint', required=True)

    return parser


def _overrides(args: argparse.Namespace, names: List[str]) -> Dict[str, Any]:
    return {name: getattr(args, name, None) for name in names}


def experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    settings = load_settings(args.config)
    overrides = _overrides(args, EXPERIMENT_FLAGS)
    overrides['stochastic_eval'] = args.stochastic_eval
    return ExperimentConfig(**merge_overrides(settings, overrides))


def cmd_train(args: argparse.Namespace) -> int:
    settings = merge_overrides(load_settings(args.config), _overrides(args, TRAIN_FLAGS + ["graph_path"]))
    own, rest = split_settings(settings, TrainConfig)
    graph_path = rest.pop("graph_path", None)
    if rest:
        raise ValueError(f"Claves desconocidas en la configuración de entrenamiento: {sorted(rest)}")
    if not graph_path:
        raise ValueError("train requiere --graph (o graph_path en el archivo de configuración)")
    config = TrainConfig(**own)
    graph = load_graph(Path(graph_path).read_text(encoding="utf-8"))
    result = train(graph, config)
    if result.curves:
        last = result.curves[-1]
        logger.info(f"Entrenamiento terminado: recompensa media {last['mean_episode_reward']:.3f}")
    else:
        logger.info("Presupuesto de pasos menor que una iteración: se guardó el checkpoint inicial")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    result = run_evaluation(experiment_config(args))
    mean = result.summary["mean"]
    logger.info(
        f"{result.config.display_label()}: ociosidad media {mean['time_avg_idleness']:.2f}, "
        f"final {mean['final_avg_idleness']:.2f}"
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = experiment_config(args)
    results = run_sweep(cfg, args.comm_values, args.radii)
    compare([run_from_evaluation(r) for r in results], str(Path(cfg.output_dir) / "comparison"))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    labels: List[Optional[str]] = args.labels.split(",") if args.labels else [None] * len(args.runs)
    if len(labels) != len(args.runs):
        raise ValueError(f"{len(labels)} etiquetas para {len(args.runs)} carpetas")
    runs = [load_run_directory(Path(path), label) for path, label in zip(args.runs, labels)]
    compare(runs, args.output_dir)
    return 0


def cmd_graph(args: argparse.Namespace) -> int:
    if args.graph_command == 'validate':
        graph = load_graph(Path(args.path).read_text(encoding="utf-8"))
        view = bidirect(graph)
        if view.max_degree > args.max_neighbors:
            raise GraphValidationError(
                f"Grado máximo {view.max_degree} excede max_neighbors={args.max_neighbors}"
            )
        print(f"OK: {graph.node_count} nodos, {graph.edge_count} aristas, grado máximo {view.max_degree}, "
              f"arista más larga {graph.max_weight():.3f} m")
        return 0

    graph = generate_geometric_graph(args.nodes, args.seed, size=args.size, radius=args.radius,
                                     max_degree=args.max_degree)
    text = write_graph(graph)
    if args.output:
        output = Path(args.output)
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(text, encoding="utf-8")
        logger.info(f"Grafo de {graph.node_count} nodos escrito en {output}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_policy_info(args: argparse.Namespace) -> int:
    actor, metadata = load_actor(Path(args.checkpoint))
    info = policy_info(actor)
    if "zeta_scale" in metadata:
        info["zeta_scale"] = metadata["zeta_scale"]
    print(format_policy_info(info))
    return 0


COMMANDS = {
    'train': cmd_train,
    'evaluate': cmd_evaluate,
    'sweep': cmd_sweep,
    'compare': cmd_compare,
    'graph': cmd_graph,
    'policy-info': cmd_policy_info,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Punto de entrada principal de la aplicación."""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    try:
        return COMMANDS[args.command](args)
    except ValidationError as e:
        parser.error(f"Configuración inválida:\n{e}")
    except DOMAIN_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except ValueError as e:
        logger.error(str(e))
        return 1
    except KeyboardInterrupt:
        logger.warning("Proceso interrumpido por el usuario.")
        return 1


if __name__ == "__main__":
    sys.exit(main())
