"""Fixtures compartidas: grafos pequeños, configuraciones y un actor reducido."""

from pathlib import Path

import pytest

from src.core.models import EnvironmentConfig, TrainConfig
from src.core.patrol_graph import build_graph, load_graph
from src.learning.policy_gnn import ActorShape, init_actor

ROOT = Path(__file__).resolve().parent.parent

TRIANGLE_TEXT = """# triángulo 3-4-5
nodes 3
node 0 0 0
node 1 3 0
node 2 0 4
edges 3
edge 0 1
edge 1 2
edge 0 2
"""


@pytest.fixture
def triangle_graph():
    return load_graph(TRIANGLE_TEXT)


@pytest.fixture
def path_graph():
    """Camino de 4 nodos con aristas de 1 m."""
    return build_graph([(0, 0), (1, 0), (2, 0), (3, 0)], [(0, 1, None), (1, 2, None), (2, 3, None)])


@pytest.fixture
def long_path_graph():
    """Camino de 8 nodos con aristas de 1 m."""
    return build_graph([(float(i), 0.0) for i in range(8)], [(i, i + 1, None) for i in range(7)])


@pytest.fixture
def desk_graph():
    return load_graph((ROOT / "graphs" / "desk8.txt").read_text(encoding="utf-8"))


@pytest.fixture
def open_config():
    """Sin recompensa terminal, observación y comunicación perfectas."""
    return EnvironmentConfig(episode_len=None)


@pytest.fixture
def small_shape():
    return ActorShape(layers=2, hidden_size=16, scorer_hidden=8, selector_hidden=8, max_neighbors=4)


@pytest.fixture
def small_actor(small_shape):
    return init_actor(small_shape, seed=3)


@pytest.fixture
def tiny_train_config(tmp_path):
    return TrainConfig(
        n_agents=2,
        gnn_layers=2,
        hidden_size=8,
        scorer_hidden=8,
        selector_hidden=8,
        critic_hidden=16,
        max_neighbors=4,
        max_agents=3,
        episode_len=20,
        n_envs=2,
        epochs=2,
        minibatches=2,
        total_env_steps=80,
        eval_every=1,
        checkpoint_every=1,
        seed=5,
        output_dir=str(tmp_path / "train"),
    )
