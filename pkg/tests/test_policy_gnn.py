import dataclasses
import math

import networkx as nx
import numpy as np
import pytest

from src.core.environment import PatrolEnvironment
from src.core.graph_generator import generate_geometric_graph
from src.core.models import EnvironmentConfig
from src.core.observation import continue_action
from src.core.world_state import OnEdge
from src.learning import autodiff as ad
from src.learning.autodiff import ComputationRecord, ShapeError, backward
from src.learning.policy_gnn import (
    ActorShape,
    act,
    action_log_probs,
    batch_observations,
    distributions,
    embed,
    evaluate,
    greedy_action,
    init_actor,
    policy_info,
    restrict_to_hops,
    sample_action,
    score_neighbors,
)
from src.services.baselines import RandomWalkPolicy

from .test_autodiff import numeric_gradient


def observation(graph, n_agents=1, agent=0, max_neighbors=4, actions=None, steps=0):
    env = PatrolEnvironment(graph, n_agents, EnvironmentConfig(episode_len=None, max_neighbors=max_neighbors))
    env.reset(0)
    for _ in range(steps):
        env.step(actions or {})
    return env.observe(agent)


def test_padding_slots_score_zero(triangle_graph, small_actor):
    obs = observation(triangle_graph)
    scores = score_neighbors(embed(obs, small_actor), obs, small_actor)
    assert scores.shape == (1, 4)
    assert scores.value[0, 2:].tolist() == [0.0, 0.0]


def test_probabilities_sum_to_one_and_mask_is_respected(desk_graph, small_actor):
    obs = observation(desk_graph, n_agents=2, agent=1)
    dist = distributions(obs, small_actor)[0]
    assert dist.probs.sum() == pytest.approx(1.0)
    assert np.all(dist.probs[~obs.action_mask] == 0.0)
    assert np.all(dist.probs[obs.action_mask] > 0.0)


def test_agent_on_edge_has_a_single_certain_action(triangle_graph, small_actor):
    obs = observation(triangle_graph, actions={0: 1}, steps=1)
    assert obs.forced
    dist = distributions(obs, small_actor)[0]
    assert dist.probs[1] == pytest.approx(1.0)
    assert greedy_action(dist)[0] == 1


def _permute(obs, permutation):
    """Reordena los nodos de la observación según `permutation` (nuevo índice de cada nodo)."""
    n = obs.node_count
    inverse = np.empty(n, dtype=np.int64)
    inverse[permutation] = np.arange(n)
    edge_order = np.arange(len(obs.edge_src))[::-1]
    neighbors = np.where(obs.decision_neighbors >= 0, permutation[np.maximum(obs.decision_neighbors, 0)], -1)
    return dataclasses.replace(
        obs,
        labels=tuple(obs.labels[i] for i in inverse),
        node_features=obs.node_features[inverse],
        edge_src=permutation[obs.edge_src][edge_order],
        edge_dst=permutation[obs.edge_dst][edge_order],
        edge_features=obs.edge_features[edge_order],
        ego=int(permutation[obs.ego]),
        decision_node=int(permutation[obs.decision_node]),
        decision_neighbors=neighbors,
    )


def test_output_is_invariant_to_node_order(desk_graph, small_actor):
    obs = observation(desk_graph, n_agents=3, agent=1, actions=None)
    permutation = np.random.default_rng(4).permutation(obs.node_count)
    original = action_log_probs(obs, small_actor).value
    permuted = action_log_probs(_permute(obs, permutation), small_actor).value
    np.testing.assert_allclose(np.exp(permuted), np.exp(original), atol=1e-12)


def _hops_from_decision(obs):
    graph = nx.Graph()
    graph.add_nodes_from(range(obs.node_count))
    graph.add_edges_from(zip(obs.edge_src.tolist(), obs.edge_dst.tolist()))
    return nx.single_source_shortest_path_length(graph, obs.decision_node)


def _with_idleness(obs, indices, level):
    features = obs.node_features.copy()
    features[list(indices), 2] = level
    return dataclasses.replace(obs, node_features=features)


def test_node_just_beyond_k_hops_does_not_affect_the_decision(long_path_graph, small_actor):
    # K = 2, decisión en el nodo 0: el nodo 3 está a 3 saltos, el nodo 2 a 2
    obs = observation(long_path_graph)
    base = action_log_probs(obs, small_actor).value
    beyond = action_log_probs(_with_idleness(obs, [obs.node_index(3)], 0.9), small_actor).value
    within = action_log_probs(_with_idleness(obs, [obs.node_index(2)], 0.9), small_actor).value
    np.testing.assert_array_equal(beyond, base)
    assert not np.array_equal(within, base)


def test_restriction_keeps_only_the_k_hop_neighborhood(long_path_graph):
    obs = observation(long_path_graph)
    local = restrict_to_hops(obs, 2)
    # nodos de patrulla 0, 1, 2 y el nodo-agente (etiqueta 8) pegado al nodo 0
    kept = [obs.node_index(label) for label in (0, 1, 2, 8)]
    np.testing.assert_array_equal(local.node_features, obs.node_features[kept])
    assert local.decision_nodes.tolist() == [0]
    assert local.decision_neighbors.tolist() == [[1, -1, -1, -1]]
    assert local.edge_src.max() < 4 and local.edge_dst.max() < 4
    assert len(local.edge_src) == 6


@pytest.mark.parametrize("layers", [2, 4])
def test_features_beyond_k_hops_never_change_the_distribution(layers):
    actor = init_actor(ActorShape(layers=layers, hidden_size=8, scorer_hidden=8, selector_hidden=8,
                                  max_neighbors=6), seed=layers)
    far_cases = 0
    for seed in range(50):
        graph = generate_geometric_graph(12 + seed % 7, seed, size=40.0, radius=12.0, max_degree=6)
        obs = observation(graph, n_agents=2, agent=seed % 2, max_neighbors=6)
        hops = _hops_from_decision(obs)
        far = [i for i in range(obs.node_count) if hops.get(i, layers + 1) > layers]
        if not far:
            continue
        far_cases += 1
        base = action_log_probs(obs, actor).value
        for level in (0.0, 0.37, 1.0):
            perturbed = action_log_probs(_with_idleness(obs, far, level), actor).value
            np.testing.assert_array_equal(perturbed, base, err_msg=f"grafo {seed}")
    assert far_cases >= 5


def test_same_actor_runs_on_graphs_of_different_size(triangle_graph, desk_graph, small_actor):
    small = act([observation(triangle_graph, n_agents=2)], small_actor)
    large = act([observation(desk_graph, n_agents=3, agent=2)], small_actor)
    assert small[0][0] in (0, 1)
    assert 0 <= large[0][0] < 4


def test_batched_and_single_evaluation_agree(desk_graph, small_actor):
    first = observation(desk_graph, n_agents=3, agent=0)
    second = observation(desk_graph, n_agents=3, agent=2)
    batched = action_log_probs(batch_observations([first, second]), small_actor).value
    np.testing.assert_allclose(batched[0], action_log_probs(first, small_actor).value[0])
    np.testing.assert_allclose(batched[1], action_log_probs(second, small_actor).value[0])


def test_sampling_matches_probabilities(desk_graph, small_actor):
    obs = observation(desk_graph, n_agents=2, agent=1)
    dist = distributions(obs, small_actor)[0]
    rng = np.random.default_rng(0)
    n = 4000
    counts = np.zeros(obs.max_neighbors)
    for _ in range(n):
        action, logp = sample_action(dist, rng)
        assert obs.action_mask[action]
        assert logp == dist.log_probs[action]
        counts[action] += 1
    p = dist.probs
    sigma = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) <= 4 * sigma + 1e-12)


def test_sampled_actions_are_never_masked_across_random_states():
    actor = init_actor(ActorShape(layers=2, hidden_size=8, scorer_hidden=8, selector_hidden=8,
                                  max_neighbors=6), seed=0)
    rng = np.random.default_rng(0)
    draws = 0
    for seed in range(20):
        graph = generate_geometric_graph(10 + seed % 5, seed, max_degree=6)
        env = PatrolEnvironment(graph, 3, EnvironmentConfig(episode_len=None, max_neighbors=6,
                                                            obs_radius=15.0, comm_success=0.5))
        walker = RandomWalkPolicy()
        env.reset(seed)
        walker.reset(seed)
        for snapshot in range(5):
            for _ in range(int(rng.integers(1, 15))):
                env.step(walker.choose(env))
            for agent in env.state.agents:
                obs = env.observe(agent.agent_id)
                dist = distributions(obs, actor)[0]
                if isinstance(agent.location, OnEdge):
                    expected = continue_action(env.state, agent.location)
                    assert dist.probs[expected] == pytest.approx(1.0)
                    assert greedy_action(dist)[0] == expected
                for _ in range(1000 // len(env.state.agents) + 1):
                    action, _ = sample_action(dist, rng)
                    assert obs.action_mask[action]
                    draws += 1
    assert draws >= 100_000


def test_uniform_selector_gives_maximal_entropy(desk_graph, small_shape):
    actor = init_actor(small_shape, seed=1)
    for p in actor.selector.parameters():
        p.value = np.zeros_like(p.value)
    obs = observation(desk_graph, n_agents=2, agent=1)  # nodo 1: vecinos 0, 2 y 5
    dist = distributions(obs, actor)[0]
    assert dist.entropy() == pytest.approx(math.log(3))
    np.testing.assert_allclose(dist.probs[:3], 1 / 3)


def test_all_parameters_receive_gradients(desk_graph, small_actor):
    obs = observation(desk_graph, n_agents=2, agent=0)
    with ComputationRecord():
        logp = action_log_probs(obs, small_actor)
        taken, entropy = evaluate(logp, obs.action_mask[None, :], [0])
        loss = ad.sum_all(taken) + ad.sum_all(entropy)
    backward(loss)
    for name, p in small_actor.named_parameters():
        assert p.grad is not None, name
        assert np.all(np.isfinite(p.grad)), name


@pytest.mark.parametrize("seed", range(5))
def test_actor_gradient_matches_finite_differences(triangle_graph, seed):
    actor = init_actor(ActorShape(layers=2, hidden_size=4, scorer_hidden=3, selector_hidden=3,
                                  max_neighbors=3), seed=11 + seed)
    obs = observation(triangle_graph, n_agents=2, max_neighbors=3)

    def loss():
        taken, entropy = evaluate(action_log_probs(obs, actor), obs.action_mask[None, :], [1])
        return ad.sum_all(taken) + ad.sum_all(entropy) * 0.1

    for p in actor.parameters():
        p.grad = None
    with ComputationRecord():
        total = loss()
    backward(total)
    for name, p in actor.named_parameters():
        np.testing.assert_allclose(p.grad, numeric_gradient(loss, p, h=1e-5), rtol=1e-4, atol=1e-6,
                                   err_msg=name)


def test_mismatched_feature_width_is_rejected(triangle_graph, small_actor):
    obs = observation(triangle_graph, max_neighbors=10)
    with pytest.raises(ShapeError):
        action_log_probs(obs, small_actor)


def test_policy_info_reports_architecture(small_actor):
    info = policy_info(small_actor)
    assert info["layers"] == 2
    assert info["embedding_size"] == 32
    assert info["aggregator"] == "mean"
    assert info["scorer_sizes"] == [32, 8, 1]
    assert info["selector_sizes"] == [4, 8, 4]
    assert info["parameter_count"] == sum(p.value.size for p in small_actor.parameters())
