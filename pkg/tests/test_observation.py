import numpy as np
import pytest

from src.core.beliefs import broadcast_and_merge, initial_beliefs, merge_belief
from src.core.environment import PatrolEnvironment
from src.core.models import EnvironmentConfig
from src.core.observation import NODE_FEATURE_DIM, action_mask, edge_feature_dim
from src.core.world_state import AgentStateError, OnEdge, reset
from src.services.baselines import RandomWalkPolicy


def test_unlimited_observation_contains_all_nodes_exactly(desk_graph):
    config = EnvironmentConfig(episode_len=None)
    env = PatrolEnvironment(desk_graph, 2, config)
    policy = RandomWalkPolicy()
    env.reset(1)
    policy.reset(1)
    for _ in range(15):
        env.step(policy.choose(env))
    obs = env.observe(0)
    m = desk_graph.node_count
    assert list(obs.labels[:m]) == list(range(m))
    expected = np.minimum(env.state.idleness / config.zeta_scale, 1.0)
    assert np.allclose(obs.node_features[:m, 2], expected)
    assert obs.node_features.shape[1] == NODE_FEATURE_DIM
    assert obs.edge_features.shape[1] == edge_feature_dim(config.max_neighbors)


def test_mask_at_node_has_degree_entries(triangle_graph):
    state = reset(triangle_graph, 1, seed=0)
    mask = action_mask(state, 0, 10)
    assert mask.tolist() == [True, True] + [False] * 8


@pytest.mark.parametrize("target, index", [(1, 0), (2, 1)])
def test_mask_on_edge_forces_continue(triangle_graph, target, index):
    state = reset(triangle_graph, 1, seed=0)
    state.agents[0].location = OnEdge(0, target, 0.4)
    mask = action_mask(state, 0, 4)
    assert mask.sum() == 1
    assert mask[index]


def test_agent_nodes_attach_to_edge_endpoints(triangle_graph):
    env = PatrolEnvironment(triangle_graph, 1, EnvironmentConfig(episode_len=None, max_neighbors=4))
    env.reset(0)
    env.commit_actions({0: 1})  # hacia el nodo 2, arista de 4 m
    env.advance()
    obs = env.observe(0)
    assert obs.forced
    ego = obs.ego
    incoming = obs.edge_dst == ego
    sources = sorted(obs.labels[i] for i in obs.edge_src[incoming])
    assert sources == [0, 2]
    distances = sorted(obs.edge_features[incoming, 0] * triangle_graph.max_weight())
    assert distances == pytest.approx([1.0, 3.0])


def test_observing_dead_agent_fails(triangle_graph):
    env = PatrolEnvironment(triangle_graph, 2, EnvironmentConfig(attrition="0:1", episode_len=None))
    env.reset(0)
    with pytest.raises(AgentStateError):
        env.observe(1)


def _two_agents_moving_apart(desk_graph, comm_success):
    config = EnvironmentConfig(comm_success=comm_success, obs_radius=1.0, episode_len=None)
    env = PatrolEnvironment(desk_graph, 2, config)
    env.reset(0)
    # agente 0 hacia el nodo 1, agente 1 hacia el nodo 0
    env.step({0: 0, 1: 0})
    return env


def test_full_communication_shares_local_observations(desk_graph):
    env = _two_agents_moving_apart(desk_graph, 1.0)
    assert env.beliefs[1].node_stamp[1] == 1
    assert env.beliefs[0].node_stamp[1] == 1


def test_no_communication_keeps_beliefs_private(desk_graph):
    env = _two_agents_moving_apart(desk_graph, 0.0)
    assert env.beliefs[1].node_stamp[1] == 1
    assert env.beliefs[0].node_stamp[1] == 0
    assert env.beliefs[0].believed_idleness(env.state.clock)[1] == pytest.approx(1.0)


def test_lossy_exchange_is_reproducible(desk_graph):
    def stamps(seed):
        env = PatrolEnvironment(desk_graph, 3, EnvironmentConfig(comm_success=0.5, obs_radius=6.0,
                                                                 episode_len=None))
        policy = RandomWalkPolicy()
        env.reset(seed)
        policy.reset(seed)
        for _ in range(25):
            env.step(policy.choose(env))
        return [env.beliefs[a].node_stamp.copy() for a in range(3)]

    for a, b in zip(stamps(9), stamps(9)):
        assert np.array_equal(a, b)


def test_beliefs_match_truth_with_perfect_telemetry(desk_graph):
    env = PatrolEnvironment(desk_graph, 3, EnvironmentConfig(episode_len=None))
    policy = RandomWalkPolicy()
    env.reset(3)
    policy.reset(3)
    for _ in range(30):
        env.step(policy.choose(env))
        for belief in env.beliefs.values():
            assert np.array_equal(belief.believed_idleness(env.state.clock), env.state.idleness)
        assert env.belief_staleness() == 0.0


def test_merge_keeps_newer_stamp(triangle_graph):
    state = reset(triangle_graph, 2, seed=0)
    beliefs = initial_beliefs(state)
    receiver, sender = beliefs[0], beliefs[1]
    sender.node_idleness[:] = [5.0, 6.0, 7.0]
    sender.node_stamp[:] = [3, 0, 3]
    receiver.node_stamp[:] = [1, 2, 4]
    merge_belief(receiver, sender)
    assert receiver.node_stamp.tolist() == [3, 2, 4]
    assert receiver.node_idleness[0] == 5.0


def test_zero_success_broadcast_delivers_nothing(triangle_graph):
    state = reset(triangle_graph, 2, seed=0)
    beliefs = initial_beliefs(state)
    beliefs[1].node_stamp[:] = 9
    broadcast_and_merge(state, beliefs, 0.0, np.random.default_rng(0))
    assert beliefs[0].node_stamp.tolist() == [0, 0, 0]


def test_agent_edge_past_max_neighbors_carries_only_its_length(triangle_graph):
    env = PatrolEnvironment(triangle_graph, 1, EnvironmentConfig(episode_len=None, max_neighbors=2))
    env.reset(0)
    env.step({0: 0})  # 1 m recorrido sobre la arista 0-1 de 3 m
    obs = env.observe(0)
    agent, node = obs.node_index(3), obs.node_index(0)
    # lista del nodo 0: [1, 2, agente] -> el agente queda en la posición 2 = max_neighbors
    into_node = (obs.edge_src == agent) & (obs.edge_dst == node)
    np.testing.assert_allclose(obs.edge_features[into_node], [[0.2, 0.0, 0.0]])
    into_agent = (obs.edge_src == node) & (obs.edge_dst == agent)
    np.testing.assert_allclose(obs.edge_features[into_agent], [[0.2, 1.0, 0.0]])
