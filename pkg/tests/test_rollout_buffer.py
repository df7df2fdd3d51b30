import numpy as np
import pytest

from src.learning.rollout_buffer import (
    RolloutBuffer,
    RolloutEntry,
    compute_modified_gae,
    normalize_advantages,
)


def textbook_gae(rewards, values, gamma, lam):
    n = len(rewards)
    advantages = np.zeros(n)
    last = 0.0
    for t in reversed(range(n)):
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        last = delta + gamma * lam * last
        advantages[t] = last
    return advantages


def brute_force_gae(rewards, values, dts, gamma, lam):
    """Suma explícita de deltas descontados por los dt acumulados."""
    n = len(rewards)
    deltas = [
        rewards[j] + gamma ** dts[j] * (values[j + 1] if j + 1 < n else 0.0) - values[j]
        for j in range(n)
    ]
    advantages = []
    for j in range(n):
        total, elapsed = 0.0, 0
        for k in range(j, n):
            total += (gamma * lam) ** elapsed * deltas[k]
            elapsed += dts[k]
        advantages.append(total)
    return np.array(advantages)


def test_single_entry_with_skipped_step():
    advantages, returns = compute_modified_gae([1.0], [1.0], [2], gamma=0.99, lam=0.95, bootstrap=0.5)
    assert advantages[0] == pytest.approx(0.49005)
    assert returns[0] == pytest.approx(1.49005)


def test_unit_steps_reduce_to_textbook_gae():
    rng = np.random.default_rng(1)
    rewards, values = rng.normal(size=30), rng.normal(size=30)
    advantages, returns = compute_modified_gae(rewards, values, [1] * 30, gamma=0.99, lam=0.95)
    np.testing.assert_allclose(advantages, textbook_gae(rewards, values, 0.99, 0.95), rtol=0, atol=1e-12)
    np.testing.assert_allclose(returns, advantages + values)


@pytest.mark.parametrize("seed", range(100))
def test_mixed_steps_match_brute_force_sum(seed):
    rng = np.random.default_rng(seed)
    rewards, values = rng.normal(size=10), rng.normal(size=10)
    dts = rng.integers(1, 6, size=10)
    advantages, _ = compute_modified_gae(rewards, values, dts, gamma=0.97, lam=0.9)
    np.testing.assert_allclose(advantages, brute_force_gae(rewards, values, dts, 0.97, 0.9), rtol=0, atol=1e-10)


@pytest.mark.parametrize("rewards, values, dts", [
    ([], [], []),
    ([1.0], [1.0, 2.0], [1]),
    ([1.0], [1.0], [0]),
])
def test_invalid_chains_are_rejected(rewards, values, dts):
    with pytest.raises(ValueError):
        compute_modified_gae(rewards, values, dts, 0.99, 0.95)


@pytest.mark.parametrize("scale", [7.0, 1e-3, 1e-5])
def test_normalized_advantages_have_zero_mean_unit_std(scale):
    normalized = normalize_advantages(np.random.default_rng(0).normal(3.0, scale, size=50))
    assert abs(normalized.mean()) < 1e-9
    assert normalized.std() == pytest.approx(1.0, abs=1e-6)


def test_constant_advantages_normalize_to_zero():
    assert normalize_advantages(np.full(50, 3.0)).tolist() == [0.0] * 50


def _entry(env_index, agent_id, step, reward, value, dt, forced=False):
    return RolloutEntry(env_index=env_index, agent_id=agent_id, step=step, critic_features=np.zeros(1),
                        observation=None, action=0, log_prob=0.0, value=value, dt=dt, reward=reward,
                        forced=forced)


def test_buffer_computes_per_agent_chains():
    buffer = RolloutBuffer()
    entries = [
        _entry(0, 0, 0, 1.0, 0.5, 2),
        _entry(0, 1, 0, 0.0, 0.5, 2, forced=True),
        _entry(0, 0, 2, 2.0, 0.3, 1),
        _entry(0, 1, 2, 1.0, 0.3, 1),
        _entry(1, 0, 0, 0.5, 0.1, 3),
    ]
    buffer.extend(entries)
    assert sorted(buffer.chains()) == [(0, 0), (0, 1), (1, 0)]
    buffer.compute_advantages(0.9, 0.8, normalize=False)
    expected, _ = compute_modified_gae([1.0, 2.0], [0.5, 0.3], [2, 1], 0.9, 0.8)
    assert [entries[0].advantage, entries[2].advantage] == pytest.approx(expected.tolist())
    assert entries[4].ret == pytest.approx(0.5)
    assert buffer.total_reward() == pytest.approx(4.5)


def test_buffer_normalizes_only_actor_entries():
    buffer = RolloutBuffer()
    buffer.extend([_entry(0, 0, i, float(i), 0.0, 1) for i in range(4)]
                  + [_entry(0, 1, 0, 9.0, 0.0, 1, forced=True)])
    buffer.compute_advantages(0.99, 0.95)
    actor = np.array([e.advantage for e in buffer.actor_entries()])
    assert len(actor) == 4
    assert abs(actor.mean()) < 1e-9
    assert actor.std() == pytest.approx(1.0, abs=1e-6)


def test_empty_buffer_is_rejected():
    with pytest.raises(ValueError):
        RolloutBuffer().compute_advantages(0.99, 0.95)
