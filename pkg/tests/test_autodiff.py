import numpy as np
import pytest

from src.learning import autodiff as ad
from src.learning.autodiff import (
    Adam,
    AutodiffError,
    ComputationRecord,
    ShapeError,
    adam_step,
    backward,
    clip_grad_norm,
    constant,
    parameter,
)


def numeric_gradient(fn, param, h=1e-6):
    """Diferencias centrales de fn() (escalar) respecto a cada entrada de param."""
    grad = np.zeros(param.shape)
    flat = param.value.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = fn().item()
        flat[i] = original - h
        minus = fn().item()
        flat[i] = original
        grad.reshape(-1)[i] = (plus - minus) / (2 * h)
    return grad


def check_gradient(build, params, rtol=1e-5, atol=1e-7):
    for p in params:
        p.grad = None
    with ComputationRecord():
        loss = build()
    backward(loss)
    for p in params:
        expected = numeric_gradient(build, p)
        assert p.grad is not None, p.name
        np.testing.assert_allclose(p.grad, expected, rtol=rtol, atol=atol, err_msg=p.name)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_add_mul_broadcast_gradients(rng):
    a = parameter(rng.normal(size=(3, 4)), "a")
    b = parameter(rng.normal(size=(1, 4)), "b")
    check_gradient(lambda: ad.sum_all(ad.mul(ad.add(a, b), a) - b * 3.0), [a, b])


def test_matmul_and_relu_gradients(rng):
    x = parameter(rng.normal(size=(5, 3)), "x")
    w = parameter(rng.normal(size=(3, 2)), "w")
    check_gradient(lambda: ad.sum_all(ad.relu(x @ w + 0.1)), [x, w])


def test_exp_minimum_clip_gradients(rng):
    a = parameter(rng.uniform(0.5, 1.5, size=(6,)), "a")
    b = parameter(rng.uniform(0.5, 1.5, size=(6,)), "b")
    check_gradient(lambda: ad.mean_all(ad.minimum(ad.exp(a) * b, ad.clip(a, 0.8, 1.2) * b)), [a, b])


def test_concat_reshape_gradients(rng):
    a = parameter(rng.normal(size=(2, 3)), "a")
    b = parameter(rng.normal(size=(2, 2)), "b")
    check_gradient(lambda: ad.sum_all(ad.reshape(ad.concat([a, b], axis=1), (5, 2)) * ad.reshape(ad.concat([b, a], axis=1), (5, 2))),
                   [a, b])


def test_row_reductions_and_normalization(rng):
    x = parameter(rng.normal(size=(4, 3)), "x")
    weights = constant(rng.normal(size=(4, 3)))
    check_gradient(lambda: ad.sum_all(ad.l2_normalize_rows(x) * weights), [x])
    check_gradient(lambda: ad.sum_all(ad.sum_rows(x) * ad.mean_rows(x)), [x])


def test_gather_and_segment_mean_gradients(rng):
    x = parameter(rng.normal(size=(4, 2)), "x")
    weights = constant(rng.normal(size=(3, 2)))
    src = [0, 1, 1, 3, 2]
    dst = [1, 0, 2, 2, 2]
    check_gradient(lambda: ad.sum_all(ad.segment_mean(ad.gather_rows(x, src), dst, 3) * weights), [x])


def test_masked_log_softmax_gradients(rng):
    logits = parameter(rng.normal(size=(3, 4)), "logits")
    mask = np.array([[True, True, False, False], [True, True, True, True], [False, True, False, False]])
    actions = [1, 3, 1]
    check_gradient(lambda: ad.sum_all(ad.take_along_rows(ad.masked_log_softmax(logits, mask), actions)), [logits])
    check_gradient(lambda: ad.sum_all(ad.masked_entropy(ad.masked_log_softmax(logits, mask), mask)), [logits])


def test_masked_entries_have_zero_probability_and_gradient():
    logits = parameter(np.array([[0.3, 1.2, -0.5]]), "logits")
    mask = np.array([[True, False, True]])
    with ComputationRecord():
        logp = ad.masked_log_softmax(logits, mask)
        loss = ad.sum_all(ad.masked_entropy(logp, mask))
    assert logp.value[0, 1] == -np.inf
    assert np.exp(logp.value[0, [0, 2]]).sum() == pytest.approx(1.0)
    backward(loss)
    assert logits.grad[0, 1] == 0.0


def test_fully_masked_row_is_rejected():
    with pytest.raises(ValueError):
        ad.masked_log_softmax(constant(np.zeros((2, 3))), np.array([[True, False, False], [False] * 3]))


def test_sum_of_two_values_has_unit_gradients():
    a = parameter(2.0, "a")
    b = parameter(3.0, "b")
    with ComputationRecord():
        y = a + b
    backward(y)
    assert y.item() == 5.0
    assert float(a.grad) == 1.0
    assert float(b.grad) == 1.0


def test_product_of_two_values():
    a = parameter(2.0, "a")
    b = parameter(3.0, "b")
    with ComputationRecord():
        y = a * b
    backward(y)
    assert float(a.grad) == 3.0
    assert float(b.grad) == 2.0


def test_gradient_is_linear_in_the_loss(rng):
    x = parameter(rng.normal(size=(3, 3)), "x")
    w = constant(rng.normal(size=(3, 3)))
    with ComputationRecord():
        base = ad.sum_all(ad.relu(x @ w))
    backward(base)
    single = x.grad.copy()
    x.grad = None
    with ComputationRecord():
        doubled = ad.sum_all(ad.relu(x @ w)) * 2.0 + ad.sum_all(ad.relu(x @ w)) * 0.5
    backward(doubled)
    np.testing.assert_allclose(x.grad, 2.5 * single)


def test_gradients_accumulate_until_zeroed():
    a = parameter(np.ones(2), "a")
    for _ in range(2):
        with ComputationRecord():
            loss = ad.sum_all(a * 3.0)
        backward(loss)
    np.testing.assert_array_equal(a.grad, [6.0, 6.0])
    ad.zero_grad([a])
    assert a.grad is None


def test_operations_outside_a_record_are_not_differentiable():
    a = parameter(np.ones(2))
    loss = ad.sum_all(a)
    assert loss.item() == 2.0
    with pytest.raises(AutodiffError):
        backward(loss)


def test_backward_requires_a_scalar():
    a = parameter(np.ones(3))
    with ComputationRecord():
        y = a * 2.0
    with pytest.raises(AutodiffError):
        backward(y)


@pytest.mark.parametrize("build", [
    lambda: ad.matmul(constant(np.ones((2, 3))), constant(np.ones((2, 3)))),
    lambda: ad.add(constant(np.ones((2, 3))), constant(np.ones((4,)))),
    lambda: ad.gather_rows(constant(np.ones((2, 3))), [0, 5]),
    lambda: ad.take_along_rows(constant(np.ones((2, 3))), [0]),
])
def test_shape_mismatch_raises(build):
    with pytest.raises(ShapeError):
        build()


def test_zero_rows_normalize_to_zero():
    x = parameter(np.array([[0.0, 0.0], [3.0, 4.0]]))
    with ComputationRecord():
        y = ad.l2_normalize_rows(x)
        loss = ad.sum_all(y)
    np.testing.assert_allclose(y.value, [[0.0, 0.0], [0.6, 0.8]])
    backward(loss)
    assert np.all(np.isfinite(x.grad))


def test_adam_first_step_moves_by_learning_rate():
    p = parameter(np.array([1.0, -2.0]))
    m, v = np.zeros(2), np.zeros(2)
    adam_step(p, np.array([0.5, -3.0]), m, v, t=1, lr=0.1)
    np.testing.assert_allclose(p.value, [0.9, -1.9], atol=1e-6)


def test_adam_zero_gradient_leaves_parameter_unchanged():
    p = parameter(np.array([1.0, 2.0]))
    optimizer = Adam([p], lr=0.1)
    optimizer.step()
    np.testing.assert_array_equal(p.value, [1.0, 2.0])


def test_adam_is_deterministic():
    def trajectory():
        p = parameter(np.array([0.5, -0.5]))
        optimizer = Adam([p], lr=0.05)
        values = []
        for _ in range(5):
            optimizer.zero_grad()
            with ComputationRecord():
                loss = ad.sum_all(p * p)
            backward(loss)
            optimizer.step()
            values.append(p.value.copy())
        return values

    for a, b in zip(trajectory(), trajectory()):
        np.testing.assert_array_equal(a, b)


def test_adam_minimizes_a_quadratic():
    p = parameter(np.array([3.0]))
    optimizer = Adam([p], lr=0.1)
    for _ in range(300):
        optimizer.zero_grad()
        with ComputationRecord():
            loss = ad.sum_all((p - 1.0) * (p - 1.0))
        backward(loss)
        optimizer.step()
    assert p.value[0] == pytest.approx(1.0, abs=0.05)


def test_clip_grad_norm_rescales():
    a = parameter(np.zeros(2))
    a.grad = np.array([3.0, 4.0])
    norm = clip_grad_norm([a], 1.0)
    assert norm == pytest.approx(5.0)
    np.testing.assert_allclose(a.grad, [0.6, 0.8])
