import numpy as np
import pytest

from autodiff import ops
from autodiff.gradcheck import grad_check, grad_check_detailed, grad_check_named
from autodiff.tensor import Tape, Tensor, backward
from domain.errors import ArgumentError, DegenerateVectorError, DimensionError, NumericError
from relibev.selftest import primitive_cases


def triple_loop_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def wrong_square(x):
    """x**2 whose recorded gradient forgets the factor 2."""
    if x.tape is None:
        return Tensor(x.values**2)
    return x.tape.record(x.values**2, (x.grad_id,), lambda g: (g * x.values,))


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n, k, m = (int(v) for v in rng.integers(1, 6, size=3))
        a, b = rng.normal(size=(n, k)), rng.normal(size=(k, m))
        np.testing.assert_allclose(ops.matmul(a, b).values, triple_loop_matmul(a, b), atol=1e-12)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError) as err:
        ops.matmul(np.ones((2, 3)), np.ones((4, 2)))
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


def test_broadcast_mismatch_raises():
    with pytest.raises(DimensionError):
        ops.add(np.ones((2, 3)), np.ones(4))


def test_shared_leaf_accumulates_gradient():
    tape = Tape()
    x = tape.leaf(np.array([1.0, 2.0, -3.0]))
    grads = backward(tape, ops.sum(ops.mul(x, x)))
    np.testing.assert_allclose(grads[x.grad_id], 2.0 * x.values)


def test_unused_leaf_gets_zero_gradient():
    tape = Tape()
    x = tape.leaf(np.ones(2))
    z = tape.leaf(np.ones(3))
    grads = backward(tape, ops.sum(x))
    assert np.array_equal(grads[z.grad_id], np.zeros(3))


def test_backward_needs_scalar_root_on_same_tape():
    tape, other = Tape(), Tape()
    x = tape.leaf(np.ones(3))
    with pytest.raises(ArgumentError):
        backward(tape, ops.mul(x, 2.0))
    y = other.leaf(np.ones(1))
    with pytest.raises(ArgumentError):
        backward(tape, ops.sum(y))


def test_mixing_tapes_is_rejected():
    a, b = Tape().leaf(np.ones(2)), Tape().leaf(np.ones(2))
    with pytest.raises(ArgumentError):
        ops.add(a, b)


def test_constant_inputs_give_constant_results():
    out = ops.softmax_rows(np.array([[1.0, 2.0]]))
    assert out.is_constant


def test_non_finite_values_raise():
    with pytest.raises(NumericError):
        ops.log(np.array([0.0, 1.0]))
    with pytest.raises(NumericError):
        ops.exp(np.array([1000.0]))
    with pytest.raises(NumericError):
        Tensor(np.array([np.nan]))


def test_l2_normalize_of_zero_vector_is_degenerate():
    with pytest.raises(DegenerateVectorError):
        ops.l2_normalize(np.zeros(4))
    with pytest.raises(DegenerateVectorError):
        ops.cosine_sim(np.zeros(3), np.ones(3))


def test_cosine_sim_stays_in_range():
    rng = np.random.default_rng(3)
    for _ in range(100):
        u = rng.normal(size=6)
        assert -1.0 <= ops.cosine_sim(u, u * 3.0).item() <= 1.0


def test_sigmoid_stays_inside_open_interval():
    out = ops.sigmoid(np.array([-1000.0, 0.0, 1000.0])).values
    assert 0.0 < out[0] and out[2] < 1.0
    assert out[1] == 0.5


def test_gelu_closed_form_and_range():
    assert ops.gelu(np.array(1.0)).item() == pytest.approx(0.841345, abs=1e-6)
    assert ops.gelu(np.array(0.0)).item() == 0.0
    x = np.linspace(-8.0, 8.0, 1601)
    out = ops.gelu(x).values
    assert np.all(out <= np.maximum(0.0, x))
    assert np.all(out > np.minimum(0.0, x) - 0.2)


def test_sigmoid_of_log_three_is_three_quarters():
    assert ops.sigmoid(np.array(np.log(3.0))).item() == pytest.approx(0.75, abs=1e-15)


def test_softmax_is_stable_for_large_logits():
    out = ops.softmax_rows(np.array([[1000.0, 1000.0], [-1000.0, 0.0]])).values
    np.testing.assert_allclose(out[0], [0.5, 0.5])
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


def test_layer_norm_of_constant_row_returns_bias():
    bias = np.array([0.1, -0.2, 0.3, 0.0])
    out = ops.layer_norm(np.full((2, 4), 3.0), np.ones(4), bias).values
    np.testing.assert_allclose(out, np.tile(bias, (2, 1)))


def test_layer_norm_needs_two_features():
    with pytest.raises(ArgumentError):
        ops.layer_norm(np.ones((3, 1)), np.ones(1), np.zeros(1))


def test_mlp_forward_activates_between_layers_only():
    rng = np.random.default_rng(2)
    w1, b1 = rng.normal(size=(3, 4)), rng.normal(size=4)
    w2, b2 = rng.normal(size=(4, 2)), rng.normal(size=2)
    x = rng.normal(size=(5, 3))

    def relu(t):
        return ops.mul(t, (t.values > 0).astype(float))

    out = ops.mlp_forward(x, [(w1, b1), (w2, b2)], activation=relu).values
    np.testing.assert_allclose(out, np.maximum(x @ w1 + b1, 0.0) @ w2 + b2, atol=1e-12)
    single = ops.mlp_forward(x[0], [(w1, b1)]).values
    np.testing.assert_allclose(single, x[0] @ w1 + b1, atol=1e-12)
    with pytest.raises(DimensionError):
        ops.mlp_forward(x, [(w2, b2)])


def test_take_with_repeated_indices_accumulates():
    tape = Tape()
    x = tape.leaf(np.arange(4.0))
    grads = backward(tape, ops.sum(ops.take(x, np.array([1, 1, 3]))))
    np.testing.assert_array_equal(grads[x.grad_id], [0.0, 2.0, 0.0, 1.0])


@pytest.mark.parametrize("case", primitive_cases(), ids=lambda c: c.name)
def test_primitive_gradients_match_finite_differences(case):
    result = grad_check_detailed(case.fn, case.point, step=case.step, sample=case.sample)
    assert result.max_rel_error < case.tol
    assert result.entries_checked > 0


def test_grad_check_flags_a_wrong_vjp():
    error = grad_check(lambda x: ops.sum(wrong_square(x)), [np.array([1.0, -2.0, 0.5])])
    assert error == pytest.approx(0.5)


def test_grad_check_named_reports_each_name():
    point = {"a": np.array([0.3, -0.7]), "b": np.array([1.2, 0.4])}
    errors = grad_check_named(lambda p: ops.sum(ops.mul(ops.exp(p["a"]), p["b"])), point)
    assert set(errors) == {"a", "b"}
    assert max(errors.values()) < 1e-4


def test_grad_check_sampling_limits_entries():
    result = grad_check_detailed(lambda x: ops.sum(ops.gelu(x)), [np.zeros((5, 5))], sample=3)
    assert result.entries_checked == 3
