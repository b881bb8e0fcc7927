import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hedgegad import autodiff as ad
from hedgegad.autodiff import ShapeError, Tape, Tensor, backward, gumbel_from_uniform, gumbel_noise
from hedgegad.gradcheck import PRIMITIVE_TOL, primitive_cases


def grads_of(fn, *params):
    for p in params:
        p.requires_grad = True
        p.grad = None
    with Tape() as tape:
        loss = fn()
    backward(tape, loss, params)
    return loss, [p.grad for p in params]


def test_matmul_identity_passes_gradient():
    A = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    I = Tensor(np.eye(3))
    W = np.random.default_rng(0).standard_normal((3, 4))
    with Tape() as tape:
        out = ad.matmul(I, A)
        loss = ad.masked_sum(out, W)
    np.testing.assert_array_equal(out.data, A.data)
    backward(tape, loss)
    np.testing.assert_allclose(A.grad, W)


def test_softmax_of_zeros_is_uniform():
    np.testing.assert_array_equal(ad.softmax_rows(Tensor(np.zeros((1, 2)))).data, [[0.5, 0.5]])


def test_square_derivative_at_three():
    x = Tensor([[3.0]])
    _, (g,) = grads_of(lambda: ad.total(ad.square(x)), x)
    assert g[0, 0] == 6.0
    fd = ad.numeric_grad(lambda: ad.total(ad.square(x)).item(), x, 1e-5)
    assert abs(fd[0, 0] - 6.0) < 1e-8


def test_sum_of_product_gradient():
    W = Tensor(np.ones((2, 2)))
    x = Tensor(np.ones((2, 1)))
    _, (gW,) = grads_of(lambda: ad.total(ad.matmul(W, x)), W)
    np.testing.assert_array_equal(gW, np.ones((2, 2)))


def test_unused_parameter_gets_zero_gradient():
    x = Tensor(np.ones((2, 2)))
    unused = Tensor(np.ones((3, 3)))
    _, (gx, gu) = grads_of(lambda: ad.total(ad.scale(x, 2.0)), x, unused)
    np.testing.assert_array_equal(gu, np.zeros((3, 3)))
    np.testing.assert_array_equal(gx, 2 * np.ones((2, 2)))


def test_gradient_accumulates_across_uses():
    x = Tensor(np.array([[1.0, 2.0]]))
    _, (g,) = grads_of(lambda: ad.total(ad.add(ad.mul(x, x), ad.scale(x, 3.0))), x)
    np.testing.assert_allclose(g, 2 * x.data + 3)


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        y = ad.scale(x, 2.0)
    with pytest.raises(ShapeError):
        backward(tape, y)


def test_shape_errors():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 2, 2)))


def test_no_recording_outside_tape():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = ad.scale(x, 2.0)
    assert not y.requires_grad


@pytest.mark.parametrize("name", sorted(primitive_cases(np.random.default_rng(0))))
def test_primitive_gradcheck(name):
    for seed in range(3):
        fn, params = primitive_cases(np.random.default_rng(seed))[name]
        assert ad.gradcheck(fn, params, 1e-5) < PRIMITIVE_TOL


def test_straight_through_forward_hard_backward_soft():
    soft = Tensor(np.array([[0.2, 0.7]]), requires_grad=True)
    with Tape() as tape:
        out = ad.straight_through(np.array([[0.0, 1.0]]), soft)
        loss = ad.masked_sum(out, np.array([[3.0, -2.0]]))
    np.testing.assert_array_equal(out.data, [[0.0, 1.0]])
    backward(tape, loss)
    np.testing.assert_array_equal(soft.grad, [[3.0, -2.0]])


def test_safe_rsqrt_zero_entries():
    x = Tensor(np.array([[0.0, 4.0]]))
    _, (g,) = grads_of(lambda: ad.total(ad.safe_rsqrt(x)), x)
    np.testing.assert_allclose(ad.safe_rsqrt(x).data, [[0.0, 0.5]])
    np.testing.assert_allclose(g, [[0.0, -0.5 * 4.0 ** -1.5]])


def test_layer_norm_rows_statistics():
    x = Tensor(np.random.default_rng(2).standard_normal((5, 7)) * 3 + 1)
    y = ad.layer_norm_rows(x).data
    np.testing.assert_allclose(y.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=1), 1, atol=1e-4)


def test_gumbel_inverse_e_gives_zero():
    assert gumbel_from_uniform(np.exp(-1.0)) == pytest.approx(0.0, abs=1e-15)


def test_gumbel_clamps_extremes():
    g = gumbel_from_uniform(np.array([0.0, 1.0]))
    assert np.all(np.isfinite(g))


def test_gumbel_mean_is_euler_gamma():
    g = gumbel_noise((1000, 1000), 0).data
    se = g.std() / np.sqrt(g.size)
    assert abs(g.mean() - np.euler_gamma) < 3 * se


def test_gumbel_determinism():
    np.testing.assert_array_equal(gumbel_noise((4, 5), 9).data, gumbel_noise((4, 5), 9).data)


def test_tape_replay_bitwise():
    rng = np.random.default_rng(3)
    x, W = Tensor(rng.standard_normal((6, 4))), Tensor(rng.standard_normal((4, 3)))

    def f():
        return ad.total(ad.square(ad.softmax_rows(ad.matmul(x, W))))

    a, ga = grads_of(f, W)
    ga = ga[0].copy()
    b, gb = grads_of(f, W)
    assert a.item() == b.item()
    assert np.array_equal(ga, gb[0])


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_softmax_rows_sum_to_one(r, c, seed):
    x = np.random.default_rng(seed).standard_normal((r, c)) * 30
    s = ad.softmax_rows(Tensor(x)).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
