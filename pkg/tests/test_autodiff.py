import numpy as np
import pytest

from placelab.model.autodiff import Tensor, as_tensor, concat, no_grad


def finite_difference(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function of one array."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        g[i] = (hi - lo) / (2 * eps)
    return grad


def check_unary(op_name, data, builder=None, tol=1e-7):
    x = Tensor(data.copy(), requires_grad=True)
    build = builder or (lambda t: getattr(t, op_name)())
    out = build(x)
    loss = (out * out).sum()
    loss.backward()

    def scalar(arr):
        t = build(Tensor(arr))
        return float((t * t).sum().data)

    fd = finite_difference(scalar, data.copy())
    assert np.max(np.abs(fd - x.grad)) < tol, op_name


class TestElementwise:
    def test_add_mul_sub_div_grads(self):
        rng = np.random.default_rng(0)
        a_data = rng.normal(size=(4, 3))
        b_data = rng.normal(size=(4, 3)) + 3.0

        def loss_of(a_arr):
            a = Tensor(a_arr)
            b = Tensor(b_data)
            out = (a * b - a / b + 2.0 * a + b).sum()
            return float(out.data)

        a = Tensor(a_data.copy(), requires_grad=True)
        b = Tensor(b_data, requires_grad=True)
        ((a * b - a / b + 2.0 * a + b).sum()).backward()
        fd = finite_difference(loss_of, a_data.copy())
        assert np.max(np.abs(fd - a.grad)) < 1e-7

    def test_broadcast_gradients(self):
        rng = np.random.default_rng(1)
        a_data = rng.normal(size=(5, 4))
        b_data = rng.normal(size=(4,))

        a = Tensor(a_data, requires_grad=True)
        b = Tensor(b_data.copy(), requires_grad=True)
        ((a * b).sum()).backward()
        assert b.grad.shape == (4,)
        assert np.allclose(b.grad, a_data.sum(axis=0))

    def test_relu_exp_sqrt_abs_arccos(self):
        rng = np.random.default_rng(2)
        check_unary("relu", rng.normal(size=(6,)) + 0.05)
        check_unary("exp", rng.normal(size=(6,)) * 0.3)
        check_unary("sqrt", rng.random(6) + 0.5)
        check_unary("abs", rng.normal(size=(6,)) + 0.05)
        check_unary("arccos", rng.uniform(-0.8, 0.8, size=6))

    def test_clip_gradient_mask(self):
        x = Tensor(np.array([-2.0, 0.0, 2.0]), requires_grad=True)
        x.clip(-1.0, 1.0).sum().backward()
        assert np.allclose(x.grad, [0.0, 1.0, 0.0])


class TestMatmul:
    def test_plain(self):
        rng = np.random.default_rng(3)
        a_data = rng.normal(size=(3, 4))
        b_data = rng.normal(size=(4, 2))

        a = Tensor(a_data.copy(), requires_grad=True)
        b = Tensor(b_data, requires_grad=True)
        ((a @ b) * (a @ b)).sum().backward()

        def loss_of(arr):
            out = Tensor(arr) @ Tensor(b_data)
            return float(((out * out).sum()).data)

        fd = finite_difference(loss_of, a_data.copy())
        assert np.max(np.abs(fd - a.grad)) < 1e-6

    def test_batched_with_broadcast(self):
        rng = np.random.default_rng(4)
        a_data = rng.normal(size=(2, 5, 3))
        w_data = rng.normal(size=(3, 4))

        a = Tensor(a_data, requires_grad=True)
        w = Tensor(w_data.copy(), requires_grad=True)
        ((a @ w).sum()).backward()
        assert w.grad.shape == (3, 4)

        def loss_of(arr):
            return float(((Tensor(a_data) @ Tensor(arr)).sum()).data)

        fd = finite_difference(loss_of, w_data.copy())
        assert np.max(np.abs(fd - w.grad)) < 1e-6


class TestReductionsAndShapes:
    def test_sum_mean_axes(self):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(3, 4, 2))
        x = Tensor(data, requires_grad=True)
        (x.sum(axis=1).mean()).backward()
        assert np.allclose(x.grad, np.full_like(data, 1.0 / 6.0))

    def test_amin_routes_to_argmin(self):
        x = Tensor(np.array([[3.0, 1.0, 2.0], [0.5, 4.0, 0.5]]),
                   requires_grad=True)
        out = x.amin(axis=1)
        assert np.allclose(out.data, [1.0, 0.5])
        out.sum().backward()
        # Ties go to the first argmin.
        assert np.allclose(x.grad, [[0, 1, 0], [1, 0, 0]])

    def test_softmax_rows(self):
        rng = np.random.default_rng(6)
        data = rng.normal(size=(3, 5)) * 3.0
        x = Tensor(data.copy(), requires_grad=True)
        s = x.softmax(axis=-1)
        assert np.allclose(s.data.sum(axis=-1), 1.0)
        (s[:, 0].sum()).backward()

        def loss_of(arr):
            return float(Tensor(arr).softmax(axis=-1)[:, 0].sum().data)

        fd = finite_difference(loss_of, data.copy())
        assert np.max(np.abs(fd - x.grad)) < 1e-7

    def test_getitem_concat_reshape_swapaxes(self):
        rng = np.random.default_rng(7)
        data = rng.normal(size=(4, 6))
        x = Tensor(data.copy(), requires_grad=True)
        y = concat([x[:, 0:2], x[:, 2:6]], axis=1)
        z = y.reshape(4, 3, 2).swapaxes(0, 1)
        (z * z).sum().backward()
        assert np.max(np.abs(x.grad - 2.0 * data)) < 1e-12

    def test_repeated_use_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        (x * x + x * 3.0).sum().backward()
        assert x.grad[0] == pytest.approx(2 * 2.0 + 3.0)


class TestGraphControl:
    def test_no_grad_blocks_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            y = (x * 2.0).sum()
        assert y._parents == ()

    def test_detach(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = (x.detach() * 2.0).sum()
        assert not y._parents or all(
            not p.requires_grad for p in y._parents)

    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (x * 2.0).backward()

    def test_as_tensor_passthrough(self):
        x = Tensor(np.ones(2))
        assert as_tensor(x) is x
        assert isinstance(as_tensor(1.5), Tensor)
