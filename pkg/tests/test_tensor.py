import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from symbreak.nn import tensor as T
from symbreak.nn.tensor import Tensor


def finite_diff(fn, arrays_in, index, coord, eps=1e-6):
    flat = arrays_in[index].ravel()
    orig = flat[coord]
    flat[coord] = orig + eps
    up = fn()
    flat[coord] = orig - eps
    down = fn()
    flat[coord] = orig
    return (up - down) / (2 * eps)


def check_grads(build, *shapes, seed=0, atol=1e-6):
    """Compare reverse-mode grads of sum(build(tensors)) to central differences."""
    rng = np.random.default_rng(seed)
    datas = [rng.standard_normal(s) for s in shapes]
    tensors = [Tensor(d.copy(), requires_grad=True) for d in datas]

    out = build(*tensors)
    loss = T.sum_(out)
    loss.backward()

    def value():
        fresh = [Tensor(t.data) for t in tensors]
        return float(T.sum_(build(*fresh)).data)

    for i, t in enumerate(tensors):
        flat_data = t.data.ravel()
        picks = range(flat_data.size) if flat_data.size <= 6 else \
            np.random.default_rng(seed + i).choice(flat_data.size, 6, replace=False)
        for coord in picks:
            fd = finite_diff(value, [t.data for t in tensors], i, coord)
            ad = t.grad.ravel()[coord]
            assert ad == pytest.approx(fd, abs=atol, rel=1e-4), (i, coord)


class TestBasicOps:
    def test_sum_grad_is_ones(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        T.sum_(x).backward()
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_product_grads_swap(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        y = Tensor(np.array(4.0), requires_grad=True)
        (x * y).backward()
        assert float(x.grad) == 4.0 and float(y.grad) == 3.0

    def test_backward_twice_errors(self):
        x = Tensor(np.ones(3), requires_grad=True)
        s = T.sum_(x)
        s.backward()
        with pytest.raises(RuntimeError, match="re-run forward"):
            s.backward()

    def test_no_grad_blocks_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with T.no_grad():
            out = x * 2.0
        assert not out.requires_grad

    def test_shared_node_accumulates(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        ((x * x) + x).backward()
        assert float(x.grad) == 5.0  # 2x + 1

    def test_add_broadcast(self):
        check_grads(lambda a, b: a + b, (2, 3, 4), (3, 4))
        check_grads(lambda a, b: a + b, (2, 1, 4), (2, 3, 1))

    def test_mul_div_pow(self):
        check_grads(lambda a, b: a * b, (3, 2), (3, 2))
        check_grads(lambda a, b: a / (b * b + 2.0), (4,), (4,))
        check_grads(lambda a: (a * a + 1.0) ** 0.5, (5,))

    def test_matmul_batched(self):
        check_grads(lambda a, b: a @ b, (3, 4), (4, 2))
        check_grads(lambda a, b: a @ b, (2, 3, 4), (4, 2))
        check_grads(lambda a, b: a @ b, (2, 2, 3, 4), (2, 2, 4, 2))

    def test_nonlinearities(self):
        check_grads(lambda a: T.relu(a) + T.leaky_relu(a * 2.0, 0.1), (7,), seed=3)
        check_grads(lambda a: T.exp(a), (5,))
        check_grads(lambda a: T.log(a * a + 1.5), (5,))
        check_grads(lambda a: T.softplus(a * 3.0), (6,))
        check_grads(lambda a: T.absolute(a + 0.37), (6,))

    def test_clip_upper(self):
        check_grads(lambda a: T.clip_upper(a * a, 0.8), (9,), seed=5)

    def test_reductions_and_shapes(self):
        check_grads(lambda a: T.sum_(a, axis=1, keepdims=True) * 2.0, (3, 4))
        check_grads(lambda a: T.mean(a, axis=0), (3, 4))
        check_grads(lambda a: T.reshape(a, (6, 2)), (3, 4))
        check_grads(lambda a: T.transpose(a, (1, 0, 2)), (2, 3, 4))

    def test_take_rows(self):
        idx = np.array([[0, 2], [2, 1]])
        check_grads(lambda t: T.take_rows(t, idx), (3, 4))

    def test_einsum2(self):
        check_grads(lambda a, b: T.einsum2("bij,jd->bid", a, b), (2, 3, 3), (3, 4))
        check_grads(lambda a, b: T.einsum2("bijh,bjhd->bihd", a, b), (2, 3, 3, 2), (2, 3, 2, 4))
        with pytest.raises(ValueError, match="marginalised"):
            T.einsum2("ij,jk->k", Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))))

    def test_softmax(self):
        check_grads(lambda a: T.softmax(a * 3.0, axis=-1), (3, 5), seed=2)
        x = Tensor(np.array([[1000.0, 1000.0]]))
        out = T.softmax(x, axis=-1)
        assert np.allclose(out.data, 0.5)  # stable under large inputs

    def test_linear(self):
        check_grads(lambda x, w, b: T.linear(x, w, b), (5, 3), (3, 2), (2,))

    def test_layer_norm(self):
        check_grads(
            lambda x, g, b: T.layer_norm(x, g, b), (4, 6), (6,), (6,), atol=1e-5
        )

    def test_gat_pair_scores(self):
        B, n, da, H = 2, 3, 4, 2
        check_grads(
            lambda s, d, e, b, a: T.gat_pair_scores(s, d, e, b, a, B, n, 0.2),
            (B * n, da),
            (B * n, da),
            (n * n, da),
            (da,),
            (da, H),
            seed=7,
        )


@given(
    arrays(np.float64, (3, 4), elements=st.floats(-10, 10)),
    arrays(np.float64, (4,), elements=st.floats(-10, 10)),
)
@settings(max_examples=50, deadline=None)
def test_add_matches_numpy(a, b):
    out = Tensor(a) + Tensor(b)
    assert np.array_equal(out.data, a + b)


@given(arrays(np.float64, (2, 5), elements=st.floats(-30, 30)))
@settings(max_examples=50, deadline=None)
def test_softmax_rows_normalize(a):
    out = T.softmax(Tensor(a), axis=-1)
    assert np.allclose(out.data.sum(axis=-1), 1.0)
    assert np.all(out.data >= 0)
