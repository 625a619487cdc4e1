import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from revmatch import autodiff as ad
from revmatch.autodiff import ShapeError, Tensor

from oracles import gelu_scalar, layer_norm_vec, naive_matmul, softmax_list

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


# -- matmul -----------------------------------------------------------------

def test_matmul_identity():
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ad.matmul(Tensor(np.eye(2)), b).data, b.data)


def test_matmul_zero():
    out = ad.matmul(Tensor(np.zeros((2, 2))), Tensor(np.random.default_rng(0).normal(size=(2, 2))))
    assert np.array_equal(out.data, np.zeros((2, 2)))


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    np.testing.assert_allclose(ad.matmul(Tensor(a), Tensor(b)).data, naive_matmul(a, b),
                               rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_batched_matmul_gradient():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 5))
    ta, tb = Tensor(a, requires_grad=True, name="a"), Tensor(b, requires_grad=True, name="b")
    g = ad.backward(ad.tsum(ad.matmul(ta, tb) * ad.matmul(ta, tb)), [ta, tb])
    np.testing.assert_allclose(g["a"], numeric_grad(lambda x: float(((x @ b) ** 2).sum()), a.copy()),
                               rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(g["b"], numeric_grad(lambda x: float(((a @ x) ** 2).sum()), b.copy()),
                               rtol=1e-6, atol=1e-6)


# -- softmax ----------------------------------------------------------------

def test_softmax_uniform_row():
    np.testing.assert_allclose(ad.softmax_rows(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3])


def test_softmax_single_column():
    assert ad.softmax_rows(Tensor([[7.5]])).data[0, 0] == 1.0


def test_softmax_direct_formula():
    np.testing.assert_allclose(ad.softmax_rows(Tensor([[1.0, 2.0, 3.0]])).data[0],
                               softmax_list([1.0, 2.0, 3.0]), rtol=0, atol=1e-12)


def test_softmax_masked_keys_get_exact_zero():
    out = ad.softmax_rows(Tensor([[1.0, 2.0, 3.0]]), np.array([[0.0, ad.MASK_VALUE, 0.0]]))
    assert out.data[0, 1] == 0.0
    np.testing.assert_allclose(out.data[0, [0, 2]], softmax_list([1.0, 3.0]), atol=1e-15)


def test_softmax_rejects_empty_rows():
    with pytest.raises(ShapeError):
        ad.softmax_rows(Tensor(np.zeros((2, 0))))


@given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)))
def test_softmax_rows_sum_to_one_and_shift_invariant(m):
    y = ad.softmax_rows(Tensor(m)).data
    np.testing.assert_allclose(y.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(y >= 0)
    np.testing.assert_allclose(ad.softmax_rows(Tensor(m + 3.0)).data, y, atol=1e-12)


# -- layer norm -------------------------------------------------------------

def test_layer_norm_constant_row_is_zero():
    out = ad.layer_norm(Tensor([[2.0, 2.0, 2.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
    assert np.array_equal(out.data, np.zeros((1, 3)))


def test_layer_norm_constant_row_gives_beta():
    beta = np.array([0.5, -1.0, 2.0])
    out = ad.layer_norm(Tensor([[4.0, 4.0, 4.0]]), Tensor([3.0, -2.0, 7.0]), Tensor(beta))
    np.testing.assert_array_equal(out.data[0], beta)


def test_layer_norm_direct_formula():
    x = [1.0, 2.0, 3.0, 4.0]
    out = ad.layer_norm(Tensor([x]), Tensor(np.ones(4)), Tensor(np.zeros(4)), eps=1e-5)
    np.testing.assert_allclose(out.data[0], layer_norm_vec(x, [1] * 4, [0] * 4, 1e-5),
                               rtol=0, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 4), elements=finite))
def test_layer_norm_gradient(x):
    rng = np.random.default_rng(0)
    gamma, beta, w = rng.normal(size=4), rng.normal(size=4), rng.normal(size=(2, 4))
    tx = Tensor(x.copy(), requires_grad=True, name="x")
    tg = Tensor(gamma, requires_grad=True, name="g")
    g = ad.backward(ad.tsum(ad.layer_norm(tx, tg, Tensor(beta)) * Tensor(w)), [tx, tg])

    def f_x(v):
        return float((ad.layer_norm(Tensor(v), Tensor(gamma), Tensor(beta)).data * w).sum())

    np.testing.assert_allclose(g["x"], numeric_grad(f_x, x.copy()), rtol=1e-4, atol=1e-5)


# -- gelu -------------------------------------------------------------------

def test_gelu_values():
    assert ad.gelu(Tensor(0.0)).item() == 0.0
    assert abs(ad.gelu(Tensor(10.0)).item() - 10.0) < 1e-6
    assert abs(ad.gelu(Tensor(1.0)).item() - gelu_scalar(1.0)) < 1e-9


@given(finite)
def test_gelu_gradient(x):
    t = Tensor(np.array([x]), requires_grad=True, name="x")
    g = ad.backward(ad.tsum(ad.gelu(t)), [t])["x"][0]
    num = (gelu_scalar(x + 1e-6) - gelu_scalar(x - 1e-6)) / 2e-6
    assert abs(g - num) < 1e-6


# -- reverse pass -----------------------------------------------------------

def test_gradient_of_sum_is_ones():
    w = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True, name="w")
    assert np.array_equal(ad.backward(w.sum(), [w])["w"], np.ones((2, 3)))


@given(arrays(np.float64, 5, elements=finite))
def test_gradient_of_quadratic(w):
    t = Tensor(w, requires_grad=True, name="w")
    np.testing.assert_allclose(ad.backward(ad.tsum(t * t), [t])["w"], 2 * w)


def test_backward_rejects_non_scalar():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(w * 2.0)


def test_repeated_backward_does_not_accumulate():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True, name="w")
    first = ad.backward(ad.tsum(w * w), [w])["w"].copy()
    second = ad.backward(ad.tsum(w * w), [w])["w"]
    assert np.array_equal(first, second)


def test_unused_parameter_gets_zero_gradient():
    w = Tensor(np.ones(2), requires_grad=True, name="w")
    u = Tensor(np.ones(3), requires_grad=True, name="u")
    g = ad.backward(w.sum(), [w, u])
    assert np.array_equal(g["u"], np.zeros(3))


def test_nothing_recorded_without_grad():
    a = Tensor(np.ones(2))
    out = a * 3.0 + a
    assert out._parents == ()


def test_shared_subexpression_accumulates():
    x = Tensor(np.array(3.0), requires_grad=True, name="x")
    y = x * x
    z = y + y * x  # x^2 + x^3 -> 2x + 3x^2 = 33
    assert ad.backward(z, [x])["x"] == pytest.approx(33.0)


def test_getitem_and_concat_gradients():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(4, 3))
    t = Tensor(a, requires_grad=True, name="a")
    picked = t[np.array([0, 2, 2])]          # fancy: repeated row accumulates
    both = ad.concat([picked, t[1:2]], axis=0)
    g = ad.backward(ad.tsum(both), [t])["a"]
    np.testing.assert_array_equal(g, np.array([[1.0] * 3, [1.0] * 3, [2.0] * 3, [0.0] * 3]))


def test_embedding_gradient_scatter_and_range():
    table = Tensor(np.zeros((5, 2)), requires_grad=True, name="E")
    out = ad.embedding(table, np.array([[1, 1, 4]]))
    g = ad.backward(ad.tsum(out), [table])["E"]
    np.testing.assert_array_equal(g[:, 0], [0, 2, 0, 0, 1])
    with pytest.raises(IndexError):
        ad.embedding(table, np.array([5]))


def test_broadcast_add_unbroadcasts_gradient():
    a = Tensor(np.ones((3, 4)), requires_grad=True, name="a")
    b = Tensor(np.ones(4), requires_grad=True, name="b")
    g = ad.backward(ad.tsum(a + b), [a, b])
    assert np.array_equal(g["b"], np.full(4, 3.0))


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (2, 4), elements=finite))
def test_logsumexp_matches_direct_and_masks(x):
    mask = np.array([[0.0, 0.0, ad.MASK_VALUE, 0.0]] * 2)
    got = ad.logsumexp(Tensor(x), axis=-1, mask_add=mask).data
    for i in range(2):
        expect = math.log(sum(math.exp(v) for j, v in enumerate(x[i]) if j != 2))
        assert abs(got[i] - expect) < 1e-9
