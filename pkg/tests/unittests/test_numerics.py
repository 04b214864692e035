import pytest

import numpy as np

from pyumc import numerics as nx
from pyumc.numerics import Tensor, GradientTape
from pyumc.numerics.gradcheck import gradient_errors
from pyumc.exceptions import ContractError, DegenerateInputError, DimensionError


def param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def test_matmul_examples(float64):
    a = Tensor([[1., 2.], [3., 4.]])
    assert np.array_equal(nx.matmul(a, Tensor(np.eye(2))).data, a.data)
    assert np.array_equal(nx.matmul(Tensor(np.zeros((2, 2))), a).data, np.zeros((2, 2)))
    assert np.array_equal(nx.matmul(a, Tensor([[1.], [1.]])).data, [[3.], [7.]])


def test_matmul_is_associative(float64):
    rng = np.random.default_rng(8)
    for shapes in (((3, 4), (4, 5), (5, 2)), ((2, 3, 4), (4, 4), (4, 6))):
        a, b, c = (Tensor(rng.standard_normal(s)) for s in shapes)
        left = nx.matmul(nx.matmul(a, b), c).data
        right = nx.matmul(a, nx.matmul(b, c)).data
        assert np.allclose(left, right, rtol=1e-10, atol=1e-12)


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError) as exc:
        nx.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    assert '(2, 3)' in str(exc.value)


def test_silu_values(float64):
    y = nx.silu(Tensor([0., -50., 1.])).data
    assert y[0] == 0
    assert abs(y[1]) < 1e-12
    assert y[2] == pytest.approx(0.731059, abs=1e-6)


def test_backward_sum_and_square(float64):
    w = Tensor([1., -2., 3.], requires_grad=True)
    with GradientTape() as tape:
        loss = nx.sum(w)
    tape.backward(loss)
    assert np.array_equal(w.grad, np.ones(3))

    w.zero_grad()
    with GradientTape() as tape:
        loss = nx.scale(nx.sum(nx.mul(w, w)), 0.5)
    tape.backward(loss)
    assert np.allclose(w.grad, w.data)


def test_backward_requires_scalar(float64):
    w = Tensor([1., 2.], requires_grad=True)
    with GradientTape() as tape:
        y = nx.mul(w, w)
    with pytest.raises(ContractError):
        tape.backward(y)


def test_tape_replay_once(float64):
    w = Tensor([1., 2.], requires_grad=True)
    with GradientTape() as tape:
        loss = nx.sum(w)
    tape.backward(loss)
    with pytest.raises(ContractError):
        tape.backward(loss)


def test_no_gradient_for_constants(float64):
    w = Tensor([1., 2.], requires_grad=True)
    c = Tensor([3., 4.])
    with GradientTape() as tape:
        loss = nx.sum(nx.mul(w, c))
    tape.backward(loss)
    assert c.grad is None
    assert np.allclose(w.grad, c.data)


def test_cosine_similarity_examples():
    v = np.array([0.3, -1.2, 2.0])
    assert nx.cosine_similarity(v, v) == pytest.approx(1.0)
    assert nx.cosine_similarity(v, -v) == pytest.approx(-1.0)
    assert nx.cosine_similarity([1., 0.], [1., 1.]) == pytest.approx(0.70711, abs=1e-5)


def test_cosine_similarity_zero_norm():
    with pytest.raises(DegenerateInputError):
        nx.cosine_similarity([0., 0.], [1., 1.])
    with pytest.raises(DimensionError):
        nx.cosine_similarity([1., 0.], [1., 1., 1.])


def test_precision_is_scoped():
    with nx.precision('float64'):
        assert Tensor([1.]).dtype == np.float64
    assert Tensor([1.]).dtype == nx.default_dtype()
    with pytest.raises(ContractError):
        with nx.precision('float16'):
            pass


def test_softmax_mask(float64):
    y = nx.softmax(Tensor([[1., 2., 3.]]), mask=np.array([[True, True, False]])).data
    assert y[0, 2] == 0
    assert y.sum() == pytest.approx(1.0)


#
# Finite difference suite
#

def test_gradcheck_mlp_and_attention(float64):
    rng = np.random.default_rng(0)
    x = param(rng, 2, 3, 4)
    wg, wu, wd = param(rng, 6, 4), param(rng, 6, 4), param(rng, 4, 6)
    norm = Tensor(np.ones(4) + 0.1 * rng.standard_normal(4), requires_grad=True)

    def mlp():
        h = nx.rms_norm(x, norm)
        hidden = nx.mul(nx.silu(nx.matmul(h, nx.transpose(wg))), nx.matmul(h, nx.transpose(wu)))
        return nx.mean(nx.mul(nx.matmul(hidden, nx.transpose(wd)), nx.matmul(hidden, nx.transpose(wd))))

    assert max(gradient_errors(mlp, [x, wg, wu, wd, norm])) < 1e-6

    wq, wk = param(rng, 4, 4), param(rng, 4, 4)
    mask = np.tril(np.ones((3, 3), dtype=bool))

    def attention():
        q = nx.matmul(x, nx.transpose(wq))
        k = nx.matmul(x, nx.transpose(wk))
        a = nx.softmax(nx.scale(nx.matmul(q, nx.transpose(k)), 0.5), mask)
        return nx.sum(nx.mul(nx.matmul(a, x), nx.matmul(a, x)))

    assert max(gradient_errors(attention, [x, wq, wk])) < 1e-6


def test_gradcheck_loss_heads(float64):
    rng = np.random.default_rng(1)
    logits = param(rng, 2, 3, 5)
    targets = rng.integers(5, size=(2, 3))
    weights = np.array([[0., 1., 1.], [1., 1., 0.]])
    assert max(gradient_errors(lambda: nx.cross_entropy(logits, targets, weights), [logits])) < 1e-6

    pred = param(rng, 3, 4)
    target = rng.standard_normal((3, 4))
    assert max(gradient_errors(lambda: nx.mse(pred, target), [pred])) < 1e-6

    table = param(rng, 6, 3)
    ids = np.array([[0, 2, 2], [5, 1, 0]])
    assert max(gradient_errors(lambda: nx.sum(nx.silu(nx.embedding(table, ids))), [table])) < 1e-6
