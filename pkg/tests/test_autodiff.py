import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyner.autodiff import Tensor, concat, stack_rows

rng = np.random.default_rng(2)


def _fd(fn, arrays, eps=1e-6):
    """Central differences of fn(*arrays) w.r.t. each array."""
    grads = []
    for which, base in enumerate(arrays):
        g = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            up = [a.copy() for a in arrays]
            dn = [a.copy() for a in arrays]
            up[which][idx] += eps
            dn[which][idx] -= eps
            g[idx] = (fn(*up) - fn(*dn)) / (2 * eps)
        grads.append(g)
    return grads


def _check(fn_tape, fn_value, *shapes, tol=1e-7):
    arrays = [rng.normal(size=s) for s in shapes]
    tensors = [Tensor(a) for a in arrays]
    out = fn_tape(*tensors)
    out.backward()
    numeric = _fd(fn_value, arrays)
    for t, num in zip(tensors, numeric):
        assert np.abs(t.grad - num).max() < tol


def test_add_mul_broadcast_gradients():
    _check(lambda a, b: ((a + b) * a).sum(),
           lambda a, b: float(((a + b) * a).sum()),
           (3, 4), (4,))


def test_matmul_gradients():
    _check(lambda a, b: (a @ b).sum(),
           lambda a, b: float((a @ b).sum()),
           (3, 4), (4, 2))


def test_batched_matmul_gradients():
    _check(lambda a, b: (a @ b).sum(),
           lambda a, b: float((a @ b).sum()),
           (2, 3, 4), (2, 4, 3))


def test_exp_log_chain():
    base = np.abs(rng.normal(size=(4,))) + 0.5
    t = Tensor(base)
    (t.log().exp() * t).sum().backward()
    num = _fd(lambda a: float((np.exp(np.log(a)) * a).sum()), [base])[0]
    assert np.abs(t.grad - num).max() < 1e-7


def test_tanh_gelu_pow_gradients():
    _check(lambda a: (a.tanh() + a.gelu() + a.pow(2.0)).sum(),
           lambda a: float((np.tanh(a)
                            + 0.5 * a * (1 + np.tanh(np.sqrt(2 / np.pi)
                                                     * (a + 0.044715 * a**3)))
                            + a**2).sum()),
           (5,))


def test_softmax_gradient():
    def value(a):
        e = np.exp(a - a.max(axis=-1, keepdims=True))
        p = e / e.sum(axis=-1, keepdims=True)
        return float((p * np.arange(a.shape[-1])).sum())

    _check(lambda a: (a.softmax(axis=-1) * Tensor(np.arange(4.0))).sum(),
           value, (3, 4))


def test_logsumexp_gradient_and_neg_inf_rows():
    x = rng.normal(size=(3, 4))
    x[1] = -np.inf
    t = Tensor(x)
    out = t.logsumexp(axis=1)
    assert out.data[1] == -np.inf
    finite_mask = np.isfinite(out.data)
    out[finite_mask].sum().backward()
    assert np.all(t.grad[1] == 0.0)
    # finite rows match softmax weights
    for i in (0, 2):
        e = np.exp(x[i] - x[i].max())
        assert np.abs(t.grad[i] - e / e.sum()).max() < 1e-12


def test_take_rows_accumulates_duplicates():
    t = Tensor(rng.normal(size=(4, 3)))
    out = t.take_rows([1, 1, 2])
    out.sum().backward()
    assert np.array_equal(t.grad[1], np.full(3, 2.0))
    assert np.array_equal(t.grad[2], np.ones(3))
    assert np.array_equal(t.grad[0], np.zeros(3))


def test_getitem_advanced_indexing_gradient():
    t = Tensor(rng.normal(size=(5, 5)))
    idx = (np.array([0, 0, 3]), np.array([1, 1, 2]))
    t[idx].sum().backward()
    assert t.grad[0, 1] == 2.0
    assert t.grad[3, 2] == 1.0


def test_clip_min_gradient_gate():
    t = Tensor(np.array([-1.0, 0.5, 2.0]))
    t.clip_min(0.0).sum().backward()
    assert np.array_equal(t.grad, np.array([0.0, 1.0, 1.0]))


def test_detach_blocks_gradient():
    t = Tensor(np.ones(3))
    (t.detach() * 5.0).sum().backward()
    assert t.grad is None


def test_concat_and_stack_rows_gradients():
    a, b = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(1, 3)))
    w = Tensor(rng.normal(size=(3, 3)))
    (concat([a, b], axis=0) * w).sum().backward()
    assert a.grad.shape == (2, 3) and b.grad.shape == (1, 3)
    assert np.array_equal(a.grad, w.data[:2])
    r1, r2 = Tensor(rng.normal(size=3)), Tensor(rng.normal(size=3))
    stack_rows([r1, r2]).sum().backward()
    assert np.array_equal(r1.grad, np.ones(3))


def test_mean_and_keepdims():
    t = Tensor(rng.normal(size=(4, 6)))
    t.mean(axis=-1, keepdims=True).sum().backward()
    assert np.abs(t.grad - 1 / 6).max() < 1e-15


def test_backward_requires_scalar():
    with pytest.raises(ValueError):
        Tensor(np.ones(3)).backward()


def test_deep_chain_does_not_overflow_stack():
    t = Tensor(np.ones(2))
    out = t
    for _ in range(5000):
        out = out + 1.0
    out.sum().backward()
    assert np.array_equal(t.grad, np.ones(2))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_gradient_of_random_expression(n, m, seed):
    gen = np.random.default_rng(seed)
    a0 = gen.normal(size=(n, m))
    b0 = gen.normal(size=(m, n))

    def tape(a, b):
        return ((a @ b).tanh() * (a @ b)).sum() + (a * a).sum()

    def value(a, b):
        return float((np.tanh(a @ b) * (a @ b)).sum() + (a * a).sum())

    at, bt = Tensor(a0), Tensor(b0)
    tape(at, bt).backward()
    na, nb = _fd(value, [a0, b0])
    assert np.abs(at.grad - na).max() < 1e-6
    assert np.abs(bt.grad - nb).max() < 1e-6
