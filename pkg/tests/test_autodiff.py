"""Gradient correctness of the reverse-mode tape against finite differences."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import cmg.autodiff as ad
from conftest import finite_difference, relative_error, rng

TOL = 1e-6


def check_grad(build, x: np.ndarray, tol: float = TOL) -> None:
    """Compare tape gradients of ``sum(build(t))`` with finite differences."""
    t = ad.Tensor(x.copy(), requires_grad=True)
    out = ad.tsum(build(t))
    out.backward()
    fd = finite_difference(lambda v: float(ad.tsum(build(ad.Tensor(v))).value), x)
    assert relative_error(t.grad, fd) < tol, (t.grad, fd)


@pytest.mark.parametrize(
    "name,build",
    [
        ("add", lambda t: ad.add(t, 1.5)),
        ("add_bcast", lambda t: ad.add(t, np.arange(4.0))),
        ("sub", lambda t: ad.sub(3.0, t)),
        ("mul", lambda t: ad.mul(t, t)),
        ("div", lambda t: ad.div(1.0, ad.add(t, 3.0))),
        ("power2", lambda t: ad.power(t, 2.0)),
        ("power3", lambda t: ad.power(t, 3.0)),
        ("exp", lambda t: ad.exp(t)),
        ("sqrt", lambda t: ad.sqrt(ad.add(ad.mul(t, t), 1.0))),
        ("sin", lambda t: ad.sin(t)),
        ("cos", lambda t: ad.cos(t)),
        ("tanh", lambda t: ad.tanh(t)),
        ("gelu", lambda t: ad.gelu(t)),
        ("relu_offset", lambda t: ad.relu(ad.add(t, 0.05))),
        ("softmax", lambda t: ad.mul(ad.softmax(t, axis=-1), np.arange(12.0).reshape(3, 4))),
        ("l2norm", lambda t: ad.l2norm(t, axis=-1)),
        ("tsum_axis", lambda t: ad.tsum(ad.mul(t, t), axis=0)),
        ("tmean_keep", lambda t: ad.tmean(ad.mul(t, t), axis=1, keepdims=True)),
        ("cumsum", lambda t: ad.mul(ad.cumsum(t, axis=0), np.arange(12.0).reshape(3, 4))),
        ("reshape", lambda t: ad.mul(ad.reshape(t, (4, 3)), 2.0)),
        ("transpose", lambda t: ad.mul(ad.transpose(t, (1, 0)), np.arange(12.0).reshape(4, 3))),
        ("getitem", lambda t: ad.mul(t[1:, ::2], 3.0)),
    ],
)
def test_primitive_gradients(name, build):
    x = rng(hash(name) % 2**32).uniform(-1.2, 1.2, size=(3, 4))
    check_grad(build, x)


def test_log_gradient():
    x = rng(5).uniform(0.5, 2.0, size=(3, 4))
    check_grad(lambda t: ad.log(t), x)


def test_matmul_gradients_both_sides():
    a = rng(1).standard_normal((3, 4))
    b = rng(2).standard_normal((4, 5))
    ta = ad.Tensor(a.copy(), requires_grad=True)
    tb = ad.Tensor(b.copy(), requires_grad=True)
    ad.tsum(ad.matmul(ta, tb)).backward()
    fd_a = finite_difference(
        lambda v: float(ad.tsum(ad.matmul(ad.Tensor(v), ad.Tensor(b))).value), a
    )
    fd_b = finite_difference(
        lambda v: float(ad.tsum(ad.matmul(ad.Tensor(a), ad.Tensor(v))).value), b
    )
    assert relative_error(ta.grad, fd_a) < TOL
    assert relative_error(tb.grad, fd_b) < TOL


def test_matmul_batched_gradient():
    a = rng(3).standard_normal((2, 3, 4))
    check_grad(lambda t: ad.matmul(t, rng(4).standard_normal((4, 5))), a)


def test_concatenate_and_stack_gradients():
    x = rng(6).standard_normal((2, 3))

    w_cat = rng(60).standard_normal((2, 6))
    w_stack = rng(61).standard_normal((2, 2, 3))

    def build_cat(t):
        return ad.mul(ad.concatenate([t, ad.mul(t, 2.0)], axis=1), w_cat)

    def build_stack(t):
        return ad.mul(ad.stack([t, ad.mul(t, -1.0)], axis=0), w_stack)

    check_grad(build_cat, x)
    check_grad(build_stack, x)


def test_layer_norm_gradients_all_inputs():
    x = rng(7).standard_normal((2, 3, 8))
    g = rng(8).uniform(0.5, 1.5, size=8)
    b = rng(9).standard_normal(8)
    tx = ad.Tensor(x.copy(), requires_grad=True)
    tg = ad.Tensor(g.copy(), requires_grad=True)
    tb = ad.Tensor(b.copy(), requires_grad=True)
    ad.tsum(ad.mul(ad.layer_norm(tx, tg, tb), np.arange(48.0).reshape(2, 3, 8))).backward()

    def f_of(which):
        def f(v):
            args = {"x": x, "g": g, "b": b}
            args[which] = v
            out = ad.layer_norm(ad.Tensor(args["x"]), ad.Tensor(args["g"]), ad.Tensor(args["b"]))
            return float(ad.tsum(ad.mul(out, np.arange(48.0).reshape(2, 3, 8))).value)

        return f

    assert relative_error(tx.grad, finite_difference(f_of("x"), x)) < 1e-5
    assert relative_error(tg.grad, finite_difference(f_of("g"), g)) < 1e-5
    assert relative_error(tb.grad, finite_difference(f_of("b"), b)) < 1e-5


def test_gradient_accumulation_shared_node():
    x = ad.Tensor(np.array([2.0, 3.0]), requires_grad=True)
    out = ad.tsum(ad.add(ad.mul(x, x), x))  # d/dx (x^2 + x) = 2x + 1
    out.backward()
    np.testing.assert_allclose(x.grad, np.array([5.0, 7.0]), rtol=0, atol=1e-12)


def test_backward_requires_scalar_without_seed():
    x = ad.Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        ad.mul(x, 2.0).backward()


def test_backward_with_seed_matches_weighted_sum():
    x = rng(11).standard_normal((3, 3))
    seed = rng(12).standard_normal((3, 3))
    t = ad.Tensor(x.copy(), requires_grad=True)
    ad.mul(t, t).backward(seed)
    np.testing.assert_allclose(t.grad, 2 * x * seed, rtol=1e-12, atol=1e-12)


def test_broadcast_gradient_unbroadcasts():
    x = rng(13).standard_normal((3, 1))
    t = ad.Tensor(x.copy(), requires_grad=True)
    ad.tsum(ad.add(t, np.zeros((3, 4)))).backward()
    np.testing.assert_allclose(t.grad, np.full((3, 1), 4.0), atol=1e-12)


def test_dtype_context_switches_default():
    with ad.dtype_context(np.float32):
        t = ad.Tensor(np.ones(3))
        assert t.value.dtype == np.float32
    assert ad.Tensor(np.ones(3)).value.dtype == np.float64


def test_dtype_context_rejects_other_dtypes():
    with pytest.raises(ValueError):
        with ad.dtype_context("float32"):
            pass


def test_detach_blocks_gradient_flow():
    x = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    out = ad.tsum(ad.mul(x.detach(), x))
    out.backward()
    np.testing.assert_allclose(x.grad, np.array([1.0, 2.0]), atol=1e-12)


def test_softmax_rows_sum_to_one():
    x = rng(14).standard_normal((5, 7))
    s = ad.softmax(ad.Tensor(x), axis=-1).value
    np.testing.assert_allclose(s.sum(axis=-1), np.ones(5), atol=1e-12)
    assert np.all(s > 0)


def test_gelu_matches_tanh_approximation():
    x = np.linspace(-4, 4, 101)
    got = ad.gelu(ad.Tensor(x)).value
    c = np.sqrt(2.0 / np.pi)
    want = 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(got, want, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_chain_rule_property(n, m, seed):
    """d/dx sum((a*x + b)^2) == 2a(ax + b) for random shapes and values."""
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, m))
    a = r.standard_normal((n, m))
    b = r.standard_normal((n, m))
    t = ad.Tensor(x, requires_grad=True)
    ad.tsum(ad.power(ad.add(ad.mul(t, a), b), 2.0)).backward()
    np.testing.assert_allclose(t.grad, 2 * a * (a * x + b), rtol=1e-9, atol=1e-9)
