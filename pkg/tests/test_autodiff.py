import numpy as np
import pytest

import lastmile.autodiff as ad
from lastmile.autodiff import Tensor
from lastmile.exceptions import ContractError, ShapeError


def test_matmul_forward():
    out = ad.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert out.data.tolist() == [[11.0]]


def test_matmul_shape_error_names_primitive():
    with pytest.raises(ShapeError, match="matmul"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_softmax_rows_sum_to_one():
    rows = ad.softmax(Tensor(np.random.default_rng(0).normal(size=(5, 7))))
    assert np.allclose(rows.data.sum(axis=-1), 1.0, atol=1e-12)


def test_layer_norm_zero_mean_unit_variance():
    out = ad.layer_norm(Tensor([[1.0, 2.0, 3.0]]))
    assert abs(out.data.mean()) < 1e-12
    assert abs(out.data.var() - 1.0) < 1e-4  # eps shifts variance slightly


def test_backward_sum_gives_ones():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    ad.backward(ad.tsum(x))
    assert x.grad.tolist() == [1.0, 1.0, 1.0]


def test_backward_square():
    x = Tensor([1.0, 2.0], requires_grad=True)
    ad.backward(ad.tsum(ad.square(x)))
    assert x.grad.tolist() == [2.0, 4.0]


def test_backward_rejects_non_scalar_loss():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        ad.backward(ad.square(x))


def test_backward_accumulates_into_leaves():
    x = Tensor([1.0, 1.0], requires_grad=True)
    ad.backward(ad.tsum(x))
    ad.backward(ad.tsum(x))
    assert x.grad.tolist() == [2.0, 2.0]


def test_backward_linearity():
    rng = np.random.default_rng(1)
    x = Tensor(rng.normal(size=4), requires_grad=True)

    def f():
        return ad.tsum(ad.square(x))

    def g():
        return ad.tsum(ad.tanh(x))

    ad.backward(f())
    gf = x.grad.copy()
    x.zero_grad()
    ad.backward(g())
    gg = x.grad.copy()
    x.zero_grad()
    ad.backward(ad.add(ad.mul(f(), 2.0), ad.mul(g(), -3.0)))
    assert np.allclose(x.grad, 2.0 * gf - 3.0 * gg, atol=1e-12)


def test_gather_and_slice_and_concat_backward():
    a = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    picked = ad.gather_rows(ad.slice_axis(a, 0, 0, 3), [0, 1, 2])
    ad.backward(ad.tsum(picked))
    expected = np.zeros((3, 4))
    expected[[0, 1, 2], [0, 1, 2]] = 1.0
    assert np.array_equal(a.grad, expected)

    b = Tensor(np.ones((2, 2)), requires_grad=True)
    c = Tensor(np.ones((2, 2)), requires_grad=True)
    ad.backward(ad.tsum(ad.concat([b, c], axis=1)))
    assert np.array_equal(b.grad, np.ones((2, 2)))
    assert np.array_equal(c.grad, np.ones((2, 2)))


def test_minimum_and_clip_gradients():
    a = Tensor([1.0, 3.0], requires_grad=True)
    b = Tensor([2.0, 2.0], requires_grad=True)
    ad.backward(ad.tsum(ad.minimum(a, b)))
    assert a.grad.tolist() == [1.0, 0.0]
    assert b.grad.tolist() == [0.0, 1.0]

    c = Tensor([0.5, 1.5, 3.0], requires_grad=True)
    ad.backward(ad.tsum(ad.clip(c, 1.0, 2.0)))
    assert c.grad.tolist() == [0.0, 1.0, 0.0]


def test_two_layer_network_matches_finite_differences():
    rng = np.random.default_rng(2)
    w1 = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    w2 = Tensor(rng.normal(size=(5, 2)), requires_grad=True)
    x = np.asarray(rng.normal(size=(4, 3)))

    def f():
        h = ad.tanh(ad.matmul(Tensor(x), w1))
        return ad.tsum(ad.square(ad.matmul(h, w2)))

    assert ad.grad_check(f, [w1, w2], eps=1e-5, max_coords=30) < 1e-4


def test_grad_check_closed_form():
    x = Tensor(3.0, requires_grad=True)

    def f():
        return ad.square(x)

    assert ad.grad_check(f, [x], eps=1e-5) < 1e-8


def test_grad_check_constant_function():
    x = Tensor([1.0, 2.0], requires_grad=True)

    def f():
        return Tensor(5.0) + ad.tsum(x) * 0.0

    assert ad.grad_check(f, [x], eps=1e-5) == 0.0


def test_forward_determinism():
    x = np.random.default_rng(3).normal(size=(6, 6))
    a = ad.softmax(ad.layer_norm(Tensor(x)))
    b = ad.softmax(ad.layer_norm(Tensor(x)))
    assert np.array_equal(a.data, b.data)


def test_checkpoint_roundtrip(tmp_path):
    tensors = {
        "weights": Tensor(np.random.default_rng(4).normal(size=(3, 2))),
        "bias": np.array([1.0, -2.0]),
        "scalar": np.float64(7.25),
    }
    path = tmp_path / "model.ckpt"
    ad.save_checkpoint(path, tensors)
    loaded = ad.load_checkpoint(path)
    assert set(loaded) == set(tensors)
    for name in tensors:
        ref = tensors[name].data if isinstance(tensors[name], Tensor) else tensors[name]
        assert np.array_equal(loaded[name], np.asarray(ref))


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 10)
    with pytest.raises(ad.DataFormatError):
        ad.load_checkpoint(path)
