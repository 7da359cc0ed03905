"""Reverse-mode automatic differentiation over dense numpy arrays.

Define-by-run: every primitive application is recorded on a global tape
while gradients are enabled, and backward() replays the tape in reverse.
All math is float64 unless a tensor is created with another dtype.
"""
from __future__ import annotations

import struct

import numpy as np

from .exceptions import ContractError, NumericError, ShapeError

_TAPE: list["Tensor"] = []
_GRAD_ENABLED = True


class no_grad:
    """Context manager disabling tape recording (inference / numeric probes)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def tape_size():
    return len(_TAPE)


def clear_tape():
    for node in _TAPE:
        node.grad = None
        node._backward = None
        node._parents = ()
    _TAPE.clear()


class Tensor:
    """A dense array plus optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, dtype=np.float64):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise ShapeError("tensor/tensor division is not a supported primitive")
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _tracked(t):
    return t.requires_grad or t._backward is not None


def _record(out, parents, backward):
    if _GRAD_ENABLED and any(_tracked(p) for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
        _TAPE.append(out)
    return out


def _accum(t, g):
    if not _tracked(t):
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    """Sum gradient g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss):
    """Propagate d(loss)/d(leaf) into every requires_grad leaf, then clear the tape."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor loss")
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_TAPE):
        if node.grad is None or node._backward is None:
            continue
        node._backward(node.grad)
    clear_tape()


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        out_data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(out_data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _record(out, (a, b), bwd)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    try:
        out_data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(out_data)

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _record(out, (a, b), bwd)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _record(out, (a, b), bwd)


def transpose(a):
    a = _wrap(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D tensor, got shape {a.shape}")
    out = Tensor(a.data.T)

    def bwd(g):
        _accum(a, g.T)

    return _record(out, (a,), bwd)


def reshape(a, shape):
    a = _wrap(a)
    out = Tensor(a.data.reshape(shape))
    old_shape = a.shape

    def bwd(g):
        _accum(a, g.reshape(old_shape))

    return _record(out, (a,), bwd)


def exp(a):
    a = _wrap(a)
    out_data = np.exp(a.data)
    out = Tensor(out_data)

    def bwd(g):
        _accum(a, g * out_data)

    return _record(out, (a,), bwd)


def log(a):
    a = _wrap(a)
    out = Tensor(np.log(a.data))

    def bwd(g):
        _accum(a, g / a.data)

    return _record(out, (a,), bwd)


def tanh(a):
    a = _wrap(a)
    out_data = np.tanh(a.data)
    out = Tensor(out_data)

    def bwd(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _record(out, (a,), bwd)


def softmax(a):
    """Softmax over the last axis."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s)

    def bwd(g):
        _accum(a, s * (g - (g * s).sum(axis=-1, keepdims=True)))

    return _record(out, (a,), bwd)


def log_softmax(a):
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse
    out = Tensor(out_data)
    probs = np.exp(out_data)

    def bwd(g):
        _accum(a, g - probs * g.sum(axis=-1, keepdims=True))

    return _record(out, (a,), bwd)


def layer_norm(a, eps=1e-5):
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    a = _wrap(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (a.data - mu) * inv
    out = Tensor(y)
    n = a.shape[-1]

    def bwd(g):
        gy = g
        gx = inv * (gy - gy.mean(axis=-1, keepdims=True)
                    - y * (gy * y).mean(axis=-1, keepdims=True))
        _accum(a, gx)

    return _record(out, (a,), bwd)


def embedding(weight, ids):
    """Row lookup weight[ids] with scatter-add backward."""
    weight = _wrap(weight)
    idx = np.asarray(ids, dtype=np.int64)
    if weight.ndim != 2:
        raise ShapeError(f"embedding: weight must be 2-D, got shape {weight.shape}")
    out = Tensor(weight.data[idx])

    def bwd(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, idx, g)
        _accum(weight, gw)

    return _record(out, (weight,), bwd)


def gather_rows(a, idx):
    """out[i] = a[i, idx[i]] for a 2-D tensor."""
    a = _wrap(a)
    idx = np.asarray(idx, dtype=np.int64)
    if a.ndim != 2 or idx.ndim != 1 or idx.shape[0] != a.shape[0]:
        raise ShapeError(f"gather_rows: shapes {a.shape} and {idx.shape}")
    rows = np.arange(a.shape[0])
    out = Tensor(a.data[rows, idx])

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[rows, idx] = g
        _accum(a, ga)

    return _record(out, (a,), bwd)


def slice_axis(a, axis, start, stop):
    a = _wrap(a)
    if axis not in (0, 1) or axis >= a.ndim:
        raise ShapeError(f"slice_axis: axis {axis} invalid for shape {a.shape}")
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    out = Tensor(a.data[sl])

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[sl] = g
        _accum(a, ga)

    return _record(out, (a,), bwd)


def concat(tensors, axis=0):
    tensors = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]

    def bwd(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + size)
            _accum(t, g[tuple(sl)])
            offset += size

    return _record(out, tuple(tensors), bwd)


def tsum(a, axis=None):
    a = _wrap(a)
    out = Tensor(a.data.sum(axis=axis))
    shape = a.shape

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, shape).copy())
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis), shape).copy())

    return _record(out, (a,), bwd)


def tmean(a, axis=None):
    a = _wrap(a)
    n = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)


def minimum(a, b):
    a, b = _wrap(a), _wrap(b)
    take_a = a.data <= b.data
    out = Tensor(np.where(take_a, a.data, b.data))

    def bwd(g):
        _accum(a, _unbroadcast(g * take_a, a.shape))
        _accum(b, _unbroadcast(g * ~take_a, b.shape))

    return _record(out, (a, b), bwd)


def clip(a, lo, hi):
    a = _wrap(a)
    out = Tensor(np.clip(a.data, lo, hi))
    inside = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        _accum(a, g * inside)

    return _record(out, (a,), bwd)


def masked_fill(a, mask, value):
    """Replace entries where mask is True by `value`; no gradient flows there."""
    a = _wrap(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ShapeError(f"masked_fill: mask shape {mask.shape} != tensor shape {a.shape}")
    out = Tensor(np.where(mask, value, a.data))

    def bwd(g):
        _accum(a, g * ~mask)

    return _record(out, (a,), bwd)


def square(a):
    a = _wrap(a)
    return mul(a, a)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(f, params, eps=1e-5, max_coords=24, seed=0):
    """Max relative error between analytic and central-difference gradients.

    `f` is a nullary callable returning a scalar Tensor built from `params`
    (a list of requires_grad Tensors). Per parameter, up to `max_coords`
    coordinates are probed (all of them when the tensor is small).
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ContractError(f"eps {eps} outside [1e-7, 1e-3]")
    for p in params:
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("non-finite loss in grad_check")
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    rng = np.random.default_rng(seed)
    max_err = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.shape[0]
        if n <= max_coords:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            with no_grad():
                flat[c] = orig + eps
                hi = float(f().data)
                flat[c] = orig - eps
                lo = float(f().data)
                flat[c] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError("non-finite value during finite differencing")
            numeric = (hi - lo) / (2.0 * eps)
            a = float(ga.reshape(-1)[c])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > max_err:
                max_err = err
    for p in params:
        p.zero_grad()
    return max_err


# ---------------------------------------------------------------------------
# checkpoint container: 4-byte magic, version byte, then named float64 tensors
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"TNSR"
CHECKPOINT_VERSION = 1


class DataFormatError(ValueError):
    """Checkpoint file is corrupt or has the wrong format."""


def save_checkpoint(path, tensors):
    """Write named tensors (dict name -> Tensor or ndarray) as little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<B", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors.items():
            arr = np.asarray(t.data if isinstance(t, Tensor) else t, dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path):
    """Read a checkpoint back as dict name -> float64 ndarray."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != CHECKPOINT_VERSION:
            raise DataFormatError(f"{path}: unsupported version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape)
            out[name] = data.astype(np.float64)
        return out
