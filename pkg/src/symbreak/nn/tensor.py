"""Reverse-mode autodiff over numpy arrays.

Small op set sized to what the models need: broadcasting arithmetic, matmul,
two-operand einsum, pointwise nonlinearities, reductions, reshapes and row
gathers. Graphs are DAGs of Tensors; ``backward`` runs once per forward pass
in reverse topological order and accumulates into ``grad`` buffers.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Skip graph construction inside the block (evaluation passes)."""
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Accumulate gradients of self (summed if non-scalar) into the graph."""
        if self._done:
            raise RuntimeError("backward already ran for this tensor; re-run forward")
        self._done = True
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    # -- method forms ----------------------------------------------------
    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return absolute(self)

    def relu(self):
        return relu(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)


def _coerce(x, like: Tensor) -> np.ndarray:
    if isinstance(x, Tensor):
        raise TypeError("internal: expected raw value")
    return np.asarray(x, dtype=like.data.dtype)


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _acc(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        b = Tensor(_coerce(b, a))
    data = a.data + b.data

    def backward(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        b = Tensor(_coerce(b, a))
    data = a.data * b.data

    def backward(g):
        _acc(a, _unbroadcast(g * b.data, a.data.shape))
        _acc(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def div(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        b = Tensor(_coerce(b, a))
    data = a.data / b.data

    def backward(g):
        _acc(a, _unbroadcast(g / b.data, a.data.shape))
        _acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    data = a.data ** exponent

    def backward(g):
        _acc(a, g * exponent * a.data ** (exponent - 1))

    return _make(data, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data @ b.data

    def backward(g):
        _acc(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        _acc(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _make(data, (a, b), backward)


def einsum2(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum; every input index must appear in the other operand
    or the output (no pure marginalisation), which covers attention wiring."""
    lhs, out_sub = subscripts.split("->")
    a_sub, b_sub = lhs.split(",")
    for ch in a_sub:
        if ch not in out_sub and ch not in b_sub:
            raise ValueError(f"index {ch!r} would be marginalised; unsupported")
    for ch in b_sub:
        if ch not in out_sub and ch not in a_sub:
            raise ValueError(f"index {ch!r} would be marginalised; unsupported")
    data = np.einsum(subscripts, a.data, b.data, optimize=True)

    def backward(g):
        _acc(a, np.einsum(f"{out_sub},{b_sub}->{a_sub}", g, b.data, optimize=True))
        _acc(b, np.einsum(f"{a_sub},{out_sub}->{b_sub}", a.data, g, optimize=True))

    return _make(data, (a, b), backward)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        _acc(a, g * data)

    return _make(data, (a,), backward)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        _acc(a, g / a.data)

    return _make(data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def backward(g):
        _acc(a, g * (a.data > 0))

    return _make(data, (a,), backward)


def leaky_relu(a: Tensor, negative_slope: float = 0.2) -> Tensor:
    factor = np.where(a.data > 0, a.data.dtype.type(1.0), a.data.dtype.type(negative_slope))
    data = a.data * factor

    def backward(g):
        _acc(a, g * factor)

    return _make(data, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    # stable: max(x, 0) + log1p(exp(-|x|)); gradient is sigmoid(x)
    data = np.maximum(a.data, 0) + np.log1p(np.exp(-np.abs(a.data)))

    def backward(g):
        sig = np.exp(-np.logaddexp(0.0, -a.data))  # overflow-safe sigmoid
        _acc(a, g * sig)

    return _make(data, (a,), backward)


def absolute(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def backward(g):
        _acc(a, g * np.sign(a.data))

    return _make(data, (a,), backward)


def clip_upper(a: Tensor, cap) -> Tensor:
    """Elementwise min(a, cap) for a constant cap; gradient stops at the cap."""
    cap = np.asarray(cap, dtype=a.data.dtype)
    data = np.minimum(a.data, cap)

    def backward(g):
        _acc(a, g * (a.data < cap))

    return _make(data, (a,), backward)


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _acc(a, np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]
    return mul(sum_(a, axis, keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    data = a.data.reshape(shape)

    def backward(g):
        _acc(a, g.reshape(old))

    return _make(data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    # contiguous output: downstream batched matmuls choke on strided views
    data = np.ascontiguousarray(np.transpose(a.data, axes))
    inv = np.argsort(axes)

    def backward(g):
        _acc(a, np.ascontiguousarray(np.transpose(g, inv)))

    return _make(data, (a,), backward)


def take_rows(table: Tensor, idx) -> Tensor:
    """Gather rows: out[..., :] = table[idx[...], :]."""
    idx = np.asarray(idx)
    data = table.data[idx]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        _acc(table, gt)

    return _make(data, (table,), backward)


def gat_pair_scores(
    src: Tensor,
    dst: Tensor,
    edge: Tensor,
    bias: Tensor,
    attn: Tensor,
    batch: int,
    n: int,
    negative_slope: float,
) -> Tensor:
    """Fused attention scores: attn-projected LeakyReLU(src_i + dst_j + e_ij + b).

    src/dst are [B*n, da], edge is [n*n, da], attn is [da, H]; returns
    [B, n, n, H]. One fused op keeps the pair tensor traffic to a minimum,
    which dominates the step time at these shapes.
    """
    da = src.data.shape[-1]
    z = src.data.reshape(batch, n, 1, da) + dst.data.reshape(batch, 1, n, da)
    z += edge.data.reshape(1, n, n, da)
    z += bias.data
    one = z.dtype.type(1.0)
    slope = z.dtype.type(negative_slope)
    factor = np.where(z > 0, one, slope)
    z *= factor  # post-activation, reused for the attn gradient
    zf = z.reshape(-1, da)
    score = (zf @ attn.data).reshape(batch, n, n, attn.data.shape[-1])

    def backward(g):
        gf = g.reshape(-1, attn.data.shape[-1])
        _acc(attn, zf.T @ gf)
        gz = (gf @ attn.data.T).reshape(batch, n, n, da)
        gz *= factor
        _acc(bias, gz.sum(axis=(0, 1, 2)))
        _acc(edge, gz.sum(axis=0).reshape(n * n, da))
        _acc(src, gz.sum(axis=2).reshape(batch * n, da))
        _acc(dst, gz.sum(axis=1).reshape(batch * n, da))

    return _make(score, (src, dst, edge, bias, attn), backward)


def softmax(a: Tensor, axis: int) -> Tensor:
    # the max shift is exact, not an approximation: softmax is shift-invariant
    z = a.data - np.max(a.data, axis=axis, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=axis, keepdims=True)

    def backward(g):
        _acc(a, z * (g - (g * z).sum(axis=axis, keepdims=True)))

    return _make(z, (a,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for 2-d x; fused to keep the graph small."""
    data = x.data @ w.data
    data += b.data

    def backward(g):
        _acc(x, g @ w.data.T)
        _acc(w, x.data.T @ g)
        _acc(b, g.sum(axis=0))

    return _make(data, (x, w, b), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xn = centered * inv_std
    out = xn * gain.data + bias.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        _acc(bias, g.sum(axis=lead))
        _acc(gain, (g * xn).sum(axis=lead))
        gxn = g * gain.data
        gx = (
            gxn
            - gxn.mean(axis=-1, keepdims=True)
            - xn * (gxn * xn).mean(axis=-1, keepdims=True)
        ) * inv_std
        _acc(x, gx)

    return _make(out, (x, gain, bias), backward)
