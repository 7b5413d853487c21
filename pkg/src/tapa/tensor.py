"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every numeric operation of the model is expressed with the functions in this
module. A graph is recorded while the forward pass runs and is discarded after
``backward``; parameters are leaf tensors with ``requires_grad=True``.

Batched variants are supported where the model needs them: ``matmul`` accepts
leading batch axes, ``conv2d`` and ``maxpool2d`` accept ``N x C x H x W`` as well
as a single ``C x H x W`` input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, DomainError

NORM_FLOOR = 1e-12


class Tensor:
    """A node in the differentiation graph.

    ``data`` is a float64 ndarray, ``grad`` is ``None`` until a backward pass
    reaches the tensor (or it is zeroed explicitly).
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self):
        backward(self)

    # operator sugar, all routed through the functional ops below
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents: Sequence[Tensor], backward_fn) -> Tensor:
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward_fn)
    return Tensor(data)


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor.

    Gradients add up, so a parameter used by two branches (the Siamese
    encoder) receives the sum of both contributions.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    # intermediate grads are scratch space; leaves keep accumulating
    for node in order:
        if node._parents:
            node.grad = None
    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), _bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), _bw)


def mul(a, b) -> Tensor:
    """Broadcasting elementwise product."""
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), _bw)


def hadamard(a, b) -> Tensor:
    """Elementwise product of two tensors of identical shape."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"hadamard needs identical shapes, got {a.shape} and {b.shape}")
    return mul(a, b)


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def _bw(g):
        _accumulate(x, g * out * (1.0 - out))

    return _node(out, (x,), _bw)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def _bw(g):
        _accumulate(x, g * (1.0 - out * out))

    return _node(out, (x,), _bw)


def relu(x: Tensor) -> Tensor:
    active = x.data > 0

    def _bw(g):
        _accumulate(x, g * active)

    return _node(np.where(active, x.data, 0.0), (x,), _bw)


def clip(x: Tensor, low: float, high: float) -> Tensor:
    """Clamp values; gradient passes where the input was inside [low, high]."""
    inside = (x.data >= low) & (x.data <= high)

    def _bw(g):
        _accumulate(x, g * inside)

    return _node(np.clip(x.data, low, high), (x,), _bw)


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _node(x.data.sum(axis=axis, keepdims=keepdims), (x,), _bw)


def tmax(x: Tensor, axis: int) -> Tensor:
    """Maximum along ``axis``; the gradient goes to the first maximal entry."""
    arg = np.expand_dims(x.data.argmax(axis=axis), axis)

    def _bw(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, arg, np.expand_dims(g, axis), axis=axis)
        _accumulate(x, full)

    return _node(np.take_along_axis(x.data, arg, axis=axis).squeeze(axis), (x,), _bw)


def mean(x: Tensor) -> Tensor:
    return mul(tsum(x), 1.0 / x.data.size)


def reshape(x: Tensor, shape) -> Tensor:
    def _bw(g):
        _accumulate(x, g.reshape(x.shape))

    return _node(x.data.reshape(shape), (x,), _bw)


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
    inverse = np.argsort(axes)

    def _bw(g):
        _accumulate(x, np.transpose(g, inverse))

    return _node(np.transpose(x.data, axes), (x,), _bw)


def getitem(x: Tensor, index) -> Tensor:
    def _bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        _accumulate(x, full)

    return _node(x.data[index], (x,), _bw)


def concat(a, b, axis: int = -1) -> Tensor:
    """Join two tensors along ``axis``; all other axes must agree."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != b.ndim:
        raise DimensionError(f"cannot concatenate shapes {a.shape} and {b.shape}")
    ax = axis % a.ndim
    if any(sa != sb for i, (sa, sb) in enumerate(zip(a.shape, b.shape)) if i != ax):
        raise DimensionError(f"cannot concatenate shapes {a.shape} and {b.shape} on axis {axis}")
    split = a.shape[ax]

    def _bw(g):
        ga, gb = np.split(g, [split], axis=ax)
        _accumulate(a, ga)
        _accumulate(b, gb)

    return _node(np.concatenate([a.data, b.data], axis=ax), (a, b), _bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def _bw(g):
        for i, t in enumerate(tensors):
            _accumulate(t, np.take(g, i, axis=axis))

    return _node(np.stack([t.data for t in tensors], axis=axis), tensors, _bw)


def pad_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Zero-pad trailing ends of every axis up to ``shape``."""
    if len(shape) != x.ndim or any(s < d for s, d in zip(shape, x.shape)):
        raise DimensionError(f"cannot pad {x.shape} to {tuple(shape)}")
    out = np.zeros(shape)
    region = tuple(slice(0, d) for d in x.shape)
    out[region] = x.data

    def _bw(g):
        _accumulate(x, g[region])

    return _node(out, (x,), _bw)


def take_rows(table: Tensor, ids, frozen_row: int | None = None) -> Tensor:
    """Gather rows of a 2-D table: ``out[..., :] = table[ids[...], :]``.

    ``frozen_row`` never receives gradient (the padding row).
    """
    ids = np.asarray(ids, dtype=np.int64)

    def _bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        if frozen_row is not None:
            full[frozen_row] = 0.0
        _accumulate(table, full)

    return _node(table.data[ids], (table,), _bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product; leading axes of 3-D operands are treated as a batch."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def _bw(g):
        _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _node(a.data @ b.data, (a, b), _bw)


def normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Scale vectors along ``axis`` to unit length.

    Vectors with norm below ``NORM_FLOOR`` map to zero and pass no gradient,
    so padded (all-zero) positions give neutral similarity.
    """
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))
    live = norm >= NORM_FLOOR
    safe = np.where(live, norm, 1.0)
    out = np.where(live, x.data / safe, 0.0)

    def _bw(g):
        proj = np.sum(out * g, axis=axis, keepdims=True)
        _accumulate(x, np.where(live, (g - out * proj) / safe, 0.0))

    return _node(out, (x,), _bw)


def cosine(u, v) -> Tensor:
    """Cosine similarity of two vectors; 0.0 when either norm is below 1e-12."""
    u, v = as_tensor(u), as_tensor(v)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionError(f"cosine needs equal-length vectors, got {u.shape} and {v.shape}")
    return clip(tsum(mul(normalize(u), normalize(v))), -1.0, 1.0)


def cosine_matrix(left, right) -> Tensor:
    """All-pairs cosine between rows: ``(..., n, d) x (..., m, d) -> (..., n, m)``."""
    left, right = as_tensor(left), as_tensor(right)
    if left.shape[-1] != right.shape[-1]:
        raise DimensionError(f"feature dims differ: {left.shape} vs {right.shape}")
    axes = tuple(range(right.ndim - 2)) + (right.ndim - 1, right.ndim - 2)
    sims = matmul(normalize(left), transpose(normalize(right), axes))
    return clip(sims, -1.0, 1.0)


# ---------------------------------------------------------------------------
# convolution and pooling


def _as_batched(x: Tensor, name: str) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim == 4:
        return x, False
    raise DimensionError(f"{name} expects C x H x W or N x C x H x W input, got {x.shape}")


def conv2d(x: Tensor, filters: Tensor, stride: int = 1) -> Tensor:
    """Valid (unpadded) cross-correlation.

    ``x``: ``C x H x W`` or ``N x C x H x W``; ``filters``: ``K x C x fh x fw``.
    Output spatial size is ``floor((H - fh) / stride) + 1`` per axis.
    """
    xb, squeeze = _as_batched(x, "conv2d")
    k, c, fh, fw = filters.shape
    n, cin, h, w = xb.shape
    if cin != c:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape}, filters {filters.shape}")
    if fh > h or fw > w:
        raise DimensionError(f"conv2d filter {fh}x{fw} larger than input {h}x{w}")
    ho, wo = (h - fh) // stride + 1, (w - fw) // stride + 1
    windows = sliding_window_view(xb.data, (fh, fw), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.einsum("nchwij,kcij->nkhw", windows, filters.data, optimize=True)

    def _bw(g):
        if filters.requires_grad:
            _accumulate(filters, np.einsum("nkhw,nchwij->kcij", g, windows, optimize=True))
        if xb.requires_grad:
            gx = np.zeros_like(xb.data)
            for i in range(fh):
                for j in range(fw):
                    gx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += np.einsum(
                        "nkhw,kc->nchw", g, filters.data[:, :, i, j])
            _accumulate(xb, gx)

    y = _node(out, (xb, filters), _bw)
    return reshape(y, y.shape[1:]) if squeeze else y


def maxpool2d(x: Tensor, size: int = 2, stride: int | None = None) -> Tensor:
    """Windowed maximum; the gradient goes to the first maximum in row-major order."""
    stride = size if stride is None else stride
    xb, squeeze = _as_batched(x, "maxpool2d")
    n, c, h, w = xb.shape
    if size > h or size > w:
        raise DimensionError(f"pool window {size} larger than input {h}x{w}")
    windows = sliding_window_view(xb.data, (size, size), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    flat = windows.reshape(n, c, ho, wo, size * size)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def _bw(g):
        rows = np.arange(ho)[:, None] * stride + arg // size
        cols = np.arange(wo)[None, :] * stride + arg % size
        gx = np.zeros_like(xb.data)
        ni, ci = np.meshgrid(np.arange(n), np.arange(c), indexing="ij")
        np.add.at(gx, (ni[:, :, None, None], ci[:, :, None, None], rows, cols), g)
        _accumulate(xb, gx)

    y = _node(out, (xb,), _bw)
    return reshape(y, y.shape[1:]) if squeeze else y


# ---------------------------------------------------------------------------
# loss


def softmax_crossentropy(logits: Tensor, labels) -> Tensor:
    """Mean binary softmax cross-entropy.

    ``logits`` is a length-2 vector (with a scalar ``labels``) or ``B x 2``.
    The gradient per example is ``softmax(logits) - onehot(label)``.
    """
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data
    if z.ndim != 2 or z.shape[1] != 2:
        raise DimensionError(f"expected two logits per example, got shape {logits.shape}")
    y = np.atleast_1d(np.asarray(labels))
    if y.shape[0] != z.shape[0]:
        raise DimensionError(f"{z.shape[0]} examples but {y.shape[0]} labels")
    if not np.all((y == 0) | (y == 1)):
        raise DomainError(f"labels must be 0 or 1, got {sorted(set(y.tolist()))}")
    y = y.astype(np.int64)
    top = z.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(z - top).sum(axis=1))
    losses = lse - z[np.arange(len(y)), y]
    probs = np.exp(z - lse[:, None])

    def _bw(g):
        d = probs.copy()
        d[np.arange(len(y)), y] -= 1.0
        d *= g / len(y)
        _accumulate(logits, d[0] if single else d)

    return _node(losses.mean(), (logits,), _bw)


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_parameter: str
    per_parameter_errors: dict[str, float] = field(default_factory=dict)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)


def grad_check(model_fn: Callable[[], Tensor], params: Mapping[str, Tensor],
               epsilon: float = 1e-5, max_entries: int | None = None,
               seed: int = 0) -> GradCheckReport:
    """Compare backprop gradients with central differences.

    ``model_fn`` must rebuild the graph from ``params`` on every call and
    return a scalar. With ``max_entries`` only a seeded random subset of each
    parameter's entries is perturbed.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise DomainError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    if not params:
        raise ContractError("grad_check needs at least one parameter")
    first, second = model_fn().item(), model_fn().item()
    if first != second:
        raise ContractError(f"model_fn is not deterministic ({first!r} != {second!r})")

    for p in params.values():
        p.zero_grad()
    backward(model_fn())
    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        analytic = p.grad.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for i in idx:
            saved = flat[i]
            flat[i] = saved + epsilon
            up = model_fn().item()
            flat[i] = saved - epsilon
            down = model_fn().item()
            flat[i] = saved
            numeric = (up - down) / (2.0 * epsilon)
            worst = max(worst, float(relative_error(analytic[i], numeric)))
        errors[name] = worst
    worst_name = max(errors, key=errors.get)
    return GradCheckReport(errors[worst_name], worst_name, errors)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-limit, limit, size=shape)
