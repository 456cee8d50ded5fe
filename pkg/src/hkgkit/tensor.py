"""Minimal reverse-mode autodiff over float64 numpy arrays.

Operations record onto the active :class:`Tape` (if any).  Outside a tape
they just compute values, which is what evaluation uses.  There is no
implicit broadcasting: operands must agree in shape, except for
:func:`scale` (a Python scalar) and the explicit :func:`expand`.

    with Tape() as tape:
        loss = tsum(mul(w, w))
    grads = backward(tape, loss, [w])
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


class Tape:
    """Execution-ordered record of differentiable operations."""

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def active(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None


class no_grad:
    """Suspend recording inside an active tape."""

    def __enter__(self):
        self._saved = Tape._stack[:]
        Tape._stack.clear()

    def __exit__(self, *exc):
        Tape._stack[:] = self._saved
        return False


def _record(out_data: np.ndarray, inputs: tuple[Tensor, ...], grad_fn: Callable) -> Tensor:
    tape = Tape.active()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=needs)
    if needs:
        tape.nodes.append((out, inputs, grad_fn))
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[int, np.ndarray]:
    """Reverse sweep over ``tape`` from scalar ``loss``.

    Every tensor in ``params`` gets its ``.grad`` set (zeros when the loss
    does not depend on it).  Returns ``{id(tensor): grad}`` for all leaves
    reached, plus the requested params.
    """
    if loss.data.size != 1 or loss.ndim not in (0, 1):
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = set()
    leaves: dict[int, Tensor] = {}
    for out, inputs, grad_fn in reversed(tape.nodes):
        produced.add(id(out))
        g = grads.pop(id(out), None)
        if g is None:
            continue
        in_grads = grad_fn(g)
        for t, gi in zip(inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            prev = grads.get(id(t))
            grads[id(t)] = gi if prev is None else prev + gi
            leaves.setdefault(id(t), t)
    result = {}
    for key, t in leaves.items():
        if key not in produced and key in grads:
            t.grad = grads[key]
            result[key] = t.grad
    if params is not None:
        for p in params:
            if id(p) not in result:
                p.grad = np.zeros_like(p.data)
                result[id(p)] = p.grad
    return result


# ---------------------------------------------------------------- elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _record(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _record(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record(a.data * c, (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _record(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)
    return _record(y, (a,), lambda g: (g * 0.5 / y,))


def reciprocal(a: Tensor) -> Tensor:
    y = 1.0 / a.data
    return _record(y, (a,), lambda g: (-g * y * y,))


def dropout(a: Tensor, mask: np.ndarray | None, keep_prob: float = 1.0) -> Tensor:
    """Inverted dropout with an externally drawn 0/1 ``mask``."""
    if mask is None:
        return a
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.shape:
        raise ShapeError(f"dropout: mask shape {mask.shape} vs input {a.shape}")
    m = mask / keep_prob
    return _record(a.data * m, (a,), lambda g: (g * m,))


# ---------------------------------------------------------------- shape ops

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _record(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def expand(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicit broadcast of ``a`` to ``shape`` (size-1 axes are repeated)."""
    shape = tuple(shape)
    if a.ndim != len(shape) or any(s not in (1, t) for s, t in zip(a.shape, shape)):
        raise ShapeError(f"expand: cannot expand {a.shape} to {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(a.shape, shape)) if s != t)
    return _record(np.broadcast_to(a.data, shape).copy(), (a,),
                   lambda g: (g.sum(axis=axes, keepdims=True),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
                i != ax and s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape))):
            raise ShapeError(f"concat: shape mismatch {tensors[0].shape} vs {t.shape} on axis {ax}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    return _record(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors),
                   lambda g: tuple(np.split(g, sizes, axis=ax)))


def take(a: Tensor, index, axis: int) -> Tensor:
    """Select a single position along ``axis`` (dropping that axis)."""
    ax = axis % a.ndim
    shape = a.shape

    def grad_fn(g):
        full = np.zeros(shape)
        sl = [slice(None)] * len(shape)
        sl[ax] = index
        full[tuple(sl)] = g
        return (full,)

    return _record(np.take(a.data, index, axis=ax), (a,), grad_fn)


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _record(ad @ bd, (a, b), grad_fn)


def gather(table: Tensor, idx) -> Tensor:
    """Row lookup: ``table[idx]`` with ``idx`` an integer array of any shape."""
    idx = np.asarray(idx, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"gather: table must be 2-D, got {table.shape}")
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather: index out of range for table with {n} rows")

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return _record(table.data[idx], (table,), grad_fn)


def segment_mean(x: Tensor, segments, num_segments: int) -> Tensor:
    """Average rows of ``x`` sharing a segment id; empty segments give 0."""
    seg = np.asarray(segments, dtype=np.int64)
    if x.ndim != 2 or seg.shape != (x.shape[0],):
        raise ShapeError(f"segment_mean: rows {x.shape} vs segment ids {seg.shape}")
    counts = np.bincount(seg, minlength=num_segments).astype(np.float64)
    out = np.zeros((num_segments, x.shape[1]))
    np.add.at(out, seg, x.data)
    denom = np.maximum(counts, 1.0)[:, None]
    out /= denom

    def grad_fn(g):
        return ((g / denom)[seg],)

    return _record(out, (x,), grad_fn)


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    """Sum over ``axis`` (keeping it as size 1) or over everything."""
    shape = a.shape
    if axis is None:
        return _record(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))
    ax = axis % a.ndim
    return _record(a.data.sum(axis=ax, keepdims=True), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a: Tensor) -> Tensor:
    return scale(tsum(a), 1.0 / a.data.size)


# ---------------------------------------------------------------- normalisation

def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _record(y, (a,), grad_fn)


def log_softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def grad_fn(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _record(y, (a,), grad_fn)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis, then apply per-feature ``gain`` and ``bias``."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} vs features {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    out = xhat * gd + bias.data
    red = tuple(range(x.ndim - 1))

    def grad_fn(g):
        gx_hat = g * gd
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return _record(out, (x, gain, bias), grad_fn)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` with ``b`` of shape ``x.shape[-1:]`` (explicit row broadcast)."""
    if b.shape != x.shape[-1:]:
        raise ShapeError(f"add_bias: bias {b.shape} vs input {x.shape}")
    red = tuple(range(x.ndim - 1))
    return _record(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=red)))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w (+ b)`` for ``x`` of any rank >= 2, via a flattened matmul."""
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1])) if x.ndim != 2 else x
    out = matmul(flat, w)
    if b is not None:
        out = add_bias(out, b)
    return reshape(out, lead + (w.shape[1],)) if x.ndim != 2 else out
