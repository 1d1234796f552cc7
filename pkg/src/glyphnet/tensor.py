"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a float64 numpy array and remembers the operation that
produced it, so any scalar result can be differentiated with respect to
every tensor it depends on. The graph is implicit: each op closes over
its inputs and appends its gradient contribution to them, and
``backward()`` replays those closures in reverse topological order,
visiting each node exactly once. Gradients accumulate across calls; the
caller zeroes them between optimizer steps.

Every op accepts either a single instance (the shapes named below) or
the same shapes with one extra leading batch axis.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractViolation

LOG_FLOOR = 1e-12  # clamp for log() in the cross-entropy loss


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, _parents=(), _backward=None, _op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def _acc(self, g) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Populate grad = d(self)/d(node) for every node reachable from self."""
        if self.size != 1:
            raise ContractViolation(f"backward requires a scalar node, got shape {self.shape}")
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    def sum(self) -> "Tensor":
        return tsum(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r})"


def _toposort(root: Tensor) -> list[Tensor]:
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node in visited:
            continue
        visited.add(node)
        stack.append((node, True))
        for parent in node._parents:
            if parent not in visited:
                stack.append((parent, False))
    return order  # parents precede consumers


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# ----------------------------------------------------------------------
# Elementwise arithmetic (numpy broadcasting rules apply)
# ----------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data + b.data, (a, b), _op="add")

    def _backward():
        a._acc(_unbroadcast(out.grad, a.shape))
        b._acc(_unbroadcast(out.grad, b.shape))

    out._backward = _backward
    return out


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data - b.data, (a, b), _op="sub")

    def _backward():
        a._acc(_unbroadcast(out.grad, a.shape))
        b._acc(_unbroadcast(-out.grad, b.shape))

    out._backward = _backward
    return out


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = Tensor(a.data * b.data, (a, b), _op="mul")

    def _backward():
        a._acc(_unbroadcast(out.grad * b.data, a.shape))
        b._acc(_unbroadcast(out.grad * a.data, b.shape))

    out._backward = _backward
    return out


def tsum(a) -> Tensor:
    a = _lift(a)
    out = Tensor(a.data.sum(), (a,), _op="sum")

    def _backward():
        a._acc(np.full_like(a.data, float(out.grad)))

    out._backward = _backward
    return out


# ----------------------------------------------------------------------
# Activations
# ----------------------------------------------------------------------

def activation(x, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ContractViolation(f"unknown activation kind {kind!r}")


def relu(x) -> Tensor:
    x = _lift(x)
    out = Tensor(np.maximum(x.data, 0.0), (x,), _op="relu")

    def _backward():
        x._acc(out.grad * (x.data > 0.0))

    out._backward = _backward
    return out


def sigmoid(x) -> Tensor:
    x = _lift(x)
    # split by sign to avoid overflow in exp
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = Tensor(s, (x,), _op="sigmoid")

    def _backward():
        x._acc(out.grad * out.data * (1.0 - out.data))

    out._backward = _backward
    return out


def tanh(x) -> Tensor:
    x = _lift(x)
    out = Tensor(np.tanh(x.data), (x,), _op="tanh")

    def _backward():
        x._acc(out.grad * (1.0 - out.data ** 2))

    out._backward = _backward
    return out


# ----------------------------------------------------------------------
# Linear layers
# ----------------------------------------------------------------------

def affine(x, weight, bias=None) -> Tensor:
    """weight @ x (+ bias) for an N-vector, or batched as x @ weight.T."""
    x, weight = _lift(x), _lift(weight)
    if weight.ndim != 2:
        raise ContractViolation(f"affine weight must be 2-d, got {weight.shape}")
    m, n = weight.shape
    if x.ndim not in (1, 2) or x.shape[-1] != n:
        raise ContractViolation(f"affine input {x.shape} incompatible with weight {weight.shape}")
    if bias is not None:
        bias = _lift(bias)
        if bias.shape != (m,):
            raise ContractViolation(f"affine bias must have shape ({m},), got {bias.shape}")

    batched = x.ndim == 2
    y = x.data @ weight.data.T if batched else weight.data @ x.data
    if bias is not None:
        y = y + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor(y, parents, _op="affine")

    def _backward():
        g = out.grad
        if batched:
            x._acc(g @ weight.data)
            weight._acc(g.T @ x.data)
            if bias is not None:
                bias._acc(g.sum(axis=0))
        else:
            x._acc(weight.data.T @ g)
            weight._acc(np.outer(g, x.data))
            if bias is not None:
                bias._acc(g)

    out._backward = _backward
    return out


def concat(parts, axis: int = -1) -> Tensor:
    parts = [_lift(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), _op="concat")
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def _backward():
        for p, g in zip(parts, np.split(out.grad, cuts, axis=axis)):
            p._acc(g)

    out._backward = _backward
    return out


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    out = Tensor(x.data.reshape(shape), (x,), _op="reshape")

    def _backward():
        x._acc(out.grad.reshape(x.shape))

    out._backward = _backward
    return out


def gather_rows(src, ids) -> Tensor:
    """Select rows of src by integer index; gradients scatter-add back."""
    src = _lift(src)
    ids = np.asarray(ids, dtype=np.intp)
    if src.ndim < 1:
        raise ContractViolation("gather_rows needs at least 1-d source")
    if ids.size and (ids.min() < 0 or ids.max() >= src.shape[0]):
        raise ContractViolation(f"row index out of range for source with {src.shape[0]} rows")
    out = Tensor(src.data[ids], (src,), _op="gather")

    def _backward():
        if src.grad is None:
            src.grad = np.zeros_like(src.data)
        np.add.at(src.grad, ids, out.grad)

    out._backward = _backward
    return out


# ----------------------------------------------------------------------
# Convolution stack
# ----------------------------------------------------------------------

def conv2d(x, kernels, bias) -> Tensor:
    """Valid cross-correlation, stride 1: (C,H,W) -> (O,H-kh+1,W-kw+1)."""
    x, kernels, bias = _lift(x), _lift(kernels), _lift(bias)
    if kernels.ndim != 4:
        raise ContractViolation(f"kernels must be (O,C,kh,kw), got {kernels.shape}")
    o, c, kh, kw = kernels.shape
    if bias.shape != (o,):
        raise ContractViolation(f"bias must have shape ({o},), got {bias.shape}")
    single = x.ndim == 3
    if single:
        if x.shape[0] != c:
            raise ContractViolation(f"input channels {x.shape[0]} != kernel channels {c}")
    elif x.ndim != 4 or x.shape[1] != c:
        raise ContractViolation(f"input {x.shape} incompatible with kernels {kernels.shape}")
    xd = x.data[None] if single else x.data
    b, _, h, w = xd.shape
    if h < kh or w < kw:
        raise ContractViolation(f"input {h}x{w} smaller than kernel {kh}x{kw}")
    oh, ow = h - kh + 1, w - kw + 1

    windows = sliding_window_view(xd, (kh, kw), axis=(2, 3))  # (b,c,oh,ow,kh,kw)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * kh * kw)
    kmat = kernels.data.reshape(o, c * kh * kw)
    y = (cols @ kmat.T + bias.data).reshape(b, oh, ow, o).transpose(0, 3, 1, 2)
    out = Tensor(y[0] if single else y, (x, kernels, bias), _op="conv2d")

    def _backward():
        g = out.grad[None] if single else out.grad
        gmat = g.transpose(0, 2, 3, 1).reshape(b * oh * ow, o)
        kernels._acc((gmat.T @ cols).reshape(o, c, kh, kw))
        bias._acc(gmat.sum(axis=0))
        gcols = (gmat @ kmat).reshape(b, oh, ow, c, kh, kw)
        gx = np.zeros_like(xd)
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i : i + oh, j : j + ow] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        x._acc(gx[0] if single else gx)

    out._backward = _backward
    return out


def maxpool2d(x) -> Tensor:
    """2x2 max pooling, stride 2; odd trailing row/column dropped.

    The gradient routes to the first maximal cell of each window in
    row-major order.
    """
    x = _lift(x)
    single = x.ndim == 3
    if x.ndim not in (3, 4):
        raise ContractViolation(f"maxpool2d input must be (C,H,W) or (B,C,H,W), got {x.shape}")
    xd = x.data[None] if single else x.data
    b, c, h, w = xd.shape
    if h < 2 or w < 2:
        raise ContractViolation(f"maxpool2d needs spatial extents >= 2, got {h}x{w}")
    ph, pw = h // 2, w // 2

    win = (
        xd[:, :, : 2 * ph, : 2 * pw]
        .reshape(b, c, ph, 2, pw, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, ph, pw, 4)
    )
    idx = win.argmax(axis=-1)  # first max wins, windows flattened row-major
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    out = Tensor(y[0] if single else y, (x,), _op="maxpool2d")

    def _backward():
        g = out.grad[None] if single else out.grad
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(xd)
        gx[:, :, : 2 * ph, : 2 * pw] = (
            gwin.reshape(b, c, ph, pw, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * ph, 2 * pw)
        )
        x._acc(gx[0] if single else gx)

    out._backward = _backward
    return out


# ----------------------------------------------------------------------
# Classification head
# ----------------------------------------------------------------------

def softmax(logits) -> Tensor:
    """Max-shifted softmax along the last axis; rows sum to 1."""
    z = _lift(logits)
    if z.ndim not in (1, 2) or z.shape[-1] < 1:
        raise ContractViolation(f"softmax expects a logit vector or batch, got {z.shape}")
    shifted = z.data - z.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p, (z,), _op="softmax")

    def _backward():
        g = out.grad
        z._acc(p * (g - (g * p).sum(axis=-1, keepdims=True)))

    out._backward = _backward
    return out


def cross_entropy(pred, target) -> Tensor:
    """Mean negative log likelihood of one-hot targets.

    ``pred`` holds probability rows (normally the output of softmax) and
    ``target`` the matching one-hot rows. When pred comes straight from
    softmax, the two ops are fused on the way back: the gradient
    (p - t) / B flows directly into the logits.
    """
    pred = _lift(pred)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ContractViolation(f"target shape {t.shape} != prediction shape {pred.shape}")
    rows = t[None] if t.ndim == 1 else t
    if not (np.isin(rows, (0.0, 1.0)).all() and (rows.sum(axis=-1) == 1.0).all()):
        raise ContractViolation("targets must be one-hot rows")
    nbatch = rows.shape[0]

    p = pred.data
    loss = -(t * np.log(np.maximum(p, LOG_FLOOR))).sum() / nbatch

    if pred._op == "softmax":
        logits = pred._parents[0]
        out = Tensor(loss, (logits,), _op="cross_entropy")

        def _backward():
            logits._acc(float(out.grad) * (p - t) / nbatch)

    else:
        out = Tensor(loss, (pred,), _op="cross_entropy")

        def _backward():
            safe = np.maximum(p, LOG_FLOOR)
            pred._acc(float(out.grad) * (-(t / safe) * (p > LOG_FLOOR)) / nbatch)

    out._backward = _backward
    return out
