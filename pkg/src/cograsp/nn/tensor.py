"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` records the op that produced it; :meth:`Tensor.backward`
walks the graph in reverse topological order and accumulates gradients.
Everything runs in float64.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeMismatch",
    "DegenerateInput",
    "as_tensor",
    "concat",
    "stack",
    "linear",
    "layer_norm",
    "l2_normalize",
    "relu",
    "tanh",
    "sigmoid",
    "log_sigmoid",
    "softmax",
    "gru_sequence",
    "conv2d",
]


class ShapeMismatch(ValueError):
    pass


class DegenerateInput(ValueError):
    """An all-zero vector reached a normalization that needs a direction."""


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        # all parents are kept so they line up with the backward outputs; constants are skipped later
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _acc(self, g: np.ndarray):
        if not self.requires_grad:
            return
        if g.shape != self.data.shape:
            g = _unbroadcast(g, self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._acc(g)
                continue
            if not node._parents:
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                if pg.shape != p.data.shape:
                    pg = _unbroadcast(pg, p.data.shape)
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg

    # -- elementwise arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        return _binary(self, other, self.data + other.data, lambda g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        return _binary(self, other, self.data - other.data, lambda g: (g, -g))

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __neg__(self):
        return self * -1.0

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return _binary(self, other, a * b, lambda g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return _binary(self, other, a / b, lambda g: (g / b, -g * a / (b * b)))

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
        return _binary(self, other, a @ b, lambda g: (g @ b.T, a.T @ g))

    def __getitem__(self, idx):
        src_shape = self.data.shape

        def back(g):
            out = np.zeros(src_shape)
            np.add.at(out, idx, g)
            return (out,)

        return Tensor._make(self.data[idx], (self,), back)

    # -- reductions and shape ops ----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.data.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis, keepdims) * (1.0 / n)

    def reshape(self, *shape):
        src = self.data.shape
        return Tensor._make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(src),))

    @property
    def T(self):
        return Tensor._make(self.data.T, (self,), lambda g: (g.T,))

    def exp(self):
        e = np.exp(self.data)
        return Tensor._make(e, (self,), lambda g: (g * e,))

    def log(self):
        x = self.data
        return Tensor._make(np.log(x), (self,), lambda g: (g / x,))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _binary(a: Tensor, b: Tensor, data, back) -> Tensor:
    return Tensor._make(data, (a, b), back)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), back)


# -- layer kernels ---------------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` for ``x`` of shape (n, in) and ``w`` of shape (in, out)."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise ShapeMismatch(f"linear: input width {x.data.shape[-1]} vs weight {w.data.shape}")
    out = x @ w
    return out + b if b is not None else out


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    """Standardize each row over its last axis, then scale and shift."""
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = xc * inv
    n = xd.shape[-1]
    g = gamma.data if gamma is not None else 1.0
    parents = [x] + [t for t in (gamma, beta) if t is not None]

    def back(go):
        gxh = go * g
        gx = inv * (gxh - gxh.mean(axis=-1, keepdims=True)
                    - xh * (gxh * xh).sum(axis=-1, keepdims=True) / n)
        out = [gx]
        if gamma is not None:
            out.append((go * xh).reshape(-1, n).sum(axis=0))
        if beta is not None:
            out.append(go.reshape(-1, n).sum(axis=0))
        return tuple(out)

    y = xh * g + (beta.data if beta is not None else 0.0)
    return Tensor._make(y, tuple(parents), back)


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    norm = np.sqrt((xd * xd).sum(axis=axis, keepdims=True))
    if np.any(norm == 0.0):
        raise DegenerateInput("cannot normalize an all-zero vector")
    y = xd / norm

    def back(g):
        return ((g - y * (g * y).sum(axis=axis, keepdims=True)) / norm,)

    return Tensor._make(y, (x,), back)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._make(y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return Tensor._make(y, (x,), lambda g: (g * y * (1.0 - y),))


def log_sigmoid(x: Tensor) -> Tensor:
    """log(sigmoid(x)), stable for large |x|."""
    xd = x.data
    y = -np.logaddexp(0.0, -xd)
    return Tensor._make(y, (x,), lambda g: (g * _sigmoid(-xd),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._make(y, (x,), back)


def gru_sequence(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """Run a GRU over the rows of ``x`` (T, in); returns hidden states (T, H) in input order.

    Gates use the standard update/reset convention::

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        n = tanh(x Wn + r * (h Un) + bn)
        h' = (1 - z) * n + z * h

    with ``wx`` (in, 3H), ``wh`` (H, 3H) and ``b`` (3H,) holding the z, r, n
    blocks side by side. The initial state is zero.
    """
    xd = x.data
    if xd.ndim != 2 or xd.shape[0] == 0:
        raise ShapeMismatch("gru_sequence expects a nonempty (T, in) sequence")
    if wx.data.shape[0] != xd.shape[1]:
        raise ShapeMismatch(f"GRU input width {xd.shape[1]} vs weight {wx.data.shape}")
    H = wh.data.shape[0]
    T = xd.shape[0]
    order = range(T - 1, -1, -1) if reverse else range(T)
    xs = xd @ wx.data + b.data  # (T, 3H)
    Wh = wh.data
    hs = np.zeros((T, H))
    cache = {}
    h = np.zeros(H)
    for t in order:
        hu = h @ Wh
        z = _sigmoid(xs[t, :H] + hu[:H])
        r = _sigmoid(xs[t, H:2 * H] + hu[H:2 * H])
        un = hu[2 * H:]
        n = np.tanh(xs[t, 2 * H:] + r * un)
        cache[t] = (h, z, r, n, un)
        h = (1.0 - z) * n + z * h
        hs[t] = h

    def back(g):
        gxs = np.zeros_like(xs)
        gWh = np.zeros_like(Wh)
        gh = np.zeros(H)
        for t in reversed(list(order)):
            hp, z, r, n, un = cache[t]
            gh = gh + g[t]
            gz = gh * (hp - n)
            gn = gh * (1.0 - z)
            gan = gn * (1.0 - n * n)
            gr = gan * un
            gaz = gz * z * (1.0 - z)
            gar = gr * r * (1.0 - r)
            ghu = np.concatenate([gaz, gar, gan * r])
            gxs[t] = np.concatenate([gaz, gar, gan])
            gWh += np.outer(hp, ghu)
            gh = gh * z + Wh @ ghu
        return gxs @ wx.data.T, xd.T @ gxs, gWh, gxs.sum(axis=0)

    return Tensor._make(hs, (x, wx, wh, b), back)


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    C, Hh, Ww = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    Ho = (Hh + 2 * pad - k) // stride + 1
    Wo = (Ww + 2 * pad - k) // stride + 1
    i0 = np.repeat(np.arange(k), k)
    j0 = np.tile(np.arange(k), k)
    ii = i0[:, None] + stride * np.repeat(np.arange(Ho), Wo)[None, :]
    jj = j0[:, None] + stride * np.tile(np.arange(Wo), Ho)[None, :]
    cols = xp[:, ii, jj]  # (C, k*k, Ho*Wo)
    return cols.reshape(C * k * k, Ho * Wo), (ii, jj, xp.shape, Ho, Wo)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Single-image convolution: ``x`` (C, H, W), ``w`` (O, C, k, k), ``b`` (O,)."""
    O, C, k, k2 = w.data.shape
    if k != k2 or x.data.ndim != 3 or x.data.shape[0] != C:
        raise ShapeMismatch(f"conv2d input {x.data.shape} vs kernel {w.data.shape}")
    cols, (ii, jj, pshape, Ho, Wo) = _im2col(x.data, k, stride, pad)
    W2 = w.data.reshape(O, -1)
    out = (W2 @ cols + b.data[:, None]).reshape(O, Ho, Wo)

    def back(g):
        g2 = g.reshape(O, -1)
        gw = (g2 @ cols.T).reshape(w.data.shape)
        if not x.requires_grad:
            return None, gw, g2.sum(axis=1)
        gcols = (W2.T @ g2).reshape(C, k * k, Ho * Wo)
        gxp = np.zeros(pshape)
        for c in range(C):
            np.add.at(gxp[c], (ii, jj), gcols[c])
        gx = gxp[:, pad:pshape[1] - pad, pad:pshape[2] - pad] if pad else gxp
        return gx, gw, g2.sum(axis=1)

    return Tensor._make(out, (x, w, b), back)
