"""A small reverse-mode automatic differentiation engine on top of numpy.

Every op records a closure that maps the output gradient to one gradient per
parent; :meth:`Tensor.backward` replays them in reverse topological order.
Everything is float64.
"""
from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

_grad_enabled = True


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        if self.data.size != 1:
            raise StateError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise StateError("loss is not attached to any tape (nothing requires grad)")
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
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else prev + pg

    # operator sugar
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return mul(self, -1.0)
    def __matmul__(self, o): return matmul(self, o)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims=False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape): return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def tabs(a):
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def square(a):
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.1):
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * scale, (a,), lambda g: (g * scale,))


_SQRT1_2 = np.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(a):
    """Exact (erf) GELU."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data * _SQRT1_2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
    return _make(a.data * cdf, (a,), lambda g: (g * (cdf + a.data * pdf),))


def atan2(y, x):
    """Principal angle of (x, y) in (-pi, pi]; (0, 0) maps to 0."""
    y, x = as_tensor(y), as_tensor(x)
    out = np.arctan2(y.data, x.data)
    out = np.where(out <= -np.pi, np.pi, out)
    r2 = np.asarray(x.data * x.data + y.data * y.data)
    safe = r2 > 1e-20
    inv = np.divide(1.0, r2, out=np.zeros_like(r2), where=safe)

    def backward(g):
        return (_unbroadcast(g * x.data * inv, y.shape),
                _unbroadcast(-g * y.data * inv, x.shape))

    return _make(out, (y, x), backward)


def round_detached(a):
    """Round to nearest integer; treated as a constant by the tape."""
    return Tensor(np.round(as_tensor(a).data))


# -- reductions and shape ---------------------------------------------------

def _expand(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,),
                 lambda g: (_expand(g, a.shape, axis, keepdims).copy(),))


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / max(out.size, 1)
    return _make(out, (a,), lambda g: (_expand(g, a.shape, axis, keepdims) / count,))


def l1(a):
    """Mean absolute value."""
    return mean(tabs(a))


def l2_norm(a, axis, keepdims=True):
    a = as_tensor(a)
    out = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=keepdims))

    def backward(g):
        o = out if keepdims else np.expand_dims(out, axis)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (gg * np.divide(a.data, o, out=np.zeros_like(a.data), where=o > 0),)

    return _make(out, (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes):
    a = as_tensor(a)
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, idx):
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.data[idx], (a,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def shift(a, axis, offset):
    """Move entries by ``offset`` along ``axis``, filling vacated slots with zeros.

    offset=-1 on the bin axis is a left column shift; offset=+1 is a right shift.
    """
    a = as_tensor(a)
    axis = axis % a.ndim

    def _move(d, k):
        out = np.zeros_like(d)
        n = d.shape[axis]
        if abs(k) >= n:
            return out
        src = [slice(None)] * d.ndim
        dst = [slice(None)] * d.ndim
        if k > 0:
            src[axis], dst[axis] = slice(0, n - k), slice(k, n)
        else:
            src[axis], dst[axis] = slice(-k, n), slice(0, n + k)
        out[tuple(dst)] = d[tuple(src)]
        return out

    return _make(_move(a.data, offset), (a,), lambda g: (_move(g, -offset),))


# -- linear algebra and layers ----------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward)


def linear(x, w, b=None):
    """x (..., in) @ w (in, out) + b (out,)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} vs weight {w.shape}")
    x2 = x.data.reshape(-1, w.shape[0])
    out = x2 @ w.data
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents = (x, w, b)

    def backward(g):
        g2 = g.reshape(-1, w.shape[1])
        grads = [(g2 @ w.data.T).reshape(x.shape), x2.T @ g2]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return _make(out.reshape(x.shape[:-1] + (w.shape[1],)), parents, backward)


def conv1d(x, w, b=None, groups=1, dilation=1):
    """Same-padded stride-1 convolution along time.

    x: (B, T, C_in) channels-last; w: (C_out, C_in // groups, K) with K odd.
    """
    x, w = as_tensor(x), as_tensor(w)
    if dilation != 1:
        raise ShapeError("only dilation=1 is supported")
    bsz, n_t, c_in = x.shape
    c_out, c_g, k = w.shape
    if c_in != c_g * groups or c_out % groups or k % 2 == 0:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with weight {w.shape}, groups={groups}")
    pad = (k - 1) // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (B, T, C_in, K)
    depthwise = groups == c_in and c_out == c_in
    if groups == 1:
        out = np.tensordot(win, w.data, axes=([2, 3], [1, 2]))
    elif depthwise:
        out = np.einsum("btck,ck->btc", win, w.data[:, 0, :])
    else:
        o_g = c_out // groups
        wg = w.data.reshape(groups, o_g, c_g, k)
        out = np.einsum("btgck,gock->btgo", win.reshape(bsz, n_t, groups, c_g, k), wg)
        out = out.reshape(bsz, n_t, c_out)
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents = (x, w, b)

    def backward(g):
        if groups == 1:
            gw = np.tensordot(g, win, axes=([0, 1], [0, 1]))  # (C_out, C_in, K)
            gwin = np.tensordot(g, w.data, axes=([2], [0]))  # (B, T, C_in, K)
        elif depthwise:
            gw = np.einsum("btc,btck->ck", g, win)[:, None, :]
            gwin = g[..., None] * w.data[:, 0, :]
        else:
            o_g = c_out // groups
            wg = w.data.reshape(groups, o_g, c_g, k)
            gg = g.reshape(bsz, n_t, groups, o_g)
            gw = np.einsum("btgo,btgck->gock", gg, win.reshape(bsz, n_t, groups, c_g, k))
            gw = gw.reshape(c_out, c_g, k)
            gwin = np.einsum("btgo,gock->btgck", gg, wg).reshape(bsz, n_t, c_in, k)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, j : j + n_t, :] += gwin[..., j]
        grads = [gxp[:, pad : pad + n_t, :], gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 1)))
        return grads

    return _make(out, parents, backward)


def conv2d(x, w, b=None, stride=(1, 1)):
    """Zero-padded (k // 2 per side) 2-D convolution.

    x: (B, H, W, C_in) channels-last; w: (C_out, C_in, KH, KW).
    """
    x, w = as_tensor(x), as_tensor(w)
    bsz, h, wd, c_in = x.shape
    c_out, c_w, kh, kw = w.shape
    if c_w != c_in:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with weight {w.shape}")
    sh, sw = stride
    ph, pw = kh // 2, kw // 2
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (wd + 2 * pw - kw) // sw + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: input {x.shape} too small for kernel {(kh, kw)}")
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw][:, :ho, :wo]
    # (kh, kw, C) column order keeps the gather contiguous along channels
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(bsz * ho * wo, kh * kw * c_in)
    w2 = w.data.transpose(0, 2, 3, 1).reshape(c_out, -1)
    out = (cols @ w2.T).reshape(bsz, ho, wo, c_out)
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents = (x, w, b)

    def backward(g):
        g2 = g.reshape(-1, c_out)
        gw = None
        if w.requires_grad:
            gw = (g2.T @ cols).reshape(c_out, kh, kw, c_in).transpose(0, 3, 1, 2)
        gx = None
        if x.requires_grad:
            gwin = (g2 @ w2).reshape(bsz, ho, wo, kh, kw, c_in)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw, :] += gwin[:, :, :, i, j]
            gx = gxp[:, ph : ph + h, pw : pw + wd, :]
        grads = [gx, gw]
        if b is not None:
            grads.append(g2.sum(axis=0) if b.requires_grad else None)
        return grads

    return _make(out, parents, backward)


def layer_norm(x, gamma, beta, eps=1e-6):
    """Normalize over the last (channel) axis."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.shape[-1] != gamma.shape[-1]:
        raise ShapeError(f"layer_norm: {x.shape} vs gamma {gamma.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gamma.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


def grn(x, gamma, beta, eps=1e-6):
    """Global response normalization over x of shape (B, T, C).

    Per-channel L2 norm across time, divided by its mean over channels.
    """
    x = as_tensor(x)
    g = l2_norm(x, axis=1, keepdims=True)
    n = g / (mean(g, axis=-1, keepdims=True) + eps)
    return gamma * (x * n) + beta + x
