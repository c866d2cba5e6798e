"""Layers, AdamW and the PFCKPT parameter file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Tensor


class FormatError(ValueError):
    pass


class Module:
    """Parameters are Tensor attributes; submodules are Module attributes or lists of them."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def n_params(self):
        return sum(p.data.size for p in self.parameters())

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise FormatError(f"missing parameters: {sorted(missing)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise FormatError(f"{name}: shape {state[name].shape} != {p.shape}")
        for name, p in params.items():
            p.data = np.array(state[name], dtype=np.float64)

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _param(data):
    return Tensor(data, requires_grad=True)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return _param(rng.uniform(-bound, bound, size=shape))


class Linear(Module):
    def __init__(self, n_in, n_out, rng):
        self.weight = _uniform(rng, n_in, (n_in, n_out))
        self.bias = _uniform(rng, n_in, (n_out,))

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, rng, groups=1):
        self.groups = groups
        fan_in = (c_in // groups) * kernel
        self.weight = _uniform(rng, fan_in, (c_out, c_in // groups, kernel))
        self.bias = _uniform(rng, fan_in, (c_out,))

    def forward(self, x):
        return T.conv1d(x, self.weight, self.bias, groups=self.groups)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=(1, 1)):
        self.stride = tuple(stride)
        fan_in = c_in * kernel[0] * kernel[1]
        self.weight = _uniform(rng, fan_in, (c_out, c_in) + tuple(kernel))
        self.bias = _uniform(rng, fan_in, (c_out,))

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride)


class LayerNorm(Module):
    def __init__(self, channels, eps=1e-6):
        self.eps = eps
        self.gamma = _param(np.ones(channels))
        self.beta = _param(np.zeros(channels))

    def forward(self, x):
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class GRN(Module):
    def __init__(self, channels, eps=1e-6):
        self.eps = eps
        self.gamma = _param(np.zeros(channels))
        self.beta = _param(np.zeros(channels))

    def forward(self, x):
        return T.grn(x, self.gamma, self.beta, self.eps)


def zero_grad(params):
    for p in params:
        p.grad = None


@dataclass
class AdamW:
    """AdamW with bias correction; weight decay is applied before the adaptive step."""

    params: list
    lr: float = 2e-4
    beta1: float = 0.8
    beta2: float = 0.99
    eps: float = 1e-8
    weight_decay: float = 0.01
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        self.step_count = adamw_step(
            [p.data for p in self.params], grads, self.m, self.v, self.step_count,
            self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)

    def zero_grad(self):
        zero_grad(self.params)


def adamw_step(params, grads, m, v, step, lr, beta1=0.8, beta2=0.99, eps=1e-8, weight_decay=0.01):
    """Update numpy buffers in place and return the new step count."""
    step += 1
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    for p, g, mi, vi in zip(params, grads, m, v):
        if weight_decay:
            p -= lr * weight_decay * p
        mi *= beta1
        mi += (1.0 - beta1) * g
        vi *= beta2
        vi += (1.0 - beta2) * g * g
        p -= lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)
    return step


# -- PFCKPT -------------------------------------------------------------------

CKPT_MAGIC = b"PFCKPT v1\n"


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    chunks = [CKPT_MAGIC, struct.pack("<Q", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_arrays(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a whole PFCKPT file; any defect raises before anything is returned."""
    buf = Path(path).read_bytes()
    if not buf.startswith(CKPT_MAGIC):
        raise FormatError(f"{path}: not a PFCKPT v1 file")
    pos = len(CKPT_MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise FormatError(f"{path}: truncated")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    (count,) = take("<Q")
    out = {}
    for _ in range(count):
        (n,) = take("<I")
        if pos + n > len(buf):
            raise FormatError(f"{path}: truncated")
        name = buf[pos : pos + n].decode("utf-8")
        pos += n
        (rank,) = take("<I")
        shape = take(f"<{rank}Q")
        size = int(np.prod(shape)) if rank else 1
        if pos + 8 * size > len(buf):
            raise FormatError(f"{path}: truncated")
        out[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes")
    return out


def optimizer_arrays(prefix: str, module: Module, opt: AdamW) -> dict[str, np.ndarray]:
    out = {}
    for (name, _), m, v in zip(module.named_parameters(), opt.m, opt.v):
        out[f"{prefix}{name}.m"] = m
        out[f"{prefix}{name}.v"] = v
    return out
