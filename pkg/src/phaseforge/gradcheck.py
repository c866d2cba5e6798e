"""Central finite-difference gradient checks for the tape."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check(fn, inputs: list[np.ndarray], h: float = 1e-5, n_probes: int | None = 20,
          rng: np.random.Generator | None = None, floor: float = 1e-8) -> float:
    """Max relative error between backprop and central differences.

    ``fn`` maps Tensors to a scalar Tensor. With ``n_probes`` only that many
    randomly chosen coordinates (across all inputs) are probed.
    """
    rng = rng or np.random.default_rng(0)
    tensors = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in inputs]
    fn(*tensors).backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad for t in tensors]

    coords = [(i, j) for i, t in enumerate(tensors) for j in range(t.data.size)]
    if n_probes is not None and n_probes < len(coords):
        pick = rng.choice(len(coords), size=n_probes, replace=False)
        coords = [coords[k] for k in pick]

    worst = 0.0
    for i, j in coords:
        base = [t.data.copy() for t in tensors]
        plus = [b.copy() for b in base]
        minus = [b.copy() for b in base]
        plus[i].flat[j] += h
        minus[i].flat[j] -= h
        f_plus = fn(*[Tensor(b) for b in plus]).item()
        f_minus = fn(*[Tensor(b) for b in minus]).item()
        numeric = (f_plus - f_minus) / (2.0 * h)
        err = float(rel_error(np.array(analytic[i].flat[j]), np.array(numeric), floor))
        worst = max(worst, err)
    return worst
