"""Anti-wrapping function and the zero-padded shift/difference operators.

Matrices are laid out frames x bins (rows are frames, columns are bins). All
operators act on the last two axes, so leading batch axes are allowed.
Differentiable twins used by the training losses live in ``phaseforge.tensor``.
"""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def anti_wrap(x):
    """|x - 2*pi*round(x / 2*pi)|, in [0, pi]."""
    x = np.asarray(x, dtype=np.float64)
    return np.abs(x - TWO_PI * np.round(x / TWO_PI))


def shift_cl(x: np.ndarray) -> np.ndarray:
    """Columns moved one to the left; the last column becomes zero."""
    out = np.zeros_like(x)
    out[..., :, :-1] = x[..., :, 1:]
    return out


def shift_cr(x: np.ndarray) -> np.ndarray:
    """Columns moved one to the right; the first column becomes zero."""
    out = np.zeros_like(x)
    out[..., :, 1:] = x[..., :, :-1]
    return out


def shift_ru(x: np.ndarray) -> np.ndarray:
    """Rows moved one up; the last row becomes zero."""
    out = np.zeros_like(x)
    out[..., :-1, :] = x[..., 1:, :]
    return out


def shift_rd(x: np.ndarray) -> np.ndarray:
    """Rows moved one down; the first row becomes zero."""
    out = np.zeros_like(x)
    out[..., 1:, :] = x[..., :-1, :]
    return out


def diff_tfidd(x: np.ndarray) -> np.ndarray:
    return x - shift_cl(shift_ru(x))


def diff_tfrdd(x: np.ndarray) -> np.ndarray:
    return x - shift_cr(shift_ru(x))


def diff_freq(x: np.ndarray) -> np.ndarray:
    """Group-delay style difference along bins; column 0 keeps its raw value."""
    return x - shift_cr(x)


def diff_time(x: np.ndarray) -> np.ndarray:
    """Instantaneous-frequency style difference along frames; row 0 keeps its raw value."""
    return x - shift_rd(x)


def identity(x):
    return x


DIFFERENCES = {
    "ip": identity,
    "gd": diff_freq,
    "iaf": diff_time,
    "tfidd": diff_tfidd,
    "tfrdd": diff_tfrdd,
}
