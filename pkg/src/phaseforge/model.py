"""Phase predictors (prior construction and refinement) and the phase discriminator.

Layout: a log-amplitude spectrum (F frames x N bins) is read as a length-F
sequence with N channels, so every 1-D convolution runs along time.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .nn import GRN, Conv1d, Conv2d, LayerNorm, Linear, Module
from .tensor import Tensor


@dataclass(frozen=True)
class BackboneConfig:
    n_blocks: int = 8
    channels: int = 256
    block_hidden: int = 512
    kernel: int = 7
    bins: int = 513
    conditioned: bool = False

    def __post_init__(self):
        if self.kernel % 2 == 0:
            raise ValueError("kernel must be odd")

    def as_refiner(self) -> "BackboneConfig":
        return BackboneConfig(**{**asdict(self), "conditioned": True})


DESK_BACKBONE = BackboneConfig(n_blocks=2, channels=32, block_hidden=64, kernel=7, bins=65)


@dataclass(frozen=True)
class PSDConfig:
    channels: int = 64
    kernels: tuple = ((7, 5), (5, 3), (5, 3), (3, 3), (3, 3))
    strides: tuple = ((2, 2), (2, 2), (2, 2), (1, 1), (1, 1))
    out_kernel: tuple = (3, 3)
    slope: float = 0.1


class ConvNeXtV2Block(Module):
    def __init__(self, channels, hidden, kernel, rng):
        self.dwconv = Conv1d(channels, channels, kernel, rng, groups=channels)
        self.norm = LayerNorm(channels)
        self.pw1 = Linear(channels, hidden, rng)
        self.grn = GRN(hidden)
        self.pw2 = Linear(hidden, channels, rng)

    def forward(self, x):
        h = self.norm(self.dwconv(x))
        h = self.grn(T.gelu(self.pw1(h)))
        return x + self.pw2(h)


class PEA(Module):
    """Two parallel convolutions read as real and imaginary parts, then atan2."""

    def __init__(self, channels, bins, kernel, rng):
        self.conv_r = Conv1d(channels, bins, kernel, rng)
        self.conv_i = Conv1d(channels, bins, kernel, rng)

    def forward(self, h):
        return T.atan2(self.conv_i(h), self.conv_r(h))


class PhaseModel(Module):
    def __init__(self, cfg: BackboneConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        n_in = 2 * cfg.bins if cfg.conditioned else cfg.bins
        self.stem = Conv1d(n_in, cfg.channels, cfg.kernel, rng)
        self.stem_norm = LayerNorm(cfg.channels)
        self.blocks = [ConvNeXtV2Block(cfg.channels, cfg.block_hidden, cfg.kernel, rng)
                       for _ in range(cfg.n_blocks)]
        self.head_norm = LayerNorm(cfg.channels)
        self.head_linear = Linear(cfg.channels, cfg.channels, rng)
        self.pea = PEA(cfg.channels, cfg.bins, cfg.kernel, rng)

    def _check(self, x):
        if x.shape[-1] != self.cfg.bins:
            raise T.ShapeError(f"expected {self.cfg.bins} bins, got {x.shape[-1]}")

    def forward(self, log_amp, prior_phase=None):
        """(B, F, N) or (F, N) in, same shape out."""
        log_amp = T.as_tensor(log_amp)
        self._check(log_amp)
        squeeze = log_amp.ndim == 2
        if squeeze:
            log_amp = T.reshape(log_amp, (1,) + log_amp.shape)
        x = log_amp
        if self.cfg.conditioned:
            if prior_phase is None:
                raise ValueError("refinement model needs a prior phase")
            prior_phase = T.as_tensor(prior_phase)
            if prior_phase.shape[-2:] != log_amp.shape[-2:]:
                raise T.ShapeError(f"prior phase {prior_phase.shape} vs amplitude {log_amp.shape}")
            if prior_phase.ndim == 2:
                prior_phase = T.reshape(prior_phase, (1,) + prior_phase.shape)
            x = T.concat([log_amp, prior_phase], axis=-1)
        h = self.stem_norm(self.stem(x))
        for block in self.blocks:
            h = block(h)
        h = self.head_linear(self.head_norm(h))
        out = self.pea(h)
        return T.reshape(out, out.shape[1:]) if squeeze else out


class PSD(Module):
    """Phase spectrum discriminator over a (B, F, N) phase map."""

    def __init__(self, cfg: PSDConfig = PSDConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.convs = []
        c_in = 1
        for kernel, stride in zip(cfg.kernels, cfg.strides):
            self.convs.append(Conv2d(c_in, cfg.channels, kernel, rng, stride=stride))
            c_in = cfg.channels
        self.out = Conv2d(c_in, 1, cfg.out_kernel, rng)

    def forward(self, phase):
        phase = T.as_tensor(phase)
        if phase.ndim == 2:
            phase = T.reshape(phase, (1,) + phase.shape)
        h = T.reshape(phase, phase.shape + (1,))
        feats = []
        for conv in self.convs:
            h = T.leaky_relu(conv(h), self.cfg.slope)
            feats.append(h)
        return self.out(h), feats


def score_shape(n_frames: int, n_bins: int, cfg: PSDConfig = PSDConfig()) -> tuple[int, int]:
    """Spatial size of the PSD output, from convolution arithmetic."""
    h, w = n_frames, n_bins
    for (kh, kw), (sh, sw) in zip(cfg.kernels, cfg.strides):
        h = (h + 2 * (kh // 2) - kh) // sh + 1
        w = (w + 2 * (kw // 2) - kw) // sw + 1
    kh, kw = cfg.out_kernel
    return h + 2 * (kh // 2) - kh + 1, w + 2 * (kw // 2) - kw + 1


def prior_forward(model: PhaseModel, log_amp):
    return model(log_amp)


def refine_forward(model: PhaseModel, log_amp, prior_phase):
    return model(log_amp, prior_phase)


def iterate(log_amp, models: list[PhaseModel], k: int):
    """Prior prediction followed by ``k`` refinement passes.

    ``models[0]`` is the prior model, ``models[i]`` the i-th refiner.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > len(models) - 1:
        raise ValueError(f"k={k} needs {k} refinement models, only {len(models) - 1} given")
    phase = models[0](log_amp)
    for model in models[1 : k + 1]:
        phase = model(log_amp, phase)
    return phase


def predict(log_amp: np.ndarray, models: list[PhaseModel], k: int | None = None) -> np.ndarray:
    """Numpy-in, numpy-out inference without a tape."""
    k = len(models) - 1 if k is None else k
    with T.no_grad():
        return iterate(np.asarray(log_amp, dtype=np.float64), models, k).data


def total_params(models: list[Module]) -> int:
    return sum(m.n_params() for m in models)


# -- key=value config files ---------------------------------------------------

def write_config(path: str | Path, cfg) -> None:
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in fields(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def coerce(cls, values: dict[str, str]):
    """Build a flat dataclass from string values, using field defaults for types."""
    kwargs = {}
    defaults = cls()
    known = {f.name for f in fields(cls)}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"unknown {cls.__name__} key {key!r}")
        default = getattr(defaults, key)
        if isinstance(default, bool):
            kwargs[key] = raw.lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            kwargs[key] = int(raw)
        elif isinstance(default, float):
            kwargs[key] = float(raw)
        else:
            kwargs[key] = raw
    return cls(**kwargs)


def read_backbone_config(path: str | Path) -> BackboneConfig:
    return coerce(BackboneConfig, parse_kv(Path(path).read_text()))
