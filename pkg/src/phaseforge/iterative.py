"""Griffin-Lim and RAAR phase retrieval on a fixed target amplitude."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import AnalysisConfig, Spectrum, istft_complex, spectrum_from, stft_complex


@dataclass(frozen=True)
class IterConfig:
    algorithm: str = "gla"
    iterations: int = 100
    raar_beta: float = 0.9
    init: str = "zero_phase"
    seed: int | None = None

    def __post_init__(self):
        if self.algorithm not in ("gla", "raar"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not 0.0 < self.raar_beta <= 1.0:
            raise ValueError("raar_beta must lie in (0, 1]")
        if self.init not in ("zero_phase", "random_phase"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.init == "random_phase" and self.seed is None:
            raise ValueError("random_phase init needs an explicit seed")


@dataclass
class IterResult:
    spectrum: Spectrum
    residuals: list[float]


def project_consistency(c: np.ndarray, cfg: AnalysisConfig, length: int | None = None) -> np.ndarray:
    if length is None:
        length = (c.shape[0] - 1) * cfg.hop_len
    return stft_complex(istft_complex(c, cfg, length), cfg)


def project_amplitude(c: np.ndarray, amp: np.ndarray) -> np.ndarray:
    mag = np.abs(c)
    unit = np.ones_like(c)
    nz = mag > 0
    unit[nz] = c[nz] / mag[nz]
    return amp * unit


def consistency_residual(c: np.ndarray, cfg: AnalysisConfig, length: int | None = None) -> float:
    return float(np.linalg.norm(project_consistency(c, cfg, length) - c))


def initial_spectrum(amp: np.ndarray, cfg: IterConfig) -> np.ndarray:
    if cfg.init == "zero_phase":
        return amp.astype(np.complex128)
    rng = np.random.default_rng(cfg.seed)
    return amp * np.exp(1j * rng.uniform(-np.pi, np.pi, size=amp.shape))


def run_gla(amp: np.ndarray, acfg: AnalysisConfig, cfg: IterConfig = IterConfig(),
            length: int | None = None, init: np.ndarray | None = None) -> IterResult:
    """Alternate the consistency and amplitude projections.

    ``residuals[k]`` is the consistency residual of the k-th iterate.
    """
    amp = np.asarray(amp, dtype=np.float64)
    c = initial_spectrum(amp, cfg) if init is None else project_amplitude(init, amp)
    residuals = []
    for _ in range(cfg.iterations):
        pc = project_consistency(c, acfg, length)
        residuals.append(float(np.linalg.norm(pc - c)))
        c = project_amplitude(pc, amp)
    residuals.append(consistency_residual(c, acfg, length))
    return IterResult(spectrum_from(c, acfg, length), residuals)


def raar_step(c: np.ndarray, amp: np.ndarray, acfg: AnalysisConfig, beta: float,
              length: int | None = None) -> np.ndarray:
    pa = project_amplitude(c, amp)
    ra = 2.0 * pa - c
    rc_ra = 2.0 * project_consistency(ra, acfg, length) - ra
    return 0.5 * beta * (rc_ra + c) + (1.0 - beta) * pa


def run_raar(amp: np.ndarray, acfg: AnalysisConfig, cfg: IterConfig = IterConfig(algorithm="raar"),
             length: int | None = None, init: np.ndarray | None = None) -> IterResult:
    """Relaxed averaged alternating reflections, read out through P_A(P_C(c))."""
    amp = np.asarray(amp, dtype=np.float64)
    c = initial_spectrum(amp, cfg) if init is None else np.asarray(init, dtype=np.complex128)
    residuals = []
    for _ in range(cfg.iterations):
        residuals.append(consistency_residual(c, acfg, length))
        c = raar_step(c, amp, acfg, cfg.raar_beta, length)
    out = project_amplitude(project_consistency(c, acfg, length), amp)
    residuals.append(consistency_residual(out, acfg, length))
    return IterResult(spectrum_from(out, acfg, length), residuals)


def reconstruct(amp: np.ndarray, acfg: AnalysisConfig, cfg: IterConfig,
                length: int | None = None) -> IterResult:
    if cfg.algorithm == "gla":
        return run_gla(amp, acfg, cfg, length)
    return run_raar(amp, acfg, cfg, length)
