"""Short-time Fourier analysis and synthesis in double precision.

Frames are centered: the signal is reflect-padded by ``win_len // 2`` on both
ends so frame ``t`` is centered on sample ``t * hop_len``. The inverse is the
exact least-squares inverse of that analysis, including the reflect padding,
so ``stft(istft(c))`` is an orthogonal projection onto consistent spectra.
"""
from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

AMP_FLOOR = 1e-9
LOG_AMP_FLOOR = float(np.log(AMP_FLOOR))
_DEN_CLAMP = 1e-12


class ConfigError(ValueError):
    pass


class LengthError(ValueError):
    pass


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    sample_rate: int = 16000
    win_len: int = 320
    hop_len: int = 80
    fft_size: int = 1024
    window: str = "hann"

    def __post_init__(self):
        if self.window != "hann":
            raise ConfigError(f"unsupported window {self.window!r}")
        if self.fft_size <= 0 or self.fft_size & (self.fft_size - 1):
            raise ConfigError("fft_size must be a power of two")
        if not 0 < self.hop_len <= self.win_len <= self.fft_size:
            raise ConfigError("need 0 < hop_len <= win_len <= fft_size")
        if self.win_len % self.hop_len or self.win_len // self.hop_len < 2:
            raise ConfigError("win_len must be an integer multiple (>= 2) of hop_len")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def pad(self) -> int:
        return self.win_len // 2

    def n_frames(self, n_samples: int) -> int:
        return 1 + n_samples // self.hop_len


# Full-band and desk-scale feature configurations.
FULL_CONFIG = AnalysisConfig()
DESK_CONFIG = AnalysisConfig(sample_rate=16000, win_len=128, hop_len=32, fft_size=128)


@dataclass
class Spectrum:
    log_amp: np.ndarray
    phase: np.ndarray
    config: AnalysisConfig
    # Number of waveform samples this spectrum was analysed from, if known.
    length: int | None = field(default=None)

    def __post_init__(self):
        self.log_amp = np.asarray(self.log_amp, dtype=np.float64)
        self.phase = np.asarray(self.phase, dtype=np.float64)
        if self.log_amp.shape != self.phase.shape or self.log_amp.ndim != 2:
            raise ConfigError("log_amp and phase must be matrices of equal shape")
        if self.log_amp.shape[1] != self.config.n_bins:
            raise ConfigError(
                f"spectrum has {self.log_amp.shape[1]} bins, config expects {self.config.n_bins}"
            )

    @property
    def n_frames(self) -> int:
        return self.log_amp.shape[0]

    @property
    def amplitude(self) -> np.ndarray:
        amp = np.exp(self.log_amp)
        amp[self.log_amp <= LOG_AMP_FLOOR] = 0.0
        return amp

    @property
    def n_samples(self) -> int:
        if self.length is not None:
            return self.length
        return (self.n_frames - 1) * self.config.hop_len


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self):
        return len(self.samples)


def hann_window(n: int) -> np.ndarray:
    # periodic (DFT-even) Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def wrap(phase: np.ndarray) -> np.ndarray:
    """Principal value in (-pi, pi]."""
    out = np.angle(np.exp(1j * np.asarray(phase, dtype=np.float64)))
    out[out <= -np.pi] = np.pi
    return out


def _frames(x: np.ndarray, cfg: AnalysisConfig) -> np.ndarray:
    padded = np.pad(x, cfg.pad, mode="reflect")
    n_frames = cfg.n_frames(len(x))
    idx = np.arange(cfg.win_len)[None, :] + cfg.hop_len * np.arange(n_frames)[:, None]
    return padded[idx]


def stft_complex(x: np.ndarray, cfg: AnalysisConfig) -> np.ndarray:
    """Complex one-sided STFT, shape (frames, bins)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigError("expected a mono 1-D signal")
    if len(x) < cfg.win_len:
        raise LengthError(f"signal of {len(x)} samples is shorter than one window ({cfg.win_len})")
    frames = _frames(x, cfg) * hann_window(cfg.win_len)
    return np.fft.rfft(frames, n=cfg.fft_size, axis=-1)


def istft_complex(c: np.ndarray, cfg: AnalysisConfig, length: int | None = None) -> np.ndarray:
    """Least-squares inverse of :func:`stft_complex`."""
    c = np.asarray(c)
    if c.ndim != 2 or c.shape[1] != cfg.n_bins:
        raise ConfigError(f"expected (frames, {cfg.n_bins}) spectrum, got {c.shape}")
    n_frames = c.shape[0]
    if length is None:
        length = (n_frames - 1) * cfg.hop_len
    if cfg.n_frames(length) != n_frames:
        raise ConfigError(f"{n_frames} frames cannot come from {length} samples")
    win = hann_window(cfg.win_len)
    frames = np.fft.irfft(c, n=cfg.fft_size, axis=-1)[:, : cfg.win_len] * win
    p = cfg.pad
    total = length + 2 * p
    num = np.zeros(total)
    den = np.zeros(total)
    w2 = win * win
    for t in range(n_frames):
        s = t * cfg.hop_len
        num[s : s + cfg.win_len] += frames[t]
        den[s : s + cfg.win_len] += w2
    # fold the reflect-padded margins back onto the samples they mirror
    num_x, den_x = num[p : p + length].copy(), den[p : p + length].copy()
    left = p - np.arange(p)
    right = length - 2 - np.arange(p)
    np.add.at(num_x, left, num[:p])
    np.add.at(den_x, left, den[:p])
    np.add.at(num_x, right, num[p + length :])
    np.add.at(den_x, right, den[p + length :])
    if np.any(den_x <= 0.0):
        raise ConfigError("window overlap leaves samples uncovered")
    return num_x / np.maximum(den_x, _DEN_CLAMP)


def spectrum_from(c: np.ndarray, cfg: AnalysisConfig, length: int | None = None) -> Spectrum:
    c = np.asarray(c, dtype=np.complex128)
    mag = np.abs(c)
    phase = np.angle(c)
    phase[phase <= -np.pi] = np.pi
    phase[mag == 0.0] = 0.0
    log_amp = np.log(np.maximum(mag, AMP_FLOOR))
    return Spectrum(log_amp, phase, cfg, length)


def complex_from(s: Spectrum) -> np.ndarray:
    return s.amplitude * np.exp(1j * s.phase)


def stft(x: Waveform | np.ndarray, cfg: AnalysisConfig) -> Spectrum:
    samples = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
    return spectrum_from(stft_complex(samples, cfg), cfg, len(samples))


def istft(s: Spectrum) -> Waveform:
    x = istft_complex(complex_from(s), s.config, s.n_samples)
    return Waveform(x, s.config.sample_rate)


def synthesize(log_amp: np.ndarray, phase: np.ndarray, cfg: AnalysisConfig,
               length: int | None = None) -> Waveform:
    """Waveform from an amplitude spectrum and a (predicted) phase spectrum."""
    return istft(Spectrum(log_amp, phase, cfg, length))


# -- file formats -----------------------------------------------------------

def read_wav(path: str | Path) -> Waveform:
    try:
        with wave.open(str(path), "rb") as fh:
            n_channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError, struct.error) as exc:
        raise FormatError(f"{path}: malformed WAV ({exc})") from exc
    if width != 2:
        raise FormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if n_channels != 1:
        raise FormatError(f"{path}: expected mono, got {n_channels} channels")
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    return Waveform(pcm / 32768.0, rate)


def write_wav(path: str | Path, x: Waveform) -> None:
    pcm = np.clip(np.round(x.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(x.sample_rate))
        fh.writeframes(pcm.tobytes())


SPEC_MAGIC = "PFSPEC v1"


def write_spectrum(path: str | Path, s: Spectrum) -> None:
    cfg = s.config
    n_frames, n_bins = s.log_amp.shape
    header = (f"{SPEC_MAGIC} {n_frames} {n_bins} {cfg.sample_rate} "
              f"{cfg.win_len} {cfg.hop_len} {cfg.fft_size}\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(s.log_amp.astype("<f8").tobytes())
        fh.write(s.phase.astype("<f8").tobytes())


def read_spectrum(path: str | Path) -> Spectrum:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        body = fh.read()
    if header[:2] != SPEC_MAGIC.split() or len(header) != 8:
        raise FormatError(f"{path}: not a PFSPEC v1 file")
    try:
        n_frames, n_bins, rate, win, hop, fft = map(int, header[2:])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PFSPEC header") from exc
    cfg = AnalysisConfig(rate, win, hop, fft)
    if n_bins != cfg.n_bins:
        raise FormatError(f"{path}: {n_bins} bins inconsistent with fft size {fft}")
    count = n_frames * n_bins
    if len(body) != 16 * count:
        raise FormatError(f"{path}: expected {16 * count} payload bytes, got {len(body)}")
    data = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return Spectrum(data[:count].reshape(n_frames, n_bins),
                    data[count:].reshape(n_frames, n_bins), cfg)
