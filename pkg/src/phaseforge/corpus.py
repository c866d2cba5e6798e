"""WAV directory ingestion and seeded synthetic corpora."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import FormatError, Waveform, read_wav, write_wav

PEAK = 0.95


@dataclass
class Corpus:
    entries: list[tuple[str, Waveform]] = field(default_factory=list)
    split: str = "train"

    def __post_init__(self):
        ids = [i for i, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("corpus ids must be unique")
        rates = {w.sample_rate for _, w in self.entries}
        if len(rates) > 1:
            raise FormatError(f"mixed sample rates: {sorted(rates)}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.entries]

    @property
    def sample_rate(self) -> int | None:
        return self.entries[0][1].sample_rate if self.entries else None

    def subset(self, ids, split: str) -> "Corpus":
        keep = set(ids)
        return Corpus([e for e in self.entries if e[0] in keep], split)


def load_dir(path: str | Path, sample_rate: int | None = None, split: str = "train") -> Corpus:
    """All ``*.wav`` files in ``path``, sorted by file name."""
    files = sorted(Path(path).glob("*.wav"), key=lambda p: p.name)
    entries = [(f.stem, read_wav(f)) for f in files]
    corpus = Corpus(entries, split)
    if sample_rate is not None and entries and corpus.sample_rate != sample_rate:
        raise FormatError(f"corpus is {corpus.sample_rate} Hz, expected {sample_rate} Hz")
    return corpus


def save_dir(corpus: Corpus, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for utt, wav in corpus:
        write_wav(path / f"{utt}.wav", wav)


def write_manifest(path: str | Path, corpus: Corpus) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in corpus.ids))


def read_manifest(path: str | Path) -> list[str]:
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]


def _harmonic(rng, t, sr):
    f0 = rng.uniform(80.0, 400.0)
    n_harm = int(rng.integers(3, 9))
    x = np.zeros_like(t)
    for h in range(1, n_harm + 1):
        if h * f0 >= sr / 2:
            break
        x += rng.uniform(0.1, 1.0) * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
    return x


def _chirp(rng, t, sr):
    f_start, f_end = rng.uniform(80.0, 400.0, size=2)
    inst = np.linspace(f_start, f_end, len(t))
    phase = 2 * np.pi * np.cumsum(inst) / sr + rng.uniform(0, 2 * np.pi)
    n_harm = int(rng.integers(3, 9))
    x = np.zeros_like(t)
    for h in range(1, n_harm + 1):
        if h * max(f_start, f_end) >= sr / 2:
            break
        x += rng.uniform(0.1, 1.0) * np.sin(h * phase)
    return x


def _noise_mix(rng, t, sr):
    x = _harmonic(rng, t, sr)
    return x + rng.uniform(0.05, 0.3) * np.sqrt(np.mean(x * x)) * rng.standard_normal(len(t))


KINDS = {"harmonic": _harmonic, "chirp": _chirp, "noise_mix": _noise_mix}


def gen_synthetic(n_utts: int, duration_s: float, seed: int = 0, kind: str = "harmonic",
                  sample_rate: int = 16000, noise_db: float = -30.0, split: str = "train") -> Corpus:
    """Seeded synthetic utterances, each peak-normalized to 0.95.

    ``harmonic``: 3-8 harmonics of a random f0 in [80, 400] Hz with random
    amplitudes and phases; every kind adds white noise ``noise_db`` below
    the clean signal power.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; choose from {sorted(KINDS)}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    entries = []
    for i in range(n_utts):
        x = KINDS[kind](rng, t, sample_rate)
        power = np.mean(x * x)
        x = x + np.sqrt(power * 10.0 ** (noise_db / 10.0)) * rng.standard_normal(n)
        x *= PEAK / np.max(np.abs(x))
        entries.append((f"{kind}_{seed}_{i:04d}", Waveform(x, sample_rate)))
    return Corpus(entries, split)


def split_corpus(corpus: Corpus, n_valid: int, n_test: int) -> dict[str, Corpus]:
    """Disjoint train/valid/test splits by position (ids are already seed-ordered)."""
    ids = corpus.ids
    n_train = len(ids) - n_valid - n_test
    if n_train < 0:
        raise ValueError("corpus too small for the requested splits")
    return {
        "train": corpus.subset(ids[:n_train], "train"),
        "valid": corpus.subset(ids[n_train : n_train + n_valid], "valid"),
        "test": corpus.subset(ids[n_train + n_valid :], "test"),
    }
