"""Stage-wise adversarial training of the prior and refinement models."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import criteria
from . import tensor as T
from .corpus import Corpus
from .model import PSD, BackboneConfig, PhaseModel, PSDConfig, coerce, parse_kv
from .nn import AdamW, FormatError, load_arrays, save_arrays
from .spectral import AnalysisConfig, stft_complex, spectrum_from

log = logging.getLogger(__name__)

LOG_HEADER = "epoch,lr,loss_p,loss_tfid,loss_adv_g,loss_fm,loss_adv_d"
_LOG_KEYS = ("loss_p", "loss_tfid", "loss_adv_g", "loss_fm", "loss_adv_d")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Flat so it round-trips through a key=value file. Defaults are desk scale."""

    stage: str = "prior"
    epochs: int = 200
    batch_size: int = 4
    segment_samples: int = 2048
    lr0: float = 2e-4
    lr_decay_per_epoch: float = 0.999
    seed: int = 0
    lambda_p: float = 100.0
    lambda_psd: float = 0.1
    with_tfid: bool = True
    checkpoint_every: int = 0
    # features
    sample_rate: int = 16000
    win_len: int = 128
    hop_len: int = 32
    fft_size: int = 128
    # networks
    n_blocks: int = 2
    channels: int = 32
    block_hidden: int = 64
    kernel: int = 7
    psd_channels: int = 32

    def __post_init__(self):
        if self.stage not in ("prior", "refine"):
            raise ValueError(f"stage must be prior or refine, got {self.stage!r}")
        if self.segment_samples < self.win_len:
            raise ValueError("segment_samples must be >= win_len")
        if not 0.0 < self.lr_decay_per_epoch <= 1.0:
            raise ValueError("lr_decay_per_epoch must lie in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1 and epochs >= 0 required")

    @property
    def analysis(self) -> AnalysisConfig:
        return AnalysisConfig(self.sample_rate, self.win_len, self.hop_len, self.fft_size)

    @property
    def backbone(self) -> BackboneConfig:
        return BackboneConfig(self.n_blocks, self.channels, self.block_hidden, self.kernel,
                              self.analysis.n_bins, conditioned=self.stage == "refine")

    @property
    def psd(self) -> PSDConfig:
        return PSDConfig(channels=self.psd_channels)

    @property
    def weights(self) -> criteria.LossWeights:
        return criteria.LossWeights(self.lambda_p, self.lambda_psd)

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.lr_decay_per_epoch ** epoch

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **changes})


def read_train_config(path) -> TrainConfig:
    return coerce(TrainConfig, parse_kv(Path(path).read_text()))


def write_train_config(path, cfg: TrainConfig) -> None:
    Path(path).write_text("".join(f"{f.name}={getattr(cfg, f.name)}\n" for f in fields(cfg)))


@dataclass
class TrainState:
    cfg: TrainConfig
    generator: PhaseModel
    discriminator: PSD
    opt_g: AdamW
    opt_d: AdamW
    rng: np.random.Generator
    epoch: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, cfg: TrainConfig) -> "TrainState":
        gen = PhaseModel(cfg.backbone, seed=cfg.seed)
        disc = PSD(cfg.psd, seed=cfg.seed + 1)
        return cls(cfg, gen, disc,
                   AdamW(gen.parameters(), lr=cfg.lr0),
                   AdamW(disc.parameters(), lr=cfg.lr0),
                   np.random.default_rng(cfg.seed + 2))


def _segment(x: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if len(x) <= n:
        out = np.zeros(n)
        out[: len(x)] = x
        return out
    start = int(rng.integers(0, len(x) - n + 1))
    return x[start : start + n]


def features(x: np.ndarray, acfg: AnalysisConfig) -> tuple[np.ndarray, np.ndarray]:
    s = spectrum_from(stft_complex(x, acfg), acfg)
    return s.log_amp, s.phase


def _batch(waves, idx, cfg, rng):
    amps, phases = [], []
    for i in idx:
        a, p = features(_segment(waves[i], cfg.segment_samples, rng), cfg.analysis)
        amps.append(a)
        phases.append(p)
    return np.stack(amps), np.stack(phases)


def _check_finite(parts: dict, state: TrainState, step: int, out_dir):
    bad = {k: v for k, v in parts.items() if not np.isfinite(v)}
    if not bad:
        return
    msg = f"non-finite loss at epoch {state.epoch + 1}, step {step}: {bad}"
    if out_dir is not None:
        dump = Path(out_dir) / "nonfinite_dump.ckpt"
        save_checkpoint(state, dump)
        msg += f" (state dumped to {dump})"
    raise TrainingError(msg)


def train_epoch(state: TrainState, waves: list[np.ndarray], frozen_prior: PhaseModel | None = None,
                out_dir=None) -> dict:
    cfg = state.cfg
    gen, disc = state.generator, state.discriminator
    lr = cfg.lr_at(state.epoch)
    state.opt_g.lr = state.opt_d.lr = lr
    order = state.rng.permutation(len(waves))
    sums = dict.fromkeys(_LOG_KEYS, 0.0)
    n_steps = 0
    for start in range(0, len(order), cfg.batch_size):
        amp, phase = _batch(waves, order[start : start + cfg.batch_size], cfg, state.rng)
        if cfg.stage == "refine":
            with T.no_grad():
                prior = frozen_prior(amp).data
            fake = gen(amp, prior)
        else:
            fake = gen(amp)

        # discriminator step on detached generator output
        state.opt_d.zero_grad()
        score_real, _ = disc(phase)
        score_fake, _ = disc(fake.detach())
        loss_d = criteria.loss_adv_d(score_real, score_fake)
        loss_d.backward()
        state.opt_d.step()

        # generator step; the discriminator is held fixed
        state.opt_g.zero_grad()
        for p in disc.parameters():
            p.requires_grad = False
        try:
            total, parts = criteria.generator_objective(
                fake, phase, disc, cfg.weights, with_tfid=cfg.stage == "refine" and cfg.with_tfid)
            parts["loss_adv_d"] = loss_d.item()
            _check_finite({**parts, "total": total.item()}, state, n_steps, out_dir)
            total.backward()
        finally:
            for p in disc.parameters():
                p.requires_grad = True
        state.opt_g.step()

        for k in _LOG_KEYS:
            sums[k] += parts[k]
        n_steps += 1
    state.epoch += 1
    row = {"epoch": state.epoch, "lr": lr, **{k: v / max(n_steps, 1) for k, v in sums.items()}}
    state.history.append(row)
    return row


def format_log_row(row: dict) -> str:
    return f"{row['epoch']},{row['lr']:.10g}," + ",".join(f"{row[k]:.8f}" for k in _LOG_KEYS)


def train_stage(cfg: TrainConfig, corpus: Corpus, frozen_prior: PhaseModel | None = None,
                state: TrainState | None = None, out_dir=None, until_epoch: int | None = None) -> TrainState:
    """Alternating discriminator/generator training for one stage.

    Runs from ``state.epoch`` (0 for a fresh state) up to ``until_epoch``
    (default ``cfg.epochs``). With ``out_dir`` it writes ``train_log.csv``
    and checkpoints.
    """
    if cfg.stage == "refine" and frozen_prior is None:
        raise TrainingError("refine stage needs a frozen prior model")
    if len(corpus) == 0:
        raise TrainingError("empty training corpus")
    if frozen_prior is not None:
        frozen_prior.freeze()
    state = state or TrainState.fresh(cfg)
    waves = [w.samples for _, w in corpus]
    until = cfg.epochs if until_epoch is None else until_epoch
    log_fh = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train_log.csv"
        log_fh = open(log_path, "w")
        log_fh.write(LOG_HEADER + "\n")
        for row in state.history:
            log_fh.write(format_log_row(row) + "\n")
    try:
        while state.epoch < until:
            row = train_epoch(state, waves, frozen_prior, out_dir)
            log.info("stage=%s %s", cfg.stage, format_log_row(row))
            if log_fh:
                log_fh.write(format_log_row(row) + "\n")
                log_fh.flush()
                if cfg.checkpoint_every and state.epoch % cfg.checkpoint_every == 0:
                    save_checkpoint(state, out_dir / f"{cfg.stage}_e{state.epoch:05d}.ckpt")
        if out_dir is not None:
            save_checkpoint(state, out_dir / f"{cfg.stage}.ckpt")
            write_train_config(out_dir / f"{cfg.stage}.cfg", cfg)
    finally:
        if log_fh:
            log_fh.close()
    return state


# -- checkpoints -----------------------------------------------------------------

def _rng_words(rng: np.random.Generator) -> np.ndarray:
    st = rng.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise TrainingError("only PCG64 generators can be checkpointed")
    words = []
    for big in (st["state"]["state"], st["state"]["inc"]):
        words += [(big >> (32 * i)) & 0xFFFFFFFF for i in range(4)]
    words += [st["has_uint32"], st["uinteger"]]
    return np.array(words, dtype=np.float64)


def _rng_from_words(words: np.ndarray) -> np.random.Generator:
    w = [int(v) for v in words]
    state = sum(w[i] << (32 * i) for i in range(4))
    inc = sum(w[4 + i] << (32 * i) for i in range(4))
    bg = np.random.PCG64()
    bg.state = {"bit_generator": "PCG64", "state": {"state": state, "inc": inc},
                "has_uint32": w[8], "uinteger": w[9]}
    return np.random.Generator(bg)


_CFG_FIELDS = [f.name for f in fields(TrainConfig)]


def _encode_cfg(cfg: TrainConfig) -> np.ndarray:
    text = "".join(f"{k}={getattr(cfg, k)}\n" for k in _CFG_FIELDS)
    return np.frombuffer(text.encode("ascii"), dtype=np.uint8).astype(np.float64)


def save_checkpoint(state: TrainState, path) -> None:
    arrays = {}
    for prefix, module, opt in (("g.", state.generator, state.opt_g), ("d.", state.discriminator, state.opt_d)):
        for name, p in module.named_parameters():
            arrays[prefix + name] = p.data
        for (name, _), m, v in zip(module.named_parameters(), opt.m, opt.v):
            arrays[f"{prefix}{name}.m"] = m
            arrays[f"{prefix}{name}.v"] = v
    hist = np.array([[r["epoch"], r["lr"]] + [r[k] for k in _LOG_KEYS] for r in state.history],
                    dtype=np.float64).reshape(-1, 2 + len(_LOG_KEYS))
    arrays["meta.epoch"] = np.array(state.epoch, dtype=np.float64)
    arrays["meta.steps"] = np.array([state.opt_g.step_count, state.opt_d.step_count], dtype=np.float64)
    arrays["meta.rng"] = _rng_words(state.rng)
    arrays["meta.history"] = hist
    arrays["meta.config"] = _encode_cfg(state.cfg)
    save_arrays(path, arrays)


def load_checkpoint(path) -> TrainState:
    arrays = load_arrays(path)
    try:
        text = arrays["meta.config"].astype(np.uint8).tobytes().decode("ascii")
        cfg = coerce(TrainConfig, parse_kv(text))
        state = TrainState.fresh(cfg)
        for prefix, module, opt in (("g.", state.generator, state.opt_g),
                                    ("d.", state.discriminator, state.opt_d)):
            names = [n for n, _ in module.named_parameters()]
            module.load_state_dict({n: arrays[prefix + n] for n in names})
            opt.params = module.parameters()
            opt.m = [arrays[f"{prefix}{n}.m"].copy() for n in names]
            opt.v = [arrays[f"{prefix}{n}.v"].copy() for n in names]
        state.opt_g.step_count, state.opt_d.step_count = (int(v) for v in arrays["meta.steps"])
        state.epoch = int(arrays["meta.epoch"])
        state.rng = _rng_from_words(arrays["meta.rng"])
        state.history = [dict(zip(("epoch", "lr") + _LOG_KEYS, row.tolist())) for row in arrays["meta.history"]]
        for row in state.history:
            row["epoch"] = int(row["epoch"])
    except KeyError as exc:
        raise FormatError(f"{path}: missing entry {exc}") from exc
    return state


def load_generator(path) -> PhaseModel:
    return load_checkpoint(path).generator


resume = load_checkpoint
checkpoint = save_checkpoint
