"""Command-line entry point: ``phaseforge <command> ...``.

Every command is deterministic given ``--seed`` (default 0). BLAS is pinned to
one thread so reductions do not depend on the machine; ``PHASEFORGE_THREADS``
only sets how many files ``eval`` processes at once.
"""
from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import criteria, iterative
from . import tensor as T
from .corpus import gen_synthetic, load_dir, save_dir, split_corpus, write_manifest
from .model import PhaseModel, coerce, parse_kv, predict, total_params
from .nn import FormatError as CheckpointFormatError
from .spectral import (
    FULL_CONFIG, AnalysisConfig, ConfigError, FormatError, Spectrum, read_spectrum, read_wav, stft,
    synthesize, write_spectrum, write_wav,
)
from .training import TrainConfig, TrainingError, load_checkpoint, read_train_config, train_stage

log = logging.getLogger("phaseforge")

CLASSICAL = ("gla", "raar")
_ITER_RE = re.compile(r"sp-nspp-iter-(\d+)$")


class CliError(Exception):
    pass


def parse_method(text: str) -> tuple[str, int]:
    """``(family, k)``: family is gla, raar, oracle or neural; k counts refinement passes."""
    if text in CLASSICAL or text == "oracle":
        return text, 0
    if text == "prior":
        return "neural", 0
    if text == "sp-nspp":
        return "neural", 1
    m = _ITER_RE.match(text)
    if m:
        return "neural", int(m.group(1))
    raise argparse.ArgumentTypeError(
        f"unknown method {text!r} (choose gla, raar, oracle, prior, sp-nspp or sp-nspp-iter-K)")


def worker_count() -> int:
    raw = os.environ.get("PHASEFORGE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise CliError(f"PHASEFORGE_THREADS must be an integer, got {raw!r}") from exc


def read_analysis_config(path) -> AnalysisConfig:
    if path is None:
        return FULL_CONFIG
    return coerce(AnalysisConfig, parse_kv(Path(path).read_text()))


# -- reconstruction core ---------------------------------------------------------

class Reconstructor:
    """Phase from amplitude by one method; holds loaded models."""

    def __init__(self, method: str, ckpts=(), iters: int = 100, seed: int = 0, init: str = "zero_phase",
                 analysis: AnalysisConfig | None = None):
        self.family, self.k = parse_method(method)
        self.iter_cfg = None
        self.models: list[PhaseModel] = []
        if self.family == "neural":
            if len(ckpts) < self.k + 1:
                raise CliError(f"method {method} needs {self.k + 1} checkpoint(s) (prior first), got {len(ckpts)}")
            states = [load_checkpoint(p) for p in ckpts[: self.k + 1]]
            stages = [s.cfg.stage for s in states]
            if stages[0] != "prior" or any(s != "refine" for s in stages[1:]):
                raise CliError(f"checkpoint stages {stages}: expected prior then refine")
            configs = {s.cfg.analysis for s in states}
            if len(configs) != 1:
                raise CliError("checkpoints were trained with different analysis settings")
            self.analysis = configs.pop()
            self.models = [s.generator for s in states]
        else:
            self.analysis = analysis or FULL_CONFIG
            if self.family in CLASSICAL:
                self.iter_cfg = iterative.IterConfig(self.family, iters, init=init,
                                                     seed=seed if init == "random_phase" else None)

    def phase(self, spec: Spectrum) -> np.ndarray:
        if spec.config != self.analysis:
            raise ConfigError(f"input analysed with {spec.config}, method expects {self.analysis}")
        if self.family == "oracle":
            return spec.phase
        if self.family == "neural":
            return predict(spec.log_amp, self.models, self.k)
        return iterative.reconstruct(spec.amplitude, self.analysis, self.iter_cfg, spec.n_samples).spectrum.phase

    def run(self, spec: Spectrum):
        phase = self.phase(spec)
        return phase, synthesize(spec.log_amp, phase, self.analysis, spec.n_samples)


def load_input(path, analysis: AnalysisConfig) -> Spectrum:
    """A WAV file is analysed with ``analysis``; a PFSPEC file is taken as is."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(9)
    if head == b"PFSPEC v1":
        return read_spectrum(path)
    wav = read_wav(path)
    if wav.sample_rate != analysis.sample_rate:
        raise ConfigError(f"{path}: {wav.sample_rate} Hz, method expects {analysis.sample_rate} Hz")
    return stft(wav, analysis)


# -- commands ---------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    corpus = gen_synthetic(args.n_utts, args.duration, args.seed, args.kind, args.sample_rate)
    parts = split_corpus(corpus, args.n_valid, args.n_test)
    out = Path(args.out)
    for split, part in parts.items():
        if len(part) or split == "train":
            save_dir(part, out / split)
            write_manifest(out / f"{split}.txt", part)
    print(f"wrote {len(corpus)} utterances to {out}")
    return 0


def cmd_analyze(args) -> int:
    cfg = read_analysis_config(args.config)
    spec = load_input(args.input, cfg)
    write_spectrum(args.out, spec)
    print(f"{args.input}: {spec.n_frames} frames x {spec.log_amp.shape[1]} bins")
    return 0


def cmd_reconstruct(args) -> int:
    rec = Reconstructor(args.method, args.ckpt, args.iters, args.seed, args.init,
                        read_analysis_config(args.config))
    spec = load_input(args.input, rec.analysis)
    _, wav = rec.run(spec)
    write_wav(args.out, wav)
    if args.ref:
        ref = read_wav(args.ref)
        print(f"{args.input}: snr_db={criteria.snr_db(wav.samples, ref.samples):.4f}")
    return 0


def cmd_train(args) -> int:
    cfg = read_train_config(args.config) if args.config else TrainConfig()
    changes = {"stage": args.stage}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    cfg = cfg.replace(**changes)
    prior = None
    if cfg.stage == "refine":
        if not args.prior_ckpt:
            raise CliError("--stage refine requires --prior-ckpt")
        prior_state = load_checkpoint(args.prior_ckpt)
        if prior_state.cfg.stage != "prior":
            raise CliError(f"{args.prior_ckpt} is not a prior-stage checkpoint")
        prior = prior_state.generator
    corpus = load_dir(args.data, sample_rate=cfg.sample_rate)
    state = load_checkpoint(args.resume) if args.resume else None
    state = train_stage(cfg, corpus, frozen_prior=prior, state=state, out_dir=args.out)
    last = state.history[-1] if state.history else {}
    print(f"trained {cfg.stage} for {state.epoch} epochs; final loss_p={last.get('loss_p', float('nan')):.6f}")
    return 0


def _eval_one(rec: Reconstructor, path: Path, ref_dir: Path):
    ref_path = ref_dir / path.name
    if not ref_path.exists():
        return path.stem, f"missing reference {ref_path.name}"
    try:
        spec = load_input(path, rec.analysis)
        ref = stft(read_wav(ref_path), rec.analysis)
        phase, wav = rec.run(spec)
        if phase.shape != ref.phase.shape:
            return path.stem, f"shape {phase.shape} vs reference {ref.phase.shape}"
        est_amp = stft(wav, rec.analysis).amplitude
        return path.stem, criteria.evaluate(phase, ref.phase, wav.samples, read_wav(ref_path).samples,
                                            est_amp, ref.amplitude)
    except (FormatError, ConfigError, ValueError) as exc:
        return path.stem, str(exc)


def cmd_eval(args) -> int:
    rec = Reconstructor(args.method, args.ckpt, args.iters, args.seed, args.init,
                        read_analysis_config(args.config))
    files = sorted(Path(args.data).glob("*.wav"), key=lambda p: p.name)
    if not files:
        raise CliError(f"no WAV files in {args.data}")
    with T.no_grad(), ThreadPoolExecutor(worker_count()) as pool:
        rows = list(pool.map(lambda p: _eval_one(rec, p, Path(args.ref_data)), files))
    criteria.write_report(args.out, rows)
    failed = [(u, r) for u, r in rows if isinstance(r, str)]
    for utt, msg in failed:
        print(f"error: {utt}: {msg}", file=sys.stderr)
    ok = [r for _, r in rows if not isinstance(r, str)]
    if ok:
        s = criteria.MetricReport.mean(ok)
        print(f"{args.method}: n={len(ok)} pd_ip={s.pd_ip:.4f} pd_gd={s.pd_gd:.4f} pd_iaf={s.pd_iaf:.4f} "
              f"pd_tfid={s.pd_tfid:.4f} snr_db={s.snr_db:.4f} lsd_db={s.lsd_db:.4f}")
    return 1 if failed else 0


def cmd_info(args) -> int:
    path = Path(args.path)
    with open(path, "rb") as fh:
        head = fh.read(9)
    if head == b"PFCKPT v1":
        state = load_checkpoint(path)
        print(f"checkpoint: stage={state.cfg.stage} epoch={state.epoch} "
              f"generator_params={total_params([state.generator])} "
              f"discriminator_params={total_params([state.discriminator])}")
        for key, value in asdict(state.cfg).items():
            print(f"  {key}={value}")
    elif head == b"PFSPEC v1":
        spec = read_spectrum(path)
        print(f"spectrum: frames={spec.n_frames} bins={spec.log_amp.shape[1]} {spec.config}")
    else:
        wav = read_wav(path)
        print(f"wav: samples={len(wav)} sample_rate={wav.sample_rate} seconds={len(wav) / wav.sample_rate:.4f}")
    return 0


def _add_method_args(p):
    p.add_argument("--method", required=True, type=str)
    p.add_argument("--ckpt", action="append", default=[],
                   help="checkpoint path; repeat for prior then refiners")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", choices=("zero_phase", "random_phase"), default="zero_phase")
    p.add_argument("--config", help="analysis key=value file for classical methods")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phaseforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-utts", type=int, default=64)
    p.add_argument("--duration", type=float, default=0.5)
    p.add_argument("--kind", choices=("harmonic", "chirp", "noise_mix"), default="harmonic")
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--n-valid", type=int, default=0)
    p.add_argument("--n-test", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("analyze", help="WAV to PFSPEC")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reconstruct", help="rebuild a waveform from its amplitude")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ref")
    _add_method_args(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("train", help="train one stage")
    p.add_argument("--stage", choices=("prior", "refine"), required=True)
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--prior-ckpt")
    p.add_argument("--resume")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a method against reference WAVs")
    p.add_argument("--data", required=True)
    p.add_argument("--ref-data", required=True)
    p.add_argument("--out", required=True)
    _add_method_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("info", help="describe a checkpoint, spectrum or WAV file")
    p.add_argument("path")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "method", None) is not None:
        try:
            parse_method(args.method)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with threadpool_limits(1):
            return args.func(args)
    except (CliError, TrainingError, CheckpointFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
