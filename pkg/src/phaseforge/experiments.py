"""Reusable experiment drivers behind ``scripts/`` and the acceptance suite."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import criteria, iterative
from .corpus import Corpus, gen_synthetic
from .model import predict
from .spectral import AnalysisConfig, istft, stft, synthesize
from .training import TrainConfig, train_stage

log = logging.getLogger(__name__)


@dataclass
class DeskResult:
    first_loss_p: float
    final_loss_p: float
    pd: dict = field(default_factory=dict)  # variant -> {"ip": .., "tfid": ..}
    seconds: float = 0.0
    histories: dict = field(default_factory=dict)


def heldout_pd(models, corpus: Corpus, acfg: AnalysisConfig, k: int) -> dict:
    """Mean PD_IP / PD_TFID over full held-out utterances."""
    ip, tfid = [], []
    for _, wav in corpus:
        spec = stft(wav, acfg)
        phase = predict(spec.log_amp, models, k)
        ip.append(criteria.pd_metric(phase, spec.phase, "ip"))
        tfid.append(criteria.pd_metric(phase, spec.phase, "tfid"))
    return {"ip": float(np.mean(ip)), "tfid": float(np.mean(tfid))}


def desk_run(cfg: TrainConfig = TrainConfig(), n_train: int = 64, n_heldout: int = 16,
             duration_s: float = 0.5, out_dir=None) -> DeskResult:
    """Prior stage, then refinement with and without the TFID loss.

    Training data is seed 0, held-out data seed 1; both harmonic.
    """
    t0 = time.perf_counter()
    train = gen_synthetic(n_train, duration_s, seed=0)
    heldout = gen_synthetic(n_heldout, duration_s, seed=1, split="test")
    sub = (lambda name: None) if out_dir is None else (lambda name: f"{out_dir}/{name}")

    prior_state = train_stage(cfg.replace(stage="prior"), train, out_dir=sub("prior"))
    prior = prior_state.generator
    tfid_state = train_stage(cfg.replace(stage="refine", with_tfid=True), train,
                             frozen_prior=prior, out_dir=sub("refine_tfid"))
    plain_state = train_stage(cfg.replace(stage="refine", with_tfid=False), train,
                              frozen_prior=prior, out_dir=sub("refine_plain"))

    acfg = cfg.analysis
    result = DeskResult(prior_state.history[0]["loss_p"], prior_state.history[-1]["loss_p"])
    result.pd = {
        "prior": heldout_pd([prior], heldout, acfg, 0),
        "refine_tfid": heldout_pd([prior, tfid_state.generator], heldout, acfg, 1),
        "refine_plain": heldout_pd([prior, plain_state.generator], heldout, acfg, 1),
    }
    result.histories = {"prior": prior_state.history, "refine_tfid": tfid_state.history,
                        "refine_plain": plain_state.history}
    result.seconds = time.perf_counter() - t0
    return result


@dataclass
class IterativeComparison:
    zero_iter_snr: list
    gla_snr: list
    raar_snr: list
    gla_residuals: list


def compare_iterative(corpus: Corpus, acfg: AnalysisConfig, iterations: int = 100,
                      beta: float = 0.9) -> IterativeComparison:
    """Zero-phase start for all three; SNR against the analysed waveform."""
    out = IterativeComparison([], [], [], [])
    for _, wav in corpus:
        spec = stft(wav, acfg)
        amp, n = spec.amplitude, len(wav)
        base = synthesize(spec.log_amp, np.zeros_like(spec.phase), acfg, n)
        gla = iterative.run_gla(amp, acfg, iterative.IterConfig("gla", iterations), n)
        raar = iterative.run_raar(amp, acfg, iterative.IterConfig("raar", iterations, raar_beta=beta), n)
        out.zero_iter_snr.append(criteria.snr_db(base.samples, wav.samples))
        out.gla_snr.append(criteria.snr_db(istft(gla.spectrum).samples, wav.samples))
        out.raar_snr.append(criteria.snr_db(istft(raar.spectrum).samples, wav.samples))
        out.gla_residuals.append(gla.residuals)
    return out
