"""Training losses and evaluation metrics for phase prediction.

Losses take tensors (or arrays) and return scalar tensors on the tape;
metrics take numpy arrays and return floats.
"""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from . import phase_ops
from . import tensor as T
from .spectral import AMP_FLOOR

TWO_PI = 2.0 * np.pi
SNR_CLAMP_DB = 120.0


@dataclass(frozen=True)
class LossWeights:
    lambda_p: float = 100.0
    lambda_psd: float = 0.1

    def __post_init__(self):
        if self.lambda_p < 0 or self.lambda_psd < 0:
            raise ValueError("loss weights must be nonnegative")


def anti_wrap(x):
    x = T.as_tensor(x)
    return T.tabs(x - TWO_PI * T.round_detached(x / TWO_PI))


# Differentiable counterparts of phase_ops (rows = frames = axis -2, columns = bins = axis -1).
def _tfidd(x):
    return x - T.shift(T.shift(x, -2, -1), -1, -1)


def _tfrdd(x):
    return x - T.shift(T.shift(x, -2, -1), -1, 1)


TENSOR_DIFFERENCES = {
    "ip": lambda x: x,
    "gd": lambda x: x - T.shift(x, -1, 1),
    "iaf": lambda x: x - T.shift(x, -2, 1),
    "tfidd": _tfidd,
    "tfrdd": _tfrdd,
}


def _check_pair(pred, target):
    if pred.shape != target.shape:
        raise T.ShapeError(f"prediction {pred.shape} vs target {target.shape}")


def _aw_loss(kind, pred, target):
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    _check_pair(pred, target)
    op = TENSOR_DIFFERENCES[kind]
    return T.mean(anti_wrap(op(pred) - op(target)))


def loss_ip(pred, target):
    return _aw_loss("ip", pred, target)


def loss_gd(pred, target):
    return _aw_loss("gd", pred, target)


def loss_iaf(pred, target):
    return _aw_loss("iaf", pred, target)


def loss_phase(pred, target):
    return loss_ip(pred, target) + loss_gd(pred, target) + loss_iaf(pred, target)


def loss_tfid(pred, target):
    return _aw_loss("tfidd", pred, target) + _aw_loss("tfrdd", pred, target)


def loss_adv_g(scores_fake):
    return T.mean(T.relu(1.0 - T.as_tensor(scores_fake)))


def loss_adv_d(scores_real, scores_fake):
    return T.mean(T.relu(1.0 - T.as_tensor(scores_real))) + T.mean(T.relu(1.0 + T.as_tensor(scores_fake)))


def loss_fm(feats_fake, feats_real):
    if len(feats_fake) != len(feats_real):
        raise T.ShapeError("feature lists differ in length")
    total = T.Tensor(0.0)
    for f, r in zip(feats_fake, feats_real):
        f, r = T.as_tensor(f), T.as_tensor(r)
        _check_pair(f, r)
        total = total + T.mean(T.square(f - r))
    return total


def generator_objective(pred, target, psd, weights: LossWeights = LossWeights(), with_tfid=False):
    """Weighted phase + adversarial + feature-matching (+ TFID) loss.

    Returns the total and a dict of the detached components.
    """
    lp = loss_phase(pred, target)
    total = weights.lambda_p * lp
    parts = {"loss_p": lp.item()}
    if weights.lambda_psd > 0:
        score_fake, feats_fake = psd(pred)
        with T.no_grad():
            _, feats_real = psd(target)
        adv = loss_adv_g(score_fake)
        fm = loss_fm(feats_fake, feats_real)
        total = total + weights.lambda_psd * (adv + fm)
        parts.update(loss_adv_g=adv.item(), loss_fm=fm.item())
    else:
        parts.update(loss_adv_g=0.0, loss_fm=0.0)
    if with_tfid:
        tfid = loss_tfid(pred, target)
        total = total + tfid
        parts["loss_tfid"] = tfid.item()
    else:
        parts["loss_tfid"] = 0.0
    return total, parts


# -- metrics ---------------------------------------------------------------

PD_KINDS = ("ip", "gd", "iaf", "tfidd", "tfrdd")


def pd_metric(pred: np.ndarray, target: np.ndarray, kind: str) -> float:
    """Mean over bins of the per-bin RMS (over frames) anti-wrapped error."""
    kind = kind.lower()
    if kind == "tfid":
        return 0.5 * (pd_metric(pred, target, "tfidd") + pd_metric(pred, target, "tfrdd"))
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_pair(pred, target)
    op = phase_ops.DIFFERENCES[kind]
    err = phase_ops.anti_wrap(op(target) - op(pred))
    return float(np.mean(np.sqrt(np.mean(err * err, axis=-2)), axis=-1).mean())


def snr_db(estimate: np.ndarray, reference: np.ndarray) -> float:
    n = min(len(estimate), len(reference))
    x = np.asarray(reference[:n], dtype=np.float64)
    e = x - np.asarray(estimate[:n], dtype=np.float64)
    sig, noise = float(np.sum(x * x)), float(np.sum(e * e))
    if noise == 0.0:
        return SNR_CLAMP_DB
    if sig == 0.0:
        return -SNR_CLAMP_DB
    return float(np.clip(10.0 * math.log10(sig / noise), -SNR_CLAMP_DB, SNR_CLAMP_DB))


def lsd_db(amp_est: np.ndarray, amp_ref: np.ndarray) -> float:
    """Log-spectral distance between linear amplitude matrices (frames x bins)."""
    _check_pair(np.asarray(amp_est), np.asarray(amp_ref))
    ratio = 20.0 * np.log10(np.maximum(amp_est, AMP_FLOOR) / np.maximum(amp_ref, AMP_FLOOR))
    return float(np.mean(np.sqrt(np.mean(ratio * ratio, axis=-1))))


@dataclass
class MetricReport:
    pd_ip: float
    pd_gd: float
    pd_iaf: float
    pd_tfid: float
    snr_db: float
    lsd_db: float

    @classmethod
    def mean(cls, reports: list["MetricReport"]) -> "MetricReport":
        """Equal weight per utterance."""
        arr = np.array([astuple(r) for r in reports], dtype=np.float64)
        return cls(*arr.mean(axis=0).tolist())


def evaluate(pred_phase, ref_phase, est_wave=None, ref_wave=None, est_amp=None, ref_amp=None) -> MetricReport:
    pds = {k: pd_metric(pred_phase, ref_phase, k) for k in ("ip", "gd", "iaf", "tfid")}
    snr = snr_db(est_wave, ref_wave) if est_wave is not None else float("nan")
    lsd = lsd_db(est_amp, ref_amp) if est_amp is not None else float("nan")
    return MetricReport(pds["ip"], pds["gd"], pds["iaf"], pds["tfid"], snr, lsd)


REPORT_HEADER = ["utt"] + [f.name for f in fields(MetricReport)]


def write_report(path, rows: list[tuple[str, MetricReport | str]]) -> None:
    """One CSV row per utterance, then a ``summary`` row over the successful ones.

    A row whose value is a string is written as an error entry.
    """
    ok = [r for _, r in rows if isinstance(r, MetricReport)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for utt, rep in rows:
            if isinstance(rep, MetricReport):
                w.writerow([utt] + [f"{v:.6f}" for v in astuple(rep)])
            else:
                w.writerow([utt] + [f"error: {rep}"] + [""] * (len(REPORT_HEADER) - 2))
        if ok:
            w.writerow(["summary"] + [f"{v:.6f}" for v in astuple(MetricReport.mean(ok))])
