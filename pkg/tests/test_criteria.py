import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phaseforge import criteria as C
from phaseforge import tensor as T
from phaseforge.gradcheck import check
from phaseforge.model import PSD, PSDConfig

TOL = 1e-4
# The anti-wrapped losses are piecewise linear: a wider step is exact between kinks
# and keeps roundoff below the 1e-8 denominator floor where sign terms cancel.
H_PL = 1e-3


def loop_diff(x, kind):
    """Index-loop reference for the phase difference operators (zero outside)."""
    f, n = x.shape
    get = lambda i, j: x[i, j] if 0 <= i < f and 0 <= j < n else 0.0
    out = np.empty_like(x)
    for i in range(f):
        for j in range(n):
            out[i, j] = x[i, j] - {
                "ip": 0.0, "gd": get(i, j - 1), "iaf": get(i - 1, j),
                "tfidd": get(i + 1, j + 1), "tfrdd": get(i + 1, j - 1)}[kind]
    return out


def loop_aw(x):
    return np.abs(x - 2 * np.pi * np.round(x / (2 * np.pi)))


def phases(rng, shape):
    return rng.uniform(-np.pi, np.pi, shape)


@pytest.mark.parametrize("kind", ["ip", "gd", "iaf", "tfidd", "tfrdd"])
def test_tensor_losses_match_loop(rng, kind):
    p, t = phases(rng, (9, 13)), phases(rng, (9, 13))
    got = C._aw_loss(kind, p, t).item()
    assert got == pytest.approx(np.mean(loop_aw(loop_diff(p, kind) - loop_diff(t, kind))), abs=1e-12)


def test_tfid_is_sum_of_directions(rng):
    p, t = phases(rng, (6, 7)), phases(rng, (6, 7))
    ref = sum(np.mean(loop_aw(loop_diff(p, k) - loop_diff(t, k))) for k in ("tfidd", "tfrdd"))
    assert C.loss_tfid(p, t).item() == pytest.approx(ref, abs=1e-12)


def test_phase_loss_zero_on_identity_and_2pi_shift(rng):
    t = phases(rng, (5, 8))
    assert C.loss_phase(t, t).item() == 0.0
    assert C.loss_phase(t + 2 * np.pi, t).item() == pytest.approx(0.0, abs=1e-12)
    assert C.loss_ip(t + np.pi, t).item() == pytest.approx(np.pi)


def test_shape_mismatch():
    with pytest.raises(T.ShapeError):
        C.loss_ip(np.zeros((3, 4)), np.zeros((3, 5)))


def test_hinge_values():
    assert C.loss_adv_g(np.array([2.0, 0.0, -1.0])).item() == pytest.approx(1.0)
    assert C.loss_adv_d(np.array([2.0, 0.5]), np.array([-2.0, 0.0])).item() == pytest.approx(0.25 + 0.5)
    assert C.loss_adv_d(np.ones(4), -np.ones(4)).item() == 0.0


def test_fm_value():
    fake = [np.zeros((2, 2)), np.ones(3)]
    real = [np.ones((2, 2)), 3 * np.ones(3)]
    assert C.loss_fm(fake, real).item() == pytest.approx(1.0 + 4.0)
    with pytest.raises(T.ShapeError):
        C.loss_fm(fake, real[:1])


def test_loss_weights_validation():
    assert C.LossWeights() == C.LossWeights(100.0, 0.1)
    with pytest.raises(ValueError):
        C.LossWeights(lambda_p=-1)


# -- gradient checks (phases kept away from f_AW kinks) --------------------

@pytest.mark.parametrize("loss", [C.loss_ip, C.loss_gd, C.loss_iaf, C.loss_tfid, C.loss_phase])
def test_grad_phase_losses(rng, loss):
    target = phases(rng, (6, 7))
    pred = rng.standard_normal((6, 7))
    err = check(lambda p: loss(p, T.Tensor(target)), [pred], h=H_PL, n_probes=25, rng=rng)
    assert err < TOL


def test_grad_hinge(rng):
    real, fake = rng.standard_normal(30), rng.standard_normal(30)
    assert check(lambda s: C.loss_adv_g(s), [fake], n_probes=20, rng=rng) < TOL
    assert check(lambda r, f: C.loss_adv_d(r, f), [real, fake], n_probes=24, rng=rng) < TOL


def test_grad_fm(rng):
    real = [rng.standard_normal((3, 4)), rng.standard_normal(5)]
    err = check(lambda a, b: C.loss_fm([a, b], [T.Tensor(r) for r in real]),
                [rng.standard_normal((3, 4)), rng.standard_normal(5)], n_probes=20, rng=rng)
    assert err < TOL


def test_grad_generator_objective(rng):
    psd = PSD(PSDConfig(channels=3), seed=0)
    target = phases(rng, (1, 8, 9))

    def fn(p):
        total, _ = C.generator_objective(p, T.Tensor(target), psd, with_tfid=True)
        return total
    assert check(fn, [rng.standard_normal((1, 8, 9))], h=H_PL, n_probes=25, rng=rng) < TOL


def test_generator_objective_parts(rng):
    psd = PSD(PSDConfig(channels=3), seed=0)
    p, t = phases(rng, (1, 8, 9)), phases(rng, (1, 8, 9))
    total, parts = C.generator_objective(p, t, psd, C.LossWeights(100, 0.1), with_tfid=True)
    ref = 100 * parts["loss_p"] + 0.1 * (parts["loss_adv_g"] + parts["loss_fm"]) + parts["loss_tfid"]
    assert total.item() == pytest.approx(ref, rel=1e-12)
    total0, parts0 = C.generator_objective(p, t, psd, C.LossWeights(1, 0.0))
    assert total0.item() == pytest.approx(parts0["loss_p"]) and parts0["loss_tfid"] == 0.0


# -- metrics -----------------------------------------------------------------

@pytest.mark.parametrize("kind", ["ip", "gd", "iaf", "tfidd", "tfrdd"])
def test_pd_matches_loop(rng, kind):
    p, t = phases(rng, (11, 7)), phases(rng, (11, 7))
    e = loop_aw(loop_diff(t, kind) - loop_diff(p, kind))
    ref = np.mean([np.sqrt(np.mean(e[:, j] ** 2)) for j in range(7)])
    assert C.pd_metric(p, t, kind) == pytest.approx(ref, abs=1e-12)


def test_pd_random_phase_monte_carlo(rng):
    p, t = phases(rng, (4000, 16)), phases(rng, (4000, 16))
    assert C.pd_metric(p, t, "ip") == pytest.approx(np.pi / np.sqrt(3), rel=0.02)


def test_pd_tfid_is_mean_of_directions(rng):
    p, t = phases(rng, (5, 6)), phases(rng, (5, 6))
    assert C.pd_metric(p, t, "tfid") == pytest.approx(
        0.5 * (C.pd_metric(p, t, "tfidd") + C.pd_metric(p, t, "tfrdd")))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(-3, 3)), arrays(np.float64, (4, 5), elements=st.floats(-3, 3)),
       st.integers(-3, 3))
def test_pd_symmetric_and_2pi_invariant(p, t, k):
    for kind in C.PD_KINDS:
        a = C.pd_metric(p, t, kind)
        assert a == pytest.approx(C.pd_metric(t, p, kind), abs=1e-12)
        assert a == pytest.approx(C.pd_metric(p + 2 * np.pi * k, t, kind), abs=1e-9)
        assert C.pd_metric(t, t, kind) == 0.0


def test_snr_closed_form(rng):
    x = rng.standard_normal(1000)
    assert C.snr_db(x, x) == 120.0
    assert C.snr_db(0.9 * x, x) == pytest.approx(20.0)
    assert C.snr_db(np.zeros(5), np.zeros(5)) == 120.0
    assert C.snr_db(np.ones(5), np.zeros(5)) == -120.0
    assert C.snr_db(np.concatenate([x, [5.0]]), x) == 120.0


def test_lsd(rng):
    a = rng.uniform(0.1, 1, (5, 6))
    assert C.lsd_db(a, a) == 0.0
    assert C.lsd_db(10 * a, a) == pytest.approx(20.0)


def test_report(tmp_path, rng):
    p, t = phases(rng, (5, 6)), phases(rng, (5, 6))
    good = C.evaluate(t, t, np.ones(4), np.ones(4))
    assert (good.pd_ip, good.pd_tfid, good.snr_db) == (0.0, 0.0, 120.0)
    bad = C.evaluate(p, t)
    C.write_report(tmp_path / "r.csv", [("a", good), ("b", bad), ("c", "missing reference")])
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == C.REPORT_HEADER
    assert rows[3][1].startswith("error") and rows[-1][0] == "summary"
    assert float(rows[-1][1]) == pytest.approx(bad.pd_ip / 2, abs=1e-6)


def test_loop_oracle_hand_values():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(loop_diff(x, "tfidd"), [[-3, 2], [3, 4]])
    np.testing.assert_array_equal(loop_diff(x, "tfrdd"), [[1, -1], [3, 4]])
