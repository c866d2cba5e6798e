import csv

import numpy as np
import pytest

from phaseforge.cli import main, parse_method
from phaseforge.spectral import read_spectrum, read_wav

TINY_CFG = """\
epochs=1
batch_size=2
segment_samples=512
n_blocks=1
channels=8
block_hidden=16
kernel=3
psd_channels=4
"""


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(root / "data"), "--n-utts", "4", "--duration", "0.1",
                 "--n-test", "2"]) == 0
    (root / "tiny.cfg").write_text(TINY_CFG)
    assert main(["train", "--stage", "prior", "--config", str(root / "tiny.cfg"),
                 "--data", str(root / "data" / "train"), "--out", str(root / "prior")]) == 0
    assert main(["train", "--stage", "refine", "--config", str(root / "tiny.cfg"),
                 "--data", str(root / "data" / "train"), "--out", str(root / "refine"),
                 "--prior-ckpt", str(root / "prior" / "prior.ckpt")]) == 0
    return root


def wav_in(work, split="test"):
    return sorted((work / "data" / split).glob("*.wav"))[0]


def test_parse_method():
    assert parse_method("gla") == ("gla", 0)
    assert parse_method("prior") == ("neural", 0)
    assert parse_method("sp-nspp") == ("neural", 1)
    assert parse_method("sp-nspp-iter-3") == ("neural", 3)


def test_unknown_method_exit_2(work, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["reconstruct", "--method", "griffin", "--in", str(wav_in(work)), "--out", "x.wav"])
    assert exc.value.code == 2


def test_gen_data_layout(work):
    assert len(list((work / "data" / "train").glob("*.wav"))) == 2
    assert len((work / "data" / "test.txt").read_text().split()) == 2


def test_train_outputs(work):
    assert (work / "prior" / "prior.ckpt").exists() and (work / "prior" / "train_log.csv").exists()
    assert (work / "refine" / "refine.ckpt").exists()


def test_refine_without_prior(work, capsys):
    code = main(["train", "--stage", "refine", "--config", str(work / "tiny.cfg"),
                 "--data", str(work / "data" / "train"), "--out", str(work / "bad")])
    assert code == 1 and "--prior-ckpt" in capsys.readouterr().err


def test_train_repeat_identical(work):
    out = work / "prior_again"
    assert main(["train", "--stage", "prior", "--config", str(work / "tiny.cfg"),
                 "--data", str(work / "data" / "train"), "--out", str(out)]) == 0
    assert (out / "prior.ckpt").read_bytes() == (work / "prior" / "prior.ckpt").read_bytes()


def test_gla_reconstruct_with_ref(work, tmp_path, capsys):
    src = wav_in(work)
    assert main(["reconstruct", "--method", "gla", "--iters", "5", "--in", str(src),
                 "--out", str(tmp_path / "g.wav"), "--ref", str(src)]) == 0
    assert "snr_db=" in capsys.readouterr().out
    assert len(read_wav(tmp_path / "g.wav")) == len(read_wav(src))


def test_iter0_equals_prior(work, tmp_path):
    src, prior, refine = wav_in(work), work / "prior" / "prior.ckpt", work / "refine" / "refine.ckpt"
    main(["reconstruct", "--method", "prior", "--ckpt", str(prior), "--in", str(src), "--out", str(tmp_path / "a.wav")])
    main(["reconstruct", "--method", "sp-nspp-iter-0", "--ckpt", str(prior), "--ckpt", str(refine),
          "--in", str(src), "--out", str(tmp_path / "b.wav")])
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()
    assert main(["reconstruct", "--method", "sp-nspp", "--ckpt", str(prior), "--ckpt", str(refine),
                 "--in", str(src), "--out", str(tmp_path / "c.wav")]) == 0


def test_neural_needs_checkpoints(work, tmp_path):
    prior = work / "prior" / "prior.ckpt"
    assert main(["reconstruct", "--method", "sp-nspp", "--ckpt", str(prior),
                 "--in", str(wav_in(work)), "--out", str(tmp_path / "x.wav")]) == 1
    assert main(["reconstruct", "--method", "prior",
                 "--in", str(wav_in(work)), "--out", str(tmp_path / "x.wav")]) == 1


def test_spectrum_input(work, tmp_path):
    src = wav_in(work)
    cfg = tmp_path / "a.cfg"
    cfg.write_text("win_len=128\nhop_len=32\nfft_size=128\n")
    assert main(["analyze", "--in", str(src), "--out", str(tmp_path / "s.pfspec"), "--config", str(cfg)]) == 0
    assert read_spectrum(tmp_path / "s.pfspec").log_amp.shape[1] == 65
    prior = work / "prior" / "prior.ckpt"
    assert main(["reconstruct", "--method", "prior", "--ckpt", str(prior), "--in", str(tmp_path / "s.pfspec"),
                 "--out", str(tmp_path / "s.wav")]) == 0
    # a spectrum analysed with other settings does not fit the model
    assert main(["analyze", "--in", str(src), "--out", str(tmp_path / "p.pfspec")]) == 0
    assert main(["reconstruct", "--method", "prior", "--ckpt", str(prior), "--in", str(tmp_path / "p.pfspec"),
                 "--out", str(tmp_path / "p.wav")]) == 1


def test_eval_identity(work, tmp_path):
    data = str(work / "data" / "test")
    assert main(["eval", "--method", "oracle", "--data", data, "--ref-data", data,
                 "--out", str(tmp_path / "r.csv")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert rows[-1]["utt"] == "summary" and len(rows) == 3
    for row in rows:
        assert float(row["pd_ip"]) == 0.0 and float(row["pd_tfid"]) == 0.0
        assert float(row["snr_db"]) == 120.0


def test_eval_missing_reference(work, tmp_path):
    code = main(["eval", "--method", "gla", "--iters", "2", "--data", str(work / "data" / "test"),
                 "--ref-data", str(work / "data" / "train"), "--out", str(tmp_path / "r.csv")])
    assert code == 1
    assert "error" in (tmp_path / "r.csv").read_text()


def test_eval_independent_of_threads(work, tmp_path, monkeypatch):
    data = str(work / "data" / "test")
    outs = []
    for n in ("1", "3"):
        monkeypatch.setenv("PHASEFORGE_THREADS", n)
        out = tmp_path / f"r{n}.csv"
        assert main(["eval", "--method", "raar", "--iters", "5", "--init", "random_phase", "--seed", "4",
                     "--data", data, "--ref-data", data, "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_info(work, capsys):
    assert main(["info", str(work / "prior" / "prior.ckpt")]) == 0
    assert "stage=prior" in capsys.readouterr().out
    assert main(["info", str(wav_in(work))]) == 0
    assert "sample_rate=16000" in capsys.readouterr().out
