import numpy as np
import pytest

from phaseforge.corpus import Corpus, gen_synthetic, load_dir, read_manifest, save_dir, split_corpus, write_manifest
from phaseforge.spectral import FormatError, Waveform, write_wav


def test_gen_deterministic_and_normalized():
    a, b = gen_synthetic(4, 0.1, seed=5), gen_synthetic(4, 0.1, seed=5)
    assert a.ids == b.ids
    for (_, x), (_, y) in zip(a, b):
        np.testing.assert_array_equal(x.samples, y.samples)
        assert np.max(np.abs(x.samples)) == pytest.approx(0.95)
    assert not np.array_equal(a.entries[0][1].samples, gen_synthetic(1, 0.1, seed=6).entries[0][1].samples)


@pytest.mark.parametrize("kind", ["harmonic", "chirp", "noise_mix"])
def test_gen_kinds(kind):
    c = gen_synthetic(2, 0.05, seed=1, kind=kind)
    assert len(c) == 2 and c.sample_rate == 16000
    assert all(len(w.samples) == 800 for _, w in c)


def test_gen_empty_and_bad_kind():
    assert len(gen_synthetic(0, 0.1)) == 0
    with pytest.raises(ValueError):
        gen_synthetic(1, 0.1, kind="speech")


def test_harmonic_spectrum_is_harmonic():
    x = gen_synthetic(1, 1.0, seed=2, noise_db=-120).entries[0][1].samples
    mag = np.abs(np.fft.rfft(x))
    peaks = [k for k in range(1, len(mag) - 1)
             if mag[k] > 0.05 * mag.max() and mag[k] >= mag[k - 1] and mag[k] >= mag[k + 1]]
    f0 = peaks[0]
    assert 79 <= f0 <= 401 and 3 <= len(peaks) <= 8
    assert all(abs(p / f0 - round(p / f0)) < 0.05 for p in peaks)


def test_dir_round_trip(tmp_path):
    c = gen_synthetic(3, 0.05, seed=0)
    save_dir(c, tmp_path)
    back = load_dir(tmp_path)
    assert back.ids == sorted(c.ids)
    for (_, x), (_, y) in zip(c, back):
        np.testing.assert_allclose(x.samples, y.samples, atol=1 / 32768)
    assert len(load_dir(tmp_path / "missing_is_empty")) == 0


def test_load_dir_sorted_and_rate_check(tmp_path):
    write_wav(tmp_path / "b.wav", Waveform(np.zeros(10), 8000))
    write_wav(tmp_path / "a.wav", Waveform(np.zeros(10), 8000))
    assert load_dir(tmp_path).ids == ["a", "b"]
    with pytest.raises(FormatError):
        load_dir(tmp_path, sample_rate=16000)
    write_wav(tmp_path / "c.wav", Waveform(np.zeros(10), 16000))
    with pytest.raises(FormatError):
        load_dir(tmp_path)


def test_duplicate_ids():
    w = Waveform(np.zeros(4), 16000)
    with pytest.raises(ValueError):
        Corpus([("x", w), ("x", w)])


def test_splits_disjoint_and_manifest(tmp_path):
    parts = split_corpus(gen_synthetic(10, 0.02, seed=0), 2, 3)
    ids = [set(p.ids) for p in parts.values()]
    assert [len(s) for s in ids] == [5, 2, 3]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    write_manifest(tmp_path / "test.txt", parts["test"])
    assert read_manifest(tmp_path / "test.txt") == parts["test"].ids
    with pytest.raises(ValueError):
        split_corpus(gen_synthetic(2, 0.02), 2, 1)
