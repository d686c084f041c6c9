import math
import wave

import numpy as np
import pytest

from faag import Waveform, concat, distortion_db, loudness_db, read_wav, split, write_wav
from faag.errors import (
    InvalidInputError,
    LengthMismatchError,
    RateMismatchError,
    SilentAudioError,
    UnsupportedFormatError,
)


def _write_raw_int16(path, values, rate=16000, channels=1):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(values, dtype="<i2").tobytes())


def test_waveform_validation():
    with pytest.raises(InvalidInputError):
        Waveform(np.array([]))
    with pytest.raises(InvalidInputError):
        Waveform(np.array([1.5]))
    with pytest.raises(InvalidInputError):
        Waveform(np.array([0.0]), sample_rate=0)
    with pytest.raises(InvalidInputError):
        Waveform(np.array([np.nan]))
    w = Waveform([0.0, 0.5])
    assert len(w) == 2 and w.sample_rate == 16000
    with pytest.raises(ValueError):
        w.samples[0] = 1.0  # read-only


def test_read_int16_scaling(tmp_path):
    path = tmp_path / "two.wav"
    _write_raw_int16(path, [0, 16384])
    w = read_wav(path)
    assert w.sample_rate == 16000
    assert w.samples.tolist() == [0.0, 0.5]


def test_read_rejects_stereo(tmp_path):
    path = tmp_path / "stereo.wav"
    _write_raw_int16(path, [0, 0, 1, 1], channels=2)
    with pytest.raises(UnsupportedFormatError):
        read_wav(path)


def test_read_rejects_8bit(tmp_path):
    path = tmp_path / "eight.wav"
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(1)
        wf.setframerate(16000)
        wf.writeframes(b"\x00\x10")
    with pytest.raises(UnsupportedFormatError):
        read_wav(path)


def test_read_missing_and_corrupt(tmp_path):
    with pytest.raises(OSError):
        read_wav(tmp_path / "nope.wav")
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"definitely not RIFF data")
    with pytest.raises(OSError):
        read_wav(bad)


def _written_int(sample, tmp_path):
    path = tmp_path / "one.wav"
    write_wav(Waveform([sample]), path)
    with wave.open(str(path), "rb") as wf:
        return int(np.frombuffer(wf.readframes(1), dtype="<i2")[0])


@pytest.mark.parametrize("sample,expected", [(1.0, 32767), (-1.0, -32767), (0.25, 8192)])
def test_write_scaling(sample, expected, tmp_path):
    assert _written_int(sample, tmp_path) == expected


def test_write_read_roundtrip_quantization_bound(tmp_path):
    rng = np.random.default_rng(0)
    w = Waveform(rng.uniform(-1, 1, 1000))
    path = tmp_path / "rt.wav"
    write_wav(w, path)
    back = read_wav(path)
    assert np.max(np.abs(back.samples - w.samples)) <= 1.0 / 32768.0


def test_read_write_identity_on_int16_grid(tmp_path):
    grid = np.arange(-32767, 32768, dtype="<i2")
    src = tmp_path / "grid.wav"
    _write_raw_int16(src, grid)
    dst = tmp_path / "grid2.wav"
    write_wav(read_wav(src), dst)
    with wave.open(str(dst), "rb") as wf:
        back = np.frombuffer(wf.readframes(wf.getnframes()), dtype="<i2")
    assert np.array_equal(back, grid)


def test_loudness_fixture_values():
    assert loudness_db(Waveform([0.0, 1.0, 0.0])) == pytest.approx(20 * math.log10(32767), abs=1e-9)
    assert loudness_db(Waveform([0.0, 1.0, 0.0])) == pytest.approx(90.3087, abs=1e-4)
    assert loudness_db(Waveform([1.0 / 32767.0])) == pytest.approx(0.0, abs=1e-12)


def test_loudness_log_scaling_property():
    rng = np.random.default_rng(1)
    base = rng.uniform(-0.05, 0.05, 64)
    for k in (2.0, 5.0, 10.0):
        lo = loudness_db(Waveform(base))
        hi = loudness_db(Waveform(base * k))
        assert hi - lo == pytest.approx(20 * math.log10(k), abs=1e-9)


def test_loudness_silent_raises():
    with pytest.raises(SilentAudioError):
        loudness_db(Waveform([0.0, 0.0]))


def test_distortion_identity_and_doubling():
    w = Waveform([0.1, -0.4, 0.2])
    assert distortion_db(w, w) == 0.0
    doubled = Waveform([0.1, -0.8, 0.2])
    assert distortion_db(w, doubled) == pytest.approx(20 * math.log10(2), abs=1e-9)
    assert distortion_db(w, doubled) == pytest.approx(6.0206, abs=1e-4)


def test_distortion_mismatches():
    w = Waveform([0.1, 0.2])
    with pytest.raises(LengthMismatchError):
        distortion_db(w, Waveform([0.1]))
    with pytest.raises(RateMismatchError):
        distortion_db(w, Waveform([0.1, 0.2], sample_rate=8000))


def test_concat_and_split():
    a = Waveform([0.1, 0.2])
    b = Waveform([0.3])
    joined = concat(a, b)
    assert joined.samples.tolist() == [0.1, 0.2, 0.3]
    with pytest.raises(RateMismatchError):
        concat(a, Waveform([0.3], sample_rate=8000))
    # zero-length operands cannot exist per the waveform invariant
    with pytest.raises(InvalidInputError):
        Waveform(np.array([]))


def test_split_concat_bit_exact():
    rng = np.random.default_rng(2)
    w = Waveform(rng.uniform(-1, 1, 257))
    for index in (1, 100, 256):
        head, tail = split(w, index)
        assert len(head) + len(tail) == len(w)
        assert np.array_equal(concat(head, tail).samples, w.samples)
