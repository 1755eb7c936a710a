import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soundcollage.audio_io import (AudioClip, UnsupportedCodecError, WavFormatError, WavTruncatedError, mixdown,
                                   normalize, quantize_pcm16, read_wav, resample, write_wav)


def _write_raw(path, payload: bytes, tag=1, channels=1, rate=16000, bits=16, declared=None):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * block, block, bits)
    size = len(payload) if declared is None else declared
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", size) + payload
    path.write_bytes(b"RIFF" + struct.pack("<I", 4 + len(body)) + body)


def test_pcm16_scaling(tmp_path):
    p = tmp_path / "a.wav"
    _write_raw(p, np.array([0, 16384, -16384], "<i2").tobytes())
    np.testing.assert_array_equal(read_wav(p).samples, [0.0, 0.5, -0.5])


def test_stereo_mixdown(tmp_path):
    p = tmp_path / "s.wav"
    frames = np.array([[1.0, 0.0], [1.0, 0.0]], "<f4")
    _write_raw(p, frames.tobytes(), tag=3, channels=2, bits=32)
    np.testing.assert_array_equal(read_wav(p).samples, [0.5, 0.5])


def test_mixdown_is_exact_mean():
    rng = np.random.default_rng(3)
    frames = rng.uniform(-1, 1, (50, 3))
    np.testing.assert_array_equal(mixdown(frames), frames.mean(axis=1))


def test_float32_read(tmp_path):
    p = tmp_path / "f.wav"
    vals = np.array([0.25, -0.75, 1.0], "<f4")
    _write_raw(p, vals.tobytes(), tag=3, bits=32)
    np.testing.assert_allclose(read_wav(p).samples, vals)


def test_roundtrip_100_buffers(tmp_path):
    rng = np.random.default_rng(0)
    for k in range(100):
        x = rng.uniform(-1, 1, rng.integers(1, 400))
        p = tmp_path / f"r{k}.wav"
        write_wav(AudioClip(x, 16000), p)
        y = read_wav(p).samples
        assert np.max(np.abs(x - y)) <= 1 / 32768 + 1e-12


def test_write_then_read_then_write_is_byte_identical(tmp_path):
    rng = np.random.default_rng(1)
    a, b = tmp_path / "a.wav", tmp_path / "b.wav"
    write_wav(AudioClip(rng.uniform(-1, 1, 999), 8000), a)
    write_wav(read_wav(a), b)
    assert a.read_bytes() == b.read_bytes()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=200))
def test_quantization_is_idempotent(values):
    q = quantize_pcm16(values)
    assert np.array_equal(quantize_pcm16(q / 32768.0), q)


def test_silence_data_chunk_size(tmp_path):
    p = tmp_path / "z.wav"
    write_wav(AudioClip(np.zeros(16000), 16000), p)
    data = p.read_bytes()
    assert data[36:40] == b"data"
    assert struct.unpack_from("<I", data, 40)[0] == 32000


def test_clamped_quantization():
    assert quantize_pcm16([1.5])[0] == 32767
    assert quantize_pcm16([-3.0])[0] == -32768


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.wav"
    p.write_bytes(b"not a wav file at all")
    with pytest.raises(WavFormatError):
        read_wav(p)


def test_unsupported_codec(tmp_path):
    p = tmp_path / "u.wav"
    _write_raw(p, b"\x00" * 12, tag=1, bits=24)
    with pytest.raises(UnsupportedCodecError):
        read_wav(p)


def test_truncated_data(tmp_path):
    p = tmp_path / "t.wav"
    _write_raw(p, b"\x00\x01" * 10, declared=400)
    with pytest.raises(WavTruncatedError):
        read_wav(p)


def test_resample_identity():
    c = AudioClip(np.random.default_rng(0).uniform(-1, 1, 100), 16000)
    np.testing.assert_array_equal(resample(c, 16000).samples, c.samples)


def test_resample_hand_values():
    out = resample(AudioClip([0.0, 1.0, 2.0, 3.0], 4), 8)
    np.testing.assert_allclose(out.samples, [0, 0.5, 1, 1.5, 2, 2.5, 3, 3])
    assert out.sample_rate == 8


def test_resample_length_rule():
    c = AudioClip(np.zeros(1001), 44100)
    assert len(resample(c, 16000)) == round(1001 * 16000 / 44100)


def test_resample_rejects_zero_rate():
    with pytest.raises(ValueError):
        resample(AudioClip([0.0], 10), 0)


def _naive_peak_hz(x, rate):
    n = len(x)
    k = np.arange(n // 2 + 1)
    t = np.arange(n)
    mags = [abs(np.sum(x * np.exp(-2j * np.pi * kk * t / n))) for kk in k]
    return int(np.argmax(mags)) * rate / n


def test_resampled_sine_keeps_frequency():
    t = np.arange(4800) / 48000
    c = AudioClip(0.5 * np.sin(2 * np.pi * 440 * t), 48000)
    r = resample(c, 16000)
    bin_hz = r.sample_rate / len(r)
    assert abs(_naive_peak_hz(r.samples, r.sample_rate) - 440) <= bin_hz


def test_double_resample_band_limited():
    rate = 8000
    t = np.arange(rate) / rate
    # tone at 0.2 * rate, inside the <= rate/4 band
    x = 0.5 * np.sin(2 * np.pi * 0.2 * rate * t)
    back = resample(resample(AudioClip(x, rate), 2 * rate), rate)
    assert np.max(np.abs(back.samples - x)) <= 0.05


def test_clip_invariants():
    with pytest.raises(ValueError):
        AudioClip([0.0], 0)
    with pytest.raises(ValueError):
        AudioClip([np.nan], 16000)
    c = AudioClip(np.zeros(32000), 16000)
    assert c.duration_seconds == 2.0


def test_normalize_peak():
    c = normalize(AudioClip([0.5, -2.0, 1.0], 10))
    assert np.max(np.abs(c.samples)) == 1.0
