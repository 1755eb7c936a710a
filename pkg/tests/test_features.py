import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soundcollage.audio_io import AudioClip
from soundcollage.features import (LOG_FLOOR, ClipTooShortError, FeatureGrid, clip_to_grid, extract_mfcc, frame_params,
                                   hann, hz_to_mel, istft, load_grid, log_mel, mel_filterbank, mel_to_hz,
                                   pad_to_duration, read_grid_index, resample_time, save_grid, stft,
                                   write_grid_index)

RATE = 16000


def naive_dft(x, n_fft):
    """O(N^2) one-sided DFT of a zero-padded frame."""
    buf = np.zeros(n_fft)
    buf[:len(x)] = x
    k = np.arange(n_fft // 2 + 1)[:, None]
    n = np.arange(n_fft)[None, :]
    return (buf[None, :] * np.exp(-2j * np.pi * k * n / n_fft)).sum(axis=1)


def test_frame_constants():
    assert frame_params(RATE) == (400, 160, 512)


def test_ten_second_clip_has_998_frames():
    spec = stft(AudioClip(np.zeros(10 * RATE), RATE))
    assert spec.n_frames == 998 == (160000 - 400) // 160 + 1
    assert spec.bins.shape == (998, 257)


def test_pad_short_clip():
    c = AudioClip(np.ones(6 * RATE), RATE, "x")
    p = pad_to_duration(c, 10)
    assert len(p) == 160000 and p.id == "x"
    assert np.all(p.samples[96000:] == 0)
    assert np.all(p.samples[:96000] == 1)


def test_pad_identity_and_truncate():
    c = AudioClip(np.arange(10 * RATE) / 1e6, RATE)
    assert pad_to_duration(c, 10) is c
    long = AudioClip(np.arange(12 * RATE) / 1e6, RATE)
    np.testing.assert_array_equal(pad_to_duration(long, 10).samples, long.samples[:160000])


def test_stft_matches_naive_dft():
    rng = np.random.default_rng(0)
    hop, win = 160, 400
    x = rng.uniform(-1, 1, win + 15 * hop)  # 16 frames
    spec = stft(AudioClip(x, RATE))
    assert spec.n_frames == 16
    w = hann(win)
    for t in range(16):
        ref = naive_dft(x[t * hop:t * hop + win] * w, 512)
        assert np.max(np.abs(spec.bins[t] - ref)) <= 1e-6


def test_stft_dc_frame():
    spec = stft(AudioClip(np.ones(400), RATE))
    assert spec.n_frames == 1
    assert abs(abs(spec.bins[0, 0]) - hann(400).sum()) <= 1e-9
    # a Hann window's own spectrum has side bins, so away from DC compare to the exact DFT
    np.testing.assert_allclose(spec.bins[0], naive_dft(hann(400), 512), atol=1e-9)


def test_sine_peak_bin():
    t = np.arange(RATE) / RATE
    spec = stft(AudioClip(0.5 * np.sin(2 * np.pi * 1000 * t), RATE))
    assert int(np.argmax(spec.magnitude().mean(axis=0))) == round(1000 * 512 / 16000)


def test_parseval():
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, 2000)
    spec = stft(AudioClip(x, RATE))
    w = hann(400)
    for t in range(spec.n_frames):
        frame = x[t * 160:t * 160 + 400] * w
        p = np.abs(spec.bins[t]) ** 2
        one_sided = p[0] + p[-1] + 2 * p[1:-1].sum()
        assert abs(one_sided - 512 * np.sum(frame ** 2)) <= 1e-6 * one_sided


def test_too_short_clip():
    with pytest.raises(ClipTooShortError):
        stft(AudioClip(np.zeros(399), RATE))


def test_istft_roundtrip_interior():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, RATE)
    spec = stft(AudioClip(x, RATE))
    y = istft(spec, len(x)).samples
    last = (spec.n_frames - 1) * 160 + 400
    assert np.max(np.abs(y[400:last - 400] - x[400:last - 400])) <= 1e-6
    ones = istft(spec.with_bins(spec.bins * np.ones_like(spec.bins.real)), len(x)).samples
    assert np.max(np.abs(ones[400:last - 400] - x[400:last - 400])) <= 1e-6


def test_istft_zero_spectrum():
    spec = stft(AudioClip(np.random.default_rng(0).uniform(-1, 1, 4000), RATE))
    out = istft(spec.with_bins(np.zeros_like(spec.bins)), 4000)
    assert len(out) == 4000 and np.all(out.samples == 0)


def test_filterbank_shape_and_peaks():
    fb = mel_filterbank(64, 512, RATE)
    assert fb.shape == (64, 257)
    assert np.all(fb >= 0)
    np.testing.assert_array_equal(fb.max(axis=1), np.ones(64))


def test_filterbank_against_direct_construction():
    fb = mel_filterbank(64, 512, RATE)
    pts = np.linspace(0, 2595 * np.log10(1 + 8000 / 700), 66)
    hz = 700 * (10 ** (pts / 2595) - 1)
    edges = np.minimum(np.floor(513 * hz / RATE).astype(int), 256)
    for m in range(64):
        lo, mid, hi = edges[m:m + 3]
        assert fb[m, mid] == 1.0
        # weights outside [lo, hi) vanish except the peak bin
        outside = np.ones(257, bool)
        outside[lo:max(hi, mid + 1)] = False
        assert np.all(fb[m, outside] == 0)


def test_mel_scale_roundtrip():
    f = np.linspace(0, 8000, 50)
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(f)), f, atol=1e-9)
    assert abs(hz_to_mel(700.0) - 2595 * np.log10(2)) < 1e-12


def test_mfcc_shape_and_silence():
    g = extract_mfcc(AudioClip(np.zeros(10 * RATE), RATE))
    assert (g.time_steps, g.n_coeffs) == (998, 64)
    lm = log_mel(AudioClip(np.zeros(RATE), RATE))
    np.testing.assert_allclose(lm, np.log(LOG_FLOOR), atol=1e-9)
    np.testing.assert_allclose(g.values[:, 0], np.sqrt(64) * np.log(LOG_FLOOR), atol=1e-9)
    assert np.max(np.abs(g.values[:, 1:])) <= 1e-9


def test_mfcc_deterministic():
    x = np.random.default_rng(5).uniform(-1, 1, RATE)
    a = extract_mfcc(AudioClip(x, RATE)).values
    b = extract_mfcc(AudioClip(x.copy(), RATE)).values
    assert a.tobytes() == b.tobytes()


def test_resample_time_cases():
    g = FeatureGrid(np.array([[0.0], [2.0], [4.0], [6.0]]))
    np.testing.assert_allclose(resample_time(g, 7).values[:, 0], [0, 1, 2, 3, 4, 5, 6])
    x = np.random.default_rng(0).standard_normal((64, 64))
    assert np.array_equal(resample_time(FeatureGrid(x), 64).values, x)
    assert resample_time(FeatureGrid(np.zeros((998, 64))), 64).values.shape == (64, 64)
    with pytest.raises(ValueError):
        resample_time(g, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 120), st.integers(1, 90), st.integers(0, 10_000))
def test_resample_time_convexity(t, target, seed):
    x = np.random.default_rng(seed).standard_normal((t, 3))
    out = resample_time(FeatureGrid(x), target).values
    assert np.all(out.min(axis=0) >= x.min(axis=0) - 1e-12)
    assert np.all(out.max(axis=0) <= x.max(axis=0) + 1e-12)


def test_clip_to_grid_canonical():
    x = np.random.default_rng(0).uniform(-0.5, 0.5, 3 * RATE)
    g = clip_to_grid(AudioClip(x, RATE))
    assert g.values.shape == (64, 64)
    assert np.all(np.isfinite(g.values))


def test_grid_serialization(tmp_path):
    x = np.random.default_rng(0).standard_normal((64, 64))
    save_grid(FeatureGrid(x), tmp_path / "a.grid")
    data = (tmp_path / "a.grid").read_bytes()
    assert len(data) == 8 + 4 * 64 * 64
    assert np.frombuffer(data[:8], "<u4").tolist() == [64, 64]
    back = load_grid(tmp_path / "a.grid").values
    np.testing.assert_array_equal(back, x.astype(np.float32).astype(np.float64))
    write_grid_index([("a", "a.grid", FeatureGrid(x))], tmp_path / "index.jsonl")
    assert list(read_grid_index(tmp_path / "index.jsonl")) == ["a"]
