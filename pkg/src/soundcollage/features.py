"""Framing, STFT/ISTFT, log-mel and MFCC grids, and grid serialization."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .audio_io import AudioClip, duration_to_samples

LOG_FLOOR = 1e-10
WINDOW_ENERGY_FLOOR = 1e-10


class ClipTooShortError(ValueError):
    pass


@dataclass
class Spectrogram:
    # frames x (n_fft // 2 + 1), complex
    bins: np.ndarray
    frame_hop: int
    window_len: int
    sample_rate: int
    n_fft: int

    @property
    def n_frames(self) -> int:
        return self.bins.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)

    def with_bins(self, bins: np.ndarray) -> "Spectrogram":
        return Spectrogram(bins, self.frame_hop, self.window_len, self.sample_rate, self.n_fft)


@dataclass
class FeatureGrid:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("FeatureGrid values must be 2-D (time_steps x n_coeffs)")

    @property
    def time_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_coeffs(self) -> int:
        return self.values.shape[1]

    def flatten(self) -> np.ndarray:
        return self.values.reshape(-1)


def frame_params(sample_rate: int, window_ms: float = 25.0, hop_ms: float = 10.0) -> tuple[int, int, int]:
    """Return (window_len, hop, n_fft) in samples for the given rate."""
    window_len = duration_to_samples(window_ms / 1000.0, sample_rate)
    hop = duration_to_samples(hop_ms / 1000.0, sample_rate)
    if window_len < 1 or hop < 1:
        raise ValueError("window and hop must each span at least one sample")
    n_fft = 1 << (window_len - 1).bit_length()
    return window_len, hop, n_fft


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def n_frames_for(n_samples: int, window_len: int, hop: int) -> int:
    if n_samples < window_len:
        return 0
    return (n_samples - window_len) // hop + 1


def pad_to_duration(clip: AudioClip, seconds: float = 10.0) -> AudioClip:
    """Zero-pad (or truncate) to exactly ``seconds`` of audio."""
    if seconds <= 0:
        raise ValueError("seconds must be positive")
    target = duration_to_samples(seconds, clip.sample_rate)
    n = len(clip)
    if n == target:
        return clip
    if n > target:
        return clip.with_samples(clip.samples[:target])
    out = np.zeros(target)
    out[:n] = clip.samples
    return clip.with_samples(out)


def _frames(samples: np.ndarray, window_len: int, hop: int) -> np.ndarray:
    n = n_frames_for(len(samples), window_len, hop)
    idx = np.arange(window_len)[None, :] + hop * np.arange(n)[:, None]
    return samples[idx]


def stft(clip: AudioClip, window_ms: float = 25.0, hop_ms: float = 10.0) -> Spectrogram:
    window_len, hop, n_fft = frame_params(clip.sample_rate, window_ms, hop_ms)
    if len(clip) < window_len:
        raise ClipTooShortError(
            f"clip {clip.id!r} has {len(clip)} samples, shorter than one {window_len}-sample window"
        )
    frames = _frames(clip.samples, window_len, hop) * hann(window_len)
    bins = np.fft.rfft(frames, n=n_fft, axis=1)
    return Spectrogram(bins, hop, window_len, clip.sample_rate, n_fft)


def istft(spec: Spectrogram, out_len: int, clip_id: str = "") -> AudioClip:
    """Weighted overlap-add inverse of :func:`stft`.

    Each output sample is divided by the summed squared window covering it,
    floored at ``WINDOW_ENERGY_FLOOR``.
    """
    window = hann(spec.window_len)
    frames = np.fft.irfft(spec.bins, n=spec.n_fft, axis=1)[:, :spec.window_len] * window
    n = spec.n_frames
    total = max(out_len, (n - 1) * spec.frame_hop + spec.window_len if n else 0)
    ola = np.zeros(total)
    wsum = np.zeros(total)
    w2 = window * window
    for t in range(n):
        start = t * spec.frame_hop
        ola[start:start + spec.window_len] += frames[t]
        wsum[start:start + spec.window_len] += w2
    out = ola / np.maximum(wsum, WINDOW_ENERGY_FLOOR)
    return AudioClip(out[:out_len], spec.sample_rate, clip_id)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular HTK-mel filters from 0 Hz to Nyquist, shape (n_mels, n_fft//2 + 1).

    Edges are snapped to FFT bins so every triangle peaks at exactly 1.
    """
    n_bins = n_fft // 2 + 1
    mel_pts = np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2)
    edges = np.floor((n_fft + 1) * mel_to_hz(mel_pts) / sample_rate).astype(int)
    edges = np.minimum(edges, n_bins - 1)
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        for k in range(lo, mid):
            fb[m, k] = (k - lo) / (mid - lo)
        for k in range(mid, hi):
            fb[m, k] = (hi - k) / (hi - mid)
        fb[m, mid] = 1.0
    return fb


def log_mel(clip: AudioClip, n_mels: int = 64, window_ms: float = 25.0, hop_ms: float = 10.0) -> np.ndarray:
    """Per-frame log mel energies, shape (frames, n_mels)."""
    spec = stft(clip, window_ms, hop_ms)
    power = np.abs(spec.bins) ** 2
    fb = mel_filterbank(n_mels, spec.n_fft, spec.sample_rate)
    return np.log(LOG_FLOOR + power @ fb.T)


def extract_mfcc(clip: AudioClip, n_mels: int = 64, window_ms: float = 25.0, hop_ms: float = 10.0) -> FeatureGrid:
    """MFCC grid of shape (frames, n_mels); all DCT coefficients are kept."""
    return FeatureGrid(dct(log_mel(clip, n_mels, window_ms, hop_ms), type=2, axis=1, norm="ortho"))


def resample_time(grid: FeatureGrid, target_steps: int = 64) -> FeatureGrid:
    """Linearly interpolate every coefficient channel onto ``target_steps`` points."""
    if target_steps < 1:
        raise ValueError("target_steps must be at least 1")
    t = grid.time_steps
    if t < 1:
        raise ValueError("grid has no time steps")
    if t == target_steps:
        return FeatureGrid(grid.values.copy())
    src = np.arange(t, dtype=np.float64)
    dst = np.linspace(0.0, t - 1, target_steps)
    out = np.empty((target_steps, grid.n_coeffs))
    for c in range(grid.n_coeffs):
        out[:, c] = np.interp(dst, src, grid.values[:, c])
    return FeatureGrid(out)


def clip_to_grid(clip: AudioClip, duration_s: float = 10.0, n_mels: int = 64, time_steps: int = 64,
                 window_ms: float = 25.0, hop_ms: float = 10.0) -> FeatureGrid:
    """Pad/truncate, extract MFCCs, then resample to a fixed number of steps."""
    padded = pad_to_duration(clip, duration_s)
    return resample_time(extract_mfcc(padded, n_mels, window_ms, hop_ms), time_steps)


# --- serialization ----------------------------------------------------------

_GRID_HEADER = struct.Struct("<II")


def save_grid(grid: FeatureGrid, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_GRID_HEADER.pack(grid.time_steps, grid.n_coeffs))
        fh.write(grid.values.astype("<f4").tobytes())


def load_grid(path) -> FeatureGrid:
    data = Path(path).read_bytes()
    if len(data) < _GRID_HEADER.size:
        raise ValueError(f"{path}: grid file too short")
    t, c = _GRID_HEADER.unpack_from(data, 0)
    body = data[_GRID_HEADER.size:]
    if len(body) != 4 * t * c:
        raise ValueError(f"{path}: expected {t}x{c} float32 values, got {len(body)} bytes")
    return FeatureGrid(np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(t, c))


def write_grid_index(entries, path) -> None:
    """``entries``: iterable of (id, relative path, grid)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for gid, rel, grid in entries:
            fh.write(json.dumps({"id": gid, "path": str(rel), "dims": [grid.time_steps, grid.n_coeffs]}) + "\n")


def read_grid_index(path) -> dict[str, FeatureGrid]:
    path = Path(path)
    grids = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            grids[rec["id"]] = load_grid(path.parent / rec["path"])
    return grids
