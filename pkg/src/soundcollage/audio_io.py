"""WAV reading/writing, resampling and the AudioClip container.

Only RIFF/WAVE is supported. On input, PCM-16 (format tag 1) and IEEE
float-32 (format tag 3) are accepted; output is always mono PCM-16.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CANONICAL_RATE = 16000

_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


class WavError(Exception):
    """Base class for WAV decoding problems."""


class WavFormatError(WavError):
    """Malformed RIFF/WAVE structure."""


class UnsupportedCodecError(WavError):
    """Valid WAV container with an encoding we do not decode."""


class WavTruncatedError(WavError):
    """Data chunk is shorter than its header claims."""


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"clip {self.id!r} contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate

    def with_samples(self, samples, id: str | None = None) -> "AudioClip":
        return AudioClip(samples, self.sample_rate, self.id if id is None else id, dict(self.meta))


def normalize(clip: AudioClip) -> AudioClip:
    """Scale so the peak magnitude is at most 1. Quiet clips are left alone."""
    peak = float(np.max(np.abs(clip.samples))) if len(clip) else 0.0
    if peak <= 1.0:
        return clip
    return clip.with_samples(clip.samples / peak)


def _iter_chunks(data: bytes, start: int):
    pos = start
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        yield cid, pos + 8, size
        pos += 8 + size + (size & 1)


def read_wav(path, clip_id: str | None = None) -> AudioClip:
    """Decode a WAV file into a mono float clip.

    Multi-channel audio is averaged per frame. PCM-16 values are divided
    by 32768, float data is taken as is (then clipped to [-1, 1]).
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    body = None
    for cid, off, size in _iter_chunks(data, 12):
        if cid == b"fmt ":
            if size < 16 or off + size > len(data):
                raise WavFormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", data, off)
            if fmt[0] == _EXTENSIBLE and size >= 40:
                # sub-format GUID starts with the effective format tag
                sub_tag = struct.unpack_from("<H", data, off + 24)[0]
                fmt = (sub_tag,) + fmt[1:]
        elif cid == b"data":
            if fmt is None:
                raise WavFormatError(f"{path}: data chunk before fmt chunk")
            avail = len(data) - off
            if size > avail:
                raise WavTruncatedError(f"{path}: data chunk declares {size} bytes, only {avail} present")
            body = data[off:off + size]
            break
    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if body is None:
        raise WavFormatError(f"{path}: missing data chunk")

    tag, channels, rate, _, block_align, bits = fmt
    if channels < 1 or rate < 1:
        raise WavFormatError(f"{path}: invalid channel count or rate")
    if tag == _PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedCodecError(f"{path}: format tag {tag} with {bits} bits per sample")
    frame_bytes = channels * dtype.itemsize
    if len(body) % frame_bytes:
        raise WavTruncatedError(f"{path}: data chunk ends mid-frame")

    raw = np.frombuffer(body, dtype=dtype).astype(np.float64) * scale
    frames = raw.reshape(-1, channels)
    mono = frames.mean(axis=1) if channels > 1 else frames[:, 0]
    mono = np.nan_to_num(mono, nan=0.0, posinf=1.0, neginf=-1.0)
    mono = np.clip(mono, -1.0, 1.0)
    return AudioClip(mono, rate, path.stem if clip_id is None else clip_id)


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return np.clip(np.round(clipped * 32768.0), -32768, 32767).astype("<i2")


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as a mono 16-bit PCM WAV file."""
    pcm = quantize_pcm16(clip.samples).tobytes()
    rate = clip.sample_rate
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, _PCM, 1, rate, rate * 2, 2, 16,
        b"data", len(pcm),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pcm)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampler with edge hold (no anti-alias filter)."""
    if target_rate is None or target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), target_rate, clip.id, dict(clip.meta))
    n_in = len(clip)
    n_out = int(round(n_in * target_rate / clip.sample_rate))
    if n_in == 0 or n_out == 0:
        return AudioClip(np.zeros(n_out), target_rate, clip.id, dict(clip.meta))
    # output sample i sits at input position i * src/target
    pos = np.arange(n_out) * (clip.sample_rate / target_rate)
    out = np.interp(pos, np.arange(n_in), clip.samples)
    return AudioClip(out, target_rate, clip.id, dict(clip.meta))


def mixdown(frames: np.ndarray) -> np.ndarray:
    """Average a (n_frames, n_channels) array to mono."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        return frames.copy()
    return frames.mean(axis=1)


def duration_to_samples(seconds: float, rate: int) -> int:
    return int(math.floor(seconds * rate + 0.5))
