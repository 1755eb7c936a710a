"""Similarity-based repeating-pattern separation with a Wiener soft mask.

A clip is split into a non-repeating foreground (".v", vocal-enhanced) and
a repeating background (".b"). Spectrograms here are frames x bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip
from .features import Spectrogram, istft, stft

MASK_EPS = 1e-12


@dataclass(frozen=True)
class SeparationParams:
    k: int = 100
    min_gap: int = 100
    min_sim: float = 0.0
    window_ms: float = 25.0
    hop_ms: float = 10.0


def similarity_matrix(mag: np.ndarray) -> np.ndarray:
    """Cosine similarity between all pairs of magnitude frames.

    Frames with zero norm get similarity 0 to everything except themselves.
    """
    mag = np.asarray(mag, dtype=np.float64)
    norms = np.linalg.norm(mag, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = mag / safe[:, None]
    sim = unit @ unit.T
    sim = 0.5 * (sim + sim.T)
    np.clip(sim, -1.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return sim


def select_similar(sim_row: np.ndarray, i: int, k: int, min_gap: int, min_sim: float) -> np.ndarray:
    """Greedy pick of up to ``k`` frames for frame ``i`` (itself first).

    Candidates are visited by decreasing similarity (ties by index) and kept
    when at least ``min_gap`` frames away from every frame already kept.
    """
    n = sim_row.shape[0]
    if k <= 1:
        return np.array([i])
    order = np.lexsort((np.arange(n), -sim_row))
    order = order[(order != i) & (sim_row[order] >= min_sim)]
    if min_gap <= 1:
        return np.concatenate(([i], order[:k - 1]))
    chosen = [i]
    blocked = np.zeros(n, dtype=bool)
    blocked[max(0, i - min_gap + 1):i + min_gap] = True
    for j in order:
        if blocked[j]:
            continue
        chosen.append(j)
        if len(chosen) == k:
            break
        blocked[max(0, j - min_gap + 1):j + min_gap] = True
    return np.array(chosen)


def repeating_model(mag: np.ndarray, sim: np.ndarray, k: int = 100, min_gap: int = 100,
                    min_sim: float = 0.0) -> np.ndarray:
    """Median over each frame's most similar frames, clamped to the mixture."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if min_gap < 0:
        raise ValueError("min_gap must be >= 0")
    mag = np.asarray(mag, dtype=np.float64)
    rep = np.empty_like(mag)
    for i in range(mag.shape[0]):
        idx = select_similar(sim[i], i, k, min_gap, min_sim)
        rep[i] = np.median(mag[idx], axis=0)
    return np.minimum(rep, mag)


def wiener_mask(repeating: np.ndarray, mix: np.ndarray) -> np.ndarray:
    """Background soft mask R^2 / (R^2 + (V - R)^2 + eps)."""
    r2 = repeating * repeating
    resid = mix - repeating
    mask = r2 / (r2 + resid * resid + MASK_EPS)
    return np.clip(mask, 0.0, 1.0)


def background_mask(spec: Spectrogram, params: SeparationParams = SeparationParams()) -> np.ndarray:
    mag = spec.magnitude()
    if mag.shape[0] < 2:
        return np.ones_like(mag)
    sim = similarity_matrix(mag)
    rep = repeating_model(mag, sim, params.k, params.min_gap, params.min_sim)
    return wiener_mask(rep, mag)


def separate(clip: AudioClip, params: SeparationParams = SeparationParams()) -> tuple[AudioClip, AudioClip]:
    """Return (foreground ``<id>.v``, background ``<id>.b``); they sum to the input."""
    spec = stft(clip, params.window_ms, params.hop_ms)
    mask = background_mask(spec, params)
    back = istft(spec.with_bins(spec.bins * mask), len(clip), clip.id + ".b")
    fore = istft(spec.with_bins(spec.bins * (1.0 - mask)), len(clip), clip.id + ".v")
    fore.meta = dict(clip.meta)
    back.meta = dict(clip.meta)
    return fore, back
