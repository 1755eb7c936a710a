"""Kernel change-point detection with an exact penalized dynamic program."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioClip, duration_to_samples


@dataclass
class SegmentBoundarySet:
    boundaries: list[int]
    n_frames: int
    objective: float = 0.0
    warning: str | None = None

    def segments(self) -> list[tuple[int, int]]:
        edges = [0] + list(self.boundaries) + [self.n_frames]
        return list(zip(edges[:-1], edges[1:]))


@dataclass(frozen=True)
class SegmentationParams:
    # None -> scale * median per-frame cost * log(n_frames)
    penalty: float | None = None
    penalty_scale: float = 1.0
    min_segment_len: int = 50
    max_changepoints: int = 10
    min_seconds: float = 0.5
    bandwidth: float | None = None


def _as_array(frames) -> np.ndarray:
    values = getattr(frames, "values", frames)
    return np.asarray(values, dtype=np.float64)


def squared_distances(x: np.ndarray) -> np.ndarray:
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def median_bandwidth(frames, max_frames: int = 256) -> float:
    """Median pairwise distance over an evenly spaced subsample of frames."""
    x = _as_array(frames)
    if x.shape[0] > max_frames:
        x = x[np.linspace(0, x.shape[0] - 1, max_frames).round().astype(int)]
    d2 = squared_distances(x)
    iu = np.triu_indices(x.shape[0], k=1)
    med = float(np.sqrt(np.median(d2[iu]))) if iu[0].size else 0.0
    return med if med > 0 else 1.0


def gram_matrix(frames, bandwidth: float) -> np.ndarray:
    """Gaussian kernel exp(-|fi - fj|^2 / (2 bandwidth^2))."""
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    x = _as_array(frames)
    if x.shape[0] < 2:
        raise ValueError("need at least two frames")
    g = np.exp(-squared_distances(x) / (2.0 * bandwidth * bandwidth))
    return 0.5 * (g + g.T)


def segment_cost(gram: np.ndarray, i: int, j: int) -> float:
    """Kernel scatter of frames [i, j)."""
    if not 0 <= i < j <= gram.shape[0]:
        raise ValueError(f"invalid segment [{i}, {j}) for {gram.shape[0]} frames")
    block = gram[i:j, i:j]
    return float(np.trace(block) - block.sum() / (j - i))


def cost_table(gram: np.ndarray) -> np.ndarray:
    """All segment costs; entry [i, j] is the scatter of [i, j) (inf for j <= i)."""
    n = gram.shape[0]
    diag = np.concatenate(([0.0], np.cumsum(np.diag(gram))))
    s = np.zeros((n + 1, n + 1))
    s[1:, 1:] = np.cumsum(np.cumsum(gram, axis=0), axis=1)
    i = np.arange(n + 1)[:, None]
    j = np.arange(n + 1)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        block = s[j, j] - s[i, j] - s[j, i] + s[i, i]
        cost = (diag[j] - diag[i]) - block / (j - i)
    cost = np.where(j > i, cost, np.inf)
    # scatter is nonnegative for a PSD kernel; trim rounding noise
    return np.where(np.isfinite(cost), np.maximum(cost, 0.0), cost)


def median_frame_cost(gram: np.ndarray) -> float:
    """Median over frames of each frame's share of the whole-sequence scatter."""
    per_frame = np.diag(gram) - gram.mean(axis=1)
    return float(np.median(per_frame))


def default_penalty(gram: np.ndarray, scale: float = 1.0) -> float:
    n = gram.shape[0]
    return scale * median_frame_cost(gram) * math.log(max(n, 2))


def solve_segmentation(costs: np.ndarray, penalty: float, min_len: int, max_cps: int) -> tuple[list[int], float]:
    """Exact minimizer of sum of costs + penalty * n_changepoints.

    ``costs`` is an (n+1) x (n+1) table. Ties resolve to fewer changepoints,
    then to earlier boundaries.
    """
    n = costs.shape[0] - 1
    if n < min_len:
        # nothing admissible: the unsegmented span is the only answer
        return [], float(costs[0, n])
    max_cps = max(0, min(max_cps, n // min_len - 1))
    inf = np.inf
    best = np.full((max_cps + 1, n + 1), inf)
    back = np.zeros((max_cps + 1, n + 1), dtype=int)
    best[0, min_len:] = costs[0, min_len:]
    for k in range(1, max_cps + 1):
        for end in range((k + 1) * min_len, n + 1):
            starts = np.arange(k * min_len, end - min_len + 1)
            cand = best[k - 1, starts] + costs[starts, end]
            a = int(np.argmin(cand))
            best[k, end] = cand[a]
            back[k, end] = starts[a]
    totals = best[:, n] + penalty * np.arange(max_cps + 1)
    k = int(np.argmin(totals))
    cps = []
    end = n
    for kk in range(k, 0, -1):
        end = back[kk, end]
        cps.append(int(end))
    return sorted(cps), float(totals[k])


def detect_changepoints(frames, penalty: float | None = None, min_segment_len: int = 50,
                        max_changepoints: int = 10, bandwidth: float | None = None,
                        penalty_scale: float = 1.0) -> SegmentBoundarySet:
    """Penalized kernel change-point detection.

    ``penalty=None`` selects the median-frame-cost heuristic; ``bandwidth=None``
    the median pairwise distance.
    """
    if penalty is not None and penalty < 0:
        raise ValueError("penalty must be nonnegative")
    if min_segment_len < 1:
        raise ValueError("min_segment_len must be >= 1")
    x = _as_array(frames)
    n = x.shape[0]
    if n < min_segment_len or n < 2:
        return SegmentBoundarySet([], n, 0.0, warning=f"only {n} frames, fewer than min_segment_len={min_segment_len}")
    gram = gram_matrix(x, median_bandwidth(x) if bandwidth is None else bandwidth)
    if penalty is None:
        penalty = default_penalty(gram, penalty_scale)
    cps, obj = solve_segmentation(cost_table(gram), penalty, min_segment_len, max_changepoints)
    return SegmentBoundarySet(cps, n, obj)


@dataclass
class Segment:
    clip: AudioClip
    index: int
    start: int
    end: int
    kept: bool = field(default=True)


def split_clip(clip: AudioClip, boundaries: SegmentBoundarySet, hop_ms: float = 10.0,
               min_seconds: float = 0.5) -> list[Segment]:
    """Cut at boundary frames; every span is returned, flagged kept or dropped."""
    hop = duration_to_samples(hop_ms / 1000.0, clip.sample_rate)
    cuts = [0] + [min(len(clip), b * hop) for b in boundaries.boundaries] + [len(clip)]
    min_len = min_seconds * clip.sample_rate
    out = []
    for idx, (a, b) in enumerate(zip(cuts[:-1], cuts[1:])):
        seg = AudioClip(clip.samples[a:b], clip.sample_rate, f"{clip.id}.s{idx}", dict(clip.meta))
        out.append(Segment(seg, idx, a, b, kept=(b - a) >= min_len - 1e-9))
    return out


def segment_clip(clip: AudioClip, boundaries: SegmentBoundarySet, hop_ms: float = 10.0,
                 min_seconds: float = 0.5) -> list[AudioClip]:
    """Kept segments (ids ``<id>.s<k>`` where k is the span's position)."""
    return [s.clip for s in split_clip(clip, boundaries, hop_ms, min_seconds) if s.kept]
