"""Independent reference computations used by several test modules.

Everything here is written directly from the definitions (loops, double sums,
exhaustive enumeration), without calling the package code it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def naive_dft(x, n_fft):
    buf = np.zeros(n_fft)
    buf[:len(x)] = x
    k = np.arange(n_fft // 2 + 1)[:, None]
    n = np.arange(n_fft)[None, :]
    return (buf[None, :] * np.exp(-2j * np.pi * k * n / n_fft)).sum(axis=1)


def cosine(a, b):
    na, nb = math.sqrt(float(np.dot(a, a))), math.sqrt(float(np.dot(b, b)))
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


def rbf(a, b, bw):
    return math.exp(-float(np.sum((a - b) ** 2)) / (2 * bw * bw))


def scatter(gram, i, j):
    """Kernel scatter of frames [i, j) by explicit double sum."""
    diag = sum(gram[t, t] for t in range(i, j))
    total = sum(gram[s, t] for s in range(i, j) for t in range(i, j))
    return diag - total / (j - i)


def brute_force_segmentation(gram, penalty, min_len, max_cps):
    """Minimum of sum cost + penalty * k over every admissible boundary set."""
    n = gram.shape[0]
    costs = {(i, j): scatter(gram, i, j) for i in range(n) for j in range(i + 1, n + 1)}
    best = (math.inf, None)
    for k in range(0, max_cps + 1):
        for cps in itertools.combinations(range(1, n), k):
            edges = (0,) + cps + (n,)
            # the unsegmented span is always admissible, however short
            if k and any(b - a < min_len for a, b in zip(edges, edges[1:])):
                continue
            val = sum(costs[a, b] for a, b in zip(edges, edges[1:])) + penalty * k
            if val < best[0] - 1e-9:
                best = (val, list(cps))
    return best


def clarity_formula(n0j, n1j, n0, n1):
    return max((abs(n0j - n1j) - min(n0j, n1j)) / max(n0, n1), 0)


def confusion_metrics(y_true, y_pred):
    labels = sorted(set(y_true) | set(y_pred))
    conf = {(a, b): 0 for a in labels for b in labels}
    for t, p in zip(y_true, y_pred):
        conf[(t, p)] += 1
    precs, recs, f1s = [], [], []
    for c in labels:
        tp = conf[(c, c)]
        pred_c = sum(conf[(a, c)] for a in labels)
        true_c = sum(conf[(c, b)] for b in labels)
        p = tp / pred_c if pred_c else 0.0
        r = tp / true_c if true_c else 0.0
        precs.append(p)
        recs.append(r)
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    acc = sum(conf[(c, c)] for c in labels) / len(y_true)
    return acc, sum(precs) / len(labels), sum(recs) / len(labels), sum(f1s) / len(labels)


def snr_db(reference, estimate):
    err = np.sum((estimate - reference) ** 2)
    return 10 * math.log10(np.sum(reference ** 2) / max(err, 1e-30))


def separation_report(clip, params, margin=400):
    """Foreground SNR gain and the share of loop-stem energy routed to comp2.

    The mask is computed from the mixture, then applied to each stem's own
    STFT, which splits every component exactly into loop and event parts.
    ``margin`` samples at each edge are excluded (window-energy edge effects).
    """
    from soundcollage.audio_io import AudioClip
    from soundcollage.features import istft, stft
    from soundcollage.separation import background_mask, separate

    fore, back = separate(clip, params)
    stems = clip.meta["stems"]
    sl = slice(margin, len(clip) - margin)
    fg = stems["foreground"][sl]
    gain = snr_db(fg, fore.samples[sl]) - snr_db(fg, clip.samples[sl])

    spec = stft(clip, params.window_ms, params.hop_ms)
    mask = background_mask(spec, params)
    loop_spec = stft(AudioClip(stems["background"], clip.sample_rate), params.window_ms, params.hop_ms)
    to_b = istft(loop_spec.with_bins(loop_spec.bins * mask), len(clip)).samples[sl]
    to_v = istft(loop_spec.with_bins(loop_spec.bins * (1 - mask)), len(clip)).samples[sl]
    eb, ev = float(np.sum(to_b ** 2)), float(np.sum(to_v ** 2))
    return gain, eb / (eb + ev)
