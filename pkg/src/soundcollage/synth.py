"""Seeded synthetic audio, planted datasets, and a rule-based oracle labeler.

The oracle labeler speaks the external labeler protocol, so it can be run as

    python -m soundcollage.synth <wav_dir> <out_predictions.jsonl>
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio_io import CANONICAL_RATE, AudioClip, WavError, read_wav

log = logging.getLogger(__name__)

KINDS = ("tone", "chirp", "noise", "loop", "mixture")

SILENCE_RMS = 1e-3
TONE_RATIO = 0.5
NOISE_FLATNESS = 0.5
LOOP_CORR = 0.6
MIN_MODULATION = 0.1  # envelope std / mean below this counts as steady


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    sample_rate: int = CANONICAL_RATE
    ground_truth: dict = field(default_factory=dict)


def _param(spec: SynthSpec, name: str, default=None):
    value = spec.params.get(name, default)
    if value is None:
        raise ValueError(f"params.{name}: required for kind {spec.kind!r}")
    return value


def _check_freq(spec: SynthSpec, name: str, f: float) -> float:
    f = float(f)
    if not 0 < f < spec.sample_rate / 2:
        raise ValueError(f"params.{name}: {f} Hz must lie in (0, Nyquist={spec.sample_rate / 2})")
    return f


def _n_samples(spec: SynthSpec) -> int:
    duration = float(_param(spec, "duration", 1.0))
    if duration <= 0:
        raise ValueError("params.duration: must be positive")
    return int(round(duration * spec.sample_rate))


def _tone(spec, n, t):
    f = _check_freq(spec, "freq", _param(spec, "freq"))
    amp = float(spec.params.get("amplitude", 0.5))
    return amp * np.sin(2 * np.pi * f * t + float(spec.params.get("phase", 0.0)))


def _chirp(spec, n, t):
    f0 = _check_freq(spec, "f0", _param(spec, "f0"))
    f1 = _check_freq(spec, "f1", _param(spec, "f1"))
    amp = float(spec.params.get("amplitude", 0.5))
    dur = n / spec.sample_rate
    phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / dur * t * t)
    return amp * np.sin(phase + float(spec.params.get("phase", 0.0)))


def _noise(spec, n, t):
    amp = float(spec.params.get("amplitude", 0.5))
    return np.random.default_rng(spec.seed).uniform(-amp, amp, n)


def loop_pattern(period_samples: int, rate: int, rng: np.random.Generator, n_bursts: int = 4,
                 amplitude: float = 0.5) -> np.ndarray:
    """One period of decaying noise bursts at seeded onsets."""
    pattern = np.zeros(period_samples)
    tau = 0.05 * rate
    burst_len = min(period_samples, int(0.15 * rate))
    env = np.exp(-np.arange(burst_len) / tau)
    onsets = np.sort(rng.choice(max(1, period_samples - burst_len), size=n_bursts, replace=False))
    for k, onset in enumerate(onsets):
        gain = amplitude * (1.0 if k == 0 else rng.uniform(0.4, 0.9))
        seg = gain * env * rng.uniform(-1.0, 1.0, burst_len)
        end = min(period_samples, onset + burst_len)
        pattern[onset:end] += seg[:end - onset]
    return pattern


def _loop(spec, n, t):
    period = float(_param(spec, "period", 0.5))
    p = int(round(period * spec.sample_rate))
    if p < 2 or p > n:
        raise ValueError("params.period: must cover at least 2 samples and at most the clip")
    rng = np.random.default_rng(spec.seed)
    pattern = loop_pattern(p, spec.sample_rate, rng, int(spec.params.get("n_bursts", 4)),
                           float(spec.params.get("amplitude", 0.5)))
    return np.tile(pattern, n // p + 1)[:n]


def default_events(duration: float, rng: np.random.Generator, freq: float = 1000.0) -> list[dict]:
    """Irregular tone bursts covering roughly a fifth of the clip."""
    events, start = [], float(rng.uniform(0.1, 0.6))
    while start + 0.25 < duration:
        events.append({"freq": freq, "start": round(start, 3), "duration": 0.25,
                       "amplitude": float(rng.uniform(0.08, 0.12))})
        start += float(rng.uniform(0.9, 1.6))
    return events


def _mixture(spec, n, t):
    loop_spec = replace(spec, kind="loop")
    background = _loop(loop_spec, n, t)
    duration = n / spec.sample_rate
    events = spec.params.get("events")
    if events is None:
        events = default_events(duration, np.random.default_rng(spec.seed + 1),
                                float(spec.params.get("event_freq", 1000.0)))
    foreground = np.zeros(n)
    for k, ev in enumerate(events):
        f = _check_freq(spec, f"events[{k}].freq", ev["freq"])
        a = int(round(ev["start"] * spec.sample_rate))
        b = min(n, a + int(round(ev["duration"] * spec.sample_rate)))
        if a >= n or b <= a:
            continue
        tt = np.arange(b - a) / spec.sample_rate
        ramp = np.minimum(1.0, np.minimum(tt, tt[::-1]) / 0.01)
        foreground[a:b] += ev.get("amplitude", 0.25) * ramp * np.sin(2 * np.pi * f * tt)
    return background, foreground


def gen_clip(spec: SynthSpec, clip_id: str = "") -> AudioClip:
    """Render ``spec``. Mixtures carry their stems in ``clip.meta["stems"]``."""
    if spec.kind not in KINDS:
        raise ValueError(f"kind: unknown synth kind {spec.kind!r}")
    if spec.sample_rate <= 0:
        raise ValueError("sample_rate: must be positive")
    n = _n_samples(spec)
    t = np.arange(n) / spec.sample_rate
    clip_id = clip_id or f"{spec.kind}_{spec.seed}"
    if spec.kind == "mixture":
        background, foreground = _mixture(spec, n, t)
        clip = AudioClip(background + foreground, spec.sample_rate, clip_id)
        clip.meta["stems"] = {"background": background, "foreground": foreground}
        return clip
    render = {"tone": _tone, "chirp": _chirp, "noise": _noise, "loop": _loop}[spec.kind]
    return AudioClip(render(spec, n, t), spec.sample_rate, clip_id)


def default_label(spec: SynthSpec) -> str:
    if "label" in spec.ground_truth:
        return str(spec.ground_truth["label"])
    if spec.kind == "tone":
        return f"tone_{int(round(float(spec.params['freq'])))}"
    if spec.kind == "loop":
        return f"loop_{float(spec.params.get('period', 0.5)):g}s"
    return spec.kind


def jitter(template: SynthSpec, rng: np.random.Generator) -> SynthSpec:
    """Random phase, +-10% amplitude and a fresh noise seed."""
    params = dict(template.params)
    params["phase"] = float(rng.uniform(0.0, 2 * np.pi))
    params["amplitude"] = float(params.get("amplitude", 0.5) * rng.uniform(0.9, 1.1))
    return replace(template, params=params, seed=int(rng.integers(0, 2**31 - 1)))


def gen_planted_dataset(n_per_class: int, classes: list[SynthSpec], seed: int = 0):
    """Jittered copies of each template.

    Returns ``(clips, task, labels)``: the planted binary task puts the first
    half of the templates on side 0 and the rest on side 1; ``labels`` maps
    clip id to its template's label string.
    """
    from .discovery import Task

    if len(classes) < 2:
        raise ValueError("classes: need at least two templates")
    rng = np.random.default_rng(seed)
    clips, assignment, labels = [], {}, {}
    half = len(classes) // 2
    for ci, template in enumerate(classes):
        label = default_label(template)
        for k in range(n_per_class):
            cid = f"c{ci}_{k:04d}"
            clip = gen_clip(jitter(template, rng), cid)
            clips.append(clip)
            assignment[cid] = 0 if ci < half else 1
            labels[cid] = label
    return clips, Task(assignment, "planted"), labels


def gen_planted_features(n: int = 200, dim: int = 4096, informative: int = 64, gap: float = 4.0,
                         seed: int = 0):
    """Two Gaussian clusters in feature space, ``gap`` std apart on a random block.

    Unit-variance noise everywhere; the cluster means differ by ``gap`` on
    ``informative`` randomly chosen coordinates (random signs), the size of
    one MFCC coefficient track in a 64x64 grid. Returns ``(features, task)``
    with ids ``p000..`` and a balanced planted task.
    """
    from .discovery import Task

    if n < 4 or not 0 < informative <= dim:
        raise ValueError("need n >= 4 and 0 < informative <= dim")
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    direction = np.zeros(dim)
    direction[rng.choice(dim, informative, replace=False)] = rng.choice([-1.0, 1.0], informative)
    x = rng.standard_normal((n, dim)) + np.outer((y - 0.5) * gap, direction)
    ids = [f"p{i:03d}" for i in range(n)]
    return dict(zip(ids, x)), Task(dict(zip(ids, y.tolist())), "planted")


# --- oracle labeler -----------------------------------------------------------

def _welch_power(x: np.ndarray, n_fft: int = 1024) -> np.ndarray:
    if len(x) < n_fft:
        x = np.pad(x, (0, n_fft - len(x)))
    hop = n_fft // 2
    n = (len(x) - n_fft) // hop + 1
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n)[:, None]
    win = np.hanning(n_fft)
    return np.mean(np.abs(np.fft.rfft(x[idx] * win, axis=1)) ** 2, axis=0)


def spectral_flatness(power: np.ndarray) -> float:
    p = power[1:-1] + 1e-20
    return float(np.exp(np.mean(np.log(p))) / np.mean(p))


def envelope_periodicity(x: np.ndarray, rate: int) -> tuple[float, float]:
    """Best normalized autocorrelation of the 10 ms RMS envelope, and its lag (s)."""
    hop = max(1, rate // 100)
    n = len(x) // hop
    if n < 20:
        return 0.0, 0.0
    env = np.sqrt(np.mean(x[:n * hop].reshape(n, hop) ** 2, axis=1))
    mean = float(env.mean())
    env = env - mean
    denom = float(np.dot(env, env))
    # a steady envelope (tone, stationary noise) has no rhythm to find
    if denom <= (MIN_MODULATION * mean) ** 2 * n:
        return 0.0, 0.0
    best, best_lag = 0.0, 0
    for lag in range(10, n // 2 + 1):
        c = float(np.dot(env[:-lag], env[lag:])) / denom * n / (n - lag)
        if c > best + 1e-9:
            best, best_lag = c, lag
    return min(best, 1.0), best_lag * hop / rate


def label_clip(clip: AudioClip) -> list[tuple[str, float]]:
    """Heuristic detections, sorted by descending score."""
    x = clip.samples
    rms = float(np.sqrt(np.mean(x * x))) if len(x) else 0.0
    if rms < SILENCE_RMS:
        return [("silence", 1.0)]
    out = []
    power = _welch_power(x)
    total = float(power.sum())
    k = int(np.argmax(power))
    peak = float(power[max(0, k - 2):k + 3].sum()) / total if total > 0 else 0.0
    if peak >= TONE_RATIO:
        freq = k * clip.sample_rate / 1024
        out.append((f"tone_{int(round(freq / 10.0) * 10)}", peak))
    flat = spectral_flatness(power)
    if flat >= NOISE_FLATNESS:
        out.append(("noise", flat))
    corr, lag = envelope_periodicity(x, clip.sample_rate)
    if corr >= LOOP_CORR:
        out.append((f"loop_{round(lag * 10) / 10:g}s", corr))
    if not out:
        out.append(("unknown", 0.5))
    out.sort(key=lambda e: (-e[1], e[0]))
    return [(lab, round(min(1.0, max(0.0, s)), 6)) for lab, s in out]


def oracle_labeler(wav_dir, out_path) -> int:
    """Label every ``*.wav`` in ``wav_dir``; returns the number of skipped files."""
    wav_dir = Path(wav_dir)
    skipped = 0
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        for path in sorted(wav_dir.glob("*.wav")):
            try:
                clip = read_wav(path)
            except (WavError, OSError) as exc:
                log.warning("skipping %s: %s", path.name, exc)
                skipped += 1
                continue
            preds = [{"label": lab, "score": s} for lab, s in label_clip(clip)]
            fh.write(json.dumps({"sample_id": path.stem, "predictions": preds}) + "\n")
    return skipped


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: python -m soundcollage.synth <wav_dir> <out_predictions.jsonl>", file=sys.stderr)
        return 2
    oracle_labeler(argv[0], argv[1])
    return 0


if __name__ == "__main__":
    sys.exit(main())
