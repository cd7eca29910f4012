"""Bundled demonstration audio, synthesized on demand.

Shipping a WAV binary in the package would be dead weight; instead the
demo clip is generated deterministically, so every install produces the
same bytes.
"""

from __future__ import annotations

import numpy as np

from .audio import AudioBuffer

# vowel formant frequencies (Hz) and relative formant levels
_VOWELS = (
    ((730, 1090, 2440), (1.0, 0.5, 0.25)),   # "ah"
    ((270, 2290, 3010), (1.0, 0.35, 0.3)),   # "ee"
    ((300, 870, 2240), (1.0, 0.5, 0.2)),     # "oo"
    ((530, 1840, 2480), (1.0, 0.45, 0.25)),  # "eh"
)


def _formant_weight(freq: np.ndarray, formants, levels) -> np.ndarray:
    w = np.zeros_like(freq)
    for f0, level in zip(formants, levels):
        bw = 90.0 + 0.03 * f0
        w += level / (1.0 + ((freq - f0) / bw) ** 2)
    return w


def speech_clip(duration_s: float = 2.0, sample_rate: int = 48000) -> AudioBuffer:
    """A deterministic mono clip of sung vowels, speech-like in spectrum.

    Four syllables with a gliding fundamental, harmonic stacks shaped by
    vowel formants, soft noise bursts at onsets, and a gentle fade.
    """
    rng = np.random.default_rng(2024_07_01)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    out = np.zeros(n)

    n_syllables = max(1, int(round(duration_s / 0.5)))
    edges = np.linspace(0.0, duration_s, n_syllables + 1)
    for k in range(n_syllables):
        start, stop = edges[k], edges[k + 1]
        seg = (t >= start) & (t < stop)
        ts = t[seg] - start
        seg_len = ts.size
        if seg_len == 0:
            continue
        formants, levels = _VOWELS[k % len(_VOWELS)]
        f0 = 115.0 + 10.0 * k + 8.0 * np.sin(2.0 * np.pi * 2.5 * ts)
        phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
        voiced = np.zeros(seg_len)
        for h in range(1, 30):
            freq = h * 125.0
            if freq > 4000.0:
                break
            gain = _formant_weight(np.array([freq]), formants, levels)[0] / h
            voiced += gain * np.sin(h * phase)
        envelope = np.minimum(ts / 0.04, 1.0) * np.minimum((stop - start - ts) / 0.08, 1.0)
        envelope = np.clip(envelope, 0.0, 1.0)
        burst = rng.standard_normal(seg_len) * np.exp(-ts / 0.012) * 0.6
        out[seg] += (voiced + np.diff(burst, prepend=0.0)) * envelope

    fade = np.minimum(t / 0.01, 1.0) * np.minimum((duration_s - t) / 0.01, 1.0)
    out *= np.clip(fade, 0.0, 1.0)
    peak = np.max(np.abs(out))
    if peak > 0.0:
        out *= 0.7 / peak
    return AudioBuffer(out[np.newaxis, :], sample_rate)
