"""The six audio effects and their fixed-order chain.

Order is always equalizer, distortion, bitcrush, pitch shift, delay,
reverb. Every stage is a pure function from AudioBuffer to AudioBuffer
at the same sample rate, and every stage is total: in-range parameters
can never raise.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy.signal import fftconvolve, lfilter

from .audio import AudioBuffer
from .params import (
    ALL_STAGES,
    EQ_BAND_HZ,
    STAGE_BITCRUSH,
    STAGE_DELAY,
    STAGE_DISTORTION,
    STAGE_EQUALIZER,
    STAGE_PITCH_SHIFT,
    STAGE_REVERB,
    FxParams,
    validate_stages,
)

_EQ_Q = 1.5

# Time-stretch analysis constants, seconds.
_WSOLA_WINDOW_S = 0.050
_WSOLA_HOP_S = 0.0125
_WSOLA_SEARCH_S = 0.005

_DELAY_FEEDBACK = 0.3
_DELAY_MIX = 0.5

# Freeverb tunings, in samples at the 44.1 kHz reference rate.
_COMB_TUNINGS = (1116, 1188, 1277, 1356, 1422, 1491, 1557, 1617)
_ALLPASS_TUNINGS = (556, 441, 341, 225)
_ALLPASS_G = 0.5
_STEREO_SPREAD = 23
_REVERB_REF_RATE = 44100.0
_REVERB_WET_GAIN = 0.015
_REVERB_WET_SCALE = 3.0


def _peaking_coeffs(gain_db: float, center_hz: float, sample_rate: int):
    """RBJ cookbook peaking-EQ biquad; center gain is 10^(gain_db/20)."""
    a_lin = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * math.pi * center_hz / sample_rate
    alpha = math.sin(w0) / (2.0 * _EQ_Q)
    cos_w0 = math.cos(w0)
    b = np.array([1.0 + alpha * a_lin, -2.0 * cos_w0, 1.0 - alpha * a_lin])
    a = np.array([1.0 + alpha / a_lin, -2.0 * cos_w0, 1.0 - alpha / a_lin])
    return b / a[0], a / a[0]


def apply_equalizer(buf: AudioBuffer, gains_db) -> AudioBuffer:
    """Cascade of 15 fixed-frequency peaking filters, Q = 1.5.

    Bands at or above Nyquist are skipped, as are bands at exactly 0 dB
    (their biquad is an exact identity).
    """
    gains = [float(g) for g in gains_db]
    if len(gains) != len(EQ_BAND_HZ):
        raise ValueError(f"expected {len(EQ_BAND_HZ)} band gains, got {len(gains)}")
    nyquist = buf.sample_rate / 2.0
    out = buf.samples
    for center, gain in zip(EQ_BAND_HZ, gains):
        if center >= nyquist or gain == 0.0:
            continue
        b, a = _peaking_coeffs(gain, center, buf.sample_rate)
        out = lfilter(b, a, out, axis=1)
    if out is buf.samples:
        return buf
    return AudioBuffer(out, buf.sample_rate)


def apply_distortion(buf: AudioBuffer, drive_db: float) -> AudioBuffer:
    """Odd-symmetric tanh waveshaper with linear pre-gain 10^(drive_db/20)."""
    gain = 10.0 ** (float(drive_db) / 20.0)
    return AudioBuffer(np.tanh(gain * buf.samples), buf.sample_rate)


def apply_bitcrush(buf: AudioBuffer, bit_depth: float) -> AudioBuffer:
    """Quantize to 2^(bit_depth-1) levels per polarity; depth may be fractional."""
    q = 2.0 ** (float(bit_depth) - 1.0)
    clamped = np.clip(buf.samples, -1.0, 1.0)
    return AudioBuffer(np.rint(clamped * q) / q, buf.sample_rate)


def _sinc_resample(samples: np.ndarray, n_out: int) -> np.ndarray:
    """Resample (channels, n) to n_out frames by windowed-sinc interpolation.

    Kaiser window (beta 8, 32 zero crossings per side of the widened sinc);
    cutoff drops to 1/step when decimating. Positions step uniformly from
    sample 0, so the pitch ratio is n/n_out exactly.
    """
    n = samples.shape[1]
    step = n / n_out
    cutoff = min(1.0, 1.0 / step)
    half = 32.0 / cutoff  # support half-width in input samples
    max_taps = int(2.0 * half) + 2
    beta = 8.0
    i0_beta = np.i0(beta)

    pad = int(math.ceil(half)) + 2
    padded = np.pad(samples, ((0, 0), (pad, pad)))
    out = np.empty((samples.shape[0], n_out))
    block = max(1, 2**18 // max_taps)
    rel = np.arange(max_taps)[np.newaxis, :]
    for start in range(0, n_out, block):
        idx = np.arange(start, min(start + block, n_out))
        t = idx * step
        first = np.ceil(t - half).astype(np.int64)
        # signed distance of each tap from the interpolation point
        offs = first[:, np.newaxis] + rel - t[:, np.newaxis]
        inside = np.abs(offs) <= half
        u = np.clip(offs / half, -1.0, 1.0)
        win = np.i0(beta * np.sqrt(1.0 - u * u)) / i0_beta
        w = cutoff * np.sinc(cutoff * offs) * win * inside
        w /= w.sum(axis=1, keepdims=True)
        out[:, idx] = np.einsum("cbt,bt->cb", padded[:, first[:, np.newaxis] + rel + pad], w)
    return out


def _wsola_stretch(samples: np.ndarray, n_out: int, sample_rate: int) -> np.ndarray:
    """Time-stretch (channels, m) to n_out frames without changing pitch.

    Waveform-similarity overlap-add: Hann windows of 50 ms placed every
    12.5 ms in the output, each sourced from the input position (within
    a +-5 ms search range) that best continues the previous window under
    normalized cross-correlation. The offset search runs on the channel
    mean so channels stay phase-aligned.
    """
    channels, m = samples.shape
    win_len = int(round(_WSOLA_WINDOW_S * sample_rate))
    hop = int(round(_WSOLA_HOP_S * sample_rate))
    search = int(round(_WSOLA_SEARCH_S * sample_rate))
    win_len = min(win_len, m, n_out)
    if win_len < 8 or hop < 1:
        # degenerate buffer; trim or zero-pad rather than stretch
        out = np.zeros((channels, n_out))
        k = min(m, n_out)
        out[:, :k] = samples[:, :k]
        return out
    hop = min(hop, win_len)

    mono = samples.mean(axis=0)
    window = np.hanning(win_len)
    out = np.zeros((channels, n_out + win_len))
    wsum = np.zeros(n_out + win_len)

    max_start = m - win_len
    n_frames = n_out // hop + 1
    prev = 0
    for k in range(n_frames):
        out_pos = k * hop
        if k == 0:
            chosen = 0
        else:
            # the natural continuation of the previously copied window
            target_start = min(prev + hop, max_start)
            target = mono[target_start:target_start + win_len]
            nominal = int(round(out_pos * m / n_out))
            lo = max(0, min(nominal - search, max_start))
            hi = min(max_start, nominal + search)
            region = mono[lo:hi + win_len]
            corr = fftconvolve(region, target[::-1], mode="valid")
            sq = np.concatenate(([0.0], np.cumsum(region * region)))
            norms = np.sqrt((sq[win_len:] - sq[:-win_len]) * float(target @ target))
            ncc = corr / np.maximum(norms, 1e-12)
            chosen = lo + int(np.argmax(ncc))
        seg = samples[:, chosen:chosen + win_len]
        out[:, out_pos:out_pos + win_len] += seg * window
        wsum[out_pos:out_pos + win_len] += window
        prev = chosen

    out = out[:, :n_out] / np.maximum(wsum[:n_out], 1e-9)
    return out


def apply_pitch_shift(buf: AudioBuffer, semitones: float) -> AudioBuffer:
    """Shift pitch by 2^(semitones/12) at constant duration.

    Resamples to n/ratio frames (raising or lowering pitch when played
    back at the original rate), then time-stretches back to the original
    length by WSOLA.
    """
    semitones = float(semitones)
    if semitones == 0.0:
        return buf
    n = buf.frames
    ratio = 2.0 ** (semitones / 12.0)
    m = max(1, int(round(n / ratio)))
    resampled = _sinc_resample(buf.samples, m)
    stretched = _wsola_stretch(resampled, n, buf.sample_rate)
    return AudioBuffer(stretched, buf.sample_rate)


def apply_delay(buf: AudioBuffer, delay_seconds: float) -> AudioBuffer:
    """Feedback delay: wet[n] = x[n-D] + 0.3 wet[n-D], mixed 50/50, tail cut."""
    n = buf.frames
    d = max(1, int(round(float(delay_seconds) * buf.sample_rate)))
    x = buf.samples
    wet = np.zeros_like(x)
    # the recurrence only reaches back D samples, so whole blocks of D
    # can be computed at once
    for start in range(d, n, d):
        stop = min(start + d, n)
        width = stop - start
        wet[:, start:stop] = (
            x[:, start - d:start - d + width]
            + _DELAY_FEEDBACK * wet[:, start - d:start - d + width]
        )
    y = _DELAY_MIX * x + (1.0 - _DELAY_MIX) * wet
    return AudioBuffer(y, buf.sample_rate)


@njit(cache=True)
def _freeverb_wet(x, comb_delays, allpass_delays, feedback, damp):  # pragma: no cover
    n = x.shape[0]
    wet = np.zeros(n)

    n_combs = comb_delays.shape[0]
    max_comb = 0
    for i in range(n_combs):
        if comb_delays[i] > max_comb:
            max_comb = comb_delays[i]
    comb_buf = np.zeros((n_combs, max_comb))
    comb_idx = np.zeros(n_combs, dtype=np.int64)
    comb_store = np.zeros(n_combs)

    for s in range(n):
        acc = 0.0
        for i in range(n_combs):
            j = comb_idx[i]
            out = comb_buf[i, j]
            acc += out
            comb_store[i] = out * (1.0 - damp) + comb_store[i] * damp
            comb_buf[i, j] = x[s] + comb_store[i] * feedback
            j += 1
            if j >= comb_delays[i]:
                j = 0
            comb_idx[i] = j
        wet[s] = acc

    n_aps = allpass_delays.shape[0]
    for i in range(n_aps):
        d = allpass_delays[i]
        buf = np.zeros(d)
        j = 0
        for s in range(n):
            bufout = buf[j]
            inp = wet[s]
            wet[s] = bufout - inp
            buf[j] = inp + bufout * 0.5
            j += 1
            if j >= d:
                j = 0
    return wet


def _scaled_tunings(tunings, sample_rate: int, spread: int) -> np.ndarray:
    scale = sample_rate / _REVERB_REF_RATE
    return np.array(
        [max(1, int(round((t + spread) * scale))) for t in tunings], dtype=np.int64
    )


def apply_reverb(
    buf: AudioBuffer, room_size: float, damping: float, wet_level: float
) -> AudioBuffer:
    """Freeverb: 8 lowpass-feedback combs into 4 series allpasses, per channel.

    Channels past the first use tunings offset by the 23-sample stereo
    spread. wet_level 0 returns the input untouched.
    """
    wet_level = float(wet_level)
    if wet_level == 0.0:
        return buf
    feedback = 0.28 + 0.7 * float(room_size)
    damp = 0.4 * float(damping)
    out = np.empty_like(buf.samples)
    for ch in range(buf.channels):
        spread = _STEREO_SPREAD if ch >= 1 else 0
        combs = _scaled_tunings(_COMB_TUNINGS, buf.sample_rate, spread)
        allpasses = _scaled_tunings(_ALLPASS_TUNINGS, buf.sample_rate, spread)
        wet = _freeverb_wet(
            np.ascontiguousarray(buf.samples[ch]), combs, allpasses, feedback, damp
        )
        out[ch] = (
            (1.0 - wet_level) * buf.samples[ch]
            + wet_level * _REVERB_WET_SCALE * _REVERB_WET_GAIN * wet
        )
    return AudioBuffer(out, buf.sample_rate)


def apply_chain(buf: AudioBuffer, params: FxParams, enabled_stages=None) -> AudioBuffer:
    """Run the chain in fixed order, honoring stage subset and activation flags.

    Equalizer and reverb run whenever their stage is enabled; the four
    optional effects additionally require their activation flag.
    """
    stages = ALL_STAGES if enabled_stages is None else validate_stages(enabled_stages)
    out = buf
    if STAGE_EQUALIZER in stages:
        out = apply_equalizer(out, params.eq_gain_db)
    if STAGE_DISTORTION in stages and params.enable_distortion:
        out = apply_distortion(out, params.distortion_drive_db)
    if STAGE_BITCRUSH in stages and params.enable_bitcrush:
        out = apply_bitcrush(out, params.bitcrush_bit_depth)
    if STAGE_PITCH_SHIFT in stages and params.enable_pitch_shift:
        out = apply_pitch_shift(out, params.pitch_shift_semitones)
    if STAGE_DELAY in stages and params.enable_delay:
        out = apply_delay(out, params.delay_seconds)
    if STAGE_REVERB in stages:
        out = apply_reverb(out, params.reverb_room_size, params.reverb_damping, params.reverb_wet_level)
    return out
