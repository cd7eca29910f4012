"""WAV file I/O, sample-rate conversion, and channel utilities.

Audio is held as float64 internally regardless of the on-disk encoding;
files are written as IEEE float-32 so gain staging never clips the
deliverable.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

from .errors import CorruptFileError, UnsupportedFormatError

_FMT_PCM = 0x0001
_FMT_IEEE_FLOAT = 0x0003
_FMT_EXTENSIBLE = 0xFFFE

# Named codecs we explicitly refuse, for friendlier error messages.
_KNOWN_UNSUPPORTED = {
    0x0002: "ADPCM",
    0x0006: "A-law",
    0x0007: "mu-law",
    0x0011: "IMA ADPCM",
    0x0055: "MP3",
}

# Fixed resampler design so independent runs produce identical output.
_KAISER_BETA = 8.0
_SINC_ZERO_CROSSINGS = 32


@dataclass(frozen=True)
class AudioBuffer:
    """Channel-separated float audio; ``samples`` has shape (channels, frames)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError("samples must be 1-d or (channels, frames) with >= 1 channel")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be a positive integer")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite (no NaN/Inf)")
        samples = np.ascontiguousarray(samples)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def frames(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.frames / self.sample_rate


def _iter_chunks(blob: bytes):
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise CorruptFileError("not a RIFF/WAVE file")
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos:pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        data_start = pos + 8
        yield cid, size, data_start
        # chunks are word-aligned; odd sizes carry a pad byte
        pos = data_start + size + (size & 1)


def _parse_fmt(blob: bytes, size: int, start: int):
    if size < 16 or start + 16 > len(blob):
        raise CorruptFileError("fmt chunk truncated")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from(
        "<HHIIHH", blob, start
    )
    if tag == _FMT_EXTENSIBLE:
        # actual codec lives in the first two bytes of the SubFormat GUID
        if size < 40 or start + 26 > len(blob):
            raise CorruptFileError("extensible fmt chunk truncated")
        (tag,) = struct.unpack_from("<H", blob, start + 24)
    return tag, channels, rate, block_align, bits


def load_wav(path) -> AudioBuffer:
    """Read a PCM-16, PCM-24, or IEEE float-32 WAV file."""
    with open(path, "rb") as fh:
        blob = fh.read()

    fmt = None
    data = None
    for cid, size, start in _iter_chunks(blob):
        if cid == b"fmt " and fmt is None:
            fmt = _parse_fmt(blob, size, start)
        elif cid == b"data" and data is None:
            if start + size > len(blob):
                raise CorruptFileError(
                    f"data chunk declares {size} bytes but only "
                    f"{len(blob) - start} are present"
                )
            data = blob[start:start + size]
        # any other chunk (fact, LIST, cue, ...) is ignored

    if fmt is None:
        raise CorruptFileError("missing fmt chunk")
    if data is None:
        raise CorruptFileError("missing data chunk")

    tag, channels, rate, block_align, bits = fmt
    if channels < 1 or rate <= 0:
        raise CorruptFileError("fmt chunk has invalid channel count or rate")

    if tag == _FMT_PCM and bits == 16:
        flat = np.frombuffer(data[:len(data) - len(data) % 2], dtype="<i2")
        flat = flat.astype(np.float64) / 2.0 ** 15
    elif tag == _FMT_PCM and bits == 24:
        raw = np.frombuffer(data[:len(data) - len(data) % 3], dtype=np.uint8)
        raw = raw.reshape(-1, 3).astype(np.int32)
        vals = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        vals = np.where(vals & 0x800000, vals - (1 << 24), vals)
        flat = vals.astype(np.float64) / 2.0 ** 23
    elif tag == _FMT_IEEE_FLOAT and bits == 32:
        flat = np.frombuffer(data[:len(data) - len(data) % 4], dtype="<f4")
        flat = flat.astype(np.float64)
    else:
        name = _KNOWN_UNSUPPORTED.get(tag, f"format tag 0x{tag:04X}")
        raise UnsupportedFormatError(
            f"unsupported format: {name} at {bits} bits (supported: PCM-16, PCM-24, float-32)"
        )

    if flat.size % channels:
        raise CorruptFileError("data chunk does not contain whole frames")
    frames = flat.reshape(-1, channels).T
    return AudioBuffer(frames, rate)


def save_wav(buf: AudioBuffer, path) -> None:
    """Write ``buf`` as IEEE float-32 WAV; out-of-range samples are kept as-is."""
    interleaved = np.ascontiguousarray(buf.samples.T, dtype="<f4")
    payload = interleaved.tobytes()
    channels = buf.channels
    rate = buf.sample_rate
    block_align = 4 * channels
    fmt = struct.pack(
        "<HHIIHHH", _FMT_IEEE_FLOAT, channels, rate, rate * block_align, block_align, 32, 0
    )
    fact = struct.pack("<I", buf.frames)
    body = (
        b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"fact" + struct.pack("<I", len(fact)) + fact
        + b"data" + struct.pack("<I", len(payload)) + payload
    )
    if len(payload) & 1:
        body += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body)


def _resample_kernel(up: int, down: int) -> np.ndarray:
    # Prototype lowpass for the polyphase stage, designed at the upsampled
    # rate: Kaiser-windowed sinc, unit DC gain (resample_poly scales by `up`).
    cutoff = 1.0 / max(up, down)
    half = _SINC_ZERO_CROSSINGS * max(up, down)
    m = np.arange(-half, half + 1)
    kernel = cutoff * np.sinc(cutoff * m) * np.kaiser(2 * half + 1, _KAISER_BETA)
    return kernel / kernel.sum()


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Windowed-sinc polyphase resampling to ``target_rate``."""
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == buf.sample_rate:
        return buf
    n_out = round(buf.frames * target_rate / buf.sample_rate)
    if buf.frames == 0 or n_out == 0:
        return AudioBuffer(np.zeros((buf.channels, 0)), target_rate)
    g = math.gcd(buf.sample_rate, target_rate)
    up, down = target_rate // g, buf.sample_rate // g
    kernel = _resample_kernel(up, down)
    out = resample_poly(buf.samples, up, down, axis=1, window=kernel)
    return AudioBuffer(out[:, :n_out], target_rate)


def downmix_mono(buf: AudioBuffer) -> AudioBuffer:
    """Average all channels into one; mono input is returned unchanged."""
    if buf.channels == 1:
        return buf
    return AudioBuffer(buf.samples.mean(axis=0), buf.sample_rate)
