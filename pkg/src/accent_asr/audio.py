"""WAV I/O, mono mixdown and sample-rate conversion."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import gcd

import numpy as np

from .errors import AsrError

CANONICAL_RATE = 16000

_FORMAT_PCM = 0x0001
_FORMAT_FLOAT = 0x0003
_FORMAT_EXTENSIBLE = 0xFFFE

# Resampler design: Kaiser-windowed sinc, 64 taps per polyphase branch.
KAISER_BETA = 8.6
TAPS_PER_PHASE = 64
CUTOFF_FRACTION = 0.45
_BLOCK = 4096


class WavError(AsrError, ValueError):
    pass


class MalformedHeader(WavError):
    pass


class UnsupportedEncoding(WavError):
    pass


class TruncatedData(WavError):
    pass


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if samples.size and (np.max(samples) > 1.0 or np.min(samples) < -1.0):
            raise ValueError("AudioClip samples must lie in [-1, 1]")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return (self.sample_rate_hz == other.sample_rate_hz
                and np.array_equal(self.samples, other.samples))


def _iter_chunks(data: bytes, start: int):
    pos = start
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        yield chunk_id, pos + 8, size
        pos += 8 + size + (size & 1)


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte string into a mono :class:`AudioClip`.

    Integer PCM of 8/16/24/32 bits and IEEE float of 32/64 bits are accepted,
    including WAVE_FORMAT_EXTENSIBLE wrappers. Channels are averaged per frame.
    """
    data = bytes(data)
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeader("not a RIFF/WAVE stream")

    fmt = None
    payload = None
    for chunk_id, offset, size in _iter_chunks(data, 12):
        if chunk_id == b"fmt ":
            if size < 16 or offset + 16 > len(data):
                raise MalformedHeader("fmt chunk too short")
            fmt = data[offset:offset + size]
        elif chunk_id == b"data":
            if fmt is None:
                raise MalformedHeader("data chunk precedes fmt chunk")
            available = len(data) - offset
            if available < size:
                raise TruncatedData(
                    f"data chunk declares {size} bytes but only {available} present")
            payload = data[offset:offset + size]
            break
    if fmt is None:
        raise MalformedHeader("missing fmt chunk")
    if payload is None:
        raise MalformedHeader("missing data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt)
    if tag == _FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise MalformedHeader("extensible fmt chunk too short")
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if channels < 1 or rate < 1:
        raise MalformedHeader(f"invalid channel count {channels} or rate {rate}")

    width = bits // 8
    if tag == _FORMAT_PCM and bits in (8, 16, 24, 32):
        frames = _decode_pcm(payload, width)
    elif tag == _FORMAT_FLOAT and bits in (32, 64):
        dtype = "<f4" if bits == 32 else "<f8"
        usable = len(payload) - len(payload) % width
        frames = np.frombuffer(payload[:usable], dtype=dtype).astype(np.float64)
        frames = np.nan_to_num(frames, nan=0.0, posinf=1.0, neginf=-1.0)
    else:
        raise UnsupportedEncoding(f"format tag 0x{tag:04x} with {bits} bits per sample")

    n_frames = frames.size // channels
    frames = frames[:n_frames * channels].reshape(n_frames, channels)
    mono = frames.mean(axis=1) if channels > 1 else frames[:, 0]
    return AudioClip(np.clip(mono, -1.0, 1.0), rate)


def _decode_pcm(payload: bytes, width: int) -> np.ndarray:
    usable = len(payload) - len(payload) % width
    raw = payload[:usable]
    if width == 1:
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if width == 2:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if width == 4:
        return np.frombuffer(raw, dtype="<i4").astype(np.float64) / 2147483648.0
    # 24-bit: sign-extend three little-endian bytes
    b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
    v = np.where(v >= 1 << 23, v - (1 << 24), v)
    return v.astype(np.float64) / 8388608.0


def encode_wav(clip: AudioClip) -> bytes:
    """Encode as 16-bit little-endian PCM mono WAV (44-byte header)."""
    ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    body = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(body), b"WAVE",
        b"fmt ", 16, _FORMAT_PCM, 1, clip.sample_rate_hz, clip.sample_rate_hz * 2, 2, 16,
        b"data", len(body),
    )
    return header + body


def read_wav(path) -> AudioClip:
    with open(path, "rb") as fh:
        return decode_wav(fh.read())


def write_wav(path, clip: AudioClip) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_wav(clip))


def is_canonical_wav(data: bytes) -> bool:
    """True if ``data`` is a mono 16 kHz 16-bit PCM WAV."""
    if len(data) < 44 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        return False
    for chunk_id, offset, size in _iter_chunks(data, 12):
        if chunk_id == b"fmt " and size >= 16:
            tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", data, offset)
            return tag == _FORMAT_PCM and channels == 1 and rate == CANONICAL_RATE and bits == 16
    return False


def _kaiser(x: np.ndarray, half_width: float, beta: float) -> np.ndarray:
    r = np.clip(x / half_width, -1.0, 1.0)
    w = np.i0(beta * np.sqrt(1.0 - r * r)) / np.i0(beta)
    return np.where(np.abs(x) <= half_width, w, 0.0)


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Rational-ratio polyphase resampling with a Kaiser-windowed sinc.

    The low-pass cutoff sits at 0.45 x the lower of the two rates. Each of the
    up-factor phases carries 64 taps measured at the lower rate, so for a 3:1
    decimation the prototype filter spans 192 input samples. Every phase is
    normalized to unit DC gain.
    """
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate_hz}")
    src = clip.sample_rate_hz
    if target_rate_hz == src:
        return clip

    g = gcd(src, target_rate_hz)
    up, down = target_rate_hz // g, src // g
    n_in = clip.samples.size
    n_out = int(round(n_in * up / down))
    if n_out == 0 or n_in == 0:
        return AudioClip(np.zeros(n_out), target_rate_hz)

    # all quantities below are in input-sample units
    stretch = max(1.0, src / target_rate_hz)
    cutoff = CUTOFF_FRACTION * min(src, target_rate_hz) / src  # cycles per input sample
    half = TAPS_PER_PHASE / 2 * stretch
    offsets = np.arange(-int(np.ceil(half)), int(np.ceil(half)) + 1)

    # output j sits at input position j*down/up = base + phase/up
    positions = np.arange(n_out, dtype=np.int64) * down
    base = positions // up
    phase = positions % up

    def phase_table(phases):
        x = offsets[None, :] - phases[:, None] / up  # tap offset from the exact output time
        table = 2.0 * cutoff * np.sinc(2.0 * cutoff * x) * _kaiser(x, half, KAISER_BETA)
        return table / table.sum(axis=1, keepdims=True)

    # small up-factors share one table across the whole clip
    shared = phase_table(np.arange(up)) if up <= _BLOCK else None

    pad = offsets.size
    padded = np.concatenate([np.zeros(pad), clip.samples, np.zeros(pad)])
    out = np.empty(n_out)
    for start in range(0, n_out, _BLOCK):
        stop = min(start + _BLOCK, n_out)
        weights = shared[phase[start:stop]] if shared is not None else phase_table(phase[start:stop])
        idx = base[start:stop, None] + offsets[None, :] + pad
        out[start:stop] = np.einsum("ij,ij->i", padded[idx], weights)
    return AudioClip(np.clip(out, -1.0, 1.0), target_rate_hz)


def to_canonical(clip: AudioClip) -> AudioClip:
    return resample(clip, CANONICAL_RATE)
