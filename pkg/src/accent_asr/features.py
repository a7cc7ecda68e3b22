"""MFCC frontend: pre-emphasis, Hann frames, radix-2 FFT, mel filterbank, log, DCT-II."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import CANONICAL_RATE, AudioClip
from .errors import AsrError

_DUMP_MAGIC = b"MFC1"


class FeatureError(AsrError, ValueError):
    pass


class DegenerateConfig(FeatureError):
    pass


class TooShort(FeatureError):
    pass


@dataclass(frozen=True)
class MfccConfig:
    window_ms: float = 32.0
    step_ms: float = 20.0
    n_fft: int = 512
    n_mels: int = 40
    n_coeffs: int = 26
    preemphasis: float = 0.97
    log_floor: float = 1e-10
    context: int = 0

    def __post_init__(self):
        if not 0 < self.step_ms <= self.window_ms:
            raise DegenerateConfig("need 0 < step_ms <= window_ms")
        if not 1 <= self.n_coeffs <= self.n_mels:
            raise DegenerateConfig("need 1 <= n_coeffs <= n_mels")
        if self.n_fft < 2 or self.n_fft & (self.n_fft - 1):
            raise DegenerateConfig(f"n_fft must be a power of two, got {self.n_fft}")
        if self.log_floor <= 0:
            raise DegenerateConfig("log_floor must be positive")
        if self.context < 0:
            raise DegenerateConfig("context must be non-negative")

    def window_samples(self, sample_rate_hz: int = CANONICAL_RATE) -> int:
        return int(round(self.window_ms * sample_rate_hz / 1000.0))

    def step_samples(self, sample_rate_hz: int = CANONICAL_RATE) -> int:
        return int(round(self.step_ms * sample_rate_hz / 1000.0))

    @property
    def feature_width(self) -> int:
        return self.n_coeffs * (2 * self.context + 1)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    frames: np.ndarray
    frame_step_ms: float

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def frame_count(n_samples: int, window: int, step: int) -> int:
    if n_samples < window:
        return 0
    return 1 + (n_samples - window) // step


def fft(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis.

    The transform length must be a power of two. Leading axes are batched.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n & (n - 1) or n == 0:
        raise ValueError(f"FFT length must be a power of two, got {n}")
    out = x[..., _bit_reverse(n)].copy()
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(x.shape[:-1] + (n // size, size))
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * twiddle
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        size *= 2
    return out


@lru_cache(maxsize=16)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def power_spectrum(frames: np.ndarray, n_fft: int) -> np.ndarray:
    """|FFT|^2 of zero-padded real frames, keeping the n_fft/2+1 non-negative bins."""
    width = frames.shape[-1]
    if width > n_fft:
        raise DegenerateConfig(f"window of {width} samples exceeds n_fft={n_fft}")
    padded = np.zeros(frames.shape[:-1] + (n_fft,))
    padded[..., :width] = frames
    spec = fft(padded)[..., : n_fft // 2 + 1]
    return spec.real ** 2 + spec.imag ** 2


def mel_points_hz(n_mels: int, sample_rate_hz: int) -> np.ndarray:
    """The n_mels+2 filter edge/center frequencies, equally spaced in mel."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_mels + 2))


def build_mel_filterbank(cfg: MfccConfig, sample_rate_hz: int = CANONICAL_RATE) -> np.ndarray:
    """Triangular mel filters, shape ``(n_mels, n_fft // 2 + 1)``.

    Triangles are evaluated at the exact bin frequencies and peak at 1.0 on
    their mel-spaced centers. Raises :class:`DegenerateConfig` when two of the
    n_mels+2 mel points fall into the same FFT bin, since some filter would
    then see no bin at all.
    """
    points = mel_points_hz(cfg.n_mels, sample_rate_hz)
    bin_pos = points * cfg.n_fft / sample_rate_hz
    if np.any(np.diff(np.floor(bin_pos)) <= 0):
        raise DegenerateConfig(
            f"{cfg.n_mels} mel filters do not fit into {cfg.n_fft // 2 + 1} FFT bins")
    bins = np.arange(cfg.n_fft // 2 + 1, dtype=np.float64)
    left, center, right = bin_pos[:-2, None], bin_pos[1:-1, None], bin_pos[2:, None]
    rising = (bins - left) / (center - left)
    falling = (right - bins) / (right - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def dct_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Rows of the orthonormal DCT-II of length ``n_in``."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    d = np.sqrt(2.0 / n_in) * np.cos(np.pi * k * (2 * n + 1) / (2 * n_in))
    d[0] /= np.sqrt(2.0)
    return d


class MfccPlan:
    """Precomputed, immutable filterbank/DCT/window for one config and rate."""

    def __init__(self, cfg: MfccConfig, sample_rate_hz: int = CANONICAL_RATE):
        self.cfg = cfg
        self.sample_rate_hz = sample_rate_hz
        self.window = cfg.window_samples(sample_rate_hz)
        self.step = cfg.step_samples(sample_rate_hz)
        if self.window > cfg.n_fft:
            raise DegenerateConfig(f"window of {self.window} samples exceeds n_fft={cfg.n_fft}")
        n = np.arange(self.window)
        self.hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.window)
        self.filterbank = build_mel_filterbank(cfg, sample_rate_hz)
        self.dct = dct_matrix(cfg.n_coeffs, cfg.n_mels)

    def frames(self, samples: np.ndarray) -> np.ndarray:
        x = np.asarray(samples, dtype=np.float64)
        emphasized = np.concatenate([x[:1], x[1:] - self.cfg.preemphasis * x[:-1]])
        t = frame_count(x.size, self.window, self.step)
        idx = np.arange(t)[:, None] * self.step + np.arange(self.window)[None, :]
        return emphasized[idx] * self.hann

    def log_mel(self, samples: np.ndarray) -> np.ndarray:
        energies = power_spectrum(self.frames(samples), self.cfg.n_fft) @ self.filterbank.T
        return np.log(np.maximum(energies, self.cfg.log_floor))

    def __call__(self, clip: AudioClip) -> FeatureMatrix:
        if clip.sample_rate_hz != self.sample_rate_hz:
            raise FeatureError(
                f"clip rate {clip.sample_rate_hz} Hz, plan expects {self.sample_rate_hz} Hz")
        if len(clip) < self.window:
            raise TooShort(f"{len(clip)} samples is shorter than one {self.window}-sample window")
        coeffs = self.log_mel(clip.samples) @ self.dct.T
        return FeatureMatrix(coeffs, self.cfg.step_ms)


@lru_cache(maxsize=8)
def get_plan(cfg: MfccConfig, sample_rate_hz: int = CANONICAL_RATE) -> MfccPlan:
    return MfccPlan(cfg, sample_rate_hz)


def compute_mfcc(clip: AudioClip, cfg: MfccConfig = MfccConfig()) -> FeatureMatrix:
    return get_plan(cfg, clip.sample_rate_hz)(clip)


def stack_context(feats: FeatureMatrix, context: int) -> FeatureMatrix:
    """Concatenate each frame with its ``context`` neighbours on both sides (zero padded)."""
    if context == 0:
        return feats
    t, c = feats.frames.shape
    padded = np.zeros((t + 2 * context, c))
    padded[context:context + t] = feats.frames
    stacked = np.concatenate([padded[i:i + t] for i in range(2 * context + 1)], axis=1)
    return FeatureMatrix(stacked, feats.frame_step_ms)


def featurize(clip: AudioClip, cfg: MfccConfig = MfccConfig()) -> FeatureMatrix:
    """MFCCs with the config's context stacking applied; the network's input."""
    return stack_context(compute_mfcc(clip, cfg), cfg.context)


def write_feature_dump(path, feats: FeatureMatrix) -> None:
    t, c = feats.frames.shape
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC + struct.pack("<ii", t, c))
        fh.write(feats.frames.astype("<f4").tobytes())


def read_feature_dump(path, frame_step_ms: float = 20.0) -> FeatureMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _DUMP_MAGIC:
        raise FeatureError(f"{path}: not an MFC1 feature dump")
    t, c = struct.unpack_from("<ii", data, 4)
    frames = np.frombuffer(data, dtype="<f4", count=t * c, offset=12)
    return FeatureMatrix(frames.astype(np.float64).reshape(t, c), frame_step_ms)
