"""Probability-gated waveform augmentations.

Grammar: ``kind[p=<real>,<param>=<low>:<high>]`` with kind one of
``gain`` (``db``), ``noise`` (``snr``, dB) or ``tempo`` (``rate``). Brackets
may be omitted to take all defaults; a single number is a degenerate range.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import audio
from .errors import AsrError

PARAMS = {
    "gain": ("db", (-6.0, 0.0)),
    "noise": ("snr", (10.0, 30.0)),
    "tempo": ("rate", (0.9, 1.1)),
}

_SPEC = re.compile(r"^\s*([A-Za-z_]+)\s*(?:\[(.*)\])?\s*$")


class AugmentSpecError(AsrError, ValueError):
    pass


class AugmentSyntaxError(AugmentSpecError):
    pass


class UnknownKind(AugmentSpecError):
    pass


class RangeOrderError(AugmentSpecError):
    pass


@dataclass(frozen=True)
class AugmentSpec:
    kind: str
    probability: float = 1.0
    low: float = 0.0
    high: float = 0.0

    def __post_init__(self):
        if self.kind not in PARAMS:
            raise UnknownKind(f"unknown augmentation {self.kind!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise RangeOrderError(f"probability {self.probability} outside [0, 1]")
        if self.low > self.high:
            raise RangeOrderError(f"range {self.low}:{self.high} is not ordered")
        if self.kind == "tempo" and self.low <= 0:
            raise RangeOrderError("tempo rate must be positive")

    @property
    def param(self) -> str:
        return PARAMS[self.kind][0]

    def __str__(self):
        return f"{self.kind}[p={self.probability!r},{self.param}={self.low!r}:{self.high!r}]"


def _number(text, spec):
    try:
        return float(text)
    except ValueError:
        raise AugmentSyntaxError(f"bad number {text!r} in {spec!r}") from None


def parse_augment_spec(text: str) -> AugmentSpec:
    m = _SPEC.match(text)
    if not m:
        raise AugmentSyntaxError(f"cannot parse augmentation {text!r}")
    kind, body = m.group(1), m.group(2)
    if kind not in PARAMS:
        raise UnknownKind(f"unknown augmentation {kind!r}")
    param, (low, high) = PARAMS[kind]
    p = 1.0
    for item in filter(None, (s.strip() for s in (body or "").split(","))):
        if "=" not in item:
            raise AugmentSyntaxError(f"expected key=value, got {item!r} in {text!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        if key == "p":
            p = _number(value, text)
        elif key == param:
            if ":" in value:
                lo, hi = value.split(":", 1)
                low, high = _number(lo, text), _number(hi, text)
            else:
                low = high = _number(value, text)
        else:
            raise AugmentSyntaxError(f"{kind} has no parameter {key!r}")
    return AugmentSpec(kind, p, low, high)


def _generator(seed: int, sample_index: int, position: int) -> np.random.Generator:
    # Philox is counter-based; the key is derived from the triple alone
    key = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, sample_index, position])
    return np.random.Generator(np.random.Philox(key))


def fires(spec: AugmentSpec, seed: int, sample_index: int, position: int) -> bool:
    return bool(_generator(seed, sample_index, position).random() < spec.probability)


def apply_augmentations(clip: audio.AudioClip, specs, rng_seed: int,
                        sample_index: int) -> audio.AudioClip:
    """Apply ``specs`` in order, each firing independently with its probability.

    Draws are a pure function of ``(rng_seed, sample_index, position)``.
    """
    for position, spec in enumerate(specs):
        rng = _generator(rng_seed, sample_index, position)
        if not rng.random() < spec.probability:
            continue
        value = rng.uniform(spec.low, spec.high) if spec.high > spec.low else spec.low
        clip = _APPLY[spec.kind](clip, value, rng)
    return clip


def _gain(clip, db, rng):
    return audio.AudioClip(np.clip(clip.samples * 10.0 ** (db / 20.0), -1.0, 1.0),
                           clip.sample_rate_hz)


def _noise(clip, snr_db, rng):
    rms = np.sqrt(np.mean(clip.samples ** 2)) if len(clip) else 0.0
    if rms == 0.0:
        return clip
    noise = rng.standard_normal(len(clip)) * rms / 10.0 ** (snr_db / 20.0)
    return audio.AudioClip(np.clip(clip.samples + noise, -1.0, 1.0), clip.sample_rate_hz)


def _tempo(clip, rate, rng):
    # play back `rate` times faster: resample to rate_hz/rate and relabel
    stretched = audio.resample(clip, max(1, int(round(clip.sample_rate_hz / rate))))
    return audio.AudioClip(stretched.samples, clip.sample_rate_hz)


_APPLY = {"gain": _gain, "noise": _noise, "tempo": _tempo}
