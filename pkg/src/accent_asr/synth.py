"""Deterministic tone-coded corpora for tests and smoke runs.

Each character is rendered as a short sine burst at its own frequency,
separated by silence, so a small network can learn the mapping quickly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .audio import AudioClip, write_wav
from .text import normalize_transcript

TONE_HZ = {
    " ": 3300.0, "'": 3800.0,
    "a": 300.0, "b": 520.0, "c": 800.0, "d": 1150.0,
    "e": 1500.0, "f": 1900.0, "g": 2350.0, "h": 2800.0,
}

# five 2-4 character utterances for the memorization test
MINI_TRANSCRIPTS = ("ab", "ba", "abc", "cab", "bcca")

# twenty raw transcripts with the punctuation and casing the normalizer must clean
FIXTURE_TRANSCRIPTS = (
    "Ab ba.", "BAD cab!", "a dab", "Cab, fed.", "bead",
    "face", "Fade...", "cafe bad", "Deaf? Ha!", "hag",
    "bag", "He had a bag", "Edge", "Chef", "Beef",
    "Dec 12: Ace", "gab", "Had", "BE CHAFE", "egg cab",
)

CHAR_MS = 140
GAP_MS = 60
EDGE_MS = 80


def render(text: str, sample_rate_hz: int = 16000, amplitude: float = 0.4,
           seed: int = 0) -> np.ndarray:
    """Waveform for ``text``; characters without a tone are silent gaps."""
    rng = np.random.default_rng([seed, len(text)])
    sr = sample_rate_hz

    def silence(ms):
        return np.zeros(int(sr * ms / 1000))

    parts = [silence(EDGE_MS)]
    for ch in text:
        n = int(sr * CHAR_MS / 1000)
        t = np.arange(n) / sr
        freq = TONE_HZ.get(ch)
        if freq is None:
            parts.append(silence(CHAR_MS))
        else:
            ramp = np.minimum(1.0, np.minimum(np.arange(n), np.arange(n)[::-1]) / (0.01 * sr))
            parts.append(amplitude * ramp * np.sin(2 * np.pi * freq * t))
        parts.append(silence(GAP_MS))
    parts.append(silence(EDGE_MS))
    x = np.concatenate(parts)
    return np.clip(x + 1e-3 * rng.standard_normal(x.size), -1.0, 1.0)


def write_corpus(out_dir, transcripts, sample_rate_hz: int = 16000, prefix: str = "utt",
                 stereo_every: int = 0) -> Path:
    """Write ``<prefix>NN.wav`` files plus ``index.tsv``; returns the index path.

    With ``stereo_every = k`` every k-th file is written as 24-bit stereo to
    exercise the decoder's mixdown path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, raw in enumerate(transcripts):
        utt_id = f"{prefix}{i:02d}"
        samples = render(normalize_transcript(raw), sample_rate_hz, seed=i)
        path = out_dir / f"{utt_id}.wav"
        if stereo_every and i % stereo_every == 0:
            path.write_bytes(_stereo24(samples, sample_rate_hz))
        else:
            write_wav(path, AudioClip(samples, sample_rate_hz))
        lines.append(f"{utt_id}\t{raw}")
    index = out_dir / "index.tsv"
    index.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return index


def _stereo24(samples: np.ndarray, rate: int) -> bytes:
    ints = np.clip(np.round(samples * 8388608.0), -8388608, 8388607).astype(np.int64)
    frames = np.repeat(ints, 2) & 0xFFFFFF
    raw = np.stack([frames & 0xFF, (frames >> 8) & 0xFF, (frames >> 16) & 0xFF], axis=1)
    body = raw.astype(np.uint8).tobytes()
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(body), b"WAVE", b"fmt ", 16,
                         1, 2, rate, rate * 6, 6, 24, b"data", len(body))
    return header + body
