"""Corpus scanning, deterministic splitting and CSV manifests."""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from . import audio
from .errors import AsrError
from .text import normalize_transcript

log = logging.getLogger(__name__)

HEADER = ("wav_filename", "wav_filesize", "transcript")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class ManifestError(AsrError):
    pass


class MissingIndex(ManifestError, FileNotFoundError):
    pass


class NoUsableUtterances(ManifestError):
    pass


class IoFailure(ManifestError, OSError):
    pass


@dataclass(frozen=True)
class ManifestRow:
    wav_filename: str
    wav_filesize: int
    transcript: str


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: Fraction = Fraction(8, 10)
    dev_fraction: Fraction = Fraction(1, 10)
    test_fraction: Fraction = Fraction(1, 10)
    seed: int = 42

    def __post_init__(self):
        fracs = []
        for name in ("train_fraction", "dev_fraction", "test_fraction"):
            value = Fraction(str(getattr(self, name)))
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)
            fracs.append(value)
        if sum(fracs) != 1:
            raise ValueError(f"split fractions must sum to 1, got {float(sum(fracs))}")

    @classmethod
    def parse(cls, text: str, seed: int = 42) -> "SplitSpec":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"split must have three comma-separated fractions: {text!r}")
        return cls(*parts, seed=seed)


def read_transcript_index(path) -> dict:
    """Read ``id<TAB>raw text`` lines. A literal backslash-t is accepted as separator too."""
    path = Path(path)
    if not path.is_file():
        raise MissingIndex(f"transcript index not found: {path}")
    entries = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            if "\t" in line:
                utt_id, raw = line.split("\t", 1)
            elif "\\t" in line:
                utt_id, raw = line.split("\\t", 1)
            else:
                log.warning("SKIP line%d no-separator", lineno)
                continue
            entries[utt_id.strip()] = raw
    return entries


def _find_audio(root: Path) -> dict:
    found = {}
    for wav in sorted(root.rglob("*.wav")):
        found.setdefault(wav.stem, wav)
    return found


def _convert(src: Path, dst: Path) -> None:
    clip = audio.to_canonical(audio.read_wav(src))
    dst.parent.mkdir(parents=True, exist_ok=True)
    audio.write_wav(dst, clip)


def scan_corpus(root, transcript_index, out_dir, wav_subdir: str = "wavs",
                workers: int = 1) -> list:
    """Pair transcripts with audio, convert audio to 16 kHz mono s16le, normalize text.

    Converted files land in ``out_dir/wav_subdir`` (the source corpus is never
    touched). Returned rows are sorted by ``wav_filename``, which is stored
    relative to ``out_dir`` so manifests are relocatable.
    """
    root, out_dir = Path(root), Path(out_dir)
    index = read_transcript_index(transcript_index)
    available = _find_audio(root)

    jobs = []
    skipped = 0
    for utt_id in sorted(index):
        transcript = normalize_transcript(index[utt_id])
        if utt_id not in available:
            log.warning("SKIP %s missing-audio", utt_id)
            skipped += 1
            continue
        if not transcript:
            log.warning("SKIP %s empty-transcript", utt_id)
            skipped += 1
            continue
        src = available[utt_id]
        rel = Path(wav_subdir) / src.relative_to(root).with_suffix(".wav")
        jobs.append((utt_id, src, rel, transcript))

    def work(job):
        utt_id, src, rel, transcript = job
        try:
            _convert(src, out_dir / rel)
        except audio.WavError as exc:
            return utt_id, None, f"bad-audio:{type(exc).__name__}"
        size = (out_dir / rel).stat().st_size
        return utt_id, ManifestRow(rel.as_posix(), size, transcript), None

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(work, jobs))

    rows = []
    for utt_id, row, reason in results:
        if row is None:
            log.warning("SKIP %s %s", utt_id, reason)
            skipped += 1
        else:
            rows.append(row)
    if skipped:
        log.warning("skipped %d of %d indexed utterances", skipped, len(index))
    if not rows:
        raise NoUsableUtterances(f"no usable utterances under {root}")
    rows.sort(key=lambda r: r.wav_filename)
    return rows


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def split_key(seed: int, wav_filename: str) -> Fraction:
    """Map (seed, filename) to an exact rational in [0, 1) via 64-bit FNV-1a.

    The seed enters as 8 little-endian bytes ahead of the UTF-8 filename.
    """
    data = (seed & _MASK64).to_bytes(8, "little") + wav_filename.encode("utf-8")
    return Fraction(fnv1a_64(data), 1 << 64)


def split_corpus(rows, spec: SplitSpec):
    train, dev, test = [], [], []
    cut_train = spec.train_fraction
    cut_dev = spec.train_fraction + spec.dev_fraction
    for row in rows:
        u = split_key(spec.seed, row.wav_filename)
        if u < cut_train:
            train.append(row)
        elif u < cut_dev:
            dev.append(row)
        else:
            test.append(row)
    return train, dev, test


def format_manifest(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for row in rows:
        writer.writerow((row.wav_filename, row.wav_filesize, row.transcript))
    return buf.getvalue()


def write_manifest(rows, out) -> None:
    try:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(format_manifest(rows))
    except OSError as exc:
        raise IoFailure(f"cannot write manifest {out}: {exc}") from exc


def read_manifest(path) -> list:
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != HEADER:
                raise ManifestError(f"{path}: bad header {header!r}")
            return [ManifestRow(name, int(size), text) for name, size, text in reader]
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    except ValueError as exc:
        raise ManifestError(f"{path}: malformed row ({exc})") from exc


def resolve_wav(manifest_path, row: ManifestRow) -> Path:
    """Relative wav paths are resolved against the manifest's directory."""
    wav = Path(row.wav_filename)
    return wav if wav.is_absolute() else Path(manifest_path).parent / wav


def validate_manifest(path) -> list:
    """Return a list of ``(row_number, wav_filename, problem)`` tuples; empty means valid."""
    problems = []
    for n, row in enumerate(read_manifest(path), 1):
        wav = resolve_wav(path, row)
        if not row.transcript:
            problems.append((n, row.wav_filename, "empty transcript"))
        elif normalize_transcript(row.transcript) != row.transcript:
            problems.append((n, row.wav_filename, "transcript not normalized"))
        if not wav.is_file():
            problems.append((n, row.wav_filename, "file missing"))
            continue
        size = os.path.getsize(wav)
        if row.wav_filesize <= 0 or size != row.wav_filesize:
            problems.append((n, row.wav_filename, f"size {row.wav_filesize} != on-disk {size}"))
        with open(wav, "rb") as fh:
            if not audio.is_canonical_wav(fh.read(4096)):
                problems.append((n, row.wav_filename, "not mono 16 kHz s16le"))
    return problems
