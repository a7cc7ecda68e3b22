"""Word/character error rates and corpus evaluation reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import audio, checkpoint, ctc, features, manifest
from .errors import AsrError
from .model import forward
from .text import encode_labels, normalize_transcript

log = logging.getLogger(__name__)

RECORD_HEADER = ("wav_filename", "wer", "cer", "loss", "reference", "hypothesis")


class EmptyReference(AsrError, ValueError):
    pass


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit-cost insertions, deletions and substitutions."""
    if len(a) < len(b):
        a, b = b, a
    # shared prefixes and suffixes never cost anything
    start, n = 0, len(b)
    while start < n and a[start] == b[start]:
        start += 1
    a, b = a[start:], b[start:]
    while b and a[-1] == b[-1]:
        a, b = a[:-1], b[:-1]
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        left = i
        cur = [i]
        for j, y in enumerate(b):
            best = prev[j] if x == y else prev[j] + 1
            if prev[j + 1] + 1 < best:
                best = prev[j + 1] + 1
            left += 1
            if best < left:
                left = best
            cur.append(left)
        prev = cur
    return prev[-1]


def _words(text: str) -> list:
    return text.split(" ") if text else []


def word_error_rate(ref: str, hyp: str) -> float:
    ref_words = _words(ref)
    if not ref_words:
        raise EmptyReference("reference has no words")
    return edit_distance(ref_words, _words(hyp)) / len(ref_words)


def char_error_rate(ref: str, hyp: str) -> float:
    if not ref:
        raise EmptyReference("reference has no characters")
    return edit_distance(ref, hyp) / len(ref)


@dataclass(frozen=True)
class EvalRecord:
    wav_filename: str
    reference: str
    hypothesis: str
    wer: float
    cer: float
    loss: float


@dataclass(frozen=True)
class EvalReport:
    mean_wer: float
    mean_cer: float
    mean_loss: float
    best: EvalRecord
    median: EvalRecord
    worst: EvalRecord
    count: int
    decoder: str = "greedy"

    def to_json(self) -> str:
        doc = {
            "mean_wer": self.mean_wer,
            "mean_cer": self.mean_cer,
            "mean_loss": self.mean_loss,
            "best": asdict(self.best),
            "median": asdict(self.median),
            "worst": asdict(self.worst),
            "count": self.count,
            "decoder": self.decoder,
        }
        return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        lines = [
            f"decoder {self.decoder}",
            f"count {self.count}",
            f"mean WER {self.mean_wer:.6f}",
            f"mean CER {self.mean_cer:.6f}",
            f"mean loss {self.mean_loss:.6f}",
        ]
        for label, rec in (("best", self.best), ("median", self.median), ("worst", self.worst)):
            lines.append(f"{label} WER {rec.wer:.6f} CER {rec.cer:.6f} loss {rec.loss:.6f} "
                         f"{rec.wav_filename}")
            lines.append(f"  ref: {rec.reference}")
            lines.append(f"  hyp: {rec.hypothesis}")
        return "\n".join(lines) + "\n"


def rank_records(records) -> list:
    """Sort by WER, then CER, then filename."""
    return sorted(records, key=lambda r: (r.wer, r.cer, r.wav_filename))


def build_report(records, decoder: str = "greedy") -> EvalReport:
    if not records:
        raise AsrError("cannot build a report from zero records")
    ranked = rank_records(records)
    finite = [r.loss for r in ranked if math.isfinite(r.loss)]
    return EvalReport(
        mean_wer=float(np.mean([r.wer for r in ranked])),
        mean_cer=float(np.mean([r.cer for r in ranked])),
        mean_loss=float(np.mean(finite)) if finite else math.inf,
        best=ranked[0],
        median=ranked[(len(ranked) - 1) // 2],
        worst=ranked[-1],
        count=len(ranked),
        decoder=decoder,
    )


def format_records(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_HEADER)
    for r in records:
        writer.writerow((r.wav_filename, f"{r.wer:.6f}", f"{r.cer:.6f}", f"{r.loss:.6f}",
                         r.reference, r.hypothesis))
    return buf.getvalue()


def score_pair(wav_filename: str, reference: str, hypothesis: str, loss: float) -> EvalRecord:
    ref = normalize_transcript(reference)
    hyp = normalize_transcript(hypothesis)
    return EvalRecord(wav_filename, ref, hyp, word_error_rate(ref, hyp),
                      char_error_rate(ref, hyp), loss)


def decode(log_probs, alphabet, beam: Optional[ctc.BeamConfig]) -> str:
    if beam is None:
        return ctc.greedy_decode(log_probs, alphabet)
    return ctc.beam_decode(log_probs, beam, alphabet)


def transcribe_clip(state, clip: audio.AudioClip, beam: Optional[ctc.BeamConfig] = None) -> str:
    clip = audio.to_canonical(clip)
    feats = features.featurize(clip, state.mfcc)
    _, cache = forward(state.params, feats)
    return decode(cache["log_probs"], state.alphabet, beam)


def evaluate(manifest_path, checkpoint_path, beam: Optional[ctc.BeamConfig] = None,
             out_dir=None) -> tuple:
    """Score every manifest row; returns ``(report, records)``.

    When ``out_dir`` is given, writes ``records.csv``, ``report.txt`` and
    ``report.json`` there. Rows are processed in manifest order.
    """
    state = checkpoint.load_checkpoint(checkpoint_path)
    alphabet = state.alphabet
    records = []
    for row in manifest.read_manifest(manifest_path):
        clip = audio.to_canonical(audio.read_wav(manifest.resolve_wav(manifest_path, row)))
        feats = features.featurize(clip, state.mfcc)
        _, cache = forward(state.params, feats)
        log_probs = cache["log_probs"]
        reference = normalize_transcript(row.transcript)
        try:
            loss = ctc.ctc_loss(log_probs, encode_labels(reference, alphabet),
                                alphabet.blank_index)
        except ctc.Infeasible:
            log.warning("SKIP-LOSS %s infeasible", row.wav_filename)
            loss = math.inf
        records.append(score_pair(row.wav_filename, reference,
                                  decode(log_probs, alphabet, beam), loss))
    decoder = "greedy" if beam is None else beam.describe()
    report = build_report(records, decoder)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write(out_dir / "records.csv", format_records(records))
        _write(out_dir / "report.txt", report.to_text())
        _write(out_dir / "report.json", report.to_json())
    return report, records


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
