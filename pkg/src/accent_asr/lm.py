"""Character n-gram language model with add-k smoothing."""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from typing import Iterable, Optional

from .errors import AsrError, EmptyCorpus, UnknownSymbol

BOUNDARY = "^"
_HEADER_PREFIX = "#ngram "


class LmFormatError(AsrError, ValueError):
    pass


class NgramModel:
    """Immutable after training; safe to share between decoding threads.

    ``vocab`` holds the character symbols plus :data:`BOUNDARY`, which pads the
    start of every sequence and is also counted once as the end-of-sentence
    event so that it carries probability mass like any other symbol.
    """

    def __init__(self, order: int, k: float, vocab: Iterable[str], counts: dict):
        if order < 1:
            raise ValueError("order must be >= 1")
        if k < 0:
            raise ValueError("k must be non-negative")
        self.order = order
        self.k = float(k)
        self.vocab = tuple(vocab)
        if BOUNDARY not in self.vocab:
            raise ValueError("vocab must contain the boundary marker")
        self._vocab_set = frozenset(self.vocab)
        self.counts = {ctx: dict(nxt) for ctx, nxt in counts.items()}
        self._totals = {ctx: sum(nxt.values()) for ctx, nxt in self.counts.items()}

    def _context(self, history: str) -> str:
        n = self.order - 1
        if n == 0:
            return ""
        padded = BOUNDARY * n + history
        return padded[len(padded) - n:]

    def prob(self, context: str, symbol: str) -> float:
        """P(symbol | last order-1 characters of ``context``), boundary padded."""
        if symbol not in self._vocab_set:
            raise UnknownSymbol(symbol)
        ctx = self._context(context)
        seen = self.counts.get(ctx, {})
        total = self._totals.get(ctx, 0)
        denom = total + self.k * len(self.vocab)
        if denom == 0:
            return 1.0 / len(self.vocab)
        return (seen.get(symbol, 0) + self.k) / denom

    def log_prob(self, context: str, symbol: str) -> float:
        p = self.prob(context, symbol)
        return math.log(p) if p > 0 else -math.inf

    def score(self, text: str) -> float:
        """Natural-log probability of ``text``'s characters; the empty string scores 0."""
        total = 0.0
        for i, c in enumerate(text):
            if c == BOUNDARY:
                raise UnknownSymbol(c)
            total += self.log_prob(text[:i], c)
        return total

    def contexts(self):
        return sorted(self.counts)

    def to_text(self) -> str:
        header = _HEADER_PREFIX + json.dumps(
            {"order": self.order, "k": self.k, "vocab": list(self.vocab)},
            ensure_ascii=False, sort_keys=True)
        lines = [header]
        for ctx in sorted(self.counts):
            for sym in sorted(self.counts[ctx]):
                lines.append(f"{ctx}\t{sym}\t{self.counts[ctx][sym]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NgramModel":
        lines = text.split("\n")
        if not lines or not lines[0].startswith(_HEADER_PREFIX):
            raise LmFormatError("missing '#ngram' header line")
        try:
            meta = json.loads(lines[0][len(_HEADER_PREFIX):])
            counts = defaultdict(dict)
            for line in lines[1:]:
                if not line:
                    continue
                ctx, sym, count = line.split("\t")
                counts[ctx][sym] = int(count)
            return cls(meta["order"], meta["k"], meta["vocab"], counts)
        except (ValueError, KeyError) as exc:
            raise LmFormatError(f"malformed n-gram file: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "NgramModel":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_text(fh.read())


def train_ngram(transcripts: Iterable[str], order: int = 5, k: float = 0.5,
                symbols: Optional[Iterable[str]] = None) -> NgramModel:
    """Count character n-grams with ``order - 1`` boundary pads at the start of each line.

    The vocabulary is ``symbols`` when given, otherwise the characters seen in
    the corpus, plus the boundary marker.
    """
    transcripts = list(transcripts)
    if not transcripts:
        raise EmptyCorpus("cannot train an n-gram model on zero transcripts")
    if order < 1:
        raise ValueError("order must be >= 1")
    seen = set()
    for line in transcripts:
        if BOUNDARY in line:
            raise ValueError(f"transcript contains the reserved boundary marker {BOUNDARY!r}")
        seen.update(line)
    if symbols is None:
        vocab = sorted(seen)
    else:
        vocab = list(symbols)
        unknown = seen - set(vocab)
        if unknown:
            raise UnknownSymbol(sorted(unknown)[0])
    vocab.append(BOUNDARY)

    n = order - 1
    counts = defaultdict(Counter)
    for line in transcripts:
        padded = BOUNDARY * n + line + BOUNDARY
        for i in range(n, len(padded)):
            counts[padded[i - n:i]][padded[i]] += 1
    return NgramModel(order, k, vocab, counts)
