"""Transcript normalization and the character alphabet."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import AsrError, EmptyCorpus, UnknownSymbol

DEFAULT_SYMBOLS = " '" + "abcdefghijklmnopqrstuvwxyz"
_ALLOWED = frozenset(DEFAULT_SYMBOLS)
_SPACES = re.compile(r" +")


class IndexOutOfRange(AsrError, IndexError):
    pass


def normalize_transcript(raw: str) -> str:
    """Lowercase, map everything outside ``[a-z' ]`` to a space, collapse and trim.

    >>> normalize_transcript("India's 22 languages.")
    "india's languages"
    """
    folded = "".join(c if c in _ALLOWED else " " for c in raw.lower())
    return _SPACES.sub(" ", folded).strip(" ")


@dataclass(frozen=True)
class Alphabet:
    """Ordered output symbols. The CTC blank is implicit and sits at ``len(symbols)``."""

    symbols: tuple

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if any(len(s) != 1 for s in symbols):
            raise ValueError("alphabet symbols must be single characters")
        if len(set(symbols)) != len(symbols):
            raise ValueError("alphabet contains duplicate symbols")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(symbols)})

    @property
    def blank_index(self) -> int:
        return len(self.symbols)

    @property
    def n_output(self) -> int:
        return len(self.symbols) + 1

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, char):
        return char in self._index

    def covers(self, text: str) -> bool:
        return all(c in self._index for c in text)

    @classmethod
    def default(cls) -> "Alphabet":
        return cls(tuple(DEFAULT_SYMBOLS))

    def to_text(self) -> str:
        lines = ["# one symbol per line; the CTC blank is implicit"]
        lines.extend(self.symbols)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Alphabet":
        symbols = []
        for line in text.split("\n"):
            if line.endswith("\r"):
                line = line[:-1]
            if not line or line.startswith("#"):
                continue
            symbols.append(line)
        return cls(tuple(symbols))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "Alphabet":
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_text(fh.read())


def build_alphabet(transcripts: Iterable[str]) -> Alphabet:
    transcripts = list(transcripts)
    if not transcripts:
        raise EmptyCorpus("cannot build an alphabet from zero transcripts")
    chars = set().union(*map(set, transcripts))
    ordered = sorted(chars - {" "})
    if " " in chars:
        ordered.insert(0, " ")
    return Alphabet(tuple(ordered))


def encode_labels(text: str, alphabet: Alphabet) -> list:
    index = alphabet._index
    try:
        return [index[c] for c in text]
    except KeyError as exc:
        raise UnknownSymbol(exc.args[0]) from None


def decode_labels(ids: Sequence[int], alphabet: Alphabet) -> str:
    n = len(alphabet.symbols)
    for i in ids:
        if not 0 <= i < n:
            raise IndexOutOfRange(f"label id {i} outside [0, {n})")
    return "".join(alphabet.symbols[i] for i in ids)
