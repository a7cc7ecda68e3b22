"""Exception hierarchy.

Everything deriving from :class:`AsrError` is a user-facing error: the CLI
maps it to exit code 1. Anything else escaping a subcommand is treated as an
internal failure.
"""


class AsrError(Exception):
    """Base class for recoverable, user-facing errors."""


class ShapeMismatch(AsrError, ValueError):
    pass


class EmptyCorpus(AsrError, ValueError):
    pass


class UnknownSymbol(AsrError, KeyError):
    def __init__(self, char):
        super().__init__(char)
        self.char = char

    def __str__(self):
        return f"unknown symbol {self.char!r}"
