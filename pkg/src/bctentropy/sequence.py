"""Alphabets, symbol sequences and text ingestion."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import AlphabetError, ContextError, EmptyInputError, IngestionError, UsageError

FORMATS = ("auto", "digits", "separated")

_SPLIT = re.compile(r"[\s,]+")


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 2:
            raise UsageError(f"alphabet size must be an integer >= 2, got {self.size!r}")

    @property
    def m(self) -> int:
        return self.size

    def __contains__(self, symbol) -> bool:
        return 0 <= symbol < self.size


def _frozen_symbols(values, m: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    bad = np.flatnonzero((arr < 0) | (arr >= m))
    if bad.size:
        i = int(bad[0])
        raise AlphabetError(
            f"{what} symbol {int(arr[i])} at position {i} is outside 0..{m - 1}", position=i
        )
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


class Sequence:
    """Immutable symbol string over ``{0, ..., m-1}``.

    ``initial_context`` holds the symbols preceding ``symbols[0]``, in time
    order (the last entry is the symbol immediately before the data).  When it
    is absent, consumers that need a depth-``D`` context take the first ``D``
    data symbols instead.
    """

    __slots__ = ("alphabet", "symbols", "initial_context")

    def __init__(self, symbols: Iterable[int], m: int | Alphabet,
                 initial_context: Optional[Iterable[int]] = None):
        alphabet = m if isinstance(m, Alphabet) else Alphabet(int(m))
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "symbols", _frozen_symbols(symbols, alphabet.m, "data"))
        ctx = None
        if initial_context is not None:
            ctx = _frozen_symbols(initial_context, alphabet.m, "context")
        object.__setattr__(self, "initial_context", ctx)

    def __setattr__(self, name, value):
        raise AttributeError("Sequence is immutable")

    @property
    def m(self) -> int:
        return self.alphabet.m

    def __len__(self) -> int:
        return int(self.symbols.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sequence):
            return NotImplemented
        if self.m != other.m or not np.array_equal(self.symbols, other.symbols):
            return False
        if (self.initial_context is None) != (other.initial_context is None):
            return False
        return self.initial_context is None or np.array_equal(
            self.initial_context, other.initial_context)

    def __hash__(self):
        return hash((self.m, self.symbols.tobytes()))

    def __repr__(self):
        head = self.symbols[:20].tolist()
        more = "..." if len(self) > 20 else ""
        return f"Sequence(m={self.m}, n={len(self)}, symbols={head}{more})"

    def with_context(self, context: Iterable[int]) -> "Sequence":
        return Sequence(self.symbols, self.alphabet, initial_context=context)

    def split_context(self, depth: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(context, data)`` for a depth bound ``D``.

        A supplied initial context must have at least ``D`` symbols; its last
        ``D`` are used.  Without one, the first ``D`` data symbols become the
        context and are not themselves counted as data.
        """
        if depth < 0:
            raise UsageError("depth must be non-negative")
        if self.initial_context is not None:
            if self.initial_context.size < depth:
                raise ContextError(
                    f"initial context has {self.initial_context.size} symbols, depth {depth} needs {depth}")
            ctx = self.initial_context[self.initial_context.size - depth:]
            return ctx, self.symbols
        if len(self) <= depth:
            raise EmptyInputError(
                f"sequence of length {len(self)} leaves no data after consuming a depth-{depth} context")
        return self.symbols[:depth], self.symbols[depth:]


def parse_sequence(text: str, m: int, fmt: str = "auto") -> Sequence:
    """Parse a symbol string.

    ``fmt="digits"`` reads one symbol per character (whitespace ignored) and
    needs ``m <= 10``; ``"separated"`` reads integers split on whitespace or
    commas.  ``"auto"`` picks separated mode when commas are present, when
    ``m > 10``, or when every token is a single character (in which case the
    two readings coincide), and digits otherwise.
    """
    if fmt not in FORMATS:
        raise UsageError(f"unknown sequence format {fmt!r}")
    tokens = [t for t in _SPLIT.split(text.strip()) if t]
    if not tokens:
        raise EmptyInputError("input contains no symbols")
    if fmt == "auto":
        if "," in text or m > 10 or all(len(t) == 1 for t in tokens):
            fmt = "separated"
        else:
            fmt = "digits"
    if fmt == "digits":
        if m > 10:
            raise UsageError("digit format requires an alphabet of at most 10 symbols")
        chars = "".join(tokens)
        values = []
        for i, ch in enumerate(chars):
            if not ch.isdigit():
                raise AlphabetError(f"invalid character {ch!r} at position {i}", position=i)
            values.append(ord(ch) - 48)
    else:
        values = []
        for i, tok in enumerate(tokens):
            try:
                values.append(int(tok))
            except ValueError:
                raise AlphabetError(f"invalid symbol {tok!r} at position {i}", position=i) from None
    return Sequence(values, m)


def format_sequence(x: Sequence, fmt: str = "auto") -> str:
    """Canonical text: contiguous digits when ``m <= 10``, else space separated."""
    if fmt == "auto":
        fmt = "digits" if x.m <= 10 else "separated"
    if fmt == "digits":
        if x.m > 10:
            raise UsageError("digit format requires an alphabet of at most 10 symbols")
        return (x.symbols.astype(np.uint8) + 48).tobytes().decode("ascii")
    return " ".join(map(str, x.symbols.tolist()))


def read_sequence(path, m: int, fmt: str = "auto") -> Sequence:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return parse_sequence(text, m, fmt)


def quantize_ternary(values) -> Sequence:
    """Map a price series to down/same/up symbols 0/1/2.

    Exact equality of consecutive values counts as "same".
    """
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size < 2:
        raise IngestionError("need at least two values to form a difference")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise IngestionError(f"non-finite value at index {int(bad[0])}")
    return Sequence(np.sign(np.diff(arr)).astype(np.int64) + 1, 3)


def read_values_csv(path) -> np.ndarray:
    """Read the first column as real values; blank lines and ``#`` comments skipped.

    A non-numeric first row is taken as a header.
    """
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    out = []
    header_seen = False
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        field = line.split(",", 1)[0].strip()
        try:
            v = float(field)
        except ValueError:
            if not out and not header_seen:
                header_seen = True
                continue
            raise IngestionError(f"line {lineno}: not a number: {field!r}") from None
        if not math.isfinite(v):
            raise IngestionError(f"line {lineno}: non-finite value {field!r}")
        out.append(v)
    if not out:
        raise EmptyInputError(f"{path} contains no values")
    return np.array(out)
