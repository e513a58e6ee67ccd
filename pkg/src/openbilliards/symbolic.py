"""Admissible words over {1..s}, periodic codes, and overlapping-block recoding."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

from .errors import CyclicSeam, InadmissibleAt, OutOfAlphabet, WordError, WordTooShort

Word = tuple[int, ...]


def validate_word(symbols: Sequence[int], s: int) -> Word:
    """Return `symbols` as a tuple if it is a nonempty admissible word over {1..s}."""
    word = tuple(int(x) for x in symbols)
    if not word:
        raise WordError("empty word")
    for i, x in enumerate(word):
        if not 1 <= x <= s:
            raise OutOfAlphabet(i)
        if i + 1 < len(word) and word[i + 1] == x:
            raise InadmissibleAt(i)
    return word


def is_admissible(symbols: Sequence[int]) -> bool:
    return all(a != b for a, b in zip(symbols, symbols[1:]))


@dataclass(frozen=True)
class PeriodicCode:
    """A bi-infinite periodic sequence given by one period `block`."""

    block: Word

    def __post_init__(self):
        object.__setattr__(self, "block", tuple(int(x) for x in self.block))

    @property
    def period(self) -> int:
        return len(self.block)

    def __len__(self):
        return len(self.block)

    def __getitem__(self, i: int) -> int:
        """Symbol at any integer position of the periodic sequence."""
        return self.block[i % len(self.block)]

    def window(self, start: int, length: int) -> Word:
        return tuple(self[i] for i in range(start, start + length))

    def canonical(self) -> PeriodicCode:
        return PeriodicCode(least_rotation(self.block))

    def __str__(self):
        return format_code(self)


def validate_cyclic(code: PeriodicCode, s: int | None = None) -> PeriodicCode:
    """Check that the block is admissible and wraps around admissibly."""
    validate_word(code.block, s if s is not None else max(code.block))
    if code.period < 2:
        raise WordError("period must be at least 2")
    if code.block[-1] == code.block[0]:
        raise CyclicSeam()
    return code


def unroll(code: PeriodicCode, copies: int) -> Word:
    if copies < 1:
        raise ValueError("copies must be >= 1")
    return code.block * copies


def least_rotation(block: Sequence[int]) -> Word:
    b = tuple(block)
    return min(b[i:] + b[:i] for i in range(len(b)))


def _cyclic_words(s: int, p: int) -> Iterator[Word]:
    # depth-first over admissible words in lexicographic order; the cyclic seam
    # is enforced at the end
    stack: list[int] = []

    def extend(pos):
        if pos == p:
            if stack[-1] != stack[0]:
                yield tuple(stack)
            return
        for x in range(1, s + 1):
            if pos and stack[-1] == x:
                continue
            # a least rotation always starts with its minimal symbol
            if pos and x < stack[0]:
                continue
            stack.append(x)
            yield from extend(pos + 1)
            stack.pop()

    yield from extend(0)


def enumerate_periodic(s: int, max_period: int, min_period: int = 2) -> Iterator[PeriodicCode]:
    """One code per rotation class, by increasing period then lexicographically.

    Each yielded block is the lexicographically least rotation. Powers of
    shorter blocks are included (their rotation vectors coincide with the
    shorter block's).
    """
    if max_period < 2:
        raise ValueError("max_period must be >= 2")
    for p in range(max(2, min_period), max_period + 1):
        for w in _cyclic_words(s, p):
            if least_rotation(w) == w:
                yield PeriodicCode(w)


def count_closed_walks(s: int, p: int) -> int:
    """Closed walks of length p on the complete graph K_s: (s-1)^p + (s-1)(-1)^p."""
    return (s - 1) ** p + (s - 1) * (-1) ** p


# ------------------------------------------------------------------ recoding


@dataclass(frozen=True)
class BlockAlphabet:
    """All admissible length-m words over {1..s}, with dense ids in lex order."""

    s: int
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("block length must be >= 1")

    @cached_property
    def blocks(self) -> tuple[Word, ...]:
        out = []
        for w in itertools.product(range(1, self.s + 1), repeat=self.m):
            if is_admissible(w):
                out.append(w)
        return tuple(out)

    @cached_property
    def ids(self) -> dict[Word, int]:
        return {b: i for i, b in enumerate(self.blocks)}

    def __len__(self):
        return len(self.blocks)

    def id(self, block: Sequence[int]) -> int:
        return self.ids[tuple(block)]

    def adjacent(self, a: int, b: int) -> bool:
        return self.blocks[a][1:] == self.blocks[b][:-1]

    def successors(self, a: int) -> list[int]:
        b = self.blocks[a]
        return [self.ids[b[1:] + (x,)] for x in range(1, self.s + 1) if x != b[-1]]


def recode(word: Sequence[int], m: int, alphabet: BlockAlphabet | None = None) -> list[int]:
    """Ids of the overlapping blocks word[i:i+m], i = 0..len-m."""
    word = tuple(word)
    if len(word) < m:
        raise WordTooShort(f"word of length {len(word)} is shorter than block length {m}")
    if alphabet is None:
        alphabet = BlockAlphabet(max(word), m)
    return [alphabet.id(word[i : i + m]) for i in range(len(word) - m + 1)]


def shift(word: Sequence[int], k: int = 1) -> Word:
    return tuple(word)[k:]


# ------------------------------------------------------------- text formats

_CODE_RE = re.compile(r"^\s*(?:(\d+)\s*:)?\s*\(?\s*([\d\s,]+?)\s*\)?\s*$")


def parse_word(text: str) -> Word:
    parts = [p for p in re.split(r"[,\s]+", text.strip().strip("()")) if p]
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise WordError(f"cannot parse word {text!r}") from None


def parse_code(text: str) -> PeriodicCode:
    """Parse `p:(b1,...,bp)`; the `p:` prefix is optional but checked when present."""
    m = _CODE_RE.match(text)
    if not m:
        raise WordError(f"cannot parse periodic code {text!r}")
    block = parse_word(m.group(2))
    if m.group(1) is not None and int(m.group(1)) != len(block):
        raise WordError(f"declared period {m.group(1)} does not match block length {len(block)}")
    return PeriodicCode(block)


def format_word(word: Sequence[int]) -> str:
    return ",".join(str(x) for x in word)


def format_code(code: PeriodicCode) -> str:
    return f"{code.period}:({format_word(code.block)})"
