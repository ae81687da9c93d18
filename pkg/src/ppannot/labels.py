"""Mixed phonemic/prosodic TTS label sequences.

A label string alternates mora tokens and prosody symbols, one prosody symbol
per mora::

    a [ me ] ka * ze *

The six prosody symbols are fixed; the mora inventory is configurable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import GrammarViolation, UnknownToken


class ProsodyLabel(str, enum.Enum):
    PAUSE = "_"
    RISE = "["
    FALL = "]"
    PHRASE_BOUNDARY = "#"
    QUESTION = "?"
    PAD = "*"

    @classmethod
    def from_symbol(cls, symbol: str) -> "ProsodyLabel":
        return _SYMBOL_TO_LABEL[symbol]

    def __str__(self) -> str:
        return self.value


_SYMBOL_TO_LABEL = {lab.value: lab for lab in ProsodyLabel}
PROSODY_SYMBOLS = tuple(_SYMBOL_TO_LABEL)

DEFAULT_MORAS = (
    "a", "i", "u", "e", "o",
    "ka", "ki", "ku", "ke", "ko",
    "sa", "shi", "su", "se", "so",
    "ta", "chi", "tsu", "te", "to",
    "na", "ni", "nu", "ne", "no",
    "ma", "mi", "mu", "me", "mo",
)


class MoraInventory:
    """Ordered set of mora tokens usable in label strings."""

    def __init__(self, tokens: Iterable[str]):
        toks = tuple(tokens)
        if not toks:
            raise ValueError("mora inventory is empty")
        self.tokens = toks
        self._set = frozenset(toks)

    def __contains__(self, tok: object) -> bool:
        return tok in self._set

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MoraInventory) and other.tokens == self.tokens

    def __hash__(self) -> int:
        return hash(self.tokens)

    def __repr__(self) -> str:
        return f"MoraInventory({len(self.tokens)} tokens)"

    @classmethod
    def default(cls) -> "MoraInventory":
        return cls(DEFAULT_MORAS)

    @classmethod
    def load(cls, path: str | Path) -> "MoraInventory":
        """Read one token per line (UTF-8); blank lines are ignored."""
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(line.strip() for line in lines if line.strip())

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")


DEFAULT_INVENTORY = MoraInventory.default()


@dataclass(frozen=True)
class TtsLabelSequence:
    """Aligned mora and prosody streams; ``len(seq)`` is the mora count M."""

    moras: tuple[str, ...]
    prosody: tuple[ProsodyLabel, ...]

    def __post_init__(self):
        if len(self.moras) != len(self.prosody):
            raise GrammarViolation(
                f"{len(self.moras)} moras but {len(self.prosody)} prosody labels"
            )

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, ProsodyLabel | str]]) -> "TtsLabelSequence":
        moras, pros = [], []
        for m, p in pairs:
            moras.append(m)
            pros.append(p if isinstance(p, ProsodyLabel) else ProsodyLabel.from_symbol(p))
        return cls(tuple(moras), tuple(pros))

    @property
    def pairs(self) -> list[tuple[str, ProsodyLabel]]:
        return list(zip(self.moras, self.prosody))

    def tokens(self) -> list[str]:
        out = []
        for m, p in zip(self.moras, self.prosody):
            out.append(m)
            out.append(p.value)
        return out

    def __len__(self) -> int:
        return len(self.moras)

    def __str__(self) -> str:
        return serialize(self)


def parse_label_string(text: str, inventory: MoraInventory = DEFAULT_INVENTORY) -> TtsLabelSequence:
    """Parse a whitespace-separated label string.

    Raises UnknownToken for tokens outside both the mora inventory and the
    prosody symbols, GrammarViolation when moras and prosody symbols do not
    strictly alternate starting with a mora.
    """
    return parse_tokens(text.split(), inventory)


def parse_tokens(tokens: Sequence[str], inventory: MoraInventory = DEFAULT_INVENTORY) -> TtsLabelSequence:
    moras: list[str] = []
    pros: list[ProsodyLabel] = []
    expect_mora = True
    for i, tok in enumerate(tokens):
        is_pros = tok in _SYMBOL_TO_LABEL
        if not is_pros and tok not in inventory:
            raise UnknownToken(f"token {tok!r} at position {i} is neither a mora nor a prosody symbol")
        if expect_mora and is_pros:
            raise GrammarViolation(f"prosody symbol {tok!r} at position {i} has no mora")
        if not expect_mora and not is_pros:
            raise GrammarViolation(f"mora {tok!r} at position {i} follows an unlabeled mora")
        if is_pros:
            pros.append(_SYMBOL_TO_LABEL[tok])
        else:
            moras.append(tok)
        expect_mora = not expect_mora
    if not expect_mora:
        raise GrammarViolation("odd token count: last mora has no prosody label")
    return TtsLabelSequence(tuple(moras), tuple(pros))


def serialize(seq: TtsLabelSequence) -> str:
    return " ".join(seq.tokens())


def split_streams(seq: TtsLabelSequence) -> tuple[list[str], list[ProsodyLabel]]:
    return list(seq.moras), list(seq.prosody)


def join_streams(moras: Sequence[str], prosody: Sequence[ProsodyLabel]) -> TtsLabelSequence:
    return TtsLabelSequence(tuple(moras), tuple(prosody))


def strip_prosody(seq: TtsLabelSequence) -> list[str]:
    return list(seq.moras)


def validate(seq: TtsLabelSequence, inventory: MoraInventory = DEFAULT_INVENTORY) -> list[str]:
    """Return the names of violated invariants; empty when ``seq`` is valid."""
    problems = []
    if len(seq.moras) == 0:
        problems.append("EmptySequence")
    if len(seq.moras) != len(seq.prosody):
        problems.append("LengthMismatch")
    for m in seq.moras:
        if not isinstance(m, str) or not m:
            problems.append("EmptyMora")
        elif m in _SYMBOL_TO_LABEL:
            problems.append("TokenCollision")
        elif m not in inventory:
            problems.append("UnknownMora")
    for p in seq.prosody:
        if not isinstance(p, ProsodyLabel):
            problems.append("InvalidProsody")
    # keep first occurrence order, drop repeats
    return list(dict.fromkeys(problems))
