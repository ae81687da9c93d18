"""Integer codec between label sequences and model token ids."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .errors import DuplicateToken, EmptySequenceError, GrammarViolation, MissingEOS, UnknownId, UnknownToken
from .labels import MoraInventory, ProsodyLabel, TtsLabelSequence, parse_tokens

BOS = "<bos>"
EOS = "<eos>"
PAD = "<pad>"
CONTROL_TOKENS = (BOS, EOS, PAD)

# Rise first so that with the default inventory "[" lands right after the moras.
PROSODY_ORDER = (
    ProsodyLabel.RISE,
    ProsodyLabel.FALL,
    ProsodyLabel.PHRASE_BOUNDARY,
    ProsodyLabel.PAUSE,
    ProsodyLabel.QUESTION,
    ProsodyLabel.PAD,
)


class Vocabulary:
    def __init__(self, tokens: Sequence[str], inventory: MoraInventory):
        self.tokens = tuple(tokens)
        self.inventory = inventory
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DuplicateToken("vocabulary tokens are not unique")
        self.bos = self.index[BOS]
        self.eos = self.index[EOS]
        self.pad = self.index[PAD]

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and other.tokens == self.tokens

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"

    @property
    def mora_ids(self) -> range:
        return range(len(self.inventory))

    @property
    def prosody_ids(self) -> range:
        n = len(self.inventory)
        return range(n, n + len(PROSODY_ORDER))

    def id_of(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise UnknownToken(f"token {token!r} not in vocabulary") from None

    def dump(self, path: str | Path) -> None:
        lines = [f"{t}\t{i}\n" for i, t in enumerate(self.tokens)]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        rows = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line:
                tok, idx = line.rsplit("\t", 1)
                rows.append((int(idx), tok))
        rows.sort()
        if [i for i, _ in rows] != list(range(len(rows))):
            raise ValueError("vocabulary ids must be dense from 0")
        tokens = [t for _, t in rows]
        n_pros = len(PROSODY_ORDER)
        moras = tokens[: len(tokens) - n_pros - len(CONTROL_TOKENS)]
        return cls(tokens, MoraInventory(moras))


def build_vocab(inventory: MoraInventory) -> Vocabulary:
    """Sorted moras, then the six prosody symbols, then BOS/EOS/PAD."""
    toks = list(inventory.tokens)
    reserved = {p.value for p in ProsodyLabel} | set(CONTROL_TOKENS)
    seen = set()
    for t in toks:
        if t in reserved:
            raise DuplicateToken(f"mora token {t!r} collides with a reserved token")
        if t in seen:
            raise DuplicateToken(f"mora token {t!r} appears twice")
        seen.add(t)
    moras = sorted(toks)
    tokens = moras + [p.value for p in PROSODY_ORDER] + list(CONTROL_TOKENS)
    return Vocabulary(tokens, MoraInventory(moras))


def encode(seq: TtsLabelSequence, vocab: Vocabulary) -> list[int]:
    if len(seq) == 0:
        raise EmptySequenceError("cannot encode an empty label sequence")
    ids = [vocab.bos]
    for m, p in zip(seq.moras, seq.prosody):
        if m not in vocab.inventory:
            raise UnknownToken(f"mora {m!r} not in vocabulary")
        ids.append(vocab.index[m])
        ids.append(vocab.index[p.value])
    ids.append(vocab.eos)
    return ids


def decode(ids: Sequence[int], vocab: Vocabulary) -> TtsLabelSequence:
    """Decode ``[BOS, ..., EOS, ...]``; anything after the first EOS is ignored."""
    ids = [int(i) for i in ids]
    n = len(vocab)
    for i in ids:
        if i < 0 or i >= n:
            raise UnknownId(f"id {i} outside vocabulary of size {n}")
    if not ids or ids[0] != vocab.bos:
        raise GrammarViolation("id sequence does not start with BOS")
    try:
        end = ids.index(vocab.eos, 1)
    except ValueError:
        raise MissingEOS("no EOS in id sequence") from None
    body = ids[1:end]
    for i in body:
        if i in (vocab.bos, vocab.pad):
            raise GrammarViolation(f"control token {vocab.tokens[i]!r} inside label body")
    return parse_tokens([vocab.tokens[i] for i in body], vocab.inventory)
