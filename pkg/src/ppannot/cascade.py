"""Text-only cascade baseline: grapheme recognition, then lexicon lookup.

With ``err_rate == 0`` the recognizer is the identity (ground-truth text);
with ``err_rate > 0`` it is the word-substitution ASR surrogate.
"""

from __future__ import annotations

import enum
from typing import Sequence

from .labels import MoraInventory, ProsodyLabel, TtsLabelSequence
from .synth import Lexicon, LexEntry, Reading, asr_surrogate, join_words


class ResolutionPolicy(str, enum.Enum):
    MAJORITY_PRIOR = "majority"
    FIRST_ENTRY = "first"


def choose_reading(entry: LexEntry, policy: ResolutionPolicy) -> int:
    if policy is ResolutionPolicy.FIRST_ENTRY:
        return 0
    weights = [r.weight for r in entry.readings]
    return weights.index(max(weights))


def spell_out(grapheme: str, inventory: MoraInventory) -> list[str]:
    """Greedy longest-match of the lowercased grapheme against the mora
    inventory; characters that start no mora are skipped."""
    text = grapheme.lower()
    longest = max(len(t) for t in inventory.tokens)
    out = []
    i = 0
    while i < len(text):
        for n in range(min(longest, len(text) - i), 0, -1):
            if text[i: i + n] in inventory:
                out.append(text[i: i + n])
                i += n
                break
        else:
            i += 1
    return out


def _word_reading(g: str, lex: Lexicon, policy: ResolutionPolicy) -> tuple[Reading | None, list[str]]:
    entry = lex.lookup(g)
    if entry is not None:
        return entry.readings[choose_reading(entry, policy)], []
    return None, spell_out(g, lex.inventory)


def text_process(graphemes: Sequence[str], lex: Lexicon,
                 policy: ResolutionPolicy = ResolutionPolicy.MAJORITY_PRIOR) -> TtsLabelSequence:
    """Labels for a grapheme sequence without access to audio.

    Words are joined with PhraseBoundary on the last mora of each non-final
    word. Unknown words are spelled out with all-Pad prosody.
    """
    parts = []
    for g in graphemes:
        reading, spelled = _word_reading(g, lex, policy)
        if reading is not None:
            parts.append((reading.moras, reading.prosody))
        elif spelled:
            parts.append((tuple(spelled), (ProsodyLabel.PAD,) * len(spelled)))
    labels, _ = join_words(parts)
    return labels


def count_fallbacks(graphemes: Sequence[str], lex: Lexicon) -> int:
    return sum(g not in lex for g in graphemes)


def cascade_annotate(graphemes_true: Sequence[str], lex: Lexicon,
                     policy: ResolutionPolicy = ResolutionPolicy.MAJORITY_PRIOR,
                     err_rate: float = 0.0, seed=0) -> TtsLabelSequence:
    """Recognize graphemes (surrogate ASR), then text-process them.

    The acoustic input never reaches the label predictor; only the
    recognized grapheme sequence does.
    """
    g = asr_surrogate(graphemes_true, lex, err_rate, seed) if err_rate > 0 else list(graphemes_true)
    return text_process(g, lex, policy)
