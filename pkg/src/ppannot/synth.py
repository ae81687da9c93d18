"""Synthetic mora language: lexicon, corpora, articulation and ASR surrogate.

``articulate`` plays the auxiliary TTS model: it renders a label sequence into
frame features and always encodes the prosody it is given. Channel layout for
the default ``d_in = 12``:

    0..7   mora identity embedding (fixed per mora token)
    8      pitch
    9      energy
    10, 11 reserved (zero before noise)

Pitch follows a running level that moves by +rise after a Rise mora, by
-fall after a Fall mora and resets to the base after a PhraseBoundary or
Pause mora. A Question mora carries a linear upslope of height ``rise``
across its own frames. Energy is 0.5 on a mora's first frame and 1.0
elsewhere, 0.25 on the last frame of a PhraseBoundary mora and 0 throughout
a Pause mora.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InsufficientData, InvalidRate
from .labels import DEFAULT_INVENTORY, MoraInventory, ProsodyLabel, TtsLabelSequence

P = ProsodyLabel

N_MORA_DIMS = 8
PITCH = N_MORA_DIMS
ENERGY = N_MORA_DIMS + 1
RESERVED = (N_MORA_DIMS + 2, N_MORA_DIMS + 3)
D_IN = N_MORA_DIMS + 4

ONSET_ENERGY = 0.5
BOUNDARY_ENERGY = 0.25
MIN_FRAMES = 2
MAX_FRAMES = 5


def _token_seed(token: str, salt: str) -> int:
    digest = hashlib.sha256(f"{salt}:{token}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def mora_embedding(token: str) -> np.ndarray:
    """Fixed 8-dim identity vector; depends only on the token string."""
    return np.random.default_rng(_token_seed(token, "embed")).normal(size=N_MORA_DIMS)


def duration_offset(token: str) -> int:
    """Intrinsic length of a mora relative to the speaker tempo: -1, 0 or +1."""
    return _token_seed(token, "dur") % 3 - 1


def mora_frames(token: str, tempo: int) -> int:
    return int(min(MAX_FRAMES, max(MIN_FRAMES, tempo + duration_offset(token))))


@dataclass(frozen=True)
class SpeakerParams:
    pitch_base: float = 1.0
    pitch_rise_delta: float = 1.0
    pitch_fall_delta: float = 1.0
    tempo: int = 3  # frames per mora before the per-mora offset
    noise_sigma: float = 0.1

    def __post_init__(self):
        if not MIN_FRAMES <= self.tempo <= MAX_FRAMES:
            raise InvalidRate(f"tempo must lie in [{MIN_FRAMES}, {MAX_FRAMES}], got {self.tempo}")
        if self.noise_sigma < 0:
            raise InvalidRate("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# lexicon
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reading:
    moras: tuple[str, ...]
    prosody: tuple[ProsodyLabel, ...]
    weight: float


@dataclass(frozen=True)
class LexEntry:
    grapheme: str
    readings: tuple[Reading, ...]

    @property
    def is_homograph(self) -> bool:
        return len(self.readings) >= 2


@dataclass
class Lexicon:
    entries: list[LexEntry]
    word_weights: np.ndarray  # sampling distribution over entries
    inventory: MoraInventory = DEFAULT_INVENTORY
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {e.grapheme: i for i, e in enumerate(self.entries)}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, grapheme: str) -> bool:
        return grapheme in self.index

    def lookup(self, grapheme: str) -> LexEntry | None:
        i = self.index.get(grapheme)
        return None if i is None else self.entries[i]

    @property
    def homograph_rate(self) -> float:
        return sum(e.is_homograph for e in self.entries) / len(self.entries)

    def to_records(self) -> list[dict]:
        recs = []
        for e, w in zip(self.entries, self.word_weights):
            recs.append({
                "grapheme": e.grapheme,
                "frequency": float(w),
                "readings": [
                    {"moras": list(r.moras), "prosody": "".join(p.value for p in r.prosody), "weight": r.weight}
                    for r in e.readings
                ],
            })
        return recs

    @classmethod
    def from_records(cls, recs: Sequence[dict], inventory: MoraInventory = DEFAULT_INVENTORY) -> "Lexicon":
        entries = []
        for rec in recs:
            readings = tuple(
                Reading(tuple(r["moras"]), tuple(P.from_symbol(c) for c in r["prosody"]), float(r["weight"]))
                for r in rec["readings"]
            )
            entries.append(LexEntry(rec["grapheme"], readings))
        weights = np.array([rec["frequency"] for rec in recs], dtype=np.float64)
        return cls(entries, weights, inventory)


def accent_pattern(n_moras: int, kind: int) -> tuple[ProsodyLabel, ...]:
    """Word-internal pitch accent labels; the final mora is always Pad.

    kind 0: low-high rise after mora 1 and no fall; kind 1: fall after mora 1;
    kind k >= 2: rise after mora 1 and fall after mora k.
    """
    labs = [P.PAD] * n_moras
    if kind == 1:
        labs[0] = P.FALL
    else:
        labs[0] = P.RISE
        if kind >= 2:
            labs[kind - 1] = P.FALL
    return tuple(labs)


def gen_lexicon(
    n_words: int,
    homograph_rate: float,
    majority_share: float,
    seed: int,
    prosody_only_fraction: float = 0.5,
    word_len: tuple[int, int] = (2, 4),
    zipf_s: float = 1.0,
    inventory: MoraInventory = DEFAULT_INVENTORY,
) -> Lexicon:
    """Random lexicon with ``round(n_words * homograph_rate)`` two-reading homographs.

    Homographs take the most frequent ranks of a Zipf(``zipf_s``) word
    distribution. A ``prosody_only_fraction`` share of them differ only in
    accent; the rest differ in both moras and accent.
    """
    if not 0.0 <= homograph_rate <= 1.0:
        raise InvalidRate(f"homograph_rate must be in [0, 1], got {homograph_rate}")
    if not 0.5 <= majority_share <= 1.0:
        raise InvalidRate(f"majority_share must be in [0.5, 1], got {majority_share}")
    if not 0.0 <= prosody_only_fraction <= 1.0:
        raise InvalidRate(f"prosody_only_fraction must be in [0, 1], got {prosody_only_fraction}")
    if n_words < 1:
        raise InvalidRate("n_words must be >= 1")
    n_homo = int(round(n_words * homograph_rate))
    if n_homo and majority_share >= 1.0:
        raise InvalidRate("majority_share=1 leaves minority readings with zero weight")
    lo, hi = word_len
    if lo < 2:
        raise InvalidRate("words need at least 2 moras to carry two accent patterns")
    rng = np.random.default_rng(seed)
    moras = list(inventory.tokens)
    used: set[tuple[str, ...]] = set()

    def fresh_moras(n):
        for _ in range(10000):
            seq = tuple(moras[i] for i in rng.integers(0, len(moras), size=n))
            if seq not in used:
                used.add(seq)
                return seq
        raise InvalidRate("mora inventory too small for the requested lexicon")

    n_prosody_only = int(round(n_homo * prosody_only_fraction))
    entries = []
    for i in range(n_words):
        n = int(rng.integers(lo, hi + 1))
        base = fresh_moras(n)
        if i < n_homo:
            alt = base if i < n_prosody_only else fresh_moras(int(rng.integers(lo, hi + 1)))
            # atamadaka against a rising pattern: no in-scope label in common
            if rng.random() < 0.5:
                k1, k2 = 1, int(rng.choice([k for k in range(len(alt)) if k != 1]))
            else:
                k1, k2 = int(rng.choice([k for k in range(n) if k != 1])), 1
            major = Reading(base, accent_pattern(n, int(k1)), majority_share)
            minor = Reading(alt, accent_pattern(len(alt), int(k2)), 1.0 - majority_share)
            readings = (major, minor) if rng.random() < 0.5 else (minor, major)
        else:
            readings = (Reading(base, accent_pattern(n, int(rng.integers(0, n))), 1.0),)
        major_moras = max(readings, key=lambda r: r.weight).moras
        grapheme = "".join(major_moras).upper()
        suffix = 2
        while any(e.grapheme == grapheme for e in entries):
            grapheme = "".join(major_moras).upper() + str(suffix)
            suffix += 1
        entries.append(LexEntry(grapheme, readings))
    ranks = np.arange(1, n_words + 1, dtype=np.float64)
    weights = ranks ** -zipf_s
    weights /= weights.sum()
    return Lexicon(entries, weights, inventory)


# ---------------------------------------------------------------------------
# utterances
# ---------------------------------------------------------------------------

@dataclass
class LabeledUtterance:
    id: str
    graphemes: list[str]
    labels: TtsLabelSequence
    features: np.ndarray
    source: str = "labeled"
    readings: list[int] = field(default_factory=list)  # chosen reading per word
    word_spans: list[tuple[int, int]] = field(default_factory=list)  # mora span per word


def join_words(parts: Sequence[tuple[Sequence[str], Sequence[ProsodyLabel]]],
               boundaries: Sequence[ProsodyLabel] | None = None,
               final: ProsodyLabel | None = None) -> tuple[TtsLabelSequence, list[tuple[int, int]]]:
    """Concatenate word readings; the last mora of each non-final word takes
    its boundary label (PhraseBoundary by default)."""
    moras: list[str] = []
    pros: list[ProsodyLabel] = []
    spans = []
    for w, (ms, ps) in enumerate(parts):
        start = len(moras)
        moras.extend(ms)
        pros.extend(ps)
        spans.append((start, len(moras)))
        if w < len(parts) - 1 and ms:
            pros[-1] = boundaries[w] if boundaries is not None else P.PHRASE_BOUNDARY
    if final is not None and moras:
        pros[-1] = final
    return TtsLabelSequence(tuple(moras), tuple(pros)), spans


def utterance_seed(seed: int, index: int, stream: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, index, stream])


def sample_graphemes(lexicon: Lexicon, n_words_range: tuple[int, int], rng: np.random.Generator) -> list[int]:
    lo, hi = n_words_range
    n = int(rng.integers(lo, hi + 1))
    return [int(i) for i in rng.choice(len(lexicon), size=n, p=lexicon.word_weights)]


def gen_utterance(
    lexicon: Lexicon,
    speaker: SpeakerParams,
    seed: int,
    index: int,
    words_per_utt: tuple[int, int] = (1, 3),
    question_rate: float = 0.1,
    pause_rate: float = 0.1,
    prefix: str = "utt",
) -> LabeledUtterance:
    """Generate utterance ``index``; a pure function of its arguments."""
    rng = np.random.default_rng(utterance_seed(seed, index))
    word_ids = sample_graphemes(lexicon, words_per_utt, rng)
    parts, chosen = [], []
    for wi in word_ids:
        entry = lexicon.entries[wi]
        probs = np.array([r.weight for r in entry.readings])
        k = int(rng.choice(len(entry.readings), p=probs / probs.sum()))
        chosen.append(k)
        r = entry.readings[k]
        parts.append((r.moras, r.prosody))
    bounds = [P.PAUSE if rng.random() < pause_rate else P.PHRASE_BOUNDARY for _ in word_ids[:-1]]
    final = P.QUESTION if rng.random() < question_rate else None
    labels, spans = join_words(parts, bounds, final)
    feats = articulate(labels, speaker, utterance_seed(seed, index, 1))
    return LabeledUtterance(
        id=f"{prefix}{index:05d}",
        graphemes=[lexicon.entries[i].grapheme for i in word_ids],
        labels=labels,
        features=feats,
        readings=chosen,
        word_spans=spans,
    )


def gen_corpus(
    lexicon: Lexicon,
    n_utts: int,
    words_per_utt: tuple[int, int],
    speaker: SpeakerParams,
    seed: int,
    question_rate: float = 0.1,
    pause_rate: float = 0.1,
    start: int = 0,
    prefix: str = "utt",
) -> list[LabeledUtterance]:
    return [
        gen_utterance(lexicon, speaker, seed, i, words_per_utt, question_rate, pause_rate, prefix)
        for i in range(start, start + n_utts)
    ]


# ---------------------------------------------------------------------------
# articulation (auxiliary TTS) and its exact inverse
# ---------------------------------------------------------------------------

def articulate(y: TtsLabelSequence, sp: SpeakerParams, seed=0) -> np.ndarray:
    """Render labels to an (N, D_IN) float32 frame matrix."""
    durs = [mora_frames(m, sp.tempo) for m in y.moras]
    n = sum(durs)
    x = np.zeros((n, D_IN), dtype=np.float64)
    level = 0.0
    t = 0
    for m, lab, d in zip(y.moras, y.prosody, durs):
        block = x[t: t + d]
        block[:, :N_MORA_DIMS] = mora_embedding(m)
        block[:, PITCH] = sp.pitch_base + level
        if lab is P.QUESTION:
            block[:, PITCH] += sp.pitch_rise_delta * np.arange(d) / (d - 1)
        block[:, ENERGY] = 1.0
        block[0, ENERGY] = ONSET_ENERGY
        if lab is P.PHRASE_BOUNDARY:
            block[-1, ENERGY] = BOUNDARY_ENERGY
        elif lab is P.PAUSE:
            block[:, ENERGY] = 0.0
        if lab is P.RISE:
            level += sp.pitch_rise_delta
        elif lab is P.FALL:
            level -= sp.pitch_fall_delta
        elif lab in (P.PHRASE_BOUNDARY, P.PAUSE):
            level = 0.0
        t += d
    if sp.noise_sigma > 0:
        x += np.random.default_rng(seed).normal(0.0, sp.noise_sigma, size=x.shape)
    return x.astype(np.float32)


def _codebook(inventory: MoraInventory) -> tuple[list[str], np.ndarray]:
    toks = list(inventory.tokens)
    return toks, np.stack([mora_embedding(t) for t in toks])


def inverse_articulate(x: np.ndarray, sp: SpeakerParams, inventory: MoraInventory = DEFAULT_INVENTORY) -> TtsLabelSequence:
    """Read labels back out of features rendered by :func:`articulate`.

    Exact at zero noise, with one blind spot: a Rise or Fall on the final mora
    has no following block and decodes as Pad.
    """
    toks, book = _codebook(inventory)
    blocks = []
    t = 0
    while t < x.shape[0]:
        dist = ((book - x[t, :N_MORA_DIMS]) ** 2).sum(axis=1)
        tok = toks[int(np.argmin(dist))]
        d = mora_frames(tok, sp.tempo)
        blocks.append((tok, x[t: t + d]))
        t += d
    moras, pros = [], []
    for i, (tok, blk) in enumerate(blocks):
        moras.append(tok)
        energy = blk[:, ENERGY]
        pitch = blk[:, PITCH]
        if energy.mean() < 0.5 * BOUNDARY_ENERGY + 0.125:
            pros.append(P.PAUSE)
            continue
        if energy[-1] < 0.5 * (BOUNDARY_ENERGY + 1.0):
            pros.append(P.PHRASE_BOUNDARY)
            continue
        if pitch[-1] - pitch[0] > 0.5 * sp.pitch_rise_delta:
            pros.append(P.QUESTION)
            continue
        if i + 1 < len(blocks):
            step = blocks[i + 1][1][0, PITCH] - pitch[0]
            if step > 0.5 * sp.pitch_rise_delta:
                pros.append(P.RISE)
                continue
            if step < -0.5 * sp.pitch_fall_delta:
                pros.append(P.FALL)
                continue
        pros.append(P.PAD)
    return TtsLabelSequence(tuple(moras), tuple(pros))


def fit_speaker(data: Sequence[tuple[np.ndarray, TtsLabelSequence]]) -> SpeakerParams:
    """Estimate speaker parameters from labeled (features, labels) pairs.

    Tempo is the integer that reproduces the observed frame counts; pitch
    base and deltas come from a least-squares fit of per-block mean pitch
    against the label-implied Rise/Fall counts since the last reset; noise is
    the RMS of the reserved channels.
    """
    if len(data) < 10:
        raise InsufficientData(f"fit_speaker needs at least 10 labeled pairs, got {len(data)}")
    best_tempo, best_err = None, None
    for tempo in range(MIN_FRAMES, MAX_FRAMES + 1):
        err = sum(abs(x.shape[0] - sum(mora_frames(m, tempo) for m in y.moras)) for x, y in data)
        if best_err is None or err < best_err:
            best_tempo, best_err = tempo, err
    rows, targets = [], []
    reserved = []
    for x, y in data:
        x = np.asarray(x, dtype=np.float64)
        reserved.append(x[:, list(RESERVED)].ravel())
        n_rise = n_fall = 0
        t = 0
        for m, lab in zip(y.moras, y.prosody):
            d = mora_frames(m, best_tempo)
            blk = x[t: t + d, PITCH]
            t += d
            if len(blk) == d:
                # a Question block's mean sits rise/2 above its level
                rows.append([1.0, n_rise + (0.5 if lab is P.QUESTION else 0.0), -n_fall])
                targets.append(blk.mean())
            if lab is P.RISE:
                n_rise += 1
            elif lab is P.FALL:
                n_fall += 1
            elif lab in (P.PHRASE_BOUNDARY, P.PAUSE):
                n_rise = n_fall = 0
    A = np.array(rows)
    b = np.array(targets)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    res = np.concatenate(reserved)
    noise = float(np.sqrt(np.mean(res * res)))
    return SpeakerParams(
        pitch_base=float(coef[0]),
        pitch_rise_delta=float(coef[1]),
        pitch_fall_delta=float(coef[2]),
        tempo=int(best_tempo),
        noise_sigma=noise,
    )


# ---------------------------------------------------------------------------
# ASR surrogate
# ---------------------------------------------------------------------------

def asr_surrogate(graphemes: Sequence[str], lexicon: Lexicon, err_rate: float, seed) -> list[str]:
    """Replace each word, independently with probability ``err_rate``, by a
    different lexicon word drawn uniformly."""
    if not 0.0 <= err_rate <= 1.0:
        raise InvalidRate(f"err_rate must be in [0, 1], got {err_rate}")
    rng = np.random.default_rng(seed)
    out = []
    n = len(lexicon)
    for g in graphemes:
        hit = rng.random() < err_rate
        if hit and n > 1:
            j = int(rng.integers(0, n - 1))
            own = lexicon.index.get(g, -1)
            if own >= 0 and j >= own:
                j += 1
            out.append(lexicon.entries[j].grapheme)
        else:
            out.append(g)
    return out


def with_noise(sp: SpeakerParams, noise_sigma: float) -> SpeakerParams:
    return replace(sp, noise_sigma=noise_sigma)
