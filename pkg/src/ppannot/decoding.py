"""Greedy and beam decoding plus grammar repair of raw model output."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .labels import ProsodyLabel, TtsLabelSequence
from .model import AnnotatorModel, start_decoding
from .vocab import Vocabulary


@dataclass
class Annotation:
    labels: TtsLabelSequence
    repaired: bool
    ids: list[int]  # emitted ids, BOS excluded
    score: float  # summed log-probability of ``ids``


def repair(ids: Sequence[int], vocab: Vocabulary) -> tuple[TtsLabelSequence, bool]:
    """Coerce emitted ids into a well-formed label sequence.

    Stops at EOS; drops control ids and orphan prosody symbols, gives an
    unlabeled mora the Pad label when another mora follows it, and drops a
    trailing unlabeled mora. The flag is True when anything was changed or
    EOS never appeared.
    """
    n_moras = len(vocab.inventory)
    pros_lo = n_moras
    pros_hi = n_moras + 6
    repaired = vocab.eos not in ids
    moras: list[str] = []
    pros: list[ProsodyLabel] = []
    pending: str | None = None
    for i in ids:
        if i == vocab.eos:
            break
        if i < pros_lo:
            if pending is not None:
                moras.append(pending)
                pros.append(ProsodyLabel.PAD)
                repaired = True
            pending = vocab.tokens[i]
        elif i < pros_hi:
            if pending is None:
                repaired = True
                continue
            moras.append(pending)
            pros.append(ProsodyLabel.from_symbol(vocab.tokens[i]))
            pending = None
        else:
            repaired = True
    if pending is not None:
        repaired = True
    return TtsLabelSequence(tuple(moras), tuple(pros)), repaired


def _banned(vocab: Vocabulary) -> np.ndarray:
    # BOS and PAD are never valid outputs
    return np.array([vocab.bos, vocab.pad], dtype=np.int64)


def _max_steps(model: AnnotatorModel, max_len: int | None) -> int:
    cap = model.cfg.max_tgt_len - 1
    return cap if max_len is None else min(max_len, cap)


def greedy_decode(model: AnnotatorModel, xs: Sequence[np.ndarray], max_len: int | None = None) -> list[tuple[list[int], float]]:
    """Batched argmax decoding; returns (emitted ids, summed log-prob) per input."""
    vocab = model.vocab
    steps = _max_steps(model, max_len)
    state = start_decoding(model, xs)
    banned = _banned(vocab)
    B = len(xs)
    tokens = np.full(B, vocab.bos, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    scores = np.zeros(B, dtype=np.float64)
    out: list[list[int]] = [[] for _ in range(B)]
    for _ in range(steps):
        logp = state.step(tokens)
        logp[:, banned] = -np.inf
        nxt = np.argmax(logp, axis=-1)
        live = ~done
        scores[live] += logp[live, nxt[live]]
        for b in np.flatnonzero(live):
            out[b].append(int(nxt[b]))
        done |= nxt == vocab.eos
        tokens = nxt
        if done.all():
            break
    return [(o, float(s)) for o, s in zip(out, scores)]


def beam_decode(model: AnnotatorModel, x: np.ndarray, beam_size: int, max_len: int | None = None,
                length_norm: bool = False) -> tuple[list[int], float]:
    """Beam search over emitted-id sequences for one input.

    BOS and PAD are never emitted (also in greedy decoding).

    Hypotheses end at EOS or at ``max_len`` emitted ids. With ``length_norm``
    off the search stops once no live beam can beat the best finished one
    (log-probabilities only decrease), which keeps width-1 search identical
    to greedy decoding.
    """
    vocab = model.vocab
    steps = _max_steps(model, max_len)
    state = start_decoding(model, [x])
    banned = _banned(vocab)
    seqs: list[list[int]] = [[]]
    scores = np.zeros(1, dtype=np.float64)
    finished: list[tuple[list[int], float]] = []

    def key(item):
        ids, s = item
        return s / max(1, len(ids)) if length_norm else s

    for _ in range(steps):
        last = np.array([s[-1] if s else vocab.bos for s in seqs], dtype=np.int64)
        logp = state.step(last).astype(np.float64)
        logp[:, banned] = -np.inf
        V = logp.shape[1]
        cand = (scores[:, None] + logp).ravel()
        top = np.argsort(-cand, kind="stable")[:beam_size]
        new_seqs, new_scores, parents = [], [], []
        for flat in top:
            b, tok = divmod(int(flat), V)
            s = float(cand[flat])
            if s == -np.inf:
                break
            if tok == vocab.eos:
                finished.append((seqs[b] + [tok], s))
            else:
                new_seqs.append(seqs[b] + [tok])
                new_scores.append(s)
                parents.append(b)
        if not new_seqs:
            seqs = []
            break
        seqs, scores = new_seqs, np.array(new_scores)
        if not length_norm and finished and max(f[1] for f in finished) >= scores.max():
            seqs = []
            break
        state.select(np.array(parents, dtype=np.int64))
    finished.extend(zip(seqs, scores.tolist()))
    best = max(finished, key=key)
    return best[0], float(best[1])


def annotate(model: AnnotatorModel, x: np.ndarray, mode: str = "greedy", beam_size: int = 4,
             max_len: int | None = None, length_norm: bool = False) -> Annotation:
    if mode == "greedy":
        ids, score = greedy_decode(model, [x], max_len)[0]
    elif mode == "beam":
        ids, score = beam_decode(model, x, beam_size, max_len, length_norm)
    else:
        raise ValueError(f"unknown decoding mode {mode!r}")
    labels, repaired = repair(ids, model.vocab)
    return Annotation(labels, repaired, ids, score)


def annotate_batch(model: AnnotatorModel, xs: Sequence[np.ndarray], mode: str = "greedy", beam_size: int = 4,
                   max_len: int | None = None, batch_size: int = 64) -> list[Annotation]:
    if mode != "greedy":
        return [annotate(model, x, mode, beam_size, max_len) for x in xs]
    out: list[Annotation] = []
    order = sorted(range(len(xs)), key=lambda i: xs[i].shape[0])
    results: dict[int, Annotation] = {}
    for s in range(0, len(order), batch_size):
        idx = order[s: s + batch_size]
        for i, (ids, score) in zip(idx, greedy_decode(model, [xs[i] for i in idx], max_len)):
            labels, repaired = repair(ids, model.vocab)
            results[i] = Annotation(labels, repaired, ids, score)
    out = [results[i] for i in range(len(xs))]
    return out
