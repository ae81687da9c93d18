"""CER, prosody precision/recall/F1 and the multi-model filtered evaluation.

Prosody scoring convention: micro-averaged over the non-Pad, non-excluded
classes with Pad as background. A position whose reference or hypothesis
label is excluded is skipped entirely. When neither side has any in-scope
label the score is 1.0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import kernels
from .errors import EmptyReference, InvalidConfig, LengthMismatch, RaggedInputs
from .labels import ProsodyLabel, TtsLabelSequence

DEFAULT_EXCLUDED = frozenset({ProsodyLabel.PAUSE, ProsodyLabel.QUESTION})


def parse_excluded(spec: str) -> frozenset[ProsodyLabel]:
    """Parse a comma-separated symbol list such as ``"_,?"``."""
    out = set()
    for part in spec.split(","):
        part = part.strip()
        if part:
            try:
                out.add(ProsodyLabel.from_symbol(part))
            except KeyError:
                raise InvalidConfig(f"unknown prosody symbol in excluded labels: {part!r}") from None
    return frozenset(out)


def _to_ids(a: Sequence, b: Sequence):
    table: dict = {}
    ia = [table.setdefault(t, len(table)) for t in a]
    ib = [table.setdefault(t, len(table)) for t in b]
    return ia, ib


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance between two token sequences."""
    ia, ib = _to_ids(a, b)
    return kernels.levenshtein_ids(ia, ib)


def cer(ref: Sequence[str], hyp: Sequence[str]) -> float:
    if len(ref) == 0:
        raise EmptyReference("CER needs a non-empty reference")
    return levenshtein(ref, hyp) / len(ref)


def corpus_cer(refs: Sequence[Sequence[str]], hyps: Sequence[Sequence[str]]) -> tuple[float, float]:
    """Return (micro CER, mean of per-utterance CER)."""
    if len(refs) != len(hyps):
        raise RaggedInputs(f"{len(refs)} references but {len(hyps)} hypotheses")
    if not refs:
        raise EmptyReference("no references")
    edits = 0
    total = 0
    per_utt = []
    for r, h in zip(refs, hyps):
        if len(r) == 0:
            raise EmptyReference("empty reference utterance")
        e = levenshtein(r, h)
        edits += e
        total += len(r)
        per_utt.append(e / len(r))
    return edits / total, sum(per_utt) / len(per_utt)


@dataclass
class ProsodyCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: "ProsodyCounts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn

    def scores(self) -> tuple[float, float, float]:
        tp, fp, fn = self.tp, self.fp, self.fn
        if tp + fp == 0 and tp + fn == 0:
            return 1.0, 1.0, 1.0
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return p, r, f1


def prosody_counts(
    ref: Sequence[ProsodyLabel],
    hyp: Sequence[ProsodyLabel],
    excluded: Iterable[ProsodyLabel] = DEFAULT_EXCLUDED,
) -> ProsodyCounts:
    if len(ref) != len(hyp):
        raise LengthMismatch(f"prosody streams differ in length: {len(ref)} vs {len(hyp)}")
    excluded = frozenset(excluded)
    bg = ProsodyLabel.PAD
    c = ProsodyCounts()
    for r, h in zip(ref, hyp):
        if r in excluded or h in excluded:
            continue
        if r == h:
            if r != bg:
                c.tp += 1
            continue
        if h != bg:
            c.fp += 1
        if r != bg:
            c.fn += 1
    return c


def prosody_f1(
    pairs: Iterable[tuple[Sequence[ProsodyLabel], Sequence[ProsodyLabel]]],
    excluded: Iterable[ProsodyLabel] = DEFAULT_EXCLUDED,
) -> tuple[float, float, float]:
    """Micro (P, R, F1) over position-aligned (ref, hyp) prosody streams."""
    excluded = frozenset(excluded)
    total = ProsodyCounts()
    for ref, hyp in pairs:
        total.add(prosody_counts(ref, hyp, excluded))
    return total.scores()


@dataclass
class EvalReport:
    models: list[str]
    n_total: int
    n_phoneme_exact_all_models: int
    excluded_labels: frozenset[ProsodyLabel]
    cer: dict[str, float]
    cer_utt_mean: dict[str, float]
    prosody_precision: dict[str, float]
    prosody_recall: dict[str, float]
    prosody_f1: dict[str, float]
    counts: dict[str, ProsodyCounts]
    n_phoneme_exact: dict[str, int]
    subset: list[int] = field(default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for m in self.models:
            c = self.counts[m]
            out.append({
                "model": m,
                "cer": self.cer[m],
                "cer_utt_mean": self.cer_utt_mean[m],
                "prosody_precision": self.prosody_precision[m],
                "prosody_recall": self.prosody_recall[m],
                "prosody_f1": self.prosody_f1[m],
                "tp": c.tp,
                "fp": c.fp,
                "fn": c.fn,
                "n_phoneme_exact": self.n_phoneme_exact[m],
            })
        return out

    def to_text(self) -> str:
        lines = [
            f"n_total\t{self.n_total}",
            f"n_phoneme_exact_all_models\t{self.n_phoneme_exact_all_models}",
            "excluded_labels\t" + ",".join(sorted(l.value for l in self.excluded_labels)),
            "prosody_averaging\tmicro (Pad as background)",
        ]
        for row in self.rows():
            m = row.pop("model")
            for k, v in row.items():
                val = f"{v:.6f}" if isinstance(v, float) else str(v)
                lines.append(f"{m}.{k}\t{val}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.rows()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()


def evaluation_protocol(
    refs: Sequence[TtsLabelSequence],
    model_outputs: Mapping[str, Sequence[TtsLabelSequence]],
    excluded: Iterable[ProsodyLabel] = DEFAULT_EXCLUDED,
) -> EvalReport:
    """Score every model: CER over all samples, prosody only where every
    model reproduced the reference phoneme stream exactly."""
    excluded = frozenset(excluded)
    names = list(model_outputs)
    if not names:
        raise RaggedInputs("no model outputs")
    for name in names:
        if len(model_outputs[name]) != len(refs):
            raise RaggedInputs(
                f"model {name!r} has {len(model_outputs[name])} outputs for {len(refs)} references"
            )
    ref_ph = [list(r.moras) for r in refs]
    cer_micro, cer_mean, exact = {}, {}, {}
    for name in names:
        hyp_ph = [list(h.moras) for h in model_outputs[name]]
        cer_micro[name], cer_mean[name] = corpus_cer(ref_ph, hyp_ph)
        exact[name] = {i for i, (r, h) in enumerate(zip(ref_ph, hyp_ph)) if r == h}
    subset = sorted(set.intersection(*(exact[n] for n in names)))
    prec, rec, f1, counts = {}, {}, {}, {}
    for name in names:
        c = ProsodyCounts()
        outs = model_outputs[name]
        for i in subset:
            c.add(prosody_counts(refs[i].prosody, outs[i].prosody, excluded))
        counts[name] = c
        prec[name], rec[name], f1[name] = c.scores()
    return EvalReport(
        models=names,
        n_total=len(refs),
        n_phoneme_exact_all_models=len(subset),
        excluded_labels=excluded,
        cer=cer_micro,
        cer_utt_mean=cer_mean,
        prosody_precision=prec,
        prosody_recall=rec,
        prosody_f1=f1,
        counts=counts,
        n_phoneme_exact={n: len(exact[n]) for n in names},
        subset=subset,
    )


def align(ref: Sequence, hyp: Sequence) -> list[int | None]:
    """Minimum-edit alignment: for each reference index, the hypothesis index
    it is matched to (equal tokens only), else None. Ties prefer diagonal moves."""
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]))
    out: list[int | None] = [None] * n
    i, j = n, m
    while i > 0 and j > 0:
        if d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] == hyp[j - 1]:
                out[i - 1] = j - 1
            i, j = i - 1, j - 1
        elif d[i][j] == d[i - 1][j] + 1:
            i -= 1
        else:
            j -= 1
    return out


def span_accuracy(
    refs: Sequence[TtsLabelSequence],
    hyps: Sequence[TtsLabelSequence],
    spans: Sequence[Sequence[tuple[int, int]]],
) -> tuple[float, int]:
    """Share of reference word spans reproduced exactly by the hypothesis.

    A span counts as correct when its moras align, contiguously, to identical moras and
    every word-internal prosody label matches; the label on the span's last
    mora is a phrase-level boundary and is not compared. Returns
    (accuracy, number of spans); accuracy is 1.0 when there are no spans.
    """
    if not (len(refs) == len(hyps) == len(spans)):
        raise RaggedInputs("refs, hyps and spans must have equal length")
    good = total = 0
    for ref, hyp, sp in zip(refs, hyps, spans):
        if not sp:
            continue
        amap = align(ref.moras, hyp.moras)
        for s, e in sp:
            total += 1
            idx = amap[s:e]
            if any(k is None for k in idx) or any(b != a + 1 for a, b in zip(idx, idx[1:])):
                continue
            if all(ref.prosody[s + o] == hyp.prosody[k] for o, k in enumerate(idx[:-1])):
                good += 1
    return (good / total if total else 1.0), total
