import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ppannot.errors import EmptyReference, LengthMismatch, RaggedInputs
from ppannot.labels import ProsodyLabel, TtsLabelSequence, parse_label_string
from ppannot.metrics import (
    DEFAULT_EXCLUDED,
    ProsodyCounts,
    align,
    cer,
    corpus_cer,
    evaluation_protocol,
    levenshtein,
    parse_excluded,
    prosody_counts,
    prosody_f1,
    span_accuracy,
)

from oracles import oracle_levenshtein

P = ProsodyLabel


def test_levenshtein_examples():
    assert levenshtein(["a", "me"], ["a", "me"]) == 0
    assert levenshtein(["a", "me", "ka", "ze"], ["a", "me", "ka"]) == 1
    assert levenshtein([], ["a", "b"]) == 2
    assert levenshtein(["x"], []) == 1


def test_levenshtein_vs_oracle_random():
    rng = np.random.default_rng(7)
    toks = ["a", "i", "ka", "shi", "[", "#"]
    for _ in range(2000):
        a = [toks[i] for i in rng.integers(0, len(toks), size=rng.integers(0, 13))]
        b = [toks[i] for i in rng.integers(0, len(toks), size=rng.integers(0, 13))]
        assert levenshtein(a, b) == oracle_levenshtein(a, b)


small = st.lists(st.sampled_from("abcd"), max_size=8)


@given(small, small, small)
def test_metric_axioms(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert (levenshtein(a, b) == 0) == (a == b)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)
    assert abs(len(a) - len(b)) <= levenshtein(a, b) <= max(len(a), len(b))


def test_cer():
    assert cer(["a", "me"], ["a", "me"]) == 0.0
    assert cer(["a", "me", "ka", "ze"], ["a", "me", "ka"]) == 0.25
    assert cer(["a"], ["a", "b", "c", "d"]) == 3.0
    with pytest.raises(EmptyReference):
        cer([], ["a"])


def test_corpus_cer_hand_computed():
    refs = [["a", "b", "c", "d"], ["a", "b"], ["x", "y", "z", "w", "v", "u"]]
    hyps = [["a", "b", "c"], ["a", "q"], ["x", "y", "z", "w", "v", "u"]]
    micro, mean = corpus_cer(refs, hyps)
    assert micro == pytest.approx(2 / 12)
    # length-weighted mean of per-utterance CER equals the micro value
    weighted = sum(len(r) * cer(r, h) for r, h in zip(refs, hyps)) / sum(map(len, refs))
    assert micro == pytest.approx(weighted)
    assert mean == pytest.approx((0.25 + 0.5 + 0.0) / 3)
    with pytest.raises(RaggedInputs):
        corpus_cer(refs, hyps[:2])


def test_prosody_f1_hand_example():
    ref = [P.RISE, P.FALL, P.PAD, P.PAD]
    hyp = [P.RISE, P.PAD, P.PAD, P.PAD]
    c = prosody_counts(ref, hyp)
    assert (c.tp, c.fp, c.fn) == (1, 0, 1)
    p, r, f = prosody_f1([(ref, hyp)])
    assert (p, r) == (1.0, 0.5)
    assert f == pytest.approx(2 / 3)


def test_prosody_f1_conventions():
    ref = [P.RISE, P.FALL, P.PHRASE_BOUNDARY]
    assert prosody_f1([(ref, ref)])[2] == 1.0
    assert prosody_f1([([P.PAUSE, P.PAD], [P.PAD, P.PAD])], DEFAULT_EXCLUDED) == (1.0, 1.0, 1.0)
    with pytest.raises(LengthMismatch):
        prosody_counts([P.PAD], [P.PAD, P.PAD])


def test_excluded_labels_contribute_nothing():
    # every position has an excluded label on one side
    ref = [P.PAUSE, P.RISE, P.QUESTION, P.FALL]
    hyp = [P.RISE, P.QUESTION, P.FALL, P.PAUSE]
    c = prosody_counts(ref, hyp, DEFAULT_EXCLUDED)
    assert (c.tp, c.fp, c.fn) == (0, 0, 0)
    c = prosody_counts(ref, hyp, frozenset())
    assert (c.tp, c.fp, c.fn) == (0, 4, 4)


def test_parse_excluded():
    assert parse_excluded("_,?") == DEFAULT_EXCLUDED
    assert parse_excluded("") == frozenset()
    assert parse_excluded(" # ") == {P.PHRASE_BOUNDARY}


def _seq(moras, pros):
    return TtsLabelSequence(tuple(moras), tuple(P.from_symbol(c) for c in pros))


def test_protocol_intersection_five_samples():
    refs = [_seq(["a", "i"], "[*") for _ in range(5)]
    wrong = _seq(["a", "u"], "[*")
    masks = {"m1": "11100", "m2": "11110", "m3": "11101"}
    outs = {m: [refs[i] if bit == "1" else wrong for i, bit in enumerate(mask)] for m, mask in masks.items()}
    rep = evaluation_protocol(refs, outs)
    assert rep.subset == [0, 1, 2]
    assert rep.n_phoneme_exact_all_models == 3
    assert rep.n_phoneme_exact == {"m1": 3, "m2": 4, "m3": 4}


def test_protocol_single_perfect_model():
    refs = [_seq(["a", "ka", "i"], "[]#"), _seq(["o"], "*")]
    rep = evaluation_protocol(refs, {"oracle": refs})
    assert rep.subset == [0, 1]
    assert rep.cer["oracle"] == 0.0
    assert rep.prosody_f1["oracle"] == 1.0


def test_protocol_four_sample_hand_enumeration():
    refs = [
        _seq(["a", "i", "u"], "[]*"),
        _seq(["ka", "ki"], "#*"),
        _seq(["sa", "shi", "su"], "_[*"),
        _seq(["ta", "te"], "]?"),
    ]
    hyp = [
        _seq(["a", "i", "u"], "[**"),  # tp1 fn1
        _seq(["ka", "ki"], "#]"),  # tp1 fp1
        _seq(["sa", "shi", "su"], "#[*"),  # pos0 skipped (ref Pause), tp1
        _seq(["ta", "to"], "]?"),  # phoneme error: outside subset
    ]
    rep = evaluation_protocol(refs, {"h": hyp})
    assert rep.subset == [0, 1, 2]
    c = rep.counts["h"]
    assert (c.tp, c.fp, c.fn) == (3, 1, 1)
    assert rep.prosody_precision["h"] == 0.75
    assert rep.prosody_recall["h"] == 0.75
    assert rep.prosody_f1["h"] == 0.75
    assert rep.cer["h"] == pytest.approx(1 / 10)
    assert "n_phoneme_exact_all_models\t3" in rep.to_text()
    assert rep.to_csv().splitlines()[0].startswith("model,cer")


def test_protocol_ragged():
    refs = [_seq(["a"], "*")]
    with pytest.raises(RaggedInputs):
        evaluation_protocol(refs, {"x": []})
    with pytest.raises(RaggedInputs):
        evaluation_protocol(refs, {})


def test_scores_bounded():
    rng = np.random.default_rng(3)
    labs = list(ProsodyLabel)
    for _ in range(200):
        n = int(rng.integers(1, 8))
        ref = [labs[i] for i in rng.integers(0, 6, n)]
        hyp = [labs[i] for i in rng.integers(0, 6, n)]
        p, r, f = prosody_f1([(ref, hyp)])
        assert 0 <= p <= 1 and 0 <= r <= 1 and 0 <= f <= 1


def test_align_and_span_accuracy():
    assert align(list("abc"), list("abc")) == [0, 1, 2]
    assert align(list("abc"), list("axc")) == [0, None, 2]
    assert align(list("abc"), list("ac")) == [0, None, 1]
    ref = _seq(["a", "i", "ka", "ki"], "[#]*")
    spans = [[(0, 2), (2, 4)]]
    assert span_accuracy([ref], [ref], spans) == (1.0, 2)
    # boundary label on a span's last mora is not compared
    assert span_accuracy([ref], [_seq(["a", "i", "ka", "ki"], "[_]*")], spans) == (1.0, 2)
    assert span_accuracy([ref], [_seq(["a", "i", "ka", "ki"], "]#]*")], spans) == (0.5, 2)
    assert span_accuracy([ref], [_seq(["a", "i", "ki"], "[#*")], spans) == (0.5, 2)
    assert span_accuracy([ref], [ref], [[]]) == (1.0, 0)
