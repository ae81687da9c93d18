import numpy as np
import pytest

from ppannot.errors import InsufficientData, InvalidRate
from ppannot.labels import ProsodyLabel, TtsLabelSequence, parse_label_string
from ppannot.synth import (
    D_IN,
    ENERGY,
    N_MORA_DIMS,
    PITCH,
    Lexicon,
    SpeakerParams,
    accent_pattern,
    articulate,
    asr_surrogate,
    fit_speaker,
    gen_corpus,
    gen_lexicon,
    gen_utterance,
    inverse_articulate,
    mora_frames,
)

P = ProsodyLabel
CLEAN = SpeakerParams(noise_sigma=0.0)


@pytest.fixture(scope="module")
def lex():
    return gen_lexicon(100, 0.2, 0.7, 0)


def test_lexicon_counts_and_weights(lex):
    assert len(lex) == 100
    homs = [e for e in lex.entries if e.is_homograph]
    assert len(homs) == 20
    assert lex.homograph_rate == pytest.approx(0.2)
    for e in lex.entries:
        ws = [r.weight for r in e.readings]
        assert all(w > 0 for w in ws)
        assert sum(ws) == pytest.approx(1.0)
    for e in homs:
        assert max(r.weight for r in e.readings) == pytest.approx(0.7)
    assert abs(lex.word_weights.sum() - 1.0) < 1e-12


def test_homograph_kinds(lex):
    homs = [e for e in lex.entries if e.is_homograph]
    same = [e for e in homs if e.readings[0].moras == e.readings[1].moras]
    assert len(same) == 10  # default prosody_only_fraction 0.5
    for e in same:
        assert e.readings[0].prosody != e.readings[1].prosody
    for e in homs:
        if e.readings[0].moras != e.readings[1].moras:
            assert e.readings[0].prosody != e.readings[1].prosody or True


def test_lexicon_deterministic(lex):
    again = gen_lexicon(100, 0.2, 0.7, 0)
    assert again.to_records() == lex.to_records()
    assert gen_lexicon(100, 0.2, 0.7, 1).to_records() != lex.to_records()
    assert Lexicon.from_records(lex.to_records()).to_records() == lex.to_records()


@pytest.mark.parametrize("args", [(10, 1.5, 0.7), (10, 0.2, 0.4), (10, 0.2, 1.0)])
def test_lexicon_rate_errors(args):
    with pytest.raises(InvalidRate):
        gen_lexicon(*args, seed=0)


def test_accent_patterns():
    assert accent_pattern(3, 0) == (P.RISE, P.PAD, P.PAD)
    assert accent_pattern(3, 1) == (P.FALL, P.PAD, P.PAD)
    assert accent_pattern(4, 3) == (P.RISE, P.PAD, P.FALL, P.PAD)
    for n in range(2, 6):
        for k in range(n):
            assert accent_pattern(n, k)[-1] is P.PAD


def test_corpus_basics(lex):
    assert gen_corpus(lex, 0, (1, 3), CLEAN, 0) == []
    items = gen_corpus(lex, 30, (1, 3), SpeakerParams(), 5)
    for i, u in enumerate(items):
        again = gen_utterance(lex, SpeakerParams(), 5, i)
        assert again.id == u.id
        assert again.labels == u.labels
        assert np.array_equal(again.features, u.features)
        assert 1 <= len(u.graphemes) <= 3
        assert u.features.dtype == np.float32 and u.features.shape[1] == D_IN
        # boundary on the last mora of each non-final word
        for s, e in u.word_spans[:-1]:
            assert u.labels.prosody[e - 1] in (P.PHRASE_BOUNDARY, P.PAUSE)


def test_reading_frequencies_match_priors():
    lex = gen_lexicon(10, 1.0, 0.7, 3)
    items = gen_corpus(lex, 5000, (2, 2), CLEAN, 9)
    hits = total = 0
    for u in items:
        for g, k in zip(u.graphemes, u.readings):
            e = lex.lookup(g)
            hits += e.readings[k].weight == max(r.weight for r in e.readings)
            total += 1
    assert total == 10000
    assert abs(hits / total - 0.7) < 0.02


def test_articulate_frame_count_and_determinism():
    y = parse_label_string("a [ shi ] ka # to *")
    x1 = articulate(y, CLEAN, seed=1)
    x2 = articulate(y, CLEAN, seed=2)
    assert np.array_equal(x1, x2)
    assert x1.shape == (sum(mora_frames(m, CLEAN.tempo) for m in y.moras), D_IN)


def test_rise_vs_pad_changes_only_later_pitch():
    y1 = parse_label_string("a [ ka * ki * ku *")
    y2 = parse_label_string("a * ka * ki * ku *")
    x1, x2 = articulate(y1, CLEAN), articulate(y2, CLEAN)
    n0 = mora_frames("a", CLEAN.tempo)
    diff = np.abs(x1 - x2)
    assert np.all(diff[:, :N_MORA_DIMS] == 0)
    assert np.all(diff[:n0] == 0)
    assert np.all(diff[n0:, PITCH] > 0)
    assert np.all(diff[:, ENERGY] == 0)


def test_inverse_articulate_exact_at_zero_noise(lex):
    items = gen_corpus(lex, 300, (1, 3), CLEAN, 11)
    for u in items:
        assert inverse_articulate(u.features, CLEAN) == u.labels


def test_distinct_prosody_distinct_features():
    rng = np.random.default_rng(0)
    moras = ("a", "ka", "shi", "to")
    labs = list(ProsodyLabel)
    for _ in range(100):
        p1 = tuple(labs[i] for i in rng.integers(0, 6, 4))
        p2 = tuple(labs[i] for i in rng.integers(0, 6, 4))
        if p1[:-1] == p2[:-1]:
            continue
        x1 = articulate(TtsLabelSequence(moras, p1), CLEAN)
        x2 = articulate(TtsLabelSequence(moras, p2), CLEAN)
        assert not np.array_equal(x1, x2)


def test_fit_speaker(lex):
    true = SpeakerParams(pitch_base=0.8, pitch_rise_delta=1.3, pitch_fall_delta=0.7, tempo=4, noise_sigma=0.0)
    items = gen_corpus(lex, 50, (1, 3), true, 2)
    fit = fit_speaker([(u.features, u.labels) for u in items])
    assert fit.tempo == 4
    for k in ("pitch_base", "pitch_rise_delta", "pitch_fall_delta"):
        assert getattr(fit, k) == pytest.approx(getattr(true, k), abs=1e-5)
    assert fit.noise_sigma == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(InsufficientData):
        fit_speaker([(u.features, u.labels) for u in items[:3]])


def test_fit_speaker_noisy(lex):
    true = SpeakerParams(noise_sigma=0.1)
    items = gen_corpus(lex, 200, (1, 3), true, 4)
    fit = fit_speaker([(u.features, u.labels) for u in items])
    assert fit.tempo == true.tempo
    for k in ("pitch_base", "pitch_rise_delta", "pitch_fall_delta", "noise_sigma"):
        assert getattr(fit, k) == pytest.approx(getattr(true, k), rel=0.05)


def test_speaker_validation():
    with pytest.raises(InvalidRate):
        SpeakerParams(tempo=7)
    with pytest.raises(InvalidRate):
        SpeakerParams(noise_sigma=-1)


def test_asr_surrogate(lex):
    words = [e.grapheme for e in lex.entries[:50]] * 200
    assert asr_surrogate(words, lex, 0.0, 1) == words
    all_wrong = asr_surrogate(words, lex, 1.0, 1)
    assert all(a != b for a, b in zip(words, all_wrong))
    assert all(w in lex for w in all_wrong)
    noisy = asr_surrogate(words, lex, 0.05, 2)
    rate = np.mean([a != b for a, b in zip(words, noisy)])
    assert abs(rate - 0.05) < 0.02
    with pytest.raises(InvalidRate):
        asr_surrogate(words, lex, 1.5, 0)
