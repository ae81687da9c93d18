import numpy as np
import pytest
from hypothesis import given, strategies as st

from ppannot.errors import GrammarViolation, UnknownToken
from ppannot.labels import (
    DEFAULT_MORAS,
    PROSODY_SYMBOLS,
    MoraInventory,
    ProsodyLabel,
    TtsLabelSequence,
    join_streams,
    parse_label_string,
    serialize,
    split_streams,
    strip_prosody,
    validate,
)

from conftest import random_sequence

P = ProsodyLabel


def test_six_prosody_symbols():
    assert len(ProsodyLabel) == 6
    assert set(PROSODY_SYMBOLS) == {"_", "[", "]", "#", "?", "*"}
    assert all(len(s) == 1 for s in PROSODY_SYMBOLS)


def test_parse_worked_example():
    seq = parse_label_string("a [ me ] ka * ze *", MoraInventory(list(DEFAULT_MORAS) + ["ze"]))
    assert seq.pairs == [("a", P.RISE), ("me", P.FALL), ("ka", P.PAD), ("ze", P.PAD)]


def test_two_consecutive_moras_rejected():
    with pytest.raises(GrammarViolation):
        parse_label_string("a a [ ]")


@pytest.mark.parametrize("text,err", [
    ("[ a", GrammarViolation),
    ("a", GrammarViolation),
    ("a [ ]", GrammarViolation),
    ("a [ [ *", GrammarViolation),
    ("xyz *", UnknownToken),
    ("a [ qq ]", UnknownToken),
])
def test_malformed_strings(text, err):
    with pytest.raises(err):
        parse_label_string(text)


def test_serialize_examples():
    assert serialize(TtsLabelSequence(("a",), (P.RISE,))) == "a ["
    assert serialize(TtsLabelSequence(("ta", "be"), (P.PAD, P.FALL))) == "ta * be ]"


def test_unequal_streams_rejected():
    with pytest.raises(GrammarViolation):
        TtsLabelSequence(("a", "i"), (P.PAD,))


def test_token_count_is_twice_moras():
    rng = np.random.default_rng(0)
    for _ in range(50):
        seq = random_sequence(rng)
        assert len(serialize(seq).split()) == 2 * len(seq)


def test_split_join_strip():
    seq = parse_label_string("a [ me ]")
    assert split_streams(seq) == (["a", "me"], [P.RISE, P.FALL])
    assert join_streams(*split_streams(seq)) == seq
    assert strip_prosody(seq) == ["a", "me"] == split_streams(seq)[0]
    flat = parse_label_string("ka * ki * ku *")
    assert split_streams(flat)[1] == [P.PAD] * 3


def test_validate():
    assert validate(parse_label_string("a [ me ]")) == []
    assert validate(TtsLabelSequence((), ())) == ["EmptySequence"]
    assert validate(TtsLabelSequence(("[",), (P.PAD,))) == ["TokenCollision"]
    assert validate(TtsLabelSequence(("zz",), (P.PAD,))) == ["UnknownMora"]
    assert validate(TtsLabelSequence(("",), (P.PAD,))) == ["EmptyMora"]


def test_inventory_round_trip(tmp_path):
    inv = MoraInventory(["ka", "a", "shi"])
    inv.save(tmp_path / "inv.txt")
    assert MoraInventory.load(tmp_path / "inv.txt") == inv


mora_st = st.sampled_from(DEFAULT_MORAS)
label_st = st.sampled_from(list(ProsodyLabel))


@given(st.lists(st.tuples(mora_st, label_st), min_size=1, max_size=20))
def test_round_trip_property(pairs):
    seq = TtsLabelSequence.from_pairs(pairs)
    s = serialize(seq)
    assert parse_label_string(s) == seq
    assert serialize(parse_label_string(s)) == s
