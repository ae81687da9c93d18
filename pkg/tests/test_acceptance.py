"""Acceptance criteria, one test each.

Every test prints one line ``ACCEPTANCE <n> PASS|FAIL <title>: <measured>``
to the terminal (even under output capture) and then asserts. The two
experiment tests and the determinism test train full-size annotators and
take several minutes in total.
"""

import json
import time

import numpy as np
import pytest

from ppannot.augment import AugmentConfig, run_augmentation
from ppannot.cli import main as cli_main
from ppannot.config import RecipeConfig
from ppannot.corpus_io import tree_digest
from ppannot.errors import GrammarViolation, UnknownToken
from ppannot.experiments import augment_experiment, homograph_experiment, make_lexicon, make_split, text_pool
from ppannot.labels import DEFAULT_INVENTORY, ProsodyLabel, TtsLabelSequence, parse_label_string, parse_tokens, serialize
from ppannot.metrics import DEFAULT_EXCLUDED, evaluation_protocol, levenshtein
from ppannot.model import ModelConfig, incremental_log_probs, init_model, teacher_forced_loss
from ppannot.synth import inverse_articulate
from ppannot.train import Example, TrainConfig, train
from ppannot.vocab import build_vocab, decode, encode

from conftest import random_sequence
from oracles import directional_fd_errors, oracle_levenshtein

P = ProsodyLabel
SEED = 0


@pytest.fixture
def verdict(capsys):
    def emit(n: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail
    return emit


def test_01_levenshtein_oracle(verdict):
    rng = np.random.default_rng(SEED)
    toks = ["a", "i", "ka", "shi", "[", "]", "#", "*"]
    t0 = time.perf_counter()
    bad = 0
    for _ in range(10_000):
        a = [toks[i] for i in rng.integers(0, len(toks), size=rng.integers(0, 13))]
        b = [toks[i] for i in rng.integers(0, len(toks), size=rng.integers(0, 13))]
        bad += levenshtein(a, b) != oracle_levenshtein(a, b)
    dt = time.perf_counter() - t0
    verdict(1, "levenshtein vs recursive oracle", bad == 0 and dt < 10,
            f"10000 pairs, {bad} mismatches, {dt:.2f} s")


def _perturb(seq: TtsLabelSequence, rng, p_mora: float) -> TtsLabelSequence:
    moras = list(seq.moras)
    if rng.random() < p_mora:
        k = int(rng.integers(len(moras)))
        moras[k] = "u" if moras[k] != "u" else "o"
        if rng.random() < 0.3:
            moras.append("a")
    labs = list(ProsodyLabel)
    pros = [labs[rng.integers(6)] if rng.random() < 0.3 else p for p in seq.prosody]
    pros += [P.PAD] * (len(moras) - len(pros))
    return TtsLabelSequence(tuple(moras), tuple(pros))


def _hand_counts(ref, hyp):
    """Position-by-position tally written out case by case."""
    tp = fp = fn = 0
    for r, h in zip(ref, hyp):
        if r in (P.PAUSE, P.QUESTION) or h in (P.PAUSE, P.QUESTION):
            continue
        if r == P.PAD and h == P.PAD:
            continue
        if r == h:
            tp += 1
        elif r == P.PAD:
            fp += 1
        elif h == P.PAD:
            fn += 1
        else:
            fp += 1
            fn += 1
    return tp, fp, fn


def test_02_protocol_fidelity(verdict):
    rng = np.random.default_rng(SEED)
    refs = [random_sequence(rng, 10) for _ in range(200)]
    outs = {m: [_perturb(r, rng, p) for r in refs] for m, p in (("m1", 0.2), ("m2", 0.35), ("m3", 0.5))}
    rep = evaluation_protocol(refs, outs, DEFAULT_EXCLUDED)
    exact = {m: {i for i in range(200) if outs[m][i].moras == refs[i].moras} for m in outs}
    subset = sorted(exact["m1"] & exact["m2"] & exact["m3"])
    problems = []
    if rep.subset != subset or rep.n_phoneme_exact_all_models != len(subset):
        problems.append("subset")
    n_excl = 0
    for m in outs:
        tp = fp = fn = 0
        for i in subset:
            a, b, c = _hand_counts(refs[i].prosody, outs[m][i].prosody)
            tp, fp, fn = tp + a, fp + b, fn + c
            n_excl += sum(r in DEFAULT_EXCLUDED or h in DEFAULT_EXCLUDED
                          for r, h in zip(refs[i].prosody, outs[m][i].prosody))
        # excluded positions deleted outright give the same counts
        kept = [[(r, h) for r, h in zip(refs[i].prosody, outs[m][i].prosody)
                 if r not in DEFAULT_EXCLUDED and h not in DEFAULT_EXCLUDED] for i in subset]
        sub = evaluation_protocol([TtsLabelSequence(("a",) * len(k), tuple(r for r, _ in k)) for k in kept if k],
                                  {m: [TtsLabelSequence(("a",) * len(k), tuple(h for _, h in k)) for k in kept if k]},
                                  excluded=())
        c = rep.counts[m]
        if (c.tp, c.fp, c.fn) != (tp, fp, fn) or (sub.counts[m].tp, sub.counts[m].fp, sub.counts[m].fn) != (tp, fp, fn):
            problems.append(f"{m} counts")
        p = tp / (tp + fp)
        r = tp / (tp + fn)
        if (rep.prosody_precision[m], rep.prosody_recall[m], rep.prosody_f1[m]) != (p, r, 2 * p * r / (p + r)):
            problems.append(f"{m} scores")
        edits = sum(oracle_levenshtein(a.moras, b.moras) for a, b in zip(refs, outs[m]))
        if rep.cer[m] != edits / sum(len(a) for a in refs):
            problems.append(f"{m} cer")
    ok = not problems and 0 < len(subset) < 200 and n_excl > 0
    verdict(2, "evaluation protocol vs hand enumeration", ok,
            f"subset {len(subset)}/200, {n_excl} excluded positions skipped, problems: {problems or 'none'}")


def _malformations(seq: TtsLabelSequence, rng):
    toks = seq.tokens()
    k = 2 * int(rng.integers(len(seq)))
    yield toks[:-1], GrammarViolation                           # last label dropped
    yield toks[:k] + [toks[k]] + toks[k:], GrammarViolation      # mora doubled
    yield toks[:k + 1] + [toks[k + 1]] + toks[k + 1:], GrammarViolation  # label doubled
    yield [toks[1]] + toks, GrammarViolation                     # leading label
    yield toks[:k] + ["qq"] + toks[k + 1:], UnknownToken          # unknown mora
    yield toks[:k + 1] + ["%"] + toks[k + 2:], UnknownToken       # unknown symbol


def test_03_grammar_round_trip(verdict):
    rng = np.random.default_rng(SEED)
    vocab = build_vocab(DEFAULT_INVENTORY)
    bad_rt = bad_rej = n_mal = 0
    for _ in range(1000):
        seq = random_sequence(rng, 20)
        s = serialize(seq)
        if parse_label_string(s) != seq or serialize(parse_label_string(s)) != s:
            bad_rt += 1
        if decode(encode(seq, vocab), vocab) != seq:
            bad_rt += 1
        for toks, err in _malformations(seq, rng):
            n_mal += 1
            try:
                parse_tokens(toks)
                bad_rej += 1
            except err:
                pass
            except Exception:
                bad_rej += 1
    ok = bad_rt == 0 and bad_rej == 0
    verdict(3, "label grammar round trip", ok,
            f"1000 sequences, {bad_rt} round-trip failures, {bad_rej}/{n_mal} malformations not rejected as typed")


def _random_pairs(vocab, n, rng):
    xs = [rng.normal(size=(int(k), 12)) for k in rng.integers(5, 20, size=n)]
    ys = [[vocab.bos] + list(rng.integers(0, vocab.bos, size=int(k))) + [vocab.eos] for k in rng.integers(1, 9, size=n)]
    return xs, ys


def test_04_gradient_check(verdict):
    vocab = build_vocab(DEFAULT_INVENTORY)
    cfg = ModelConfig(d_model=8, n_heads=2, n_enc_layers=1, n_dec_layers=1, ff_dim=16)
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    m64 = init_model(cfg, vocab, 0, np.float64)
    xs, ys = _random_pairs(vocab, 4, rng)
    e64 = max(directional_fd_errors(m64, xs, ys, 20, rng, five_point=False, eps=1e-5))
    m32 = init_model(cfg, vocab, 0, np.float32)
    xs, ys = _random_pairs(vocab, 8, rng)
    e32 = max(directional_fd_errors(m32, xs, ys, 20, rng, five_point=True, eps=1e-3, scale=30.0, reject_flat=True))
    dt = time.perf_counter() - t0
    verdict(4, "finite-difference gradient check", e64 <= 1e-6 and e32 <= 1e-3 and dt < 30,
            f"20 directions, max rel err 64-bit {e64:.2e}, 32-bit {e32:.2e}, {dt:.1f} s")


def test_05_teacher_forced_equals_incremental(verdict):
    vocab = build_vocab(DEFAULT_INVENTORY)
    rng = np.random.default_rng(SEED)
    m = init_model(ModelConfig(), vocab, 1, np.float64)
    xs, ys = _random_pairs(vocab, 50, rng)
    worst = 0.0
    for x, y in zip(xs, ys):
        tf, _ = teacher_forced_loss(m, x, y, with_grads=False)
        inc = -incremental_log_probs(m, x, y).sum()
        worst = max(worst, abs(tf * (len(y) - 1) - inc))
    verdict(5, "teacher-forced NLL = incremental NLL", worst <= 1e-6, f"50 pairs, max |diff| {worst:.2e}")


def test_06_homograph_experiment(verdict):
    cfg = RecipeConfig()
    t0 = time.perf_counter()
    rep = homograph_experiment(cfg, SEED)
    dt = time.perf_counter() - t0
    annt, gt, asr = rep.row("annt"), rep.row("gt-nlp"), rep.row("asr-nlp")
    gap = annt.f1 - gt.f1
    ceiling = cfg.lexicon.majority_share
    ok = (gap >= 0.10 and gt.f1 >= asr.f1 and abs(gt.homograph_accuracy - ceiling) <= 0.05
          and annt.homograph_accuracy > 0.90 and cfg.train.steps <= 20_000 and dt <= 900)
    verdict(6, "audio conditioning beats text-only cascades", ok,
            f"F1 annt {annt.f1:.4f} gt {gt.f1:.4f} asr {asr.f1:.4f} (gap {100 * gap:.1f} pts); "
            f"homograph acc annt {annt.homograph_accuracy:.3f} gt {gt.homograph_accuracy:.3f} "
            f"asr {asr.homograph_accuracy:.3f} vs ceiling {ceiling}; "
            f"{rep.n_subset}/{rep.n_test} scored; {cfg.train.steps} steps; {dt:.0f} s")


def test_07_augment_experiment(verdict):
    cfg = RecipeConfig()
    t0 = time.perf_counter()
    rep = augment_experiment(cfg, SEED)
    dt = time.perf_counter() - t0
    base, aug = rep.row("annt-base"), rep.row("annt-aug")
    red = rep.extra["cer_relative_reduction"]
    ok = (rep.extra["K"] == 200 and rep.extra["K_prime"] == 2000 and red >= 0.20
          and aug.f1 > base.f1 and dt <= 1200)
    verdict(7, "text-only augmentation lowers CER", ok,
            f"K {rep.extra['K']} K' {rep.extra['K_prime']}; CER {base.cer:.4f} -> {aug.cer:.4f} "
            f"({100 * red:.1f}% relative); F1 {base.f1:.4f} -> {aug.f1:.4f}; {dt:.0f} s")


def test_08_augmented_pairs_faithful(verdict):
    cfg = RecipeConfig()
    lex = make_lexicon(cfg, SEED)
    labeled = make_split(lex, cfg, SEED, "train", 200)
    pool = text_pool(lex, cfg, SEED, 1000, exclude=labeled)
    res = run_augmentation(labeled, [u.graphemes for u in pool], lex,
                           AugmentConfig(n_text=1000, aux_noise_sigma=0.0), SEED)
    recovered = sum(inverse_articulate(u.features, res.speaker) == u.labels for u in res.augmented)
    differs = [i for i, (p, u) in enumerate(zip(res.pseudo, pool)) if p != u.labels]
    recovered_differs = sum(inverse_articulate(res.augmented[i].features, res.speaker) == res.pseudo[i]
                            for i in differs)
    ok = len(res.augmented) == 1000 and recovered == 1000 and differs and recovered_differs == len(differs)
    verdict(8, "augmented features decode to their pseudo labels", ok,
            f"{recovered}/{len(res.augmented)} recovered at noise 0; "
            f"{recovered_differs}/{len(differs)} whose pseudo label differs from the true reading")


RECIPE = [
    ["gen", "--out", "data"],
    ["train", "--data", "data", "--out", "model"],
    ["annotate", "--system", "annt", "--data", "data/test", "--model", "model/model.ckpt", "--out", "hyp/annt"],
    ["annotate", "--system", "cascade", "--data", "data/test", "--out", "hyp/gt-nlp"],
    ["annotate", "--system", "cascade", "--err-rate", "0.05", "--data", "data/test", "--out", "hyp/asr-nlp"],
    ["augment", "--labeled", "data/train", "--text", "data/text.txt", "--out", "aug"],
    ["evaluate", "--ref", "data/test", "--hyp", "annt=hyp/annt/hyp.jsonl", "--hyp", "gt-nlp=hyp/gt-nlp/hyp.jsonl",
     "--hyp", "asr-nlp=hyp/asr-nlp/hyp.jsonl", "--out", "report"],
]
TIMESTAMPS = ("started_at", "wall_clock_s")


def _run_recipe(root, monkeypatch, capsys):
    root.mkdir()
    monkeypatch.chdir(root)
    for argv in RECIPE:
        assert cli_main(argv + ["--seed", str(SEED), "-q"]) == 0, argv
    capsys.readouterr()
    files = tree_digest(root, exclude=())
    manifests = {}
    for name in list(files):
        if name.endswith("manifest.json"):
            man = json.loads((root / name).read_text())
            manifests[name] = {k: v for k, v in man.items() if k not in TIMESTAMPS}
            del files[name]
    return files, manifests


def test_09_determinism(verdict, tmp_path, monkeypatch, capsys):
    a_files, a_man = _run_recipe(tmp_path / "a", monkeypatch, capsys)
    b_files, b_man = _run_recipe(tmp_path / "b", monkeypatch, capsys)
    differ = sorted(k for k in a_files.keys() | b_files.keys() if a_files.get(k) != b_files.get(k))
    man_differ = sorted(k for k in a_man if a_man[k] != b_man.get(k))
    kinds = {"corpora": any(k.startswith("data/") and k.endswith(".f32") for k in a_files),
             "checkpoint": "model/model.ckpt" in a_files,
             "report": "report/report.txt" in a_files}
    ok = not differ and not man_differ and all(kinds.values())
    verdict(9, "two recipe runs are byte-identical", ok,
            f"{len(a_files)} files compared, {len(differ)} differ; {len(a_man)} manifests, "
            f"{len(man_differ)} differ outside {', '.join(TIMESTAMPS)}")


def test_10_frozen_encoder(verdict):
    cfg = RecipeConfig()
    lex = make_lexicon(cfg, SEED)
    vocab = build_vocab(DEFAULT_INVENTORY)
    tr = [Example(u.features, encode(u.labels, vocab)) for u in make_split(lex, cfg, SEED, "train", 300)]
    va = [Example(u.features, encode(u.labels, vocab)) for u in make_split(lex, cfg, SEED, "val", 50)]
    m = init_model(ModelConfig(freeze_encoder=True), vocab, 0)
    enc0, dec0 = m.checksum("enc."), m.checksum("dec.")
    train(m, tr, va, TrainConfig(steps=1000, warmup_steps=100, checkpoint_every=250))
    enc1, dec1 = m.checksum("enc."), m.checksum("dec.")
    verdict(10, "frozen encoder stays fixed", enc0 == enc1 and dec0 != dec1,
            f"1000 steps; encoder {'unchanged' if enc0 == enc1 else 'CHANGED'}, "
            f"decoder {'changed' if dec0 != dec1 else 'UNCHANGED'}")
