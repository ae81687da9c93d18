"""Scripted comparisons: audio-conditioned annotator vs text-only cascades,
and base vs augmented training.

Each recipe is a pure function of (RecipeConfig, seed) and returns an
ExperimentReport whose table is ranked by prosody F1 (ties by CER).
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .augment import run_augmentation
from .cascade import ResolutionPolicy, cascade_annotate
from .config import RecipeConfig
from .corpus_io import save_labels, save_lexicon
from .decoding import annotate_batch
from .labels import DEFAULT_INVENTORY, TtsLabelSequence
from .metrics import EvalReport, evaluation_protocol, parse_excluded, span_accuracy
from .model import AnnotatorModel, init_model, save_checkpoint
from .synth import LabeledUtterance, Lexicon, gen_corpus, gen_lexicon
from .train import Example, LogRow, TrainResult, train
from .vocab import build_vocab, encode

log = logging.getLogger(__name__)

# named sub-seed streams; each artifact draws from its own
STREAMS = {"lexicon": 0, "train": 1, "val": 2, "test": 3, "text": 4, "augment": 5, "init": 6, "order": 7, "asr": 8}


def sub_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([seed, STREAMS[name]]).generate_state(1)[0])


def make_lexicon(cfg: RecipeConfig, seed: int) -> Lexicon:
    c = cfg.lexicon
    return gen_lexicon(c.n_words, c.homograph_rate, c.majority_share, sub_seed(seed, "lexicon"),
                       prosody_only_fraction=c.prosody_only_fraction, word_len=tuple(c.word_len), zipf_s=c.zipf_s)


def make_split(lex: Lexicon, cfg: RecipeConfig, seed: int, split: str, n: int | None = None) -> list[LabeledUtterance]:
    c = cfg.corpus
    n = getattr(c, f"n_{split}") if n is None else n
    return gen_corpus(lex, n, tuple(c.words_per_utt), cfg.speaker, sub_seed(seed, split),
                      c.question_rate, c.pause_rate, prefix=f"{split}")


def text_pool(lex: Lexicon, cfg: RecipeConfig, seed: int, n: int,
              exclude: Sequence[LabeledUtterance] = ()) -> list[LabeledUtterance]:
    """``n`` utterances whose grapheme sequences avoid every sentence in
    ``exclude``; only their graphemes are meant to be used as text. True
    labels are kept for analysis."""
    c = cfg.corpus
    taken = {tuple(u.graphemes) for u in exclude}
    out: list[LabeledUtterance] = []
    start = 0
    chunk = max(n, 64)
    while len(out) < n:
        batch = gen_corpus(lex, chunk, tuple(c.words_per_utt), cfg.speaker, sub_seed(seed, "text"),
                           c.question_rate, c.pause_rate, start=start, prefix="text")
        out.extend(u for u in batch if tuple(u.graphemes) not in taken)
        start += chunk
        if start > 1000 * max(n, 1):
            raise RuntimeError("could not draw enough sentences disjoint from the labeled set")
    return out[:n]


def to_examples(items: Sequence[LabeledUtterance], vocab) -> list[Example]:
    return [Example(u.features, encode(u.labels, vocab)) for u in items]


def train_annotator(train_items: Sequence[LabeledUtterance], val_items: Sequence[LabeledUtterance],
                    cfg: RecipeConfig, seed: int,
                    progress: Callable[[LogRow], None] | None = None) -> TrainResult:
    vocab = build_vocab(DEFAULT_INVENTORY)
    model = init_model(cfg.model, vocab, sub_seed(seed, "init"))
    tcfg = replace(cfg.train, seed=sub_seed(seed, "order"))
    return train(model, to_examples(train_items, vocab), to_examples(val_items, vocab), tcfg, progress)


def _annotate_chunk(args) -> list[TtsLabelSequence]:
    model, xs, mode, beam = args
    return [a.labels for a in annotate_batch(model, xs, mode, beam)]


def annotate_items(model: AnnotatorModel, items: Sequence[LabeledUtterance], cfg: RecipeConfig,
                   jobs: int = 1) -> list[TtsLabelSequence]:
    """Model output per item; ``jobs > 1`` splits the items into contiguous
    chunks annotated in worker processes and concatenated in order."""
    xs = [u.features for u in items]
    mode, beam = cfg.eval.decode, cfg.eval.beam_size
    if jobs <= 1 or len(xs) < 2 * jobs:
        return _annotate_chunk((model, xs, mode, beam))
    bounds = np.linspace(0, len(xs), jobs + 1).astype(int)
    chunks = [(model, xs[a:b], mode, beam) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        parts = list(ex.map(_annotate_chunk, chunks))
    return [y for part in parts for y in part]


def cascade_items(items: Sequence[LabeledUtterance], lex: Lexicon, err_rate: float, seed: int,
                  policy: ResolutionPolicy = ResolutionPolicy.MAJORITY_PRIOR) -> list[TtsLabelSequence]:
    base = sub_seed(seed, "asr")
    return [
        cascade_annotate(u.graphemes, lex, policy, err_rate, np.random.SeedSequence([base, i]))
        for i, u in enumerate(items)
    ]


def homograph_spans(items: Sequence[LabeledUtterance], lex: Lexicon) -> list[list[tuple[int, int]]]:
    out = []
    for u in items:
        out.append([s for s, g in zip(u.word_spans, u.graphemes) if lex.lookup(g).is_homograph])
    return out


@dataclass
class SystemRow:
    name: str
    cer: float
    precision: float
    recall: float
    f1: float
    n_phoneme_exact: int
    homograph_accuracy: float | None = None


@dataclass
class ExperimentReport:
    name: str
    rows: list[SystemRow]
    n_test: int
    n_subset: int
    excluded_labels: str
    extra: dict = field(default_factory=dict)

    def ranked(self) -> list[SystemRow]:
        return sorted(self.rows, key=lambda r: (-r.f1, r.cer, r.name))

    def row(self, name: str) -> SystemRow:
        return next(r for r in self.rows if r.name == name)

    def to_text(self) -> str:
        lines = [
            f"experiment\t{self.name}",
            f"n_test\t{self.n_test}",
            f"n_phoneme_exact_all_models\t{self.n_subset}",
            f"excluded_labels\t{self.excluded_labels}",
        ]
        for k, v in self.extra.items():
            lines.append(f"{k}\t{v:.6f}" if isinstance(v, float) else f"{k}\t{v}")
        lines.append("rank\tsystem\tprosody_f1\tprecision\trecall\tcer\thomograph_acc\tn_phoneme_exact")
        for i, r in enumerate(self.ranked(), 1):
            ha = "" if r.homograph_accuracy is None else f"{r.homograph_accuracy:.4f}"
            lines.append(f"{i}\t{r.name}\t{r.f1:.4f}\t{r.precision:.4f}\t{r.recall:.4f}\t{r.cer:.4f}\t{ha}\t{r.n_phoneme_exact}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rank", "system", "prosody_f1", "precision", "recall", "cer", "homograph_acc",
                    "n_phoneme_exact", "n_subset", "n_test"])
        for i, r in enumerate(self.ranked(), 1):
            ha = "" if r.homograph_accuracy is None else f"{r.homograph_accuracy:.6f}"
            w.writerow([i, r.name, f"{r.f1:.6f}", f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.cer:.6f}", ha,
                        r.n_phoneme_exact, self.n_subset, self.n_test])
        return buf.getvalue()


def _rows(ev: EvalReport, hacc: dict[str, float] | None = None) -> list[SystemRow]:
    return [
        SystemRow(m, ev.cer[m], ev.prosody_precision[m], ev.prosody_recall[m], ev.prosody_f1[m],
                  ev.n_phoneme_exact[m], None if hacc is None else hacc.get(m))
        for m in ev.models
    ]


def _progress_logger(tag: str) -> Callable[[LogRow], None]:
    def report(row: LogRow) -> None:
        if row.val_loss is not None:
            log.info("[%s] step %d train %.4f val %.4f", tag, row.step, row.train_loss, row.val_loss)
    return report


def _write_outputs(out: Path | None, report: ExperimentReport) -> None:
    if out is None:
        return
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")


def homograph_experiment(cfg: RecipeConfig, seed: int, out: Path | None = None, jobs: int = 1) -> ExperimentReport:
    """Annotator vs GT-text cascade vs ASR-text cascade on one synthetic world."""
    lex = make_lexicon(cfg, seed)
    tr = make_split(lex, cfg, seed, "train")
    va = make_split(lex, cfg, seed, "val")
    te = make_split(lex, cfg, seed, "test")
    result = train_annotator(tr, va, cfg, seed, _progress_logger("annt"))
    outputs = {
        "annt": annotate_items(result.model, te, cfg, jobs),
        "gt-nlp": cascade_items(te, lex, 0.0, seed),
        "asr-nlp": cascade_items(te, lex, cfg.eval.asr_err_rate, seed),
    }
    refs = [u.labels for u in te]
    ev = evaluation_protocol(refs, outputs, parse_excluded(cfg.eval.excluded_labels))
    spans = homograph_spans(te, lex)
    hacc = {m: span_accuracy(refs, outputs[m], spans)[0] for m in outputs}
    report = ExperimentReport(
        "homograph", _rows(ev, hacc), len(te), ev.n_phoneme_exact_all_models, cfg.eval.excluded_labels,
        extra={
            "n_homograph_tokens": sum(len(s) for s in spans),
            "homograph_ceiling": float(cfg.lexicon.majority_share),
            "best_step": result.best_step,
            "best_val_loss": float(result.best_val_loss),
        },
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_lexicon(lex, out / "lexicon.json")
        save_checkpoint(result.model, out / "annt.ckpt", {"best_step": result.best_step})
        result.write_log(out / "train_log.csv")
        for m, ys in outputs.items():
            save_labels(out / f"hyp_{m}.jsonl", [u.id for u in te], ys)
        _write_outputs(out, report)
    return report


def augment_experiment(cfg: RecipeConfig, seed: int, out: Path | None = None, jobs: int = 1) -> ExperimentReport:
    """Base annotator on K labeled pairs vs the same recipe on K + K' pairs
    where the K' are synthesized from text-only sentences."""
    acfg = cfg.augment
    lex = make_lexicon(cfg, seed)
    labeled = make_split(lex, cfg, seed, "train", acfg.n_labeled)
    va = make_split(lex, cfg, seed, "val")
    te = make_split(lex, cfg, seed, "test")
    pool = text_pool(lex, cfg, seed, acfg.n_text, exclude=labeled)
    aug = run_augmentation(labeled, [u.graphemes for u in pool], lex, acfg, sub_seed(seed, "augment"))
    n_differs = sum(p != u.labels for p, u in zip(aug.pseudo, pool))
    base = train_annotator(labeled, va, cfg, seed, _progress_logger("base"))
    augm = train_annotator(aug.merged, va, cfg, seed, _progress_logger("aug"))
    outputs = {
        "annt-base": annotate_items(base.model, te, cfg, jobs),
        "annt-aug": annotate_items(augm.model, te, cfg, jobs),
    }
    refs = [u.labels for u in te]
    ev = evaluation_protocol(refs, outputs, parse_excluded(cfg.eval.excluded_labels))
    c_base, c_aug = ev.cer["annt-base"], ev.cer["annt-aug"]
    report = ExperimentReport(
        "augment", _rows(ev), len(te), ev.n_phoneme_exact_all_models, cfg.eval.excluded_labels,
        extra={
            "K": len(labeled),
            "K_prime": len(aug.augmented),
            "n_pseudo_differs_from_truth": n_differs,
            "cer_relative_reduction": (c_base - c_aug) / c_base if c_base > 0 else 0.0,
            "best_step_base": base.best_step,
            "best_step_aug": augm.best_step,
        },
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_lexicon(lex, out / "lexicon.json")
        save_checkpoint(base.model, out / "annt_base.ckpt", {"best_step": base.best_step})
        save_checkpoint(augm.model, out / "annt_aug.ckpt", {"best_step": augm.best_step})
        base.write_log(out / "train_log_base.csv")
        augm.write_log(out / "train_log_aug.csv")
        for m, ys in outputs.items():
            save_labels(out / f"hyp_{m}.jsonl", [u.id for u in te], ys)
        _write_outputs(out, report)
    return report


EXPERIMENTS = {"homograph": homograph_experiment, "augment": augment_experiment}
