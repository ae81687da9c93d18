"""Command-line entry point: ``ppannot <command> [options]``.

Commands: gen, train, annotate, evaluate, augment, experiment. Every
command writes its artifacts plus ``manifest.json`` into ``--out`` and logs
progress to standard error. Failures exit with the error type's code.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, kernels
from .augment import run_augmentation
from .cascade import ResolutionPolicy, count_fallbacks, cascade_annotate
from .config import RecipeConfig, recipe_from_dict
from .corpus_io import (
    file_sha256,
    load_config,
    load_corpus,
    load_labels,
    load_lexicon,
    read_text_corpus,
    save_corpus,
    save_labels,
    save_lexicon,
    tree_digest,
    write_text_corpus,
)
from .errors import EmptyDataset, InvalidConfig, PPAnnotError, RaggedInputs
from .experiments import (
    EXPERIMENTS,
    annotate_items,
    make_lexicon,
    sub_seed,
    text_pool,
    train_annotator,
)
from .metrics import evaluation_protocol, parse_excluded
from .model import load_checkpoint, save_checkpoint
from .synth import gen_corpus

log = logging.getLogger("ppannot")

MANIFEST = "manifest.json"


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    config: dict
    seeds: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    tool_version: str = __version__
    kernel_backend: str = kernels.BACKEND
    python: str = platform.python_version()
    started_at: float = 0.0
    wall_clock_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> None:
        self.outputs = tree_digest(out_dir, exclude=(MANIFEST,))
        (out_dir / MANIFEST).write_text(json.dumps(asdict(self), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def resolve_config(args) -> RecipeConfig:
    cfg = recipe_from_dict(load_config(args.config))
    if args.excluded_labels is not None:
        parse_excluded(args.excluded_labels)
        cfg.eval.excluded_labels = args.excluded_labels
    return cfg


def _out_dir(args) -> Path:
    if args.out is None:
        raise InvalidConfig("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _gen_chunk(job):
    lex, n, start, c, speaker, seed, prefix = job
    return gen_corpus(lex, n, tuple(c.words_per_utt), speaker, seed, c.question_rate, c.pause_rate,
                      start=start, prefix=prefix)


def _generate(lex, cfg: RecipeConfig, seed: int, split: str, jobs: int):
    """Same output as ``experiments.make_split`` for any ``jobs``."""
    n = getattr(cfg.corpus, f"n_{split}")
    s = sub_seed(seed, split)
    if jobs <= 1 or n < 2 * jobs:
        return _gen_chunk((lex, n, 0, cfg.corpus, cfg.speaker, s, split))
    bounds = np.linspace(0, n, jobs + 1).astype(int)
    chunks = [(lex, int(b - a), int(a), cfg.corpus, cfg.speaker, s, split) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return [u for part in ex.map(_gen_chunk, chunks) for u in part]


def cmd_gen(args, cfg: RecipeConfig, man: RunManifest) -> int:
    out = _out_dir(args)
    lex = make_lexicon(cfg, args.seed)
    save_lexicon(lex, out / "lexicon.json")
    splits = {}
    for split in ("train", "val", "test"):
        items = _generate(lex, cfg, args.seed, split, args.jobs)
        save_corpus(items, out / split)
        splits[split] = len(items)
        log.info("gen: %s %d utterances", split, len(items))
        if split == "train":
            train_items = items
    pool = text_pool(lex, cfg, args.seed, cfg.corpus.n_text, exclude=train_items)
    write_text_corpus(out / "text.txt", [u.graphemes for u in pool])
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    man.extra = {"splits": splits, "n_text": len(pool), "homograph_rate": lex.homograph_rate}
    return 0


def cmd_train(args, cfg: RecipeConfig, man: RunManifest) -> int:
    out = _out_dir(args)
    train_dir = args.train or (Path(args.data) / "train" if args.data else None)
    val_dir = args.val or (Path(args.data) / "val" if args.data else None)
    if train_dir is None or val_dir is None:
        raise InvalidConfig("give --data DIR or both --train and --val")
    tr = load_corpus(train_dir)
    va = load_corpus(val_dir)
    if args.freeze_encoder:
        cfg.model.freeze_encoder = True
    man.inputs = {"train": str(train_dir), "val": str(val_dir)}
    t_steps = cfg.train.steps

    def progress(row):
        if row.val_loss is not None:
            log.info("train: step %d/%d lr %.2e loss %.4f val %.4f", row.step, t_steps, row.lr, row.train_loss, row.val_loss)

    res = train_annotator(tr, va, cfg, args.seed, progress)
    save_checkpoint(res.model, out / "model.ckpt", {"best_step": res.best_step, "seed": args.seed})
    res.write_log(out / "train_log.csv")
    man.extra = {"best_step": res.best_step, "best_val_loss": res.best_val_loss, "n_train": len(tr), "n_val": len(va)}
    return 0


def cmd_annotate(args, cfg: RecipeConfig, man: RunManifest) -> int:
    out = _out_dir(args)
    items = load_corpus(args.data, with_features=args.system == "annt")
    ids = [u.id for u in items]
    if args.system == "annt":
        if not args.model:
            raise InvalidConfig("--model is required for --system annt")
        model, meta = load_checkpoint(args.model)
        if args.decode:
            cfg.eval.decode = args.decode
        labels = annotate_items(model, items, cfg, args.jobs)
        man.inputs = {"model": file_sha256(args.model), "data": str(args.data)}
    else:
        lex_path = args.lexicon or Path(args.data).parent / "lexicon.json"
        lex = load_lexicon(lex_path)
        policy = ResolutionPolicy(args.policy)
        base = sub_seed(args.seed, "asr")
        labels = [
            cascade_annotate(u.graphemes, lex, policy, args.err_rate, np.random.SeedSequence([base, i]))
            for i, u in enumerate(items)
        ]
        man.inputs = {"lexicon": file_sha256(lex_path), "data": str(args.data)}
        man.extra = {"fallbacks": sum(count_fallbacks(u.graphemes, lex) for u in items)}
    save_labels(out / "hyp.jsonl", ids, labels)
    log.info("annotate: %d utterances with %s", len(ids), args.system)
    return 0


def _parse_hyp(spec: str) -> tuple[str, str]:
    if "=" in spec:
        name, path = spec.split("=", 1)
        return name, path
    return Path(spec).parent.name or Path(spec).stem, spec


def cmd_evaluate(args, cfg: RecipeConfig, man: RunManifest) -> int:
    out = _out_dir(args)
    refs = load_labels(args.ref)
    if not refs:
        raise EmptyDataset("no references")
    ids = sorted(refs)
    outputs = {}
    for spec in args.hyp:
        name, path = _parse_hyp(spec)
        hyps = load_labels(path)
        missing = [i for i in ids if i not in hyps]
        if missing:
            raise RaggedInputs(f"{name}: {len(missing)} reference ids have no hypothesis (first: {missing[0]})")
        outputs[name] = [hyps[i] for i in ids]
    report = evaluation_protocol([refs[i] for i in ids], outputs, parse_excluded(cfg.eval.excluded_labels))
    text = report.to_text()
    csv_text = report.to_csv()
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.csv").write_text(csv_text, encoding="utf-8")
    sys.stdout.write(csv_text if args.format == "csv" else text)
    man.inputs = {"ref": str(args.ref), "hyp": list(args.hyp)}
    return 0


def cmd_augment(args, cfg: RecipeConfig, man: RunManifest) -> int:
    out = _out_dir(args)
    labeled = load_corpus(args.labeled)
    texts = read_text_corpus(args.text)
    if args.n_text is not None:
        texts = texts[: args.n_text]
    lex_path = args.lexicon or Path(args.labeled).parent / "lexicon.json"
    lex = load_lexicon(lex_path)
    res = run_augmentation(labeled, texts, lex, cfg.augment, sub_seed(args.seed, "augment"))
    save_corpus(res.merged, out / "merged")
    (out / "speaker.json").write_text(json.dumps(res.speaker.to_dict(), indent=1, sort_keys=True) + "\n",
                                      encoding="utf-8")
    man.inputs = {"labeled": str(args.labeled), "text": file_sha256(args.text), "lexicon": file_sha256(lex_path)}
    man.extra = res.manifest
    log.info("augment: K=%d K'=%d merged=%d", res.manifest["K"], res.manifest["K_prime"], res.manifest["merged"])
    return 0


def cmd_experiment(args, cfg: RecipeConfig, man: RunManifest) -> int:
    out = _out_dir(args)
    report = EXPERIMENTS[args.name](cfg, args.seed, out, args.jobs)
    sys.stdout.write(report.to_text())
    man.extra = {"ranking": [r.name for r in report.ranked()]}
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "annotate": cmd_annotate,
    "evaluate": cmd_evaluate,
    "augment": cmd_augment,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--config", help="JSON recipe config")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for gen/annotate")
    common.add_argument("--excluded-labels", default=None,
                        help="prosody symbols left out of scoring, comma separated (default '_,?')")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings")

    p = argparse.ArgumentParser(prog="ppannot", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", parents=[common], help="generate lexicon, corpora and a text-only pool")

    t = sub.add_parser("train", parents=[common], help="train the annotator")
    t.add_argument("--data", help="directory written by gen")
    t.add_argument("--train", help="training corpus directory (overrides --data)")
    t.add_argument("--val", help="validation corpus directory (overrides --data)")
    t.add_argument("--freeze-encoder", action="store_true")

    a = sub.add_parser("annotate", parents=[common], help="label a corpus")
    a.add_argument("--system", choices=("annt", "cascade"), default="annt")
    a.add_argument("--data", required=True, help="corpus directory")
    a.add_argument("--model", help="checkpoint (annt)")
    a.add_argument("--lexicon", help="lexicon JSON (cascade; default <data>/../lexicon.json)")
    a.add_argument("--err-rate", type=float, default=0.0, help="ASR surrogate word error rate (cascade)")
    a.add_argument("--policy", choices=[p.value for p in ResolutionPolicy], default="majority")
    a.add_argument("--decode", choices=("greedy", "beam"), default=None)

    e = sub.add_parser("evaluate", parents=[common], help="score hypotheses against references")
    e.add_argument("--ref", required=True, help="reference corpus directory or JSONL")
    e.add_argument("--hyp", required=True, action="append", help="NAME=PATH hypothesis JSONL (repeatable)")
    e.add_argument("--format", choices=("text", "csv"), default="text")

    g = sub.add_parser("augment", parents=[common], help="synthesize augmented pairs from text")
    g.add_argument("--labeled", required=True, help="labeled corpus directory")
    g.add_argument("--text", required=True, help="text-only corpus, one sentence per line")
    g.add_argument("--lexicon", help="lexicon JSON (default <labeled>/../lexicon.json)")
    g.add_argument("--n-text", type=int, default=None, help="use only the first N sentences")

    x = sub.add_parser("experiment", parents=[common], help="run a scripted comparison")
    x.add_argument("name", choices=sorted(EXPERIMENTS))
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s", force=True)
    start = time.time()
    try:
        if args.jobs < 1:
            raise InvalidConfig("--jobs must be >= 1")
        cfg = resolve_config(args)
        man = RunManifest(args.command, argv, cfg.to_dict(), {"seed": args.seed}, started_at=start)
        code = COMMANDS[args.command](args, cfg, man)
        man.wall_clock_s = round(time.time() - start, 3)
        man.write(Path(args.out))
        return code
    except PPAnnotError as e:
        print(f"ppannot: error: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except (OSError, KeyError, ValueError) as e:
        print(f"ppannot: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
