"""On-disk corpus, lexicon and config formats.

A corpus directory holds ``metadata.jsonl`` (one record per utterance: id,
graphemes, label string, source) and ``feats/<id>.f32``. A feature file is
a little-endian header of two uint32 values (N, D) followed by N*D
little-endian float32 values in row-major order.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CheckpointFormatError, EmptyDataset, InvalidConfig
from .labels import DEFAULT_INVENTORY, MoraInventory, parse_label_string, serialize
from .synth import LabeledUtterance, Lexicon

METADATA = "metadata.jsonl"
FEATS = "feats"
_HEADER = np.dtype("<u4")
_VALUES = np.dtype("<f4")


def write_features(path: str | Path, x: np.ndarray) -> None:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {x.shape}")
    with open(path, "wb") as fh:
        fh.write(np.array(x.shape, dtype=_HEADER).tobytes())
        fh.write(np.ascontiguousarray(x, dtype=_VALUES).tobytes())


def read_features(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise CheckpointFormatError(f"{path}: truncated feature header")
    n, d = np.frombuffer(raw[:8], dtype=_HEADER)
    body = np.frombuffer(raw[8:], dtype=_VALUES)
    if body.size != int(n) * int(d):
        raise CheckpointFormatError(f"{path}: expected {n}x{d} values, found {body.size}")
    return body.reshape(int(n), int(d)).astype(np.float32)


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def save_corpus(items: Sequence[LabeledUtterance], out_dir: str | Path) -> None:
    out = Path(out_dir)
    (out / FEATS).mkdir(parents=True, exist_ok=True)
    recs = []
    for u in items:
        write_features(out / FEATS / f"{u.id}.f32", u.features)
        recs.append({"id": u.id, "graphemes": list(u.graphemes), "labels": serialize(u.labels), "source": u.source})
    write_jsonl(out / METADATA, recs)


def load_corpus(in_dir: str | Path, inventory: MoraInventory = DEFAULT_INVENTORY,
                with_features: bool = True) -> list[LabeledUtterance]:
    d = Path(in_dir)
    meta = d / METADATA
    if not meta.exists():
        raise EmptyDataset(f"{meta} not found")
    items = []
    for rec in read_jsonl(meta):
        x = read_features(d / FEATS / f"{rec['id']}.f32") if with_features else np.zeros((0, 0), np.float32)
        items.append(LabeledUtterance(
            id=rec["id"],
            graphemes=list(rec.get("graphemes", [])),
            labels=parse_label_string(rec["labels"], inventory),
            features=x,
            source=rec.get("source", "labeled"),
        ))
    return items


def save_labels(path: str | Path, ids: Sequence[str], labels: Sequence, extra: Sequence[dict] | None = None) -> None:
    """Annotation output: one JSON record per utterance (id, labels, ...)."""
    recs = []
    for i, (uid, y) in enumerate(zip(ids, labels)):
        rec = {"id": uid, "labels": serialize(y)}
        if extra is not None:
            rec.update(extra[i])
        recs.append(rec)
    write_jsonl(path, recs)


def load_labels(path: str | Path, inventory: MoraInventory = DEFAULT_INVENTORY) -> dict:
    """Map id -> TtsLabelSequence from a metadata or annotation JSONL file
    (or a corpus directory)."""
    p = Path(path)
    if p.is_dir():
        p = p / METADATA
    return {rec["id"]: parse_label_string(rec["labels"], inventory) for rec in read_jsonl(p)}


def read_text_corpus(path: str | Path) -> list[list[str]]:
    """Text-only corpus: one sentence per line, words separated by spaces."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        words = line.split()
        if words:
            out.append(words)
    return out


def write_text_corpus(path: str | Path, texts: Sequence[Sequence[str]]) -> None:
    Path(path).write_text("".join(" ".join(t) + "\n" for t in texts), encoding="utf-8")


def save_lexicon(lex: Lexicon, path: str | Path) -> None:
    doc = {"inventory": list(lex.inventory.tokens), "entries": lex.to_records()}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_lexicon(path: str | Path) -> Lexicon:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return Lexicon.from_records(doc["entries"], MoraInventory(doc["inventory"]))


def load_config(path: str | Path | None) -> dict:
    """JSON config file; a missing path gives an empty dict."""
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidConfig(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise InvalidConfig(f"config {path} must hold a JSON object")
    return doc


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def tree_digest(root: str | Path, exclude: Iterable[str] = ("manifest.json",)) -> dict[str, str]:
    """sha256 of every file under ``root`` keyed by relative path."""
    root = Path(root)
    skip = set(exclude)
    return {
        str(p.relative_to(root)): file_sha256(p)
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name not in skip
    }
