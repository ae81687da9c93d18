"""Recipe configuration: one JSON object with a section per component.

Documented keys (all optional; defaults give the desk-scale recipe):

    lexicon:  n_words, homograph_rate, majority_share, prosody_only_fraction,
              word_len, zipf_s
    speaker:  pitch_base, pitch_rise_delta, pitch_fall_delta, tempo, noise_sigma
    corpus:   n_train, n_val, n_test, n_text, words_per_utt, question_rate,
              pause_rate
    model:    see ModelConfig
    train:    see TrainConfig
    augment:  see AugmentConfig
    eval:     excluded_labels, asr_err_rate, decode, beam_size
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any

from .augment import AugmentConfig
from .errors import InvalidConfig, InvalidRate
from .metrics import parse_excluded
from .model import ModelConfig
from .synth import SpeakerParams
from .train import TrainConfig


@dataclass
class LexiconConfig:
    n_words: int = 100
    homograph_rate: float = 0.2
    majority_share: float = 0.7
    prosody_only_fraction: float = 0.5
    word_len: tuple[int, int] = (2, 4)
    zipf_s: float = 1.0


@dataclass
class CorpusConfig:
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 1000
    n_text: int = 2400  # text-only pool before removing labeled sentences
    words_per_utt: tuple[int, int] = (1, 3)
    question_rate: float = 0.1
    pause_rate: float = 0.1

    def validate(self) -> None:
        for name in ("n_train", "n_val", "n_test", "n_text"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"corpus.{name} must be >= 0")
        lo, hi = self.words_per_utt
        if not 1 <= lo <= hi:
            raise InvalidConfig("corpus.words_per_utt must satisfy 1 <= lo <= hi")


@dataclass
class EvalConfig:
    excluded_labels: str = "_,?"
    asr_err_rate: float = 0.05
    decode: str = "greedy"
    beam_size: int = 4

    def validate(self) -> None:
        parse_excluded(self.excluded_labels)
        if self.decode not in ("greedy", "beam"):
            raise InvalidConfig("eval.decode must be 'greedy' or 'beam'")


@dataclass
class RecipeConfig:
    lexicon: LexiconConfig = field(default_factory=LexiconConfig)
    speaker: SpeakerParams = field(default_factory=SpeakerParams)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(steps=1500, warmup_steps=150, checkpoint_every=100))
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> None:
        self.corpus.validate()
        self.model.validate()
        self.train.validate()
        self.augment.validate()
        self.eval.validate()

    def to_dict(self) -> dict:
        return asdict(self)


def _section(cls, data: Any, name: str):
    if not isinstance(data, dict):
        raise InvalidConfig(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfig(f"unknown keys in {name!r}: {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, InvalidRate) as e:
        raise InvalidConfig(f"bad {name!r} section: {e}") from e


def recipe_from_dict(d: dict, base: RecipeConfig | None = None) -> RecipeConfig:
    """Overlay ``d`` on ``base`` (or the defaults) section by section."""
    base = base or RecipeConfig()
    sections = {f.name: f for f in fields(RecipeConfig)}
    unknown = set(d) - set(sections)
    if unknown:
        raise InvalidConfig(f"unknown config sections: {sorted(unknown)}")
    out = {}
    for name in sections:
        current = getattr(base, name)
        if name in d:
            merged = asdict(current)
            if not isinstance(d[name], dict):
                raise InvalidConfig(f"config section {name!r} must be an object")
            merged.update(d[name])
            out[name] = _section(type(current), merged, name)
        else:
            out[name] = current
    cfg = RecipeConfig(**out)
    cfg.validate()
    return cfg
