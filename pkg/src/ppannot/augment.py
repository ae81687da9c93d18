"""Text-only data augmentation with the auxiliary articulation model.

Steps: fit speaker parameters on the small labeled set, label a text-only
grapheme corpus with the text processor (pseudo labels), render each pseudo
label into features, and merge the result with the labeled data. The pseudo
labels need not be linguistically right; each rendered pair is faithful to
its own label by construction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

from .cascade import ResolutionPolicy, text_process
from .errors import DimMismatch, InvalidConfig
from .labels import TtsLabelSequence, serialize
from .synth import (
    LabeledUtterance,
    Lexicon,
    SpeakerParams,
    articulate,
    fit_speaker,
    utterance_seed,
    with_noise,
)

# seed stream reserved for augmented-feature noise
AUG_STREAM = 2


@dataclass
class AugmentConfig:
    n_text: int = 2000  # K'
    n_labeled: int = 200  # K
    policy: str = ResolutionPolicy.MAJORITY_PRIOR.value
    aux_noise_sigma: float | None = None  # None keeps the fitted noise level
    dedupe: bool = False
    augmented_weight: int = 1  # copies of D' in the merged set

    def validate(self) -> None:
        if self.n_text < 0 or self.n_labeled < 0:
            raise InvalidConfig("n_text and n_labeled must be >= 0")
        if self.aux_noise_sigma is not None and self.aux_noise_sigma < 0:
            raise InvalidConfig("aux_noise_sigma must be >= 0")
        if self.augmented_weight < 1:
            raise InvalidConfig("augmented_weight must be >= 1")
        ResolutionPolicy(self.policy)

    def to_dict(self) -> dict:
        return asdict(self)


def make_pseudo_labels(texts: Sequence[Sequence[str]], lex: Lexicon,
                       policy: ResolutionPolicy = ResolutionPolicy.MAJORITY_PRIOR) -> list[TtsLabelSequence]:
    """Text-process every grapheme sequence; no check against true readings."""
    return [text_process(g, lex, policy) for g in texts]


def synthesize_augmented(labels: Sequence[TtsLabelSequence], sp: SpeakerParams, seed: int,
                         texts: Sequence[Sequence[str]] | None = None, prefix: str = "aug") -> list[LabeledUtterance]:
    """Render each pseudo label with the auxiliary model."""
    out = []
    for i, y in enumerate(labels):
        x = articulate(y, sp, utterance_seed(seed, i, AUG_STREAM))
        out.append(LabeledUtterance(
            id=f"{prefix}{i:05d}",
            graphemes=list(texts[i]) if texts is not None else [],
            labels=y,
            features=x,
            source="augmented",
        ))
    return out


def merge(labeled: Sequence[LabeledUtterance], augmented: Sequence[LabeledUtterance],
          dedupe: bool = False, augmented_weight: int = 1) -> list[LabeledUtterance]:
    """Concatenate D and D'; ``dedupe`` drops items whose label string was
    already seen (first occurrence wins, labeled data first)."""
    dims = {u.features.shape[1] for u in list(labeled) + list(augmented)}
    if len(dims) > 1:
        raise DimMismatch(f"feature dimensions differ across inputs: {sorted(dims)}")
    items = list(labeled) + list(augmented) * augmented_weight
    if not dedupe:
        return items
    seen: set[str] = set()
    out = []
    for u in items:
        key = serialize(u.labels)
        if key in seen:
            continue
        seen.add(key)
        out.append(u)
    return out


def disjoint_texts(pool: Sequence[Sequence[str]], labeled: Sequence[LabeledUtterance]) -> list[list[str]]:
    """Drop pool sentences that also occur as labeled-training sentences."""
    taken = {tuple(u.graphemes) for u in labeled}
    return [list(g) for g in pool if tuple(g) not in taken]


@dataclass
class AugmentResult:
    speaker: SpeakerParams
    pseudo: list[TtsLabelSequence]
    augmented: list[LabeledUtterance]
    merged: list[LabeledUtterance]
    manifest: dict = field(default_factory=dict)


def run_augmentation(labeled: Sequence[LabeledUtterance], texts: Sequence[Sequence[str]], lex: Lexicon,
                     cfg: AugmentConfig, seed: int) -> AugmentResult:
    """Fit, pseudo-label, synthesize and merge."""
    cfg.validate()
    sp = fit_speaker([(u.features, u.labels) for u in labeled])
    if cfg.aux_noise_sigma is not None:
        sp = with_noise(sp, cfg.aux_noise_sigma)
    texts = disjoint_texts(texts, labeled)
    pseudo = make_pseudo_labels(texts, lex, ResolutionPolicy(cfg.policy))
    aug = synthesize_augmented(pseudo, sp, seed, texts)
    merged = merge(labeled, aug, cfg.dedupe, cfg.augmented_weight)
    manifest = {
        "K": len(labeled),
        "K_prime": len(aug),
        "merged": len(merged),
        "seed": seed,
        "policy": cfg.policy,
        "speaker": sp.to_dict(),
        "config": cfg.to_dict(),
    }
    return AugmentResult(sp, pseudo, aug, merged, manifest)

