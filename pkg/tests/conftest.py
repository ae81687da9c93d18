import numpy as np
import pytest

from ppannot.labels import DEFAULT_INVENTORY, DEFAULT_MORAS, ProsodyLabel, TtsLabelSequence
from ppannot.vocab import build_vocab

P = ProsodyLabel


@pytest.fixture(scope="session")
def vocab():
    return build_vocab(DEFAULT_INVENTORY)


def random_sequence(rng: np.random.Generator, max_len: int = 12, moras=DEFAULT_MORAS) -> TtsLabelSequence:
    n = int(rng.integers(1, max_len + 1))
    labs = list(ProsodyLabel)
    return TtsLabelSequence(
        tuple(moras[i] for i in rng.integers(0, len(moras), size=n)),
        tuple(labs[i] for i in rng.integers(0, len(labs), size=n)),
    )
