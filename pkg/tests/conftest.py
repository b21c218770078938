import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from xltime.corpus import IOLabel, LabeledSequence, TimexType  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def random_labels(rng, length, types=tuple(TimexType), valid=False):
    """Random IOB2 label strings; with valid=True every I-X continues an X span."""
    out = []
    for _ in range(length):
        choice = rng.random()
        if choice < 0.5:
            out.append("O")
        elif valid and out and out[-1] != "O" and choice < 0.75:
            out.append("I-" + out[-1][2:])
        else:
            prefix = "B" if valid else rng.choice("BI")
            out.append(f"{prefix}-{rng.choice(types).value}")
    return out


def random_sequence(rng, length=None, language="en", doc_id="d", sent_index=0, valid=True):
    length = length or rng.randint(1, 8)
    labels = random_labels(rng, length, valid=valid)
    tokens = [f"w{rng.randint(0, 50)}" for _ in labels]
    return LabeledSequence.from_strings(tokens, labels, language, doc_id, sent_index)


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture
def sample_xml():
    return (FIXTURES / "sample.tml").read_text(encoding="utf-8")
