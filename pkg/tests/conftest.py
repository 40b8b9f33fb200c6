import numpy as np
import pytest

from bmbe.fixtures import minimal_kb, separable_kb, twin_kb
from bmbe.kb import BINARY_VALUES, Disease, Feature, KnowledgeBase


def binary_counts(p_yes: float) -> dict[str, float]:
    """Counts summing to 100 whose smoothed conditional is exactly p_yes."""
    n_yes = p_yes * 102.0 - 1.0
    return {"yes": n_yes, "no": 100.0 - n_yes}


@pytest.fixture
def kb_two() -> KnowledgeBase:
    """Two diseases, one binary feature with smoothed P(yes|d) = (0.9, 0.1)."""
    diseases = [Disease("d1", "disease one", 1.0), Disease("d2", "disease two", 1.0)]
    feature = Feature("f1", "fever", "binary", BINARY_VALUES, "Do you currently have a fever?")
    counts = {("d1", "f1"): binary_counts(0.9), ("d2", "f1"): binary_counts(0.1)}
    return KnowledgeBase(1, diseases, [feature], counts)


@pytest.fixture
def kb_minimal() -> KnowledgeBase:
    return minimal_kb()


@pytest.fixture
def kb_separable() -> KnowledgeBase:
    return separable_kb()


@pytest.fixture
def kb_twin() -> KnowledgeBase:
    return twin_kb()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260809)
