"""Deterministic fixture knowledge bases for tests and benchmarks."""

from __future__ import annotations

import numpy as np

from .kb import BINARY_VALUES, COUNT_SCALE, Disease, Feature, KnowledgeBase


def _binary_counts_for(p_yes: float) -> dict[str, float]:
    """Counts summing to 100 whose +1-smoothed conditional equals p_yes exactly."""
    alpha_total = COUNT_SCALE + 2.0
    n_yes = p_yes * alpha_total - 1.0
    if not 0.0 <= n_yes <= COUNT_SCALE:
        raise ValueError(f"p_yes={p_yes} not reachable with counts summing to {COUNT_SCALE}")
    return {"yes": n_yes, "no": COUNT_SCALE - n_yes}


def minimal_kb() -> KnowledgeBase:
    """Smallest legal KB: two diseases, one binary feature."""
    diseases = [Disease("d1", "disease one", 1.0), Disease("d2", "disease two", 1.0)]
    feature = Feature("f1", "fever", "binary", BINARY_VALUES, "Do you currently have a fever?")
    counts = {
        ("d1", "f1"): {"yes": 90.0, "no": 10.0},
        ("d2", "f1"): {"yes": 10.0, "no": 90.0},
    }
    return KnowledgeBase(1, diseases, [feature], counts)


def separable_kb(
    k: int = 10,
    features_per_disease: int = 3,
    p_hit: float = 0.95,
    p_miss: float = 0.05,
) -> KnowledgeBase:
    """Each disease owns a few near-deterministic distinctive binary features."""
    diseases = [Disease(f"d{i:02d}", f"disease {i:02d}", 1.0) for i in range(1, k + 1)]
    n = k * features_per_disease
    features = [
        Feature(
            f"f{j:02d}",
            f"symptom {j:02d}",
            "binary",
            BINARY_VALUES,
            f"Do you currently have symptom {j:02d}?",
        )
        for j in range(1, n + 1)
    ]
    hit = _binary_counts_for(p_hit)
    miss = _binary_counts_for(p_miss)
    counts = {}
    for i, d in enumerate(diseases):
        for j, f in enumerate(features):
            owned = j // features_per_disease == i
            counts[(d.id, f.id)] = dict(hit if owned else miss)
    return KnowledgeBase(1, diseases, features, counts)


def twin_kb(n_features: int = 3) -> KnowledgeBase:
    """Two diseases with identical conditionals: indistinguishable by any evidence."""
    diseases = [Disease("d1", "twin one", 1.0), Disease("d2", "twin two", 1.0)]
    features = [
        Feature(
            f"f{j}",
            f"shared sign {j}",
            "binary",
            BINARY_VALUES,
            f"Do you have shared sign {j}?",
        )
        for j in range(1, n_features + 1)
    ]
    counts = {}
    for d in diseases:
        for f in features:
            counts[(d.id, f.id)] = {"yes": 80.0, "no": 20.0}
    return KnowledgeBase(1, diseases, features, counts)


def random_kb(
    rng: np.random.Generator,
    k: int,
    n: int,
    v_max: int = 3,
    p_absent: float = 0.2,
) -> KnowledgeBase:
    """Random small KB for property tests; some pairs left absent (uniform fallback)."""
    diseases = [
        Disease(f"d{i:02d}", f"rnd disease {i:02d}", float(rng.integers(1, 6)))
        for i in range(1, k + 1)
    ]
    features = []
    for j in range(1, n + 1):
        nv = int(rng.integers(2, v_max + 1))
        if nv == 2 and rng.random() < 0.7:
            features.append(
                Feature(f"f{j:02d}", f"rnd sign {j:02d}", "binary", BINARY_VALUES,
                        f"Do you have rnd sign {j:02d}?")
            )
        else:
            values = tuple(f"v{t}" for t in range(nv))
            features.append(
                Feature(f"f{j:02d}", f"rnd sign {j:02d}", "categorical", values,
                        f"What best describes rnd sign {j:02d}?")
            )
    counts = {}
    for d in diseases:
        for f in features:
            if rng.random() < p_absent:
                continue
            p = rng.dirichlet(np.ones(len(f.values)))
            counts[(d.id, f.id)] = {v: float(x) * COUNT_SCALE for v, x in zip(f.values, p)}
    return KnowledgeBase(1, diseases, features, counts)


def benchmark_shaped_kb(
    k: int = 49,
    n_binary: int = 306,
    n_wide: int = 8,
    wide_values: int = 10,
    seed: int = 0,
) -> KnowledgeBase:
    """Production-scale synthetic KB matching the 49-disease / 314-feature shape."""
    rng = np.random.default_rng(seed)
    diseases = [
        Disease(f"d{i:03d}", f"condition {i:03d}", float(rng.integers(1, 200)))
        for i in range(1, k + 1)
    ]
    features = []
    counts = {}
    for j in range(1, n_binary + 1):
        f = Feature(f"b{j:03d}", f"sign {j:03d}", "binary", BINARY_VALUES,
                    f"Do you currently have sign {j:03d}?")
        features.append(f)
    for j in range(1, n_wide + 1):
        values = tuple(str(t) for t in range(wide_values))
        f = Feature(
            f"n{j:02d}", f"scale {j:02d}", "numeric", values,
            f"On a scale from 0 to {wide_values - 1}, how bad is scale {j:02d}?",
            numeric_scale=(0.0, float(wide_values - 1), 1.0),
        )
        features.append(f)
    for d in diseases:
        for f in features:
            p = rng.dirichlet(np.ones(len(f.values)))
            counts[(d.id, f.id)] = {v: float(x) * COUNT_SCALE for v, x in zip(f.values, p)}
    return KnowledgeBase(1, diseases, features, counts)
