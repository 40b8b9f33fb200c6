"""Log-space posterior over diseases and Jeffrey-conditioned evidence updates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

import numpy as np

if TYPE_CHECKING:
    from .kb import Feature, KnowledgeBase

UNKNOWN = "unknown"
CLARIFICATION = "clarification"

CONFIDENCE_LABELS = ("very_likely", "likely", "uncertain", "unlikely", "very_unlikely")

DEFAULT_CONFIDENCE_WEIGHTS: dict[str, float] = {
    "very_likely": 1.00,
    "likely": 0.80,
    "uncertain": 0.50,
    "unlikely": 0.25,
    "very_unlikely": 0.05,
}

EVIDENCE_TIERS = ("pattern", "external", "downgrade", "oracle", "intake")

# Updates whose effective likelihood is this close to the all-ones vector are no-ops.
NEUTRAL_SKIP_TOL = 1e-12

DEFAULT_NUMERIC_SIGMA = 1.0


@dataclass(frozen=True)
class ConfidenceScale:
    """Mapping from the five linguistic certainty labels to numeric weights in (0, 1]."""

    weights: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_CONFIDENCE_WEIGHTS)
    )

    def __post_init__(self) -> None:
        for label, w in self.weights.items():
            if not 0.0 < float(w) <= 1.0:
                raise ValueError(
                    f"confidence weight for {label!r} must be in (0, 1], got {w}"
                )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.weights)

    def weight(self, label: str) -> float:
        try:
            return float(self.weights[label])
        except KeyError:
            raise ValueError(f"unknown confidence label: {label!r}") from None

    def to_dict(self) -> dict[str, float]:
        return dict(self.weights)


DEFAULT_SCALE = ConfidenceScale()


def map_confidence(label: str, scale: ConfidenceScale | None = None) -> float:
    """Return the numeric weight for a linguistic confidence label."""
    return (scale or DEFAULT_SCALE).weight(label)


@dataclass(frozen=True)
class EvidenceTriple:
    """One piece of structured evidence: feature, schema value, confidence weight."""

    feature_id: str
    value: str | float
    confidence: float
    tier: str = "pattern"
    turn: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.confidence <= 1.0:
            raise ValueError(f"confidence must be in (0, 1], got {self.confidence}")
        if self.tier not in EVIDENCE_TIERS:
            raise ValueError(f"unknown evidence tier: {self.tier!r}")
        if self.turn < 0:
            raise ValueError("turn must be >= 0")

    def to_dict(self) -> dict:
        return {
            "feature_id": self.feature_id,
            "value": self.value,
            "confidence": self.confidence,
            "tier": self.tier,
            "turn": self.turn,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EvidenceTriple":
        return cls(
            feature_id=d["feature_id"],
            value=d["value"],
            confidence=float(d["confidence"]),
            tier=d.get("tier", "pattern"),
            turn=int(d.get("turn", 0)),
        )


@dataclass(frozen=True, eq=False)
class Belief:
    """Posterior over diseases, kept as natural-log probabilities.

    Beliefs are values: every update returns a new instance and never mutates
    the input, so a belief can be shared freely across threads.
    """

    log_probs: np.ndarray
    disease_order: tuple[str, ...]

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def prob(self, disease_id: str) -> float:
        return float(np.exp(self.log_probs[self.disease_order.index(disease_id)]))

    def max_posterior(self) -> float:
        return float(np.exp(np.max(self.log_probs)))

    def to_dict(self) -> dict[str, float]:
        return {d: float(p) for d, p in zip(self.disease_order, self.probs())}


def belief_from_probs(probs, disease_order) -> Belief:
    """Normalize a nonnegative vector into a Belief (zero entries map to -inf logs)."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or len(p) != len(disease_order):
        raise ValueError("probability vector does not match disease order")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite and nonnegative")
    total = p.sum()
    if total <= 0:
        raise ValueError("probability vector has no mass")
    with np.errstate(divide="ignore"):
        logs = np.log(p / total)
    return Belief(logs, tuple(disease_order))


def soft_match_weights(grid: np.ndarray, reading: float, sigma_steps: float, step: float) -> np.ndarray:
    """Gaussian weights over a numeric grid for an observed reading, normalized to sum 1."""
    if sigma_steps <= 0:
        raise ValueError("numeric sigma must be positive")
    sig = sigma_steps * step
    logw = -((reading - grid) ** 2) / (2.0 * sig * sig)
    logw -= logw.max()  # keep the nearest grid point at weight 1 before normalization
    w = np.exp(logw)
    return w / w.sum()


def _likelihood_vector(
    kb: "KnowledgeBase",
    feature: "Feature",
    value: str | float,
    numeric_sigma: float,
) -> np.ndarray:
    if feature.kind == "numeric":
        reading = feature.numeric_reading(value)
        grid = feature.grid()
        step = feature.numeric_scale[2]
        w = soft_match_weights(grid, reading, numeric_sigma, step)
        return kb.likelihood_matrix(feature.id) @ w
    return kb.likelihood_vector(feature.id, str(value))


def update_belief(
    belief: Belief,
    kb: "KnowledgeBase",
    evidence: EvidenceTriple,
    *,
    numeric_sigma: float = DEFAULT_NUMERIC_SIGMA,
) -> Belief:
    """Apply one evidence triple via Jeffrey's conditioning in log-space.

    The effective likelihood mixes the schema likelihood with a neutral vector
    weighted by the confidence; when it is indistinguishable from all-ones the
    input belief is returned unchanged. Numeric readings are soft-matched onto
    the feature grid with a Gaussian kernel before conditioning.
    """
    if evidence.value in (UNKNOWN, CLARIFICATION):
        raise ValueError("unknown/clarification carries no evidence; filter before updating")
    feature = kb.feature(evidence.feature_id)
    lik = _likelihood_vector(kb, feature, evidence.value, numeric_sigma)
    c = evidence.confidence
    l_eff = c * lik + (1.0 - c)
    if np.max(np.abs(l_eff - 1.0)) < NEUTRAL_SKIP_TOL:
        return belief
    logs = belief.log_probs + np.log(l_eff)
    logs = logs - np.logaddexp.reduce(logs)
    return Belief(logs, belief.disease_order)


def entropy(belief: Belief) -> float:
    """Shannon entropy of the posterior, in bits."""
    p = belief.probs()
    nz = p[p > 0]
    return max(0.0, float(-(nz * np.log2(nz)).sum()))


def top_k(belief: Belief, k: int) -> list[tuple[str, float]]:
    """Top-k diseases by posterior, descending; ties broken by ascending disease id."""
    n = len(belief.disease_order)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    p = belief.probs()
    ranked = sorted(zip(belief.disease_order, p), key=lambda kv: (-kv[1], kv[0]))
    return [(d, float(v)) for d, v in ranked[:k]]
