"""Synthetic patients: ancestral sampling from a KB and persona-perturbed answering."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:
    from .kb import Feature, KnowledgeBase

SEXES = ("male", "female")
AGE_RANGE = (18, 90)
CHIEF_COMPLAINT_LIMIT = 3
FALLBACK_COMPLAINT = "I'm not feeling well."

# Filler vocabulary for the verbose persona; deliberately free of every token
# the tier-1 rule table reacts to (no digits, affirmatives, negations, hedges).
FILLER_WORDS = (
    "honestly", "anyway", "um", "well", "you", "see", "the", "other", "day",
    "at", "home", "things", "kept", "happening", "and", "then", "again", "it",
    "was", "quite", "busy", "my", "cousin", "said", "something", "similar",
    "once", "during", "dinner", "which", "reminded", "me", "of", "that", "trip",
)


@dataclass(frozen=True)
class PatientProfile:
    id: str
    disease_id: str
    age: int
    sex: str
    findings: Mapping[str, str]
    chief_complaint: str
    seed: int
    chief_features: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "disease_id": self.disease_id,
            "age": self.age,
            "sex": self.sex,
            "findings": dict(self.findings),
            "chief_complaint": self.chief_complaint,
            "seed": self.seed,
            "chief_features": list(self.chief_features),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PatientProfile":
        return cls(
            id=d["id"],
            disease_id=d["disease_id"],
            age=int(d["age"]),
            sex=d["sex"],
            findings=dict(d["findings"]),
            chief_complaint=d["chief_complaint"],
            seed=int(d["seed"]),
            chief_features=tuple(d.get("chief_features", ())),
        )


@dataclass(frozen=True)
class Persona:
    archetype: str = "plain"
    p_false_positive: float = 0.0
    p_withhold: float = 0.0
    p_flip: float = 0.0
    p_hedge: float = 0.0
    verbosity_pad: int = 0

    def __post_init__(self) -> None:
        for name in ("p_false_positive", "p_withhold", "p_flip", "p_hedge"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.verbosity_pad < 0:
            raise ValueError("verbosity_pad must be >= 0")


PERSONAS: dict[str, Persona] = {
    "plain": Persona("plain"),
    "overanxious": Persona("overanxious", p_false_positive=0.25),
    "distrustful": Persona("distrustful", p_withhold=0.5),
    "dazed": Persona("dazed", p_flip=0.15, p_hedge=0.6),
    "verbose": Persona("verbose", verbosity_pad=25),
}


def derive_seed(root: int, *parts) -> int:
    """Stable cross-platform child seed from a root seed and identifying parts."""
    digest = hashlib.sha256(f"{root}|{'|'.join(map(str, parts))}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def is_positive_value(feature: "Feature", value: str | float) -> bool:
    """Whether a finding asserts presence: binary yes, or a non-minimal grid value."""
    if feature.kind == "binary":
        return value == "yes"
    if feature.kind in ("ordinal", "numeric"):
        try:
            return feature.values.index(str(value)) > 0
        except ValueError:
            return False
    return False  # categorical findings carry no presence semantics


def _relevant(kb: "KnowledgeBase", disease_id: str) -> list["Feature"]:
    idx = kb.disease_order.index(disease_id)
    out = []
    for f in kb.features:
        row = kb.likelihood_matrix(f.id)[idx]
        if np.max(np.abs(row - 1.0 / len(f.values))) > 1e-12:
            out.append(f)
    return out


def _chief_complaint(kb: "KnowledgeBase", findings: Mapping[str, str]) -> tuple[str, tuple[str, ...]]:
    positives = [
        f for f in kb.features
        if f.id in findings and is_positive_value(f, findings[f.id])
    ][:CHIEF_COMPLAINT_LIMIT]
    if not positives:
        return FALLBACK_COMPLAINT, ()
    names = [f.name for f in positives]
    if len(names) == 1:
        text = f"I have {names[0]}."
    else:
        text = f"I have {', '.join(names[:-1])} and {names[-1]}."
    return text, tuple(f.id for f in positives)


def sample_patient(
    kb: "KnowledgeBase",
    disease_id: str,
    seed: int,
    profile_id: str | None = None,
) -> PatientProfile:
    """Draw one patient by ancestral sampling from the KB's conditionals.

    Only features whose conditional for the disease is non-uniform are
    sampled; demographics are uniform. Deterministic given the seed.
    """
    if disease_id not in kb.disease_order:
        raise ValueError(f"unknown disease id: {disease_id!r}")
    rng = np.random.default_rng(seed)
    age = int(rng.integers(AGE_RANGE[0], AGE_RANGE[1] + 1))
    sex = SEXES[int(rng.integers(0, 2))]
    idx = kb.disease_order.index(disease_id)
    findings: dict[str, str] = {}
    for f in _relevant(kb, disease_id):
        probs = kb.likelihood_matrix(f.id)[idx]
        choice = int(rng.choice(len(f.values), p=probs))
        findings[f.id] = f.values[choice]
    complaint, chief = _chief_complaint(kb, findings)
    return PatientProfile(
        id=profile_id or f"{disease_id}-s{seed}",
        disease_id=disease_id,
        age=age,
        sex=sex,
        findings=findings,
        chief_complaint=complaint,
        seed=seed,
        chief_features=chief,
    )


def generate_cohort(kb: "KnowledgeBase", n_per: int, seed: int) -> list[PatientProfile]:
    """n_per ancestral patients per disease, with per-profile derived seeds."""
    if n_per < 1:
        raise ValueError("n_per must be >= 1")
    cohort = []
    for d in kb.disease_order:
        for i in range(n_per):
            child = derive_seed(seed, d, i)
            cohort.append(sample_patient(kb, d, child, profile_id=f"{d}-{i:03d}"))
    return cohort


def stratified_subset(
    profiles: Sequence[PatientProfile], n: int, seed: int
) -> list[PatientProfile]:
    """Pick n profiles with at least one per disease; requires n >= number of diseases."""
    by_disease: dict[str, list[PatientProfile]] = {}
    for p in profiles:
        by_disease.setdefault(p.disease_id, []).append(p)
    if n < len(by_disease):
        raise ValueError(
            f"need n >= {len(by_disease)} to cover every disease, got {n}"
        )
    rng = np.random.default_rng(seed)
    chosen: list[PatientProfile] = []
    for d in sorted(by_disease):
        group = by_disease[d]
        chosen.append(group[int(rng.integers(0, len(group)))])
    chosen_ids = {p.id for p in chosen}
    rest = [p for p in profiles if p.id not in chosen_ids]
    extra = n - len(chosen)
    if extra > 0:
        order = rng.permutation(len(rest))
        chosen.extend(rest[i] for i in order[:extra])
    return sorted(chosen, key=lambda p: p.id)


# -- answering -----------------------------------------------------------------


def _render(feature: "Feature", value: str, hedged: bool) -> str:
    if feature.kind == "binary":
        if value == "yes":
            return "I think so." if hedged else "Yes."
        return "I don't think so." if hedged else "No."
    if feature.kind == "numeric":
        return f"I think it's around {value}." if hedged else f"It's {value}."
    return f"I think it's {value}." if hedged else f"It's {value}."


def _flip(feature: "Feature", value: str, rng: np.random.Generator) -> str:
    if feature.kind == "binary":
        return "no" if value == "yes" else "yes"
    others = [v for v in feature.values if v != value]
    return others[int(rng.integers(0, len(others)))]


def _pad(answer: str, persona: Persona, rng: np.random.Generator) -> str:
    if persona.verbosity_pad <= 0:
        return answer
    words = [FILLER_WORDS[int(i)] for i in rng.integers(0, len(FILLER_WORDS), persona.verbosity_pad)]
    cut = int(rng.integers(0, persona.verbosity_pad + 1))
    before = " ".join(words[:cut])
    after = " ".join(words[cut:])
    parts = [p for p in (before, answer, after) if p]
    return " ".join(parts)


def respond(
    profile: PatientProfile,
    persona: Persona,
    feature: "Feature",
    rng: np.random.Generator,
) -> str:
    """Answer one question: faithful base answer, then persona perturbations in order."""
    value = profile.findings.get(feature.id)
    if (
        persona.p_false_positive > 0
        and feature.kind == "binary"
        and (value is None or value == "no")
        and rng.random() < persona.p_false_positive
    ):
        value = "yes"
    if persona.p_withhold > 0 and rng.random() < persona.p_withhold:
        return _pad("I'd rather not say.", persona, rng)
    if value is None:
        return _pad("I'm not sure.", persona, rng)
    if persona.p_flip > 0 and rng.random() < persona.p_flip:
        value = _flip(feature, value, rng)
    hedged = persona.p_hedge > 0 and rng.random() < persona.p_hedge
    return _pad(_render(feature, value, hedged), persona, rng)
