"""Knowledge bases: disease and feature schemas, smoothed count tables, priors, analysis."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .belief import Belief, belief_from_probs

logger = logging.getLogger(__name__)

FEATURE_KINDS = ("binary", "categorical", "ordinal", "numeric")
BINARY_VALUES = ("yes", "no")

COUNT_SCALE = 100.0
COUNT_SUM_TOL = 1e-6
DEFAULT_TOP_M = 20


class KbValidationError(ValueError):
    """Schema violation, reported with the offending key path."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


def canonical_name(name: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return re.sub(r"\s+", " ", name.strip().lower())


@dataclass(frozen=True)
class Disease:
    id: str
    name: str
    prior_count: float = 1.0
    # (age_bin, sex) -> unnormalized subgroup mass; None when no demographic tables exist
    demographic_counts: Mapping[tuple[str, str], float] | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"id": self.id, "name": self.name, "prior_count": self.prior_count}
        if self.demographic_counts is not None:
            nested: dict[str, dict[str, float]] = {}
            for (age_bin, sex), c in self.demographic_counts.items():
                nested.setdefault(age_bin, {})[sex] = c
            d["demographic_counts"] = nested
        return d


@dataclass(frozen=True)
class Feature:
    id: str
    name: str
    kind: str
    values: tuple[str, ...]
    question_text: str
    numeric_scale: tuple[float, float, float] | None = None
    synonyms: tuple[str, ...] = ()

    def value_index(self, value: str) -> int:
        try:
            return self.values.index(value)
        except ValueError:
            raise ValueError(
                f"value {value!r} not declared for feature {self.id!r}"
            ) from None

    def grid(self) -> np.ndarray:
        """Grid values as floats, for numeric/ordinal features with numeric labels."""
        return np.array([float(v) for v in self.values])

    def numeric_reading(self, value: str | float) -> float:
        if self.numeric_scale is None:
            raise ValueError(f"feature {self.id!r} has no numeric scale")
        lo, hi, _ = self.numeric_scale
        try:
            reading = float(value)
        except (TypeError, ValueError):
            raise ValueError(
                f"value {value!r} is not a numeric reading for feature {self.id!r}"
            ) from None
        if not lo <= reading <= hi:
            raise ValueError(
                f"reading {reading} outside numeric scale [{lo}, {hi}] of feature {self.id!r}"
            )
        return reading

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "id": self.id,
            "name": self.name,
            "kind": self.kind,
            "values": list(self.values),
            "question_text": self.question_text,
        }
        if self.numeric_scale is not None:
            d["numeric_scale"] = list(self.numeric_scale)
        if self.synonyms:
            d["synonyms"] = list(self.synonyms)
        return d


@dataclass(frozen=True)
class PriorStrategy:
    tag: str = "empirical"  # empirical | uniform | conditional
    demographics: tuple[str, str] | None = None  # (age_bin, sex) for conditional

    def __post_init__(self) -> None:
        if self.tag not in ("empirical", "uniform", "conditional"):
            raise ValueError(f"unknown prior strategy: {self.tag!r}")
        if self.tag == "conditional" and self.demographics is None:
            raise ValueError("conditional prior requires (age_bin, sex) demographics")

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"tag": self.tag}
        if self.demographics is not None:
            d["demographics"] = list(self.demographics)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PriorStrategy":
        demo = d.get("demographics")
        return cls(tag=d.get("tag", "empirical"), demographics=tuple(demo) if demo else None)


@dataclass(frozen=True)
class KbStats:
    per_pair_kl: Mapping[tuple[str, str], float]
    per_feature_variance: Mapping[str, float]
    per_feature_range: Mapping[str, float]

    def to_dict(self) -> dict:
        return {
            "per_pair_kl": {f"{d}|{f}": v for (d, f), v in self.per_pair_kl.items()},
            "per_feature_variance": dict(self.per_feature_variance),
            "per_feature_range": dict(self.per_feature_range),
        }


@dataclass(frozen=True)
class FeatureMatching:
    shared: tuple[tuple[str, str], ...]
    coverage_a_in_b: float
    coverage_b_in_a: float

    def to_dict(self) -> dict:
        return {
            "shared": [list(p) for p in self.shared],
            "coverage_a_in_b": self.coverage_a_in_b,
            "coverage_b_in_a": self.coverage_b_in_a,
        }


class KnowledgeBase:
    """Immutable bundle of diseases, feature schemas, and smoothed likelihood tables.

    Likelihoods follow additive (+1) smoothing of per-pair counts scaled to sum
    to 100; a (disease, feature) pair absent from the count table is
    uninformative and yields the uniform conditional.
    """

    def __init__(
        self,
        version: int,
        diseases: Sequence[Disease],
        features: Sequence[Feature],
        counts: Mapping[tuple[str, str], Mapping[str, float]],
        negated_features: Iterable[str] = (),
        demographics: Mapping | None = None,
    ) -> None:
        self.version = int(version)
        self.diseases = tuple(diseases)
        self.features = tuple(features)
        self.counts = {pair: dict(vals) for pair, vals in counts.items()}
        self.negated_features = frozenset(negated_features)
        self.demographics = dict(demographics) if demographics else None
        self._validate()
        self.disease_order: tuple[str, ...] = tuple(d.id for d in self.diseases)
        self._dindex = {d: i for i, d in enumerate(self.disease_order)}
        self._fmap = {f.id: f for f in self.features}
        self._matrices: dict[str, np.ndarray] = {}
        self._build_matrices()
        self._groups = self._build_value_groups()
        self._hash: str | None = None

    # -- validation ---------------------------------------------------------

    def _validate(self) -> None:
        if len(self.diseases) < 2:
            raise KbValidationError("diseases", f"need K >= 2 diseases, got {len(self.diseases)}")
        if len(self.features) < 1:
            raise KbValidationError("features", "need at least one feature")

        seen: set[str] = set()
        for i, d in enumerate(self.diseases):
            path = f"diseases[{i}]"
            if d.id in seen:
                raise KbValidationError(path, f"duplicate disease id {d.id!r}")
            seen.add(d.id)
            if d.prior_count < 0:
                raise KbValidationError(path, f"prior_count must be >= 0, got {d.prior_count}")
        if not any(d.prior_count > 0 for d in self.diseases):
            raise KbValidationError("diseases", "at least one disease must have prior_count > 0")

        fseen: set[str] = set()
        for i, f in enumerate(self.features):
            path = f"features[{i}]"
            if f.id in fseen:
                raise KbValidationError(path, f"duplicate feature id {f.id!r}")
            fseen.add(f.id)
            if f.kind not in FEATURE_KINDS:
                raise KbValidationError(path, f"unknown kind {f.kind!r}")
            if len(f.values) < 2:
                raise KbValidationError(path, f"need at least 2 values, got {len(f.values)}")
            if len(set(f.values)) != len(f.values):
                raise KbValidationError(path, "value labels must be unique")
            if f.kind == "binary" and tuple(f.values) != BINARY_VALUES:
                raise KbValidationError(path, f"binary values must be {BINARY_VALUES}, got {f.values}")
            if f.kind == "numeric":
                if f.numeric_scale is None:
                    raise KbValidationError(path, "numeric features require numeric_scale")
                try:
                    grid = [float(v) for v in f.values]
                except ValueError:
                    raise KbValidationError(path, "numeric value labels must parse as numbers") from None
                if any(b <= a for a, b in zip(grid, grid[1:])):
                    raise KbValidationError(path, "numeric grid must be strictly increasing")

        disease_ids = seen
        features_by_id = {x.id: x for x in self.features}
        for (d, f), vals in self.counts.items():
            path = f"counts.{d}.{f}"
            if d not in disease_ids:
                raise KbValidationError(path, f"unknown disease id {d!r}")
            feat = features_by_id.get(f)
            if feat is None:
                raise KbValidationError(path, f"unknown feature id {f!r}")
            total = 0.0
            for v, c in vals.items():
                if v not in feat.values:
                    raise KbValidationError(f"{path}.{v}", f"value {v!r} not declared for feature {f!r}")
                if c < 0:
                    raise KbValidationError(f"{path}.{v}", f"count must be >= 0, got {c}")
                total += c
            if abs(total - COUNT_SCALE) > COUNT_SUM_TOL:
                raise KbValidationError(path, f"counts sum to {total:g}, expected {COUNT_SCALE:g}")

        for f in self.negated_features:
            if f not in fseen:
                raise KbValidationError("negated_features", f"unknown feature id {f!r}")

    # -- likelihoods ---------------------------------------------------------

    def _build_matrices(self) -> None:
        for f in self.features:
            nv = len(f.values)
            mat = np.full((len(self.diseases), nv), 1.0 / nv)
            for i, d in enumerate(self.diseases):
                vals = self.counts.get((d.id, f.id))
                if vals is None:
                    continue
                alpha = np.array([vals.get(v, 0.0) + 1.0 for v in f.values])
                mat[i] = alpha / alpha.sum()
            mat.setflags(write=False)
            self._matrices[f.id] = mat

    def _build_value_groups(self) -> list[tuple[tuple[str, ...], np.ndarray]]:
        by_size: dict[int, list[str]] = {}
        for f in self.features:
            by_size.setdefault(len(f.values), []).append(f.id)
        groups = []
        for size in sorted(by_size):
            fids = tuple(by_size[size])
            stack = np.stack([self._matrices[fid] for fid in fids])
            stack.setflags(write=False)
            groups.append((fids, stack))
        return groups

    def value_groups(self) -> list[tuple[tuple[str, ...], np.ndarray]]:
        """Features grouped by value-set size, each with a stacked (F, K, V) likelihood tensor."""
        return self._groups

    @property
    def n_diseases(self) -> int:
        return len(self.diseases)

    @property
    def n_features(self) -> int:
        return len(self.features)

    def feature(self, feature_id: str) -> Feature:
        try:
            return self._fmap[feature_id]
        except KeyError:
            raise ValueError(f"unknown feature id: {feature_id!r}") from None

    def disease(self, disease_id: str) -> Disease:
        try:
            return self.diseases[self._dindex[disease_id]]
        except KeyError:
            raise ValueError(f"unknown disease id: {disease_id!r}") from None

    def likelihood_matrix(self, feature_id: str) -> np.ndarray:
        self.feature(feature_id)
        return self._matrices[feature_id]

    def likelihood_vector(self, feature_id: str, value: str) -> np.ndarray:
        f = self.feature(feature_id)
        return self._matrices[feature_id][:, f.value_index(value)]

    def likelihood(self, disease_id: str, feature_id: str, value: str) -> float:
        """Smoothed P(X_f = v | d); uniform when the (d, f) pair is absent."""
        f = self.feature(feature_id)
        if disease_id not in self._dindex:
            raise ValueError(f"unknown disease id: {disease_id!r}")
        return float(self._matrices[feature_id][self._dindex[disease_id], f.value_index(value)])

    # -- priors ---------------------------------------------------------------

    def prior(self, strategy: PriorStrategy | None = None) -> Belief:
        strategy = strategy or PriorStrategy()
        if strategy.tag == "uniform":
            p = np.ones(self.n_diseases)
        elif strategy.tag == "empirical":
            p = np.array([d.prior_count for d in self.diseases], dtype=float)
        else:  # conditional: +1 smoothed subgroup counts
            missing = [d.id for d in self.diseases if d.demographic_counts is None]
            if missing:
                raise ValueError(
                    f"conditional prior requested but demographic tables absent for {missing}"
                )
            key = strategy.demographics
            p = np.array(
                [d.demographic_counts.get(key, 0.0) + 1.0 for d in self.diseases]
            )
        return belief_from_probs(p, tuple(d.id for d in self.diseases))

    # -- demographics -----------------------------------------------------------

    def age_bin(self, age: int) -> str | None:
        if not self.demographics:
            return None
        for b in self.demographics.get("age_bins", []):
            if b["min"] <= age <= b["max"]:
                return b["id"]
        return None

    # -- derived KBs -------------------------------------------------------------

    def subset(self, disease_ids: Iterable[str]) -> "KnowledgeBase":
        """Restrict to a disease subset (declaration order preserved); priors renormalize lazily."""
        keep = set(disease_ids)
        unknown = keep - set(self.disease_order)
        if unknown:
            raise ValueError(f"unknown disease ids: {sorted(unknown)}")
        diseases = [d for d in self.diseases if d.id in keep]
        counts = {pair: vals for pair, vals in self.counts.items() if pair[0] in keep}
        return KnowledgeBase(
            self.version, diseases, self.features, counts,
            self.negated_features, self.demographics,
        )

    # -- serialization -------------------------------------------------------------

    def to_dict(self) -> dict:
        nested: dict[str, dict[str, dict[str, float]]] = {}
        for (d, f), vals in sorted(self.counts.items()):
            nested.setdefault(d, {})[f] = dict(sorted(vals.items()))
        return {
            "version": self.version,
            "diseases": [d.to_dict() for d in self.diseases],
            "features": [f.to_dict() for f in self.features],
            "counts": nested,
            "negated_features": sorted(self.negated_features),
            **({"demographics": self.demographics} if self.demographics else {}),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @property
    def kb_hash(self) -> str:
        if self._hash is None:
            payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
            self._hash = hashlib.sha256(payload.encode()).hexdigest()[:16]
        return self._hash


def _disease_from_dict(d: Mapping, path: str) -> Disease:
    try:
        demo = d.get("demographic_counts")
        demo_map = None
        if demo is not None:
            demo_map = {
                (age_bin, sex): float(c)
                for age_bin, by_sex in demo.items()
                for sex, c in by_sex.items()
            }
        return Disease(
            id=str(d["id"]),
            name=str(d.get("name", d["id"])),
            prior_count=float(d.get("prior_count", 1.0)),
            demographic_counts=demo_map,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise KbValidationError(path, f"malformed disease entry: {exc}") from exc


def _feature_from_dict(d: Mapping, path: str) -> Feature:
    try:
        scale = d.get("numeric_scale")
        return Feature(
            id=str(d["id"]),
            name=str(d.get("name", d["id"])),
            kind=str(d["kind"]),
            values=tuple(str(v) for v in d["values"]),
            question_text=str(d.get("question_text") or default_question(d.get("name", d["id"]), d["kind"])),
            numeric_scale=tuple(float(x) for x in scale) if scale else None,
            synonyms=tuple(str(s) for s in d.get("synonyms", ())),
        )
    except (KeyError, TypeError) as exc:
        raise KbValidationError(path, f"malformed feature entry: {exc}") from exc


def default_question(name: str, kind: str) -> str:
    if kind == "binary":
        return f"Do you have {name}?"
    if kind in ("ordinal", "numeric"):
        return f"How would you rate your {name}?"
    return f"What best describes your {name}?"


def kb_from_dict(data: Mapping) -> KnowledgeBase:
    diseases = [
        _disease_from_dict(d, f"diseases[{i}]") for i, d in enumerate(data.get("diseases", []))
    ]
    features = [
        _feature_from_dict(f, f"features[{i}]") for i, f in enumerate(data.get("features", []))
    ]
    counts: dict[tuple[str, str], dict[str, float]] = {}
    for d_id, by_feature in data.get("counts", {}).items():
        for f_id, vals in by_feature.items():
            try:
                counts[(d_id, f_id)] = {str(v): float(c) for v, c in vals.items()}
            except (TypeError, ValueError) as exc:
                raise KbValidationError(f"counts.{d_id}.{f_id}", f"malformed counts: {exc}") from exc
    return KnowledgeBase(
        version=data.get("version", 1),
        diseases=diseases,
        features=features,
        counts=counts,
        negated_features=data.get("negated_features", ()),
        demographics=data.get("demographics"),
    )


def load_kb(path: str | Path) -> KnowledgeBase:
    """Load and validate a KB JSON file."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise KbValidationError(str(path), f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise KbValidationError(str(path), "top level must be an object")
    return kb_from_dict(data)


# -- construction from records --------------------------------------------------


@dataclass
class BuildOptions:
    top_m: int = DEFAULT_TOP_M  # multi-choice expansion cutoff
    absent_binary_as_no: bool = True


def _slug(value: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", canonical_name(value)).strip("_") or "value"


def _normalize_record_value(feature: Feature, value: Any) -> str:
    if feature.kind == "binary" and isinstance(value, bool):
        return "yes" if value else "no"
    if feature.kind == "numeric" and isinstance(value, (int, float)):
        for label in feature.values:
            if abs(float(label) - float(value)) < 1e-9:
                return label
        raise ValueError(f"reading {value} not on the grid of feature {feature.id!r}")
    value = str(value)
    if value not in feature.values:
        raise ValueError(f"value {value!r} not declared for feature {feature.id!r}")
    return value


def build_from_records(
    records: Iterable[tuple[str, Mapping[str, Any]]],
    schema: Mapping,
    options: BuildOptions | None = None,
) -> KnowledgeBase:
    """Accumulate per (disease, feature, value) counts from labelled records.

    Multi-choice schema entries are expanded into binary sub-features over the
    top-M values by frequency. Binary features absent from a record count as
    "no" unless listed in the schema's negated-feature exception set. Per-pair
    counts are rescaled to sum to 100 and priors follow record frequency.
    """
    options = options or BuildOptions()
    records = list(records)
    if not records:
        raise ValueError("no records")

    negated = set(schema.get("negated_features", ()))
    standard: list[Feature] = []
    multi: list[Mapping] = []
    for i, fd in enumerate(schema.get("features", [])):
        if fd.get("kind") == "multi_choice":
            multi.append(fd)
        else:
            standard.append(_feature_from_dict(fd, f"schema.features[{i}]"))
    fmap = {f.id: f for f in standard}
    multi_ids = {fd["id"] for fd in multi}

    # Frequency pass for multi-choice expansion.
    freq: dict[str, Counter] = {fd["id"]: Counter() for fd in multi}
    for _, values in records:
        for fid, v in values.items():
            if fid in freq:
                vs = v if isinstance(v, (list, tuple, set)) else [v]
                freq[fid].update(str(x) for x in vs)

    expanded: list[tuple[str, str, Feature]] = []  # (parent_id, raw_value, sub-feature)
    for fd in multi:
        name = fd.get("name", fd["id"])
        ranked = sorted(freq[fd["id"]].items(), key=lambda kv: (-kv[1], kv[0]))
        for raw, _ in ranked[: options.top_m]:
            sub = Feature(
                id=f"{fd['id']}__{_slug(raw)}",
                name=f"{name}: {raw}",
                kind="binary",
                values=BINARY_VALUES,
                question_text=fd.get("question_text") or f"Do you have {name}: {raw}?",
                synonyms=tuple(fd.get("synonyms", ())),
            )
            expanded.append((fd["id"], raw, sub))

    features = standard + [sub for _, _, sub in expanded]
    counts: dict[tuple[str, str], Counter] = {}
    disease_records: Counter = Counter()

    def bump(d: str, f: str, v: str) -> None:
        counts.setdefault((d, f), Counter())[v] += 1

    for idx, (disease_id, values) in enumerate(records):
        for fid in values:
            if fid not in fmap and fid not in multi_ids:
                raise ValueError(f"records[{idx}]: undeclared feature {fid!r}")
        disease_records[disease_id] += 1
        for f in standard:
            if f.id in values:
                bump(disease_id, f.id, _normalize_record_value(f, values[f.id]))
            elif f.kind == "binary" and options.absent_binary_as_no and f.id not in negated:
                bump(disease_id, f.id, "no")
        for parent_id, raw, sub in expanded:
            if parent_id in values:
                vs = values[parent_id]
                vs = vs if isinstance(vs, (list, tuple, set)) else [vs]
                bump(disease_id, sub.id, "yes" if raw in {str(x) for x in vs} else "no")
            elif options.absent_binary_as_no and parent_id not in negated:
                bump(disease_id, sub.id, "no")

    scaled: dict[tuple[str, str], dict[str, float]] = {}
    for pair, ctr in counts.items():
        total = sum(ctr.values())
        scaled[pair] = {v: c * COUNT_SCALE / total for v, c in ctr.items()}

    declared_names = {d["id"]: d.get("name", d["id"]) for d in schema.get("diseases", [])}
    diseases = [
        Disease(id=d, name=declared_names.get(d, d), prior_count=float(n))
        for d, n in sorted(disease_records.items())
    ]
    return KnowledgeBase(
        version=1,
        diseases=diseases,
        features=features,
        counts=scaled,
        negated_features=negated,
        demographics=schema.get("demographics"),
    )


# -- import of elicited probability tables ----------------------------------------


def _grid_sort_key(values: Iterable[str]):
    vals = list(values)
    try:
        return sorted(vals, key=float)
    except ValueError:
        return sorted(vals)


def import_elicited(source: str | Path | Mapping) -> KnowledgeBase:
    """Build a KB from elicited probability tables.

    Binary entries carry a single prob_yes; grid entries a distribution that
    must sum to 1. Entries failing validation are excluded and reported via the
    module logger; priors are uniform.
    """
    if isinstance(source, (str, Path)):
        try:
            data = json.loads(Path(source).read_text())
        except json.JSONDecodeError as exc:
            raise KbValidationError(str(source), f"not valid JSON: {exc}") from exc
    else:
        data = source
    if not isinstance(data, Mapping):
        raise KbValidationError("<elicited>", "top level must be an object")

    # First pass: decide each feature's shape and collect the value grid.
    feature_shape: dict[str, str] = {}
    grids: dict[str, set[str]] = {}
    order: list[str] = []
    disease_order: list[str] = []
    for d_id, by_feature in data.items():
        disease_order.append(str(d_id))
        for f_id, spec in by_feature.items():
            if f_id not in feature_shape:
                order.append(f_id)
                feature_shape[f_id] = "grid" if "distribution" in spec else "binary"
            if "distribution" in spec:
                feature_shape[f_id] = "grid"
                grids.setdefault(f_id, set()).update(str(v) for v in spec["distribution"])

    counts: dict[tuple[str, str], dict[str, float]] = {}
    kept_diseases: set[str] = set()
    kept_features: set[str] = set()
    for d_id, by_feature in data.items():
        for f_id, spec in by_feature.items():
            shape = feature_shape[f_id]
            if shape == "binary":
                p = spec.get("prob_yes")
                if p is None or not 0.0 <= float(p) <= 1.0:
                    logger.warning("excluding (%s, %s): prob_yes %r out of [0, 1]", d_id, f_id, p)
                    continue
                p = float(p)
                counts[(d_id, f_id)] = {"yes": p * COUNT_SCALE, "no": (1.0 - p) * COUNT_SCALE}
            else:
                dist = spec.get("distribution")
                if dist is None:
                    logger.warning("excluding (%s, %s): expected a distribution", d_id, f_id)
                    continue
                probs = {str(v): float(p) for v, p in dist.items()}
                total = sum(probs.values())
                if any(p < 0 for p in probs.values()) or abs(total - 1.0) > 1e-6:
                    logger.warning(
                        "excluding (%s, %s): distribution sums to %g, must sum to 1", d_id, f_id, total
                    )
                    continue
                counts[(d_id, f_id)] = {v: p * COUNT_SCALE / total for v, p in probs.items()}
            kept_diseases.add(d_id)
            kept_features.add(f_id)

    kept_feature_list = [f for f in order if f in kept_features]
    features = []
    for f_id in kept_feature_list:
        if feature_shape[f_id] == "binary":
            features.append(
                Feature(f_id, f_id, "binary", BINARY_VALUES, default_question(f_id, "binary"))
            )
        else:
            grid = tuple(_grid_sort_key(grids[f_id]))
            if len(grid) < 2:
                logger.warning("excluding feature %s: grid has fewer than 2 values", f_id)
                counts = {k: v for k, v in counts.items() if k[1] != f_id}
                continue
            features.append(
                Feature(f_id, f_id, "ordinal", grid, default_question(f_id, "ordinal"))
            )
    feature_ids = {f.id for f in features}
    counts = {k: v for k, v in counts.items() if k[1] in feature_ids}
    kept_diseases = {d for d, _ in counts}

    diseases = [Disease(d, d, prior_count=1.0) for d in disease_order if d in kept_diseases]
    if len(diseases) < 2 or not features:
        raise ValueError("empty KB: all elicited entries were invalid or too few diseases remain")
    return KnowledgeBase(1, diseases, features, counts)


# -- analysis --------------------------------------------------------------------


def kb_stats(kb: KnowledgeBase) -> KbStats:
    """Per-pair KL from uniform (bits) plus cross-disease variance/range of P(yes|d)."""
    per_pair: dict[tuple[str, str], float] = {}
    for (d, f) in kb.counts:
        feat = kb.feature(f)
        p = kb._matrices[f][kb._dindex[d]]
        kl = float((p * np.log2(p * len(feat.values))).sum())
        per_pair[(d, f)] = max(0.0, kl)
    variance: dict[str, float] = {}
    vrange: dict[str, float] = {}
    for f in kb.features:
        if f.kind != "binary":
            continue
        p_yes = kb._matrices[f.id][:, 0]
        variance[f.id] = float(np.var(p_yes))
        vrange[f.id] = float(p_yes.max() - p_yes.min())
    return KbStats(per_pair, variance, vrange)


def match_features(kb_a: KnowledgeBase, kb_b: KnowledgeBase) -> FeatureMatching:
    """Match features across two KBs by canonical name and identical kind."""
    def name_map(kb: KnowledgeBase) -> dict[str, Feature]:
        out: dict[str, Feature] = {}
        for f in kb.features:
            key = canonical_name(f.name)
            if key in out:
                logger.debug("duplicate canonical name %r in KB; keeping first", key)
                continue
            out[key] = f
        return out

    a_map, b_map = name_map(kb_a), name_map(kb_b)
    shared = tuple(
        (a_map[k].id, b_map[k].id)
        for k in (canonical_name(f.name) for f in kb_a.features)
        if k in a_map and k in b_map and a_map[k].kind == b_map[k].kind
    )
    # a feature may appear once; dedupe while preserving order
    seen: set[tuple[str, str]] = set()
    unique = tuple(p for p in shared if not (p in seen or seen.add(p)))
    return FeatureMatching(
        shared=unique,
        coverage_a_in_b=len(unique) / kb_a.n_features,
        coverage_b_in_a=len(unique) / kb_b.n_features,
    )
