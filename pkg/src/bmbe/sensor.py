"""Language layer: tier-1 pattern parsing, verbalisation, bulk intake, optional external client.

The sensor never sees the belief vector, entropy, or EIG scores. Its only
engine-derived input is the three-valued confidence indicator kappa.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Mapping

from .belief import (
    CLARIFICATION,
    UNKNOWN,
    ConfidenceScale,
    EvidenceTriple,
    map_confidence,
)

if TYPE_CHECKING:
    from .kb import Feature, KnowledgeBase

logger = logging.getLogger(__name__)

KAPPA_LEVELS = ("low", "medium", "high")
EXTERNAL_DISABLE_ENV = "BMBE_EXTERNAL_DISABLED"

_NUMBER_RE = re.compile(r"(?<![\w.])(\d+(?:\.\d+)?)(?!\w)(?!\.\d)")


def external_disabled() -> bool:
    """Global airgap switch: truthy env var forces all external calls off."""
    return os.environ.get(EXTERNAL_DISABLE_ENV, "") not in ("", "0", "false")


@dataclass(frozen=True)
class ParseOutcome:
    value: str | float
    confidence_label: str | None
    tier: str  # pattern | external | downgrade

    def is_unknown(self) -> bool:
        return self.value == UNKNOWN

    def is_clarification(self) -> bool:
        return self.value == CLARIFICATION


@dataclass
class ExternalClientConfig:
    endpoint: str = ""
    timeout: float = 10.0
    template_set: str | None = None
    enabled: bool = False


def confidence_indicator(max_posterior: float) -> str:
    """Discretize the engine's top confidence into the only signal the sensor may carry."""
    if not 0.0 <= max_posterior <= 1.0:
        raise ValueError(f"max posterior must be in [0, 1], got {max_posterior}")
    if max_posterior < 0.33:
        return "low"
    if max_posterior < 0.66:
        return "medium"
    return "high"


def canonical_text(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower())


@lru_cache(maxsize=4)
def _default_rules() -> Mapping:
    data = resources.files("bmbe.data").joinpath("pattern_rules.json").read_text()
    return json.loads(data)


def load_pattern_rules(path: str | Path | None = None) -> Mapping:
    if path is None:
        return _default_rules()
    return json.loads(Path(path).read_text())


def template_dir() -> Path:
    return Path(str(resources.files("bmbe.data").joinpath("templates")))


def load_template(template_id: str, template_set: str | Path | None = None) -> str:
    base = Path(template_set) if template_set else template_dir()
    return (base / f"{template_id}.txt").read_text()


def _phrase_re(phrase: str) -> re.Pattern:
    return re.compile(r"(?<!\w)" + re.escape(phrase) + r"(?!\w)")


class PatternSensor:
    """Tier-1 deterministic sensor: total, airgapped, and stateless per call."""

    def __init__(
        self,
        rules: Mapping | None = None,
        scale: ConfidenceScale | None = None,
        tone_prefixes: Mapping[str, str] | None = None,
        clarify_prefix: str = "Sorry, let me ask that another way. ",
    ) -> None:
        self.rules = rules or load_pattern_rules()
        self.scale = scale or ConfidenceScale()
        self.tone_prefixes = dict(tone_prefixes or {})
        self.clarify_prefix = clarify_prefix
        self._compiled = {
            group: [_phrase_re(p) for p in phrases]
            for group, phrases in self.rules.items()
            if not group.startswith("_")
        }

    # -- parsing -------------------------------------------------------------

    def _match(self, text: str, group: str) -> bool:
        return any(rx.search(text) for rx in self._compiled.get(group, ()))

    def _schema_label(self, text: str, feature: "Feature") -> str | None:
        labels = sorted(feature.values, key=len, reverse=True)
        for label in labels:
            if _phrase_re(canonical_text(label)).search(text):
                return label
        return None

    def _tier1(self, utterance: str, feature: "Feature") -> ParseOutcome | None:
        text = canonical_text(utterance)
        if not text:
            return None
        if self._match(text, "unknown"):
            return ParseOutcome(UNKNOWN, "uncertain", "pattern")
        if self._match(text, "clarification"):
            return ParseOutcome(CLARIFICATION, None, "pattern")
        hedged = self._match(text, "hedge_cues")
        label = "uncertain" if hedged else "very_likely"
        if feature.kind == "binary":
            if self._match(text, "hedge_negative"):
                return ParseOutcome("no", "uncertain", "pattern")
            if self._match(text, "hedge_affirmative"):
                return ParseOutcome("yes", "uncertain", "pattern")
            if self._match(text, "negative"):
                return ParseOutcome("no", label, "pattern")
            if self._match(text, "affirmative"):
                return ParseOutcome("yes", label, "pattern")
        if feature.kind == "numeric" and feature.numeric_scale is not None:
            lo, hi, _ = feature.numeric_scale
            for m in _NUMBER_RE.finditer(text):
                reading = float(m.group(1))
                if lo <= reading <= hi:
                    return ParseOutcome(reading, label, "pattern")
        found = self._schema_label(text, feature)
        if found is not None:
            return ParseOutcome(found, label, "pattern")
        return None

    def parse_response(self, utterance: str, feature: "Feature") -> ParseOutcome:
        outcome = self._tier1(utterance, feature)
        if outcome is not None:
            return outcome
        return ParseOutcome(UNKNOWN, "likely", "downgrade")

    # -- verbalisation ---------------------------------------------------------

    def verbalise_question(self, feature: "Feature", kappa: str, clarify: bool = False) -> str:
        if kappa not in KAPPA_LEVELS:
            raise ValueError(f"kappa must be one of {KAPPA_LEVELS}, got {kappa!r}")
        prefix = self.tone_prefixes.get(kappa, "")
        text = f"{prefix}{feature.question_text}"
        if clarify:
            text = f"{self.clarify_prefix}{text}"
        return text

    # -- bulk intake --------------------------------------------------------------

    def bulk_intake(self, narrative: str, kb: "KnowledgeBase") -> list[EvidenceTriple]:
        """Keyword scan: extract features whose canonical name or synonym is mentioned.

        A negation cue within the three tokens before the mention flips a
        binary value to no; unmentioned features are never inferred.
        """
        text = canonical_text(narrative)
        if not text:
            return []
        tokens = text.split()
        starts: list[int] = []
        pos = 0
        for t in tokens:
            starts.append(pos)
            pos += len(t) + 1

        def token_index(char_pos: int) -> int:
            idx = 0
            for i, s in enumerate(starts):
                if s <= char_pos:
                    idx = i
            return idx

        negation = set(self.rules.get("negation_cues", ()))
        conf = map_confidence("likely", self.scale)
        triples: list[EvidenceTriple] = []
        for feature in kb.features:
            names = sorted(
                {canonical_text(feature.name), *(canonical_text(s) for s in feature.synonyms)},
                key=len,
                reverse=True,
            )
            match = None
            for n in names:
                if not n:
                    continue
                match = _phrase_re(n).search(text)
                if match:
                    break
            if match is None:
                continue
            ti = token_index(match.start())
            window_before = tokens[max(0, ti - 3):ti]
            negated = any(t in negation for t in window_before)
            value: str | float | None
            if feature.kind == "binary":
                value = "no" if negated else "yes"
            else:
                end_ti = token_index(match.end() - 1)
                after = " ".join(tokens[end_ti + 1:end_ti + 4])
                value = None
                if feature.kind == "numeric" and feature.numeric_scale is not None:
                    lo, hi, _ = feature.numeric_scale
                    for m in _NUMBER_RE.finditer(after):
                        if lo <= float(m.group(1)) <= hi:
                            value = float(m.group(1))
                            break
                if value is None:
                    for label in sorted(feature.values, key=len, reverse=True):
                        if _phrase_re(canonical_text(label)).search(after):
                            value = label
                            break
                if value is None:
                    continue
            triples.append(EvidenceTriple(feature.id, value, conf, tier="intake"))
        return triples


class ExternalClient:
    """Minimal HTTP client for a completion endpoint: {template_id, slots} -> plain text."""

    def __init__(self, config: ExternalClientConfig) -> None:
        self.config = config

    def complete(self, template_id: str, slots: Mapping) -> str:
        import httpx  # deferred so airgapped runs never import an HTTP stack

        resp = httpx.post(
            self.config.endpoint,
            json={"template_id": template_id, "slots": dict(slots)},
            timeout=self.config.timeout,
        )
        resp.raise_for_status()
        return resp.text


class ExternalSensor(PatternSensor):
    """Three-tier cascade: pattern rules, external extractor, heuristic downgrade.

    Transport failures never abort a session; they fall back to the tier-1
    result and are queued for the orchestrator to record in the trace.
    """

    def __init__(
        self,
        config: ExternalClientConfig,
        rules: Mapping | None = None,
        scale: ConfidenceScale | None = None,
        tone_prefixes: Mapping[str, str] | None = None,
    ) -> None:
        super().__init__(rules=rules, scale=scale, tone_prefixes=tone_prefixes)
        self.config = config
        self.client = ExternalClient(config)
        self.failures: list[str] = []

    def _enabled(self) -> bool:
        return self.config.enabled and not external_disabled()

    def pop_failures(self) -> list[str]:
        out, self.failures = self.failures, []
        return out

    def parse_response(self, utterance: str, feature: "Feature") -> ParseOutcome:
        outcome = self._tier1(utterance, feature)
        if outcome is not None:
            return outcome
        if not self._enabled():
            return ParseOutcome(UNKNOWN, "likely", "downgrade")
        try:
            reply = self.client.complete(
                "parsing",
                {
                    "utterance": utterance,
                    "feature": feature.name,
                    "schema": list(feature.values),
                },
            )
            parsed = self._parse_external_reply(reply, feature)
        except Exception as exc:  # transport or malformed reply: degrade, never abort
            self.failures.append(f"parsing call failed: {exc}")
            return ParseOutcome(UNKNOWN, "likely", "downgrade")
        if parsed is None:
            self.failures.append(f"unparseable extractor reply: {reply!r}")
            return ParseOutcome(UNKNOWN, "likely", "downgrade")
        value, label = parsed
        if value not in (UNKNOWN, CLARIFICATION) and self._match(canonical_text(utterance), "hedge_cues"):
            return ParseOutcome(value, "uncertain", "downgrade")
        return ParseOutcome(value, label, "external")

    def _parse_external_reply(self, reply: str, feature: "Feature"):
        parts = reply.strip().strip('"').split("|")
        if len(parts) != 2:
            return None
        value, label = parts[0].strip(), parts[1].strip()
        if label not in self.scale.labels:
            return None
        if value in (UNKNOWN, CLARIFICATION):
            return value, label
        if feature.kind == "numeric" and feature.numeric_scale is not None:
            try:
                return feature.numeric_reading(value), label
            except ValueError:
                return None
        if value in feature.values:
            return value, label
        return None

    def verbalise_question(self, feature: "Feature", kappa: str, clarify: bool = False) -> str:
        if kappa not in KAPPA_LEVELS:
            raise ValueError(f"kappa must be one of {KAPPA_LEVELS}, got {kappa!r}")
        if not self._enabled():
            return super().verbalise_question(feature, kappa, clarify)
        try:
            return self.client.complete(
                "verbaliser",
                {
                    "feature": feature.name,
                    "schema": list(feature.values),
                    "confidence": kappa,
                    "clarify": clarify,
                },
            ).strip()
        except Exception as exc:
            self.failures.append(f"verbaliser call failed: {exc}")
            return super().verbalise_question(feature, kappa, clarify)

    def bulk_intake(self, narrative: str, kb: "KnowledgeBase") -> list[EvidenceTriple]:
        if not self._enabled():
            return super().bulk_intake(narrative, kb)
        try:
            reply = self.client.complete(
                "bulk_intake",
                {
                    "narrative": narrative,
                    "features": [
                        {"id": f.id, "name": f.name, "values": list(f.values)}
                        for f in kb.features
                    ],
                },
            )
            payload = json.loads(reply)
            triples: list[EvidenceTriple] = []
            for fid, spec in payload.items():
                if fid == "demographics":
                    continue
                feature = kb.feature(fid)  # unknown id raises -> discard whole reply
                value = spec["value"]
                label = spec.get("confidence", "likely")
                if feature.kind == "numeric":
                    value = feature.numeric_reading(value)
                elif value not in feature.values:
                    raise ValueError(f"value {value!r} invalid for {fid}")
                triples.append(
                    EvidenceTriple(fid, value, map_confidence(label, self.scale), tier="intake")
                )
            return triples
        except Exception as exc:
            self.failures.append(f"bulk intake call failed: {exc}")
            return super().bulk_intake(narrative, kb)


def make_sensor(mode: str, config: ExternalClientConfig | None = None, **kwargs) -> PatternSensor:
    """Sensor factory: 'patterns' for the airgapped tier-1 sensor, 'external' for the cascade."""
    if mode == "patterns":
        return PatternSensor(**kwargs)
    if mode == "external":
        return ExternalSensor(config or ExternalClientConfig(), **kwargs)
    raise ValueError(f"unknown sensor mode: {mode!r}")
