"""Diagnostic session orchestration: intake, question loop, stopping, audit trace."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .belief import (
    CLARIFICATION,
    UNKNOWN,
    Belief,
    ConfidenceScale,
    EvidenceTriple,
    entropy,
    map_confidence,
    top_k,
    update_belief,
)
from .kb import KnowledgeBase, PriorStrategy
from .patients import PatientProfile, Persona, respond
from .policy import PolicyConfig, select_question_scored
from .sensor import PatternSensor, confidence_indicator

logger = logging.getLogger(__name__)

OPENING_PROMPT = "What brings you in today? Please describe your symptoms."

TOP5 = 5


@dataclass(frozen=True)
class SessionConfig:
    tau: float = 0.9
    t_min: int = 12
    t_max: int = 20
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    prior_strategy: PriorStrategy = field(default_factory=PriorStrategy)
    confidence_scale: ConfidenceScale = field(default_factory=ConfidenceScale)
    numeric_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if not 0 <= self.t_min <= self.t_max:
            raise ValueError(
                f"need 0 <= t_min <= t_max, got t_min={self.t_min}, t_max={self.t_max}"
            )
        if self.numeric_sigma <= 0:
            raise ValueError("numeric_sigma must be positive")

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "t_min": self.t_min,
            "t_max": self.t_max,
            "policy": self.policy.to_dict(),
            "prior_strategy": self.prior_strategy.to_dict(),
            "confidence_scale": self.confidence_scale.to_dict(),
            "numeric_sigma": self.numeric_sigma,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SessionConfig":
        return cls(
            tau=float(d.get("tau", 0.9)),
            t_min=int(d.get("t_min", 12)),
            t_max=int(d.get("t_max", 20)),
            policy=PolicyConfig.from_dict(d.get("policy", {})),
            prior_strategy=PriorStrategy.from_dict(d.get("prior_strategy", {})),
            confidence_scale=ConfidenceScale(dict(d["confidence_scale"]))
            if "confidence_scale" in d
            else ConfidenceScale(),
            numeric_sigma=float(d.get("numeric_sigma", 1.0)),
            seed=int(d.get("seed", 0)),
        )


@dataclass
class TurnRecord:
    turn: int
    asked_feature: str
    eig_value: float
    question_text: str
    raw_answer: str
    parsed_value: str | float | None
    parsed_confidence: float | None
    parsed_tier: str | None
    update_applied: bool
    posterior_top5: list[tuple[str, float]]
    entropy_bits: float
    max_posterior: float
    reask_count: int
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {
            "turn": self.turn,
            "asked_feature": self.asked_feature,
            "eig_value": self.eig_value,
            "question_text": self.question_text,
            "raw_answer": self.raw_answer,
            "parsed": {
                "value": self.parsed_value,
                "confidence": self.parsed_confidence,
                "tier": self.parsed_tier,
            },
            "update_applied": self.update_applied,
            "posterior_top5": [[d_, p] for d_, p in self.posterior_top5],
            "entropy_bits": self.entropy_bits,
            "max_posterior": self.max_posterior,
            "reask_count": self.reask_count,
        }
        if self.notes:
            d["notes"] = list(self.notes)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TurnRecord":
        parsed = d.get("parsed", {})
        return cls(
            turn=int(d["turn"]),
            asked_feature=d["asked_feature"],
            eig_value=float(d["eig_value"]),
            question_text=d["question_text"],
            raw_answer=d["raw_answer"],
            parsed_value=parsed.get("value"),
            parsed_confidence=parsed.get("confidence"),
            parsed_tier=parsed.get("tier"),
            update_applied=bool(d["update_applied"]),
            posterior_top5=[(x[0], float(x[1])) for x in d["posterior_top5"]],
            entropy_bits=float(d["entropy_bits"]),
            max_posterior=float(d["max_posterior"]),
            reask_count=int(d["reask_count"]),
            notes=tuple(d.get("notes", ())),
        )


@dataclass
class SessionResult:
    outcome: str  # committed | abstained
    committed_disease: str | None
    final_belief_top5: list[tuple[str, float]]
    final_ranking: list[tuple[str, float]]
    turns_used: int
    intake_triples: list[EvidenceTriple]
    trace: list[TurnRecord]
    stop_reason: str  # threshold | budget_abstain
    max_posterior: float
    incomplete: bool = False

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "committed_disease": self.committed_disease,
            "final_belief_top5": [[d, p] for d, p in self.final_belief_top5],
            "final_ranking": [[d, p] for d, p in self.final_ranking],
            "turns_used": self.turns_used,
            "intake_triples": [t.to_dict() for t in self.intake_triples],
            "trace": [r.to_dict() for r in self.trace],
            "stop_reason": self.stop_reason,
            "max_posterior": self.max_posterior,
            "incomplete": self.incomplete,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SessionResult":
        return cls(
            outcome=d["outcome"],
            committed_disease=d.get("committed_disease"),
            final_belief_top5=[(x[0], float(x[1])) for x in d["final_belief_top5"]],
            final_ranking=[(x[0], float(x[1])) for x in d["final_ranking"]],
            turns_used=int(d["turns_used"]),
            intake_triples=[EvidenceTriple.from_dict(t) for t in d["intake_triples"]],
            trace=[TurnRecord.from_dict(r) for r in d["trace"]],
            stop_reason=d["stop_reason"],
            max_posterior=float(d["max_posterior"]),
            incomplete=bool(d.get("incomplete", False)),
        )


def decide(
    belief: Belief, cfg: SessionConfig, t: int, exhausted: bool
) -> tuple[str, str | None]:
    """Stopping rule in strict priority order: warm-up, threshold commit, forced decision.

    Warm-up is waived only when continuing is impossible (budget or features
    exhausted); abstention happens only then, and only below tau.
    """
    if t < cfg.t_min and not exhausted:
        return "continue", None
    best_id, best_p = top_k(belief, 1)[0]
    if best_p >= cfg.tau and (t >= cfg.t_min or exhausted):
        return "commit", best_id
    if exhausted:
        return "abstain", None
    return "continue", None


class Responder(Protocol):
    def intake(self) -> str | list[EvidenceTriple]: ...

    def answer(self, feature, reask: bool) -> str | EvidenceTriple: ...


class OracleResponder:
    """Ground-truth responder: exact finding values at full confidence, text bypassed."""

    def __init__(self, profile: PatientProfile) -> None:
        self.profile = profile

    def intake(self) -> list[EvidenceTriple]:
        return [
            EvidenceTriple(fid, self.profile.findings[fid], 1.0, tier="oracle")
            for fid in self.profile.chief_features
        ]

    def answer(self, feature, reask: bool = False) -> EvidenceTriple:
        value = self.profile.findings.get(feature.id, UNKNOWN)
        return EvidenceTriple(feature.id, value, 1.0, tier="oracle")


def oracle_responder(profile: PatientProfile) -> OracleResponder:
    return OracleResponder(profile)


class PersonaResponder:
    """Free-text responder driven by the persona perturbation policy."""

    def __init__(self, profile: PatientProfile, persona: Persona, seed: int) -> None:
        self.profile = profile
        self.persona = persona
        self.rng = np.random.default_rng(seed)

    def intake(self) -> str:
        return self.profile.chief_complaint

    def answer(self, feature, reask: bool = False) -> str:
        return respond(self.profile, self.persona, feature, self.rng)


class ScriptedResponder:
    """Test responder with per-feature scripted utterances or triples."""

    def __init__(
        self,
        script: Mapping[str, str | EvidenceTriple],
        intake_text: str = "",
        default: str = "I'm not sure.",
    ) -> None:
        self.script = dict(script)
        self.intake_text = intake_text
        self.default = default

    def intake(self):
        return self.intake_text

    def answer(self, feature, reask: bool = False):
        return self.script.get(feature.id, self.default)


class Session:
    """One diagnostic session, advanced turn by turn.

    States: intake -> asking -> committed | abstained. All state transitions
    are deterministic given the KB, config, and the answers supplied.
    """

    def __init__(
        self,
        kb: KnowledgeBase,
        sensor: PatternSensor,
        cfg: SessionConfig,
        session_id: str | None = None,
        profile_id: str | None = None,
    ) -> None:
        self.kb = kb
        self.sensor = sensor
        self.cfg = cfg
        self.profile_id = profile_id
        self.session_id = session_id or derive_session_id(kb.kb_hash, profile_id or "live", cfg.seed)
        self.belief = kb.prior(cfg.prior_strategy)
        self.asked: set[str] = set()
        self.trace: list[TurnRecord] = []
        self.intake_triples: list[EvidenceTriple] = []
        self.intake_narrative: str | None = None
        self.turn = 0
        self.answers_accepted = 0  # every accepted submission, including intake and re-asks
        self.state = "intake"
        self.stop_reason: str | None = None
        self.committed_disease: str | None = None
        self._pending: tuple | None = None  # (feature, question, score, reask_count)

    # -- lifecycle -------------------------------------------------------------

    def opening_prompt(self) -> str:
        return OPENING_PROMPT

    def submit_intake(self, intake: str | Iterable[EvidenceTriple]) -> None:
        if self.state != "intake":
            raise RuntimeError(f"intake already consumed (state={self.state})")
        if isinstance(intake, str):
            self.intake_narrative = intake
            triples = self.sensor.bulk_intake(intake, self.kb)
        else:
            triples = list(intake)
        for t in triples:
            if t.value in (UNKNOWN, CLARIFICATION):
                continue
            self.belief = update_belief(
                self.belief, self.kb, t, numeric_sigma=self.cfg.numeric_sigma
            )
            self.intake_triples.append(t)
            self.asked.add(t.feature_id)
        self.answers_accepted += 1
        self.state = "asking"
        self._advance()

    def pending_reask(self) -> bool:
        return bool(self._pending and self._pending[3] > 0)

    def current_question(self):
        if self.state != "asking" or self._pending is None:
            raise RuntimeError(f"no question pending (state={self.state})")
        feature, question, _, _ = self._pending
        return feature, question

    def submit_answer(self, answer: str | EvidenceTriple) -> str:
        """Consume one answer; returns the session state afterwards ('asking' may mean a re-ask)."""
        if self.state != "asking" or self._pending is None:
            raise RuntimeError(f"not awaiting an answer (state={self.state})")
        feature, question, score, reask_count = self._pending
        notes: list[str] = []
        if isinstance(answer, EvidenceTriple):
            if answer.feature_id != feature.id:
                raise ValueError(
                    f"answer is for feature {answer.feature_id!r}, expected {feature.id!r}"
                )
            raw = str(answer.value)
            value, conf, tier = answer.value, answer.confidence, answer.tier
        else:
            raw = answer
            outcome = self.sensor.parse_response(answer, feature)
            value = outcome.value
            tier = outcome.tier
            conf = (
                map_confidence(outcome.confidence_label, self.cfg.confidence_scale)
                if outcome.confidence_label
                else None
            )
        notes.extend(getattr(self.sensor, "pop_failures", list)())
        self.answers_accepted += 1

        if value in (UNKNOWN, CLARIFICATION) and reask_count == 0:
            clarified = self.sensor.verbalise_question(feature, self._kappa(), clarify=True)
            self._pending = (feature, clarified, score, 1)
            return "asking"

        turn_no = self.turn + 1
        applied = False
        if value not in (UNKNOWN, CLARIFICATION):
            triple = EvidenceTriple(feature.id, value, conf, tier=tier, turn=turn_no)
            try:
                self.belief = update_belief(
                    self.belief, self.kb, triple, numeric_sigma=self.cfg.numeric_sigma
                )
                applied = True
            except ValueError as exc:
                notes.append(f"update rejected: {exc}")
        self.turn = turn_no
        self.asked.add(feature.id)
        self.trace.append(
            TurnRecord(
                turn=turn_no,
                asked_feature=feature.id,
                eig_value=score,
                question_text=question,
                raw_answer=raw,
                parsed_value=value if applied else UNKNOWN,
                parsed_confidence=conf if applied else None,
                parsed_tier=tier,
                update_applied=applied,
                posterior_top5=top_k(self.belief, min(TOP5, self.kb.n_diseases)),
                entropy_bits=entropy(self.belief),
                max_posterior=self.belief.max_posterior(),
                reask_count=reask_count,
                notes=tuple(notes),
            )
        )
        self._pending = None
        self._advance()
        return self.state

    # -- internals -----------------------------------------------------------------

    def _kappa(self) -> str:
        return confidence_indicator(self.belief.max_posterior())

    def _has_unasked(self) -> bool:
        return len(self.asked) < self.kb.n_features

    def _advance(self) -> None:
        exhausted = self.turn >= self.cfg.t_max or not self._has_unasked()
        if self.turn == 0 and not exhausted:
            self._ask_next()  # the warm-up loop always runs before any stop check
            return
        verdict, disease = decide(self.belief, self.cfg, self.turn, exhausted)
        if verdict == "continue":
            self._ask_next()
        elif verdict == "commit":
            self.state = "committed"
            self.committed_disease = disease
            self.stop_reason = "threshold"
        else:
            self.state = "abstained"
            self.stop_reason = "budget_abstain"

    def _ask_next(self) -> None:
        fid, score = select_question_scored(self.belief, self.kb, self.asked, self.cfg.policy)
        feature = self.kb.feature(fid)
        question = self.sensor.verbalise_question(feature, self._kappa())
        self._pending = (feature, question, score, 0)
        self.state = "asking"

    # -- results -----------------------------------------------------------------

    def result(self, incomplete: bool = False) -> SessionResult:
        ranking = top_k(self.belief, self.kb.n_diseases)
        outcome = "committed" if self.state == "committed" else "abstained"
        stop = self.stop_reason or "budget_abstain"
        return SessionResult(
            outcome=outcome,
            committed_disease=self.committed_disease,
            final_belief_top5=ranking[:TOP5],
            final_ranking=ranking,
            turns_used=self.turn,
            intake_triples=list(self.intake_triples),
            trace=list(self.trace),
            stop_reason=stop,
            max_posterior=self.belief.max_posterior(),
            incomplete=incomplete,
        )

    def header(self) -> dict:
        return {
            "session_id": self.session_id,
            "config": self.cfg.to_dict(),
            "prior_strategy": self.cfg.prior_strategy.to_dict(),
            "kb_hash": self.kb.kb_hash,
            "profile_id": self.profile_id,
            "intake_narrative": self.intake_narrative,
            "intake_triples": [t.to_dict() for t in self.intake_triples],
        }


def derive_session_id(kb_hash: str, profile_id: str, seed: int) -> str:
    return hashlib.sha256(f"{kb_hash}:{profile_id}:{seed}".encode()).hexdigest()[:16]


def run_session(
    kb: KnowledgeBase,
    sensor: PatternSensor,
    responder: Responder,
    cfg: SessionConfig,
    profile_id: str | None = None,
) -> SessionResult:
    """Drive a full session against a responder; errors yield a partial trace flagged incomplete."""
    session = Session(kb, sensor, cfg, profile_id=profile_id)
    try:
        session.submit_intake(responder.intake())
        while session.state == "asking":
            feature, _ = session.current_question()
            answer = responder.answer(feature, reask=session.pending_reask())
            session.submit_answer(answer)
    except Exception:
        logger.exception("session %s aborted; returning partial trace", session.session_id)
        return session.result(incomplete=True)
    return session.result()


# -- trace serialization -----------------------------------------------------------


def trace_lines(result: SessionResult, header: Mapping) -> list[str]:
    """Header line plus one line per turn record, as canonical JSON."""
    lines = [json.dumps(dict(header), sort_keys=True)]
    lines.extend(json.dumps(r.to_dict(), sort_keys=True) for r in result.trace)
    return lines


def write_trace(path: str | Path, result: SessionResult, header: Mapping) -> None:
    Path(path).write_text("\n".join(trace_lines(result, header)) + "\n")


def read_trace(path: str | Path) -> tuple[dict, list[TurnRecord]]:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    records = [TurnRecord.from_dict(json.loads(ln)) for ln in lines[1:]]
    return header, records


def replay_posteriors(
    kb: KnowledgeBase, header: Mapping, records: Sequence[TurnRecord]
) -> list[list[tuple[str, float]]]:
    """Recompute each turn's top-5 posterior from the recorded prior and parsed triples."""
    cfg = SessionConfig.from_dict(header["config"])
    belief = kb.prior(cfg.prior_strategy)
    for t in header.get("intake_triples", ()):
        belief = update_belief(
            belief, kb, EvidenceTriple.from_dict(t), numeric_sigma=cfg.numeric_sigma
        )
    out = []
    for rec in records:
        if rec.update_applied:
            triple = EvidenceTriple(
                rec.asked_feature, rec.parsed_value, rec.parsed_confidence,
                tier=rec.parsed_tier, turn=rec.turn,
            )
            belief = update_belief(belief, kb, triple, numeric_sigma=cfg.numeric_sigma)
        out.append(top_k(belief, min(TOP5, kb.n_diseases)))
    return out
