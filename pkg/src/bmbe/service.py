"""HTTP service: live diagnostic sessions, KB registry, traces, and saved run artifacts.

Sessions persist as JSONL event logs keyed by session id; the on-disk log is
the source of truth and a restarted service replays it to the identical state.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path
from typing import Any, Mapping

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import FileResponse
from pydantic import BaseModel, Field

from .belief import EvidenceTriple, map_confidence
from .kb import KnowledgeBase, kb_from_dict
from .patients import PERSONAS, PatientProfile, derive_seed
from .sensor import PatternSensor
from .session import OracleResponder, PersonaResponder, Session, SessionConfig

logger = logging.getLogger(__name__)

TOKEN_ENV = "BMBE_TOKEN"

# keys that must never appear in a patient-audience payload
ENGINE_FIELDS = ("posterior", "entropy", "eig", "belief", "max_posterior", "log_probs")


class StructuredAnswer(BaseModel):
    value: str | float
    confidence_label: str = "very_likely"


class AnswerBody(BaseModel):
    text: str | None = None
    structured: StructuredAnswer | None = None
    nonce: int | None = Field(
        default=None,
        description="Echo of the handle's nonce; a stale value gets a 409 (idempotent retries).",
    )


class CreateSessionBody(BaseModel):
    kb_id: str
    config: dict = Field(default_factory=dict)
    mode: str = "human_patient"  # human_patient | simulated
    profile: dict | None = None
    persona: str = "plain"


class RegisterKbBody(BaseModel):
    kb_id: str | None = None
    kb: dict


class LiveSession:
    """In-memory session plus its append-only event log."""

    def __init__(self, session: Session, path: Path, mode: str) -> None:
        self.session = session
        self.path = path
        self.mode = mode
        self.lock = threading.Lock()

    def append(self, event: Mapping[str, Any]) -> None:
        with self.path.open("a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def log_turn_records(self, already: int) -> None:
        for rec in self.session.trace[already:]:
            self.append({"type": "turn", "record": rec.to_dict()})


def _handle(live: LiveSession) -> dict:
    session = live.session
    state = session.state
    if state == "intake":
        state = "awaiting_answer"
        question: dict | None = {
            "text": session.opening_prompt(),
            "kind": "free_text",
            "values": [],
            "reask": False,
        }
    elif state == "asking":
        state = "awaiting_answer"
        feature, text = session.current_question()
        question = {
            "text": text,
            "kind": feature.kind,
            "values": list(feature.values),
            "numeric_scale": list(feature.numeric_scale) if feature.numeric_scale else None,
            "reask": session.pending_reask(),
        }
    else:
        question = None
    handle = {
        "session_id": session.session_id,
        "state": state,
        "turn": session.turn,
        "nonce": session.answers_accepted,
        "current_question": question,
    }
    if state in ("committed", "abstained"):
        result = session.result()
        outcome: dict[str, Any] = {"state": state, "stop_reason": result.stop_reason}
        if state == "committed":
            disease = session.kb.disease(session.committed_disease)
            band = ("high" if result.max_posterior >= 0.66
                    else "medium" if result.max_posterior >= 0.33 else "low")
            outcome["diagnosis"] = disease.name
            outcome["confidence_band"] = band
        else:
            outcome["message"] = "Referred for further evaluation."
        handle["outcome"] = outcome
    return handle


def create_app(
    store_dir: str | Path,
    kbs: Mapping[str, KnowledgeBase] | None = None,
    runs_dir: str | Path | None = None,
    console_dir: str | Path | None = None,
    token: str | None = None,
) -> FastAPI:
    store = Path(store_dir)
    store.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="diagnostic dialogue service")
    registry: dict[str, KnowledgeBase] = dict(kbs or {})
    sessions: dict[str, LiveSession] = {}
    sessions_lock = threading.Lock()
    bearer = token or os.environ.get(TOKEN_ENV)

    def check_auth(request: Request) -> None:
        if not bearer:
            return
        supplied = request.headers.get("authorization", "")
        if supplied != f"Bearer {bearer}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    auth = Depends(check_auth)

    # -- persistence ---------------------------------------------------------

    def _session_path(session_id: str) -> Path:
        return store / f"{session_id}.jsonl"

    def _restore(session_id: str) -> LiveSession:
        path = _session_path(session_id)
        if not path.exists():
            raise HTTPException(status_code=404, detail="unknown session")
        lines = [json.loads(ln) for ln in path.read_text().splitlines() if ln.strip()]
        header = lines[0]
        kb = registry.get(header["kb_id"])
        if kb is None:
            raise HTTPException(status_code=409, detail=f"KB {header['kb_id']!r} not registered")
        cfg = SessionConfig.from_dict(header["config"])
        session = Session(kb, PatternSensor(), cfg,
                          session_id=session_id, profile_id=header.get("profile_id"))
        live = LiveSession(session, path, header.get("mode", "human_patient"))
        for event in lines[1:]:
            if event["type"] == "intake":
                if event.get("narrative") is not None:
                    session.submit_intake(event["narrative"])
                else:
                    session.submit_intake(
                        [EvidenceTriple.from_dict(t) for t in event.get("triples", ())]
                    )
            elif event["type"] == "answer":
                _apply_answer(session, AnswerBody(**event["payload"]))
            # "turn" events are derived bookkeeping; replaying inputs recreates them
        return live

    def _get_live(session_id: str) -> LiveSession:
        with sessions_lock:
            live = sessions.get(session_id)
            if live is None:
                live = _restore(session_id)
                sessions[session_id] = live
            return live

    def _apply_answer(session: Session, body: AnswerBody) -> None:
        if session.state == "intake":
            if body.text is None:
                raise HTTPException(status_code=422, detail="intake requires free text")
            session.submit_intake(body.text)
            return
        feature, _ = session.current_question()
        if body.structured is not None:
            conf = map_confidence(body.structured.confidence_label, session.cfg.confidence_scale)
            session.submit_answer(
                EvidenceTriple(feature.id, body.structured.value, conf, tier="oracle")
            )
        elif body.text is not None:
            session.submit_answer(body.text)
        else:
            raise HTTPException(status_code=422, detail="answer requires text or structured value")

    # -- endpoints -----------------------------------------------------------------

    @app.post("/kbs", dependencies=[auth])
    def register_kb(body: RegisterKbBody):
        try:
            kb = kb_from_dict(body.kb)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        kb_id = body.kb_id or kb.kb_hash
        registry[kb_id] = kb
        return {"kb_id": kb_id, "kb_hash": kb.kb_hash, "k": kb.n_diseases, "n": kb.n_features}

    @app.get("/kbs/{kb_id}/stats", dependencies=[auth])
    def kb_stats_endpoint(kb_id: str):
        from .kb import kb_stats

        kb = registry.get(kb_id)
        if kb is None:
            raise HTTPException(status_code=404, detail="unknown KB")
        return kb_stats(kb).to_dict()

    @app.post("/sessions", dependencies=[auth])
    def create_session(body: CreateSessionBody):
        kb = registry.get(body.kb_id)
        if kb is None:
            raise HTTPException(status_code=404, detail="unknown KB")
        try:
            cfg = SessionConfig.from_dict(body.config)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if body.mode == "simulated":
            if body.profile is None:
                raise HTTPException(status_code=422, detail="simulated mode requires a profile")
            if body.persona not in PERSONAS:
                raise HTTPException(status_code=422, detail=f"unknown persona {body.persona!r}")
            profile = PatientProfile.from_dict(body.profile)
            session = Session(kb, PatternSensor(), cfg, profile_id=profile.id)
            live = LiveSession(session, _session_path(session.session_id), body.mode)
            live.append({**session.header(), "kb_id": body.kb_id, "mode": body.mode})
            if body.persona == "plain" and not profile.chief_complaint.strip():
                responder = OracleResponder(profile)
            else:
                responder = PersonaResponder(
                    profile, PERSONAS[body.persona], derive_seed(cfg.seed, "svc", profile.id)
                )
            intake = responder.intake()
            session.submit_intake(intake)
            live.append({"type": "intake",
                         "narrative": intake if isinstance(intake, str) else None,
                         "triples": None if isinstance(intake, str)
                         else [t.to_dict() for t in intake]})
            while session.state == "asking":
                feature, _ = session.current_question()
                answer = responder.answer(feature, reask=session.pending_reask())
                if isinstance(answer, EvidenceTriple):
                    body_evt = {"structured": {"value": answer.value,
                                               "confidence_label": "very_likely"}}
                    session.submit_answer(answer)
                else:
                    body_evt = {"text": answer}
                    session.submit_answer(answer)
                live.append({"type": "answer", "payload": body_evt})
            live.log_turn_records(0)
            with sessions_lock:
                sessions[session.session_id] = live
            return _handle(live)
        if body.mode != "human_patient":
            raise HTTPException(status_code=422, detail=f"unknown mode {body.mode!r}")
        session = Session(kb, PatternSensor(), cfg)
        live = LiveSession(session, _session_path(session.session_id), body.mode)
        live.append({**session.header(), "kb_id": body.kb_id, "mode": body.mode})
        with sessions_lock:
            sessions[session.session_id] = live
        return _handle(live)

    @app.get("/sessions/{session_id}", dependencies=[auth])
    def get_session(session_id: str):
        return _handle(_get_live(session_id))

    @app.post("/sessions/{session_id}/answer", dependencies=[auth])
    def post_answer(session_id: str, body: AnswerBody):
        live = _get_live(session_id)
        with live.lock:
            session = live.session
            if session.state in ("committed", "abstained"):
                raise HTTPException(status_code=409, detail="session already terminal")
            if body.nonce is not None and body.nonce != session.answers_accepted:
                raise HTTPException(
                    status_code=409,
                    detail=f"stale nonce {body.nonce} (current {session.answers_accepted})",
                )
            already = len(session.trace)
            payload = body.model_dump(exclude_none=True)
            was_intake = session.state == "intake"
            _apply_answer(session, body)
            if was_intake:
                live.append({"type": "intake", "narrative": payload.get("text"), "triples": None})
            else:
                live.append({"type": "answer", "payload": payload})
            live.log_turn_records(already)
            return _handle(live)

    @app.get("/sessions/{session_id}/trace", dependencies=[auth])
    def get_trace(session_id: str, audience: str = Query("clinician")):
        live = _get_live(session_id)
        session = live.session
        if audience == "clinician":
            result = session.result()
            return {
                "header": {**session.header(), "mode": live.mode},
                "records": [r.to_dict() for r in session.trace],
                "state": session.state,
                "stop_reason": session.stop_reason,
                "tau": session.cfg.tau,
                "final_ranking": [[d, p] for d, p in result.final_ranking],
            }
        if audience == "patient":
            return {
                "records": [
                    {
                        "turn": r.turn,
                        "question_text": r.question_text,
                        "raw_answer": r.raw_answer,
                        "reask_count": r.reask_count,
                    }
                    for r in session.trace
                ],
                "state": session.state,
            }
        raise HTTPException(status_code=422, detail="audience must be patient or clinician")

    @app.get("/runs/{run_id}/metrics.csv", dependencies=[auth])
    def run_metrics(run_id: str):
        if runs_dir is None:
            raise HTTPException(status_code=404, detail="no runs directory configured")
        path = Path(runs_dir) / run_id / "metrics.csv"
        if not path.exists():
            raise HTTPException(status_code=404, detail="unknown run")
        return FileResponse(path, media_type="text/csv")

    if console_dir and Path(console_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=str(console_dir), html=True), name="console")

    return app
