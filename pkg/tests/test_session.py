import json

import numpy as np
import pytest

from bmbe.belief import UNKNOWN, EvidenceTriple, belief_from_probs, update_belief
from bmbe.kb import PriorStrategy
from bmbe.patients import PERSONAS, sample_patient
from bmbe.policy import PolicyConfig
from bmbe.sensor import PatternSensor
from bmbe.session import (
    PersonaResponder,
    ScriptedResponder,
    Session,
    SessionConfig,
    SessionResult,
    decide,
    oracle_responder,
    read_trace,
    replay_posteriors,
    run_session,
    write_trace,
)


class TestSessionConfig:
    def test_defaults(self):
        cfg = SessionConfig()
        assert (cfg.t_min, cfg.t_max) == (12, 20)

    def test_invariants(self):
        with pytest.raises(ValueError):
            SessionConfig(tau=1.5)
        with pytest.raises(ValueError):
            SessionConfig(t_min=10, t_max=5)
        with pytest.raises(ValueError):
            SessionConfig(t_min=-1)

    def test_roundtrip(self):
        cfg = SessionConfig(tau=0.4, t_min=2, t_max=7, policy=PolicyConfig("focused"),
                            prior_strategy=PriorStrategy("uniform"), seed=11)
        assert SessionConfig.from_dict(cfg.to_dict()) == cfg


class TestDecide:
    def test_warmup_blocks_commit(self):
        cfg = SessionConfig(tau=0.5, t_min=12, t_max=20)
        b = belief_from_probs([0.99, 0.01], ("d1", "d2"))
        assert decide(b, cfg, t=5, exhausted=False) == ("continue", None)

    def test_threshold_crossing_commits(self):
        cfg = SessionConfig(tau=0.5, t_min=12, t_max=20)
        b = belief_from_probs([0.51, 0.49], ("d1", "d2"))
        assert decide(b, cfg, t=12, exhausted=False) == ("commit", "d1")

    def test_budget_commit_when_over_tau(self):
        cfg = SessionConfig(tau=0.5, t_min=12, t_max=20)
        b = belief_from_probs([0.3, 0.7], ("d1", "d2"))
        assert decide(b, cfg, t=20, exhausted=True) == ("commit", "d2")

    def test_budget_abstain(self):
        cfg = SessionConfig(tau=0.8, t_min=12, t_max=20)
        b = belief_from_probs([0.3, 0.7], ("d1", "d2"))
        assert decide(b, cfg, t=20, exhausted=True) == ("abstain", None)

    def test_exhausted_waives_warmup(self):
        cfg = SessionConfig(tau=0.5, t_min=12, t_max=20)
        b = belief_from_probs([0.9, 0.1], ("d1", "d2"))
        assert decide(b, cfg, t=3, exhausted=True) == ("commit", "d1")

    def test_argmax_tie_lowest_id(self):
        cfg = SessionConfig(tau=0.0, t_min=0)
        b = belief_from_probs([0.5, 0.5], ("d2", "d1"))
        assert decide(b, cfg, t=1, exhausted=False) == ("commit", "d1")


class TestOracleResponder:
    def test_known_feature_full_confidence(self, kb_separable):
        p = sample_patient(kb_separable, "d01", 3)
        r = oracle_responder(p)
        f = kb_separable.feature(next(iter(p.findings)))
        triple = r.answer(f)
        assert triple.value == p.findings[f.id]
        assert triple.confidence == 1.0
        assert triple.tier == "oracle"

    def test_absent_feature_unknown(self, kb_separable):
        p = sample_patient(kb_separable, "d01", 3)
        missing = [f for f in kb_separable.features if f.id not in p.findings]
        if missing:  # separable KB usually has every feature relevant
            assert oracle_responder(p).answer(missing[0]).value == UNKNOWN

    def test_intake_covers_chief_features(self, kb_separable):
        p = sample_patient(kb_separable, "d02", 5)
        triples = oracle_responder(p).intake()
        assert [t.feature_id for t in triples] == list(p.chief_features)
        assert all(t.confidence == 1.0 for t in triples)


class TestRunSessionOracle:
    def test_separable_commits_correctly(self, kb_separable):
        cfg = SessionConfig(tau=0.9, t_min=12, t_max=20, seed=0)
        sensor = PatternSensor()
        p = sample_patient(kb_separable, "d04", 8)
        res = run_session(kb_separable, sensor, oracle_responder(p), cfg, profile_id=p.id)
        assert res.outcome == "committed"
        assert res.committed_disease == "d04"
        assert res.max_posterior >= 0.9
        assert res.turns_used >= 12
        assert res.stop_reason == "threshold"

    def test_vacuous_threshold_commits_at_first_check(self, kb_separable):
        cfg = SessionConfig(tau=0.0, t_min=0, t_max=20)
        p = sample_patient(kb_separable, "d01", 1)
        res = run_session(kb_separable, PatternSensor(), oracle_responder(p), cfg)
        assert res.outcome == "committed"
        assert res.turns_used == 1  # the first stopping check happens after turn 1

    def test_unreachable_threshold_abstains_at_budget(self, kb_twin):
        cfg = SessionConfig(tau=1.0, t_min=0, t_max=3)
        p = sample_patient(kb_twin, "d1", 2)
        res = run_session(kb_twin, PatternSensor(), oracle_responder(p), cfg)
        assert res.outcome == "abstained"
        assert res.stop_reason == "budget_abstain"
        # budget hit, or every feature consumed between intake and questions
        assert res.turns_used == cfg.t_max or (
            res.turns_used + len(res.intake_triples) == kb_twin.n_features
        )

    def test_unreachable_threshold_full_budget(self, kb_separable):
        cfg = SessionConfig(tau=1.0, t_min=0, t_max=3)
        p = sample_patient(kb_separable, "d01", 2)
        res = run_session(kb_separable, PatternSensor(), oracle_responder(p), cfg)
        assert res.outcome == "abstained"
        assert res.turns_used == 3

    def test_posterior_matches_hand_product(self, kb_separable):
        # replay the oracle answers by hand from the prior
        cfg = SessionConfig(tau=1.0, t_min=5, t_max=5)  # forced full-length
        p = sample_patient(kb_separable, "d07", 4)
        res = run_session(kb_separable, PatternSensor(), oracle_responder(p), cfg, profile_id=p.id)
        b = kb_separable.prior(cfg.prior_strategy)
        for t in res.intake_triples:
            b = update_belief(b, kb_separable, t)
        for rec in res.trace:
            if rec.update_applied:
                b = update_belief(
                    b, kb_separable,
                    EvidenceTriple(rec.asked_feature, rec.parsed_value, rec.parsed_confidence,
                                   tier=rec.parsed_tier),
                )
        assert res.final_ranking[0][1] == pytest.approx(float(np.max(b.probs())), abs=1e-12)

    def test_no_repeat_questions_and_disjoint_from_intake(self, kb_separable):
        cfg = SessionConfig(tau=1.0, t_min=20, t_max=20)
        p = sample_patient(kb_separable, "d05", 6)
        res = run_session(kb_separable, PatternSensor(), oracle_responder(p), cfg)
        asked = [r.asked_feature for r in res.trace]
        assert len(asked) == len(set(asked))
        intake = {t.feature_id for t in res.intake_triples}
        assert not intake & set(asked)

    def test_termination_with_hostile_responder(self, kb_separable):
        class Hostile:
            def intake(self):
                return "pure gibberish"

            def answer(self, feature, reask=False):
                return "more gibberish"  # always unknown: re-ask then retire

        cfg = SessionConfig(tau=0.99, t_min=0, t_max=20)
        res = run_session(kb_separable, PatternSensor(), Hostile(), cfg)
        assert res.outcome == "abstained"
        assert res.turns_used <= 20
        assert all(not r.update_applied for r in res.trace)
        assert all(r.reask_count == 1 for r in res.trace)

    def test_features_exhausted_forces_decision(self, kb_twin):
        # 3 features, t_max 20: decision comes early once everything is asked
        cfg = SessionConfig(tau=0.4, t_min=0, t_max=20)
        p = sample_patient(kb_twin, "d1", 0)
        res = run_session(kb_twin, PatternSensor(), oracle_responder(p), cfg)
        assert res.turns_used <= 3
        assert res.outcome == "committed"  # twins stay at 0.5 >= 0.4; tie -> d1
        assert res.committed_disease == "d1"

    def test_exhausted_before_warmup_waives_it(self, kb_twin):
        cfg = SessionConfig(tau=0.4, t_min=12, t_max=20)
        p = sample_patient(kb_twin, "d2", 0)
        res = run_session(kb_twin, PatternSensor(), oracle_responder(p), cfg)
        assert res.turns_used <= 3 < 12
        assert res.outcome == "committed"


class TestReask:
    def test_reask_once_then_retire(self, kb_separable):
        cfg = SessionConfig(tau=0.9, t_min=2, t_max=4)
        session = Session(kb_separable, PatternSensor(), cfg)
        session.submit_intake("")
        feature, question = session.current_question()
        state = session.submit_answer("I'm not sure.")
        assert state == "asking"
        f2, q2 = session.current_question()
        assert f2.id == feature.id
        assert q2 != question  # clarification rendering
        assert session.pending_reask()
        session.submit_answer("I'm not sure.")
        assert session.turn == 1
        rec = session.trace[0]
        assert rec.reask_count == 1
        assert not rec.update_applied
        assert rec.parsed_value == UNKNOWN

    def test_reask_resolving_applies_update(self, kb_separable):
        cfg = SessionConfig(tau=0.99, t_min=2, t_max=4)
        session = Session(kb_separable, PatternSensor(), cfg)
        session.submit_intake("")
        session.submit_answer("what do you mean?")
        assert session.pending_reask()
        session.submit_answer("oh, yes")
        rec = session.trace[0]
        assert rec.update_applied
        assert rec.parsed_value == "yes"
        assert rec.reask_count == 1


class TestPersonaSessions:
    def test_plain_persona_full_loop(self, kb_separable):
        cfg = SessionConfig(tau=0.9, t_min=12, t_max=20, seed=0)
        p = sample_patient(kb_separable, "d06", 13)
        responder = PersonaResponder(p, PERSONAS["plain"], seed=99)
        res = run_session(kb_separable, PatternSensor(), responder, cfg, profile_id=p.id)
        assert res.outcome == "committed"
        assert res.committed_disease == "d06"

    def test_intake_extracts_chief_complaint(self, kb_separable):
        cfg = SessionConfig(tau=0.9, t_min=12, t_max=20)
        p = sample_patient(kb_separable, "d03", 17)
        responder = PersonaResponder(p, PERSONAS["plain"], seed=1)
        res = run_session(kb_separable, PatternSensor(), responder, cfg, profile_id=p.id)
        assert {t.feature_id for t in res.intake_triples} == set(p.chief_features)

    def test_deterministic_trace(self, kb_separable):
        cfg = SessionConfig(tau=0.9, t_min=12, t_max=20, seed=0)
        p = sample_patient(kb_separable, "d09", 23)

        def one_run():
            responder = PersonaResponder(p, PERSONAS["dazed"], seed=7)
            res = run_session(kb_separable, PatternSensor(), responder, cfg, profile_id=p.id)
            session = Session(kb_separable, PatternSensor(), cfg, profile_id=p.id)
            return json.dumps([r.to_dict() for r in res.trace])

        assert one_run() == one_run()


class TestTraceIO:
    def _run(self, kb):
        cfg = SessionConfig(tau=0.9, t_min=12, t_max=20, seed=0)
        p = sample_patient(kb, "d02", 31)
        session = Session(kb, PatternSensor(), cfg, profile_id=p.id)
        responder = oracle_responder(p)
        session.submit_intake(responder.intake())
        while session.state == "asking":
            feature, _ = session.current_question()
            session.submit_answer(responder.answer(feature))
        return session

    def test_trace_roundtrip(self, kb_separable, tmp_path):
        session = self._run(kb_separable)
        res = session.result()
        path = tmp_path / "trace.jsonl"
        write_trace(path, res, session.header())
        header, records = read_trace(path)
        assert header["kb_hash"] == kb_separable.kb_hash
        assert len(records) == len(res.trace)
        assert records[0].to_dict() == res.trace[0].to_dict()

    def test_replay_reproduces_posteriors(self, kb_separable):
        session = self._run(kb_separable)
        res = session.result()
        replayed = replay_posteriors(kb_separable, session.header(), res.trace)
        for replay_top5, rec in zip(replayed, res.trace):
            for (d_a, p_a), (d_b, p_b) in zip(replay_top5, rec.posterior_top5):
                assert d_a == d_b
                assert p_a == pytest.approx(p_b, abs=1e-9)

    def test_commit_soundness(self, kb_separable):
        session = self._run(kb_separable)
        res = session.result()
        if res.outcome == "committed":
            assert res.max_posterior >= session.cfg.tau
            assert res.committed_disease == res.final_ranking[0][0]

    def test_result_roundtrip(self, kb_separable):
        res = self._run(kb_separable).result()
        again = SessionResult.from_dict(json.loads(json.dumps(res.to_dict())))
        assert again.to_dict() == res.to_dict()


class TestScriptedResponder:
    def test_scripted_answers_flow_through_the_loop(self, kb_separable):
        p = sample_patient(kb_separable, "d01", 42)
        script = {fid: ("Yes." if v == "yes" else "No.") for fid, v in p.findings.items()}
        contradicted = next(f for f, v in p.findings.items() if v == "yes")
        script[contradicted] = "No."  # one deliberate contradiction
        responder = ScriptedResponder(script, intake_text=p.chief_complaint)
        cfg = SessionConfig(tau=1.0, t_min=10, t_max=10)
        res = run_session(kb_separable, PatternSensor(), responder, cfg, profile_id=p.id)
        assert res.turns_used == 10
        answered = {r.asked_feature: r.parsed_value for r in res.trace if r.update_applied}
        if contradicted in answered:
            assert answered[contradicted] == "no"

    def test_incomplete_session_flagged(self, kb_separable):
        class Exploding:
            def intake(self):
                return ""

            def answer(self, feature, reask=False):
                raise RuntimeError("backend fell over")

        cfg = SessionConfig(tau=0.9, t_min=1, t_max=5)
        res = run_session(kb_separable, PatternSensor(), Exploding(), cfg)
        assert res.incomplete

    def test_structured_answers_drive_session(self, kb_two):
        cfg = SessionConfig(tau=0.5, t_min=1, t_max=3)
        session = Session(kb_two, PatternSensor(), cfg)
        session.submit_intake("")
        feature, _ = session.current_question()
        state = session.submit_answer(EvidenceTriple(feature.id, "yes", 1.0, tier="oracle"))
        assert state == "committed"
        assert session.committed_disease == "d1"
