"""Diagnostic-dialogue workbench: deterministic Bayesian engine with a pluggable language sensor."""

from .belief import (
    Belief,
    ConfidenceScale,
    EvidenceTriple,
    belief_from_probs,
    entropy,
    map_confidence,
    top_k,
    update_belief,
)
from .kb import (
    Disease,
    Feature,
    FeatureMatching,
    KbStats,
    KbValidationError,
    KnowledgeBase,
    PriorStrategy,
    build_from_records,
    import_elicited,
    kb_stats,
    load_kb,
    match_features,
)
from .patients import PatientProfile, Persona, PERSONAS, generate_cohort, respond, sample_patient
from .policy import PolicyConfig, eig, eig_brute_force, predictive, select_question
from .sensor import ExternalClientConfig, ParseOutcome, PatternSensor, confidence_indicator
from .session import (
    OracleResponder,
    PersonaResponder,
    Session,
    SessionConfig,
    SessionResult,
    TurnRecord,
    decide,
    oracle_responder,
    run_session,
)

__version__ = "0.1.0"
