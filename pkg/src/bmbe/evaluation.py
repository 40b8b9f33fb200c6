"""Selective-diagnosis metrics, threshold sweeps, stratification, failure taxonomy, experiments."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .belief import UNKNOWN, EvidenceTriple, update_belief
from .kb import FeatureMatching, KnowledgeBase, PriorStrategy
from .patients import PatientProfile, is_positive_value, derive_seed, sample_patient
from .sensor import PatternSensor
from .session import (
    OracleResponder,
    SessionConfig,
    SessionResult,
    run_session,
)

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.80
SWEEP_GRID = tuple(round(0.05 * i, 2) for i in range(20))  # 0.00 .. 0.95

METRICS_CSV_HEADER = "tau,sel_acc,coverage,dhs,top1,top3,n_committed"


@dataclass(frozen=True)
class RunResult:
    profile_id: str
    truth: str
    result: SessionResult


@dataclass
class RunSet:
    results: list[RunResult]
    kb_ref: str = ""
    config_ref: dict | None = None

    def __post_init__(self) -> None:
        if not self.results:
            raise ValueError("empty RunSet")

    def __len__(self) -> int:
        return len(self.results)


@dataclass(frozen=True)
class MetricsRow:
    tau: float
    sel_acc: float
    coverage: float
    dhs: float
    top1: float
    top3: float
    n_committed: int

    def csv_line(self) -> str:
        return (
            f"{self.tau:g},{self.sel_acc:.6f},{self.coverage:.6f},{self.dhs:.6f},"
            f"{self.top1:.6f},{self.top3:.6f},{self.n_committed}"
        )


@dataclass(frozen=True)
class FailureTags:
    flags: frozenset[str]
    fp_count: int
    oracle_gap: float

    def to_dict(self) -> dict:
        return {
            "flags": sorted(self.flags),
            "fp_count": self.fp_count,
            "oracle_gap": self.oracle_gap,
        }


@dataclass(frozen=True)
class SelectiveMetrics:
    sel_acc: float
    coverage: float
    n_committed: int


def _commits(rr: RunResult, tau_override: float | None) -> bool:
    if tau_override is None:
        return rr.result.outcome == "committed"
    return rr.result.max_posterior >= tau_override


def _predicted(rr: RunResult, tau_override: float | None) -> str | None:
    if tau_override is None:
        return rr.result.committed_disease
    return rr.result.final_ranking[0][0]


def top_k_accuracy(rs: RunSet, k: int, tau_override: float | None = None) -> float:
    """Fraction of all patients whose truth is in the committed top-k; abstentions are misses."""
    hits = 0
    for rr in rs.results:
        if not _commits(rr, tau_override):
            continue
        ranked = [d for d, _ in rr.result.final_ranking[:k]]
        if rr.truth in ranked:
            hits += 1
    return hits / len(rs.results)


def selective_metrics(rs: RunSet, tau_override: float | None = None) -> SelectiveMetrics:
    """Selective accuracy and coverage; with zero commits sel_acc reports 1.0 and n_committed flags it."""
    committed = correct = 0
    for rr in rs.results:
        if _commits(rr, tau_override):
            committed += 1
            if _predicted(rr, tau_override) == rr.truth:
                correct += 1
    coverage = committed / len(rs.results)
    sel_acc = correct / committed if committed else 1.0
    return SelectiveMetrics(sel_acc, coverage, committed)


def dhs(sel_acc: float, coverage: float, alpha: float = 0.5) -> float:
    """Weighted harmonic mean of selective accuracy and coverage; zero if either is zero."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    if sel_acc <= 0 or coverage <= 0:
        return 0.0
    return 1.0 / (alpha / sel_acc + (1.0 - alpha) / coverage)


def metrics_row(rs: RunSet, tau: float | None = None, alpha: float = 0.5) -> MetricsRow:
    sm = selective_metrics(rs, tau)
    row_tau = tau
    if row_tau is None:
        row_tau = (rs.config_ref or {}).get("tau", -1.0)
    return MetricsRow(
        tau=float(row_tau),
        sel_acc=sm.sel_acc,
        coverage=sm.coverage,
        dhs=dhs(sm.sel_acc, sm.coverage, alpha),
        top1=top_k_accuracy(rs, 1, tau),
        top3=top_k_accuracy(rs, 3, tau),
        n_committed=sm.n_committed,
    )


def sweep_threshold(
    rs: RunSet, grid: Sequence[float] = SWEEP_GRID, alpha: float = 0.5
) -> tuple[list[MetricsRow], float]:
    """One MetricsRow per grid point plus the DHS-maximizing tau (ties to the lowest tau)."""
    if not grid:
        raise ValueError("empty grid")
    rows = [metrics_row(rs, t, alpha) for t in grid]
    tau_star, best = None, -1.0
    for row in sorted(rows, key=lambda r: r.tau):
        if row.dhs > best:
            tau_star, best = row.tau, row.dhs
    return rows, tau_star


def rows_to_csv(rows: Iterable[MetricsRow]) -> str:
    return "\n".join([METRICS_CSV_HEADER, *(r.csv_line() for r in rows)]) + "\n"


# -- prevalence stratification ---------------------------------------------------


def prevalence_groups(kb: KnowledgeBase) -> dict[str, str]:
    """Terciles by prior-count rank: common / medium / rare, extras in the middle group."""
    if kb.n_diseases < 3:
        raise ValueError("need at least 3 diseases to stratify")
    order = sorted(kb.diseases, key=lambda d: (-d.prior_count, d.id))
    third = kb.n_diseases // 3
    groups: dict[str, str] = {}
    for i, d in enumerate(order):
        if i < third:
            groups[d.id] = "common"
        elif i >= kb.n_diseases - third:
            groups[d.id] = "rare"
        else:
            groups[d.id] = "medium"
    return groups


def stratify_prevalence(
    rs: RunSet, kb: KnowledgeBase, tau: float | None = None
) -> dict[str, MetricsRow]:
    groups = prevalence_groups(kb)
    out: dict[str, MetricsRow] = {}
    for name in ("common", "medium", "rare"):
        subset = [rr for rr in rs.results if groups.get(rr.truth) == name]
        if not subset:
            continue
        out[name] = metrics_row(RunSet(subset, rs.kb_ref, rs.config_ref), tau)
    return out


# -- failure taxonomy -------------------------------------------------------------


def oracle_posterior_gap(
    kb: KnowledgeBase,
    profile: PatientProfile,
    prior_strategy: PriorStrategy | None = None,
) -> float:
    """Top1-minus-top2 posterior gap after conditioning on every ground-truth finding at c=1."""
    belief = kb.prior(prior_strategy or PriorStrategy())
    for fid, value in profile.findings.items():
        belief = update_belief(belief, kb, EvidenceTriple(fid, value, 1.0, tier="oracle"))
    p = np.sort(belief.probs())[::-1]
    return float(p[0] - p[1])


def _value_matches(feature, a, b) -> bool:
    if feature.kind == "numeric":
        try:
            return abs(float(a) - float(b)) < 1e-9
        except (TypeError, ValueError):
            return False
    return str(a) == str(b)


def classify_failures(
    rs: RunSet,
    kb: KnowledgeBase,
    profiles: Mapping[str, PatientProfile],
    gamma: float = DEFAULT_GAMMA,
) -> dict[str, FailureTags]:
    """Tag committed misdiagnoses along the KB / evidence-pipeline / inference axes.

    Conservative by design: only detectable errors are flagged, and the
    inference tags apply only when nothing else explains the case.
    """
    out: dict[str, FailureTags] = {}
    for rr in rs.results:
        res = rr.result
        if res.outcome != "committed" or res.committed_disease == rr.truth:
            continue
        profile = profiles.get(rr.profile_id)
        if profile is None:
            raise ValueError(f"missing profile for result {rr.profile_id!r}")
        gap = oracle_posterior_gap(kb, profile)
        flags: set[str] = set()
        if gap < gamma:
            flags.add("kb_failure")
        fp_count = 0
        wrong_evidence = False
        for rec in res.trace:
            value = rec.parsed_value
            if value is None or value == UNKNOWN:
                continue
            feature = kb.feature(rec.asked_feature)
            truth_value = profile.findings.get(rec.asked_feature)
            if truth_value is None:
                if is_positive_value(feature, value):
                    fp_count += 1
            elif not _value_matches(feature, value, truth_value):
                wrong_evidence = True
        if fp_count > 2:
            flags.add("llm_fp")
        if wrong_evidence:
            flags.add("llm_we")
        if not flags:
            top3 = {d for d, _ in res.final_ranking[:3]}
            flags.add("inference_close" if rr.truth in top3 else "inference_diverged")
        out[rr.profile_id] = FailureTags(frozenset(flags), fp_count, gap)
    return out


# -- experiment drivers ------------------------------------------------------------


ORACLE_CEILING_CFG = SessionConfig(tau=0.0, t_min=0, t_max=20)


def run_cohort(
    kb: KnowledgeBase,
    profiles: Sequence[PatientProfile],
    cfg: SessionConfig,
    responder_factory: Callable[[PatientProfile], object] | None = None,
    sensor: PatternSensor | None = None,
) -> RunSet:
    """Run one session per profile and collect a RunSet."""
    sensor = sensor or PatternSensor()
    factory = responder_factory or OracleResponder
    results = [
        RunResult(p.id, p.disease_id, run_session(kb, sensor, factory(p), cfg, profile_id=p.id))
        for p in profiles
    ]
    return RunSet(results, kb_ref=kb.kb_hash, config_ref=cfg.to_dict())


def oracle_accuracy(
    kb: KnowledgeBase,
    profiles: Sequence[PatientProfile],
    cfg: SessionConfig | None = None,
) -> tuple[float, float]:
    """KB-intrinsic ceiling: oracle responder, commit on the first stopping check."""
    rs = run_cohort(kb, profiles, cfg or ORACLE_CEILING_CFG)
    return top_k_accuracy(rs, 1), top_k_accuracy(rs, 3)


def scaling_experiment(
    kb: KnowledgeBase,
    sizes: Sequence[int],
    seeds: Sequence[int],
    cfg: SessionConfig | None = None,
) -> list[dict]:
    """Top-1 accuracy on random disease subsets of each size, one patient per disease.

    Unlike the oracle ceiling, these sessions run the full stopping rule so the
    numbers reflect complete consultations.
    """
    cfg = cfg or SessionConfig()
    rows = []
    for size in sizes:
        if size > kb.n_diseases:
            raise ValueError(f"subset size {size} exceeds K={kb.n_diseases}")
        for seed in seeds:
            if size == 1:
                rows.append({"size": 1, "seed": seed, "top1": 1.0})  # only one candidate
                continue
            rng = np.random.default_rng(derive_seed(seed, "scaling", size))
            chosen = sorted(rng.choice(kb.disease_order, size=size, replace=False))
            sub = kb.subset(chosen)
            profiles = [
                sample_patient(sub, d, derive_seed(seed, "scaling-patient", d), profile_id=f"{d}-x")
                for d in sub.disease_order
            ]
            rs = run_cohort(sub, profiles, cfg)
            rows.append({"size": size, "seed": seed, "top1": top_k_accuracy(rs, 1)})
    return rows


def translate_profile(
    profile: PatientProfile,
    kb_native: KnowledgeBase,
    matching: FeatureMatching,
) -> tuple[PatientProfile, float]:
    """Project a foreign profile onto the native KB; unmatched findings become invisible."""
    fmap = {fb: fa for fa, fb in matching.shared}
    findings: dict[str, str] = {}
    for fid, value in profile.findings.items():
        native_id = fmap.get(fid)
        if native_id is None:
            continue
        feature = kb_native.feature(native_id)
        if feature.kind == "numeric":
            try:
                feature.numeric_reading(value)
            except ValueError:
                continue
        elif str(value) not in feature.values:
            continue
        findings[native_id] = value
    total = len(profile.findings)
    coverage = (len(findings) / total) if total else 1.0
    positives = [
        f.id for f in kb_native.features
        if f.id in findings and is_positive_value(f, findings[f.id])
    ][:3]
    names = [kb_native.feature(fid).name for fid in positives]
    if not names:
        complaint = "I'm not feeling well."
    elif len(names) == 1:
        complaint = f"I have {names[0]}."
    else:
        complaint = f"I have {', '.join(names[:-1])} and {names[-1]}."
    translated = PatientProfile(
        id=profile.id,
        disease_id=profile.disease_id,
        age=profile.age,
        sex=profile.sex,
        findings=findings,
        chief_complaint=complaint,
        seed=profile.seed,
        chief_features=tuple(positives),
    )
    return translated, coverage


def cross_kb_eval(
    kb_native: KnowledgeBase,
    patients_foreign: Sequence[PatientProfile],
    matching: FeatureMatching,
    cfg: SessionConfig | None = None,
    responder_factory: Callable[[PatientProfile], object] | None = None,
    sensor: PatternSensor | None = None,
) -> tuple[MetricsRow, float, list[float]]:
    """Evaluate the native engine on foreign patients through the feature matching."""
    if not matching.shared:
        logger.warning("empty feature matching: every foreign finding will be invisible")
    translated: list[PatientProfile] = []
    coverages: list[float] = []
    for p in patients_foreign:
        tp, cov = translate_profile(p, kb_native, matching)
        translated.append(tp)
        coverages.append(cov)
    cfg = cfg or ORACLE_CEILING_CFG
    rs = run_cohort(kb_native, translated, cfg, responder_factory, sensor)
    mean_cov = float(np.mean(coverages)) if coverages else 0.0
    return metrics_row(rs), mean_cov, coverages


def majority_guess_metrics(
    truths: Sequence[str], kb: KnowledgeBase, alpha: float = 0.5
) -> MetricsRow:
    """No-engine baseline: always commit the highest-prior disease (coverage 1)."""
    ranked = sorted(kb.diseases, key=lambda d: (-d.prior_count, d.id))
    guess = ranked[0].id
    top3_set = {d.id for d in ranked[:3]}
    top1 = sum(1 for t in truths if t == guess) / len(truths)
    top3 = sum(1 for t in truths if t in top3_set) / len(truths)
    return MetricsRow(
        tau=0.0,
        sel_acc=top1,
        coverage=1.0,
        dhs=dhs(top1, 1.0, alpha),
        top1=top1,
        top3=top3,
        n_committed=len(truths),
    )
