"""Expected-information-gain scoring and question selection policies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .belief import Belief, top_k

if TYPE_CHECKING:
    from .kb import KnowledgeBase


@dataclass(frozen=True)
class PolicyConfig:
    mode: str = "global"  # global | focused
    k: int = 3
    lam: float = 0.5  # focus weight
    theta: float = 0.3  # activation threshold on max posterior

    def __post_init__(self) -> None:
        if self.mode not in ("global", "focused"):
            raise ValueError(f"unknown policy mode: {self.mode!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must be in [0, 1]")
        if self.mode == "focused" and (self.k < 2 or self.lam <= 0):
            raise ValueError("focused mode requires k >= 2 and lambda > 0")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "k": self.k, "lambda": self.lam, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PolicyConfig":
        return cls(
            mode=d.get("mode", "global"),
            k=int(d.get("k", 3)),
            lam=float(d.get("lambda", d.get("lam", 0.5))),
            theta=float(d.get("theta", 0.3)),
        )


def predictive(belief: Belief, kb: "KnowledgeBase", feature_id: str) -> dict[str, float]:
    """Predictive distribution over a feature's values, marginalized over the belief."""
    f = kb.feature(feature_id)
    pv = kb.likelihood_matrix(feature_id).T @ belief.probs()
    return {v: float(p) for v, p in zip(f.values, pv)}


def counterfactual(belief: Belief, kb: "KnowledgeBase", feature_id: str, value: str) -> Belief:
    """Posterior after a hypothetical full-confidence observation; input belief untouched."""
    lik = kb.likelihood_vector(feature_id, value)
    logs = belief.log_probs + np.log(lik)
    return Belief(logs - np.logaddexp.reduce(logs), belief.disease_order)


def _safe_xlog2x_sum(p: np.ndarray, axis: int) -> np.ndarray:
    out = np.zeros_like(p)
    np.log2(p, where=p > 0, out=out)
    return -(p * out).sum(axis=axis)


def _entropy_vec(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def _eig_stack(bvec: np.ndarray, stack: np.ndarray) -> np.ndarray:
    """EIG for a stacked (F, K, V) likelihood tensor against belief vector (K,)."""
    hb = _entropy_vec(bvec)
    joint = stack * bvec[None, :, None]
    pv = joint.sum(axis=1)  # (F, V); strictly positive thanks to smoothing
    post = joint / pv[:, None, :]
    h_post = _safe_xlog2x_sum(post, axis=1)  # (F, V)
    return np.maximum(0.0, hb - (pv * h_post).sum(axis=1))


def eig(belief: Belief, kb: "KnowledgeBase", feature_id: str) -> float:
    """Expected reduction in posterior entropy (bits) from asking one feature."""
    stack = kb.likelihood_matrix(feature_id)[None, :, :]
    return float(_eig_stack(belief.probs(), stack)[0])


def eig_scores(
    belief: Belief,
    kb: "KnowledgeBase",
    candidates: Iterable[str] | None = None,
    disease_subset: Sequence[int] | None = None,
) -> dict[str, float]:
    """EIG for every candidate feature in one vectorized pass.

    With a disease_subset, the belief is restricted to those indices and
    renormalized first (the focused top-k term).
    """
    bvec = belief.probs()
    if disease_subset is not None:
        idx = np.asarray(disease_subset)
        bvec = bvec[idx]
        bvec = bvec / bvec.sum()
    wanted = None if candidates is None else set(candidates)
    scores: dict[str, float] = {}
    for fids, stack in kb.value_groups():
        if wanted is not None and not any(f in wanted for f in fids):
            continue
        sub = stack if disease_subset is None else stack[:, idx, :]
        vals = _eig_stack(bvec, sub)
        for fid, v in zip(fids, vals):
            if wanted is None or fid in wanted:
                scores[fid] = float(v)
    return scores


def select_question_scored(
    belief: Belief,
    kb: "KnowledgeBase",
    asked: set[str],
    cfg: PolicyConfig | None = None,
) -> tuple[str, float]:
    """Argmax-EIG feature among unasked ones, with its policy score."""
    cfg = cfg or PolicyConfig()
    candidates = [f.id for f in kb.features if f.id not in asked]
    if not candidates:
        raise ValueError("no unasked features remain")
    scores = eig_scores(belief, kb, candidates)
    if cfg.mode == "focused" and belief.max_posterior() >= cfg.theta:
        k = min(cfg.k, kb.n_diseases)
        focus_ids = [d for d, _ in top_k(belief, k)]
        idx = [belief.disease_order.index(d) for d in focus_ids]
        focus = eig_scores(belief, kb, candidates, disease_subset=idx)
        scores = {f: scores[f] + cfg.lam * focus[f] for f in candidates}
    best_id, best_score = None, -1.0
    for fid in sorted(candidates):  # ascending id wins ties
        s = scores[fid]
        if best_id is None or s > best_score:
            best_id, best_score = fid, s
    return best_id, best_score


def select_question(
    belief: Belief,
    kb: "KnowledgeBase",
    asked: set[str],
    cfg: PolicyConfig | None = None,
) -> str:
    return select_question_scored(belief, kb, asked, cfg)[0]


def eig_brute_force(belief: Belief, kb: "KnowledgeBase", feature_id: str) -> float:
    """Independent EIG oracle by direct enumeration; guarded against misuse at scale."""
    f = kb.feature(feature_id)
    if kb.n_diseases > 8 or len(f.values) > 4:
        raise ValueError("brute-force EIG is limited to K <= 8 and |values| <= 4")
    b = [float(x) for x in belief.probs()]
    hb = -sum(p * math.log2(p) for p in b if p > 0)
    expected = 0.0
    for v in f.values:
        lik = [kb.likelihood(d, feature_id, v) for d in belief.disease_order]
        pv = sum(bi * li for bi, li in zip(b, lik))
        post = [bi * li / pv for bi, li in zip(b, lik)]
        hv = -sum(p * math.log2(p) for p in post if p > 0)
        expected += pv * hv
    return max(0.0, hb - expected)


@dataclass
class DampeningReport:
    """Empirical check that confidence-dampened questions never gain more information."""

    trials: int
    violations: int
    max_violation: float
    monotonic_violations: int


def jeffrey_information_check(
    rng: np.random.Generator,
    trials: int = 200,
    k_max: int = 4,
    v_max: int = 3,
    c_grid: Sequence[float] = (0.05, 0.25, 0.5, 0.8, 1.0),
    tol: float = 1e-9,
) -> DampeningReport:
    """Measure, on random instances, whether dampened EIG exceeds full-confidence EIG.

    This is an empirical probe, not an asserted invariant: callers decide what
    to do with the violation counts.
    """
    violations = 0
    max_violation = 0.0
    mono_violations = 0
    for _ in range(trials):
        k = int(rng.integers(2, k_max + 1))
        v = int(rng.integers(2, v_max + 1))
        lik = rng.dirichlet(np.ones(v), size=k)  # rows: P(value | disease)
        b = rng.dirichlet(np.ones(k))
        hb = _entropy_vec(b)
        pv = lik.T @ b

        def eig_at(c: float) -> float:
            total = 0.0
            for j in range(v):
                l_eff = c * lik[:, j] + (1 - c)
                post = b * l_eff
                post = post / post.sum()
                total += pv[j] * _entropy_vec(post)
            return hb - total

        gains = [eig_at(c) for c in c_grid]
        full = gains[-1]
        for g in gains[:-1]:
            if g > full + tol:
                violations += 1
                max_violation = max(max_violation, g - full)
        if any(b2 < a2 - tol for a2, b2 in zip(gains, gains[1:])):
            mono_violations += 1
    return DampeningReport(trials, violations, max_violation, mono_violations)
