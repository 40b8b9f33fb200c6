import numpy as np
import pytest

from bmbe.belief import belief_from_probs, entropy, EvidenceTriple, update_belief
from bmbe.fixtures import random_kb
from bmbe.kb import BINARY_VALUES, Disease, Feature, KnowledgeBase
from bmbe.policy import (
    PolicyConfig,
    counterfactual,
    eig,
    eig_brute_force,
    eig_scores,
    jeffrey_information_check,
    predictive,
    select_question,
)
from conftest import binary_counts


def deterministic_kb():
    """Two diseases; f1 perfectly bisects (as close as smoothing allows), f2 uninformative."""
    diseases = [Disease("d1", "one", 1.0), Disease("d2", "two", 1.0)]
    feats = [
        Feature("f1", "split sign", "binary", BINARY_VALUES, "Do you have the split sign?"),
        Feature("f2", "flat sign", "binary", BINARY_VALUES, "Do you have the flat sign?"),
    ]
    counts = {
        ("d1", "f1"): {"yes": 100.0, "no": 0.0},
        ("d2", "f1"): {"yes": 0.0, "no": 100.0},
        ("d1", "f2"): {"yes": 50.0, "no": 50.0},
        ("d2", "f2"): {"yes": 50.0, "no": 50.0},
    }
    return KnowledgeBase(1, diseases, feats, counts)


class TestPredictive:
    def test_symmetric_mixture(self, kb_two):
        b = kb_two.prior()
        assert predictive(b, kb_two, "f1")["yes"] == pytest.approx(0.5)

    def test_one_hot_belief_returns_conditional(self, kb_two):
        b = belief_from_probs([1.0, 0.0], kb_two.disease_order)
        assert predictive(b, kb_two, "f1")["yes"] == pytest.approx(0.9)

    def test_hand_mixture(self):
        diseases = [Disease("d1", "one", 1.0), Disease("d2", "two", 1.0)]
        f = Feature("f1", "sign", "binary", BINARY_VALUES, "Do you have the sign?")
        counts = {("d1", "f1"): binary_counts(0.8), ("d2", "f1"): binary_counts(0.4)}
        kb = KnowledgeBase(1, diseases, [f], counts)
        b = belief_from_probs([0.75, 0.25], kb.disease_order)
        assert predictive(b, kb, "f1")["yes"] == pytest.approx(0.7)

    def test_sums_to_one(self, rng):
        kb = random_kb(rng, 5, 6)
        b = kb.prior()
        for f in kb.features:
            assert sum(predictive(b, kb, f.id).values()) == pytest.approx(1.0, abs=1e-9)


class TestCounterfactual:
    def test_hand_bayes(self, kb_two):
        b = kb_two.prior()
        cf = counterfactual(b, kb_two, "f1", "yes")
        assert np.allclose(cf.probs(), [0.9, 0.1], atol=1e-12)

    def test_caller_belief_untouched(self, kb_two):
        b = kb_two.prior()
        before = b.probs().copy()
        counterfactual(b, kb_two, "f1", "yes")
        assert np.array_equal(b.probs(), before)

    def test_uninformative_identity(self, kb_twin):
        b = kb_twin.prior()
        cf = counterfactual(b, kb_twin, "f1", "yes")
        assert np.allclose(cf.probs(), b.probs(), atol=1e-12)

    def test_one_hot_absorbing(self, kb_two):
        b = belief_from_probs([1.0, 0.0], kb_two.disease_order)
        cf = counterfactual(b, kb_two, "f1", "no")
        assert np.allclose(cf.probs(), b.probs(), atol=1e-12)


class TestEig:
    def test_perfect_bisection_is_one_bit(self):
        # exact deterministic likelihoods (outside any KB, which always smooths)
        from bmbe.policy import _eig_stack

        stack = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        assert _eig_stack(np.array([0.5, 0.5]), stack)[0] == pytest.approx(1.0, abs=1e-12)

    def test_near_deterministic_kb_feature(self):
        kb = deterministic_kb()
        b = kb.prior()
        # smoothing caps the likelihoods at 101/102; hand evaluation gives 0.92051 bits
        assert eig(b, kb, "f1") == pytest.approx(0.92051, abs=5e-5)
        assert eig(b, kb, "f1") == pytest.approx(eig_brute_force(b, kb, "f1"), abs=1e-12)

    def test_uninformative_is_zero(self):
        kb = deterministic_kb()
        assert eig(kb.prior(), kb, "f2") == pytest.approx(0.0, abs=1e-12)

    def test_hand_value_0531(self, kb_two):
        b = kb_two.prior()
        assert eig(b, kb_two, "f1") == pytest.approx(0.5310, abs=5e-5)

    def test_matches_brute_force_randomized(self, rng):
        for _ in range(50):
            kb = random_kb(rng, k=int(rng.integers(2, 7)), n=int(rng.integers(1, 4)))
            b = belief_from_probs(rng.dirichlet(np.ones(kb.n_diseases)), kb.disease_order)
            for f in kb.features:
                assert eig(b, kb, f.id) == pytest.approx(
                    eig_brute_force(b, kb, f.id), abs=1e-9
                )

    def test_bounded_by_entropy(self, rng):
        kb = random_kb(rng, 5, 8)
        b = belief_from_probs(rng.dirichlet(np.ones(5)), kb.disease_order)
        h = entropy(b)
        for f in kb.features:
            assert -1e-12 <= eig(b, kb, f.id) <= h + 1e-12

    def test_brute_force_guards(self, rng):
        kb = random_kb(rng, k=9, n=1, v_max=2, p_absent=0.0)
        with pytest.raises(ValueError, match="brute-force"):
            eig_brute_force(kb.prior(), kb, kb.features[0].id)


class TestSelectQuestion:
    def test_argmax(self, kb_separable):
        b = kb_separable.prior()
        scores = eig_scores(b, kb_separable)
        best = select_question(b, kb_separable, set())
        assert scores[best] == max(scores.values())

    def test_all_uninformative_lowest_id(self, kb_twin):
        assert select_question(kb_twin.prior(), kb_twin, set()) == "f1"

    def test_never_returns_asked_and_enumerates_all(self, kb_separable):
        b = kb_separable.prior()
        asked: set[str] = set()
        seen = []
        for _ in range(kb_separable.n_features):
            f = select_question(b, kb_separable, asked)
            assert f not in asked
            asked.add(f)
            seen.append(f)
        assert len(set(seen)) == kb_separable.n_features
        with pytest.raises(ValueError, match="no unasked"):
            select_question(b, kb_separable, asked)

    def test_focused_below_theta_equals_global(self, kb_separable):
        b = kb_separable.prior()  # max posterior 0.1 < theta
        focused = PolicyConfig("focused", k=3, lam=0.5, theta=0.3)
        assert select_question(b, kb_separable, set(), focused) == select_question(
            b, kb_separable, set(), PolicyConfig()
        )

    def test_focused_activation_changes_only_at_crossing(self, kb_separable):
        b = kb_separable.prior()
        b = update_belief(b, kb_separable, EvidenceTriple("f01", "yes", 1.0))
        b = update_belief(b, kb_separable, EvidenceTriple("f02", "yes", 1.0))
        maxp = b.max_posterior()
        globl = select_question(b, kb_separable, set(), PolicyConfig())

        def pick(theta):
            return select_question(b, kb_separable, set(),
                                   PolicyConfig("focused", theta=theta))

        closed = {pick(t) for t in (min(1.0, maxp + 0.01), min(1.0, maxp + 0.1), 1.0)}
        opened = {pick(t) for t in (0.0, max(0.0, maxp - 0.1), max(0.0, maxp - 0.01))}
        assert closed == {globl}  # gate closed: identical to global everywhere above maxp
        assert len(opened) == 1  # gate open: one selection everywhere at or below maxp

    def test_policy_config_invariants(self):
        with pytest.raises(ValueError):
            PolicyConfig("focused", k=1)
        with pytest.raises(ValueError):
            PolicyConfig("focused", lam=0.0)
        with pytest.raises(ValueError):
            PolicyConfig("global", theta=1.5)
        with pytest.raises(ValueError):
            PolicyConfig("sideways")


class TestDampeningProbe:
    def test_probe_runs_and_reports(self, rng):
        report = jeffrey_information_check(rng, trials=150)
        assert report.trials == 150
        assert report.violations >= 0
        # informational: dampened EIG exceeding full-confidence EIG would be surprising
        assert report.violations <= report.trials
