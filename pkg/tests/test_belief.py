import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmbe.belief import (
    UNKNOWN,
    ConfidenceScale,
    EvidenceTriple,
    belief_from_probs,
    entropy,
    map_confidence,
    top_k,
    update_belief,
)
from bmbe.fixtures import random_kb
from bmbe.kb import BINARY_VALUES, Disease, Feature, KnowledgeBase


class TestConfidenceMapping:
    def test_table_values(self):
        assert map_confidence("very_likely") == 1.00
        assert map_confidence("likely") == 0.80
        assert map_confidence("uncertain") == 0.50
        assert map_confidence("unlikely") == 0.25
        assert map_confidence("very_unlikely") == 0.05

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError, match="unknown confidence label"):
            map_confidence("sorta")

    def test_override_scale(self):
        scale = ConfidenceScale({"very_likely": 0.9, "likely": 0.6})
        assert map_confidence("very_likely", scale) == 0.9

    def test_weights_must_be_in_unit_interval(self):
        with pytest.raises(ValueError):
            ConfidenceScale({"likely": 0.0})
        with pytest.raises(ValueError):
            ConfidenceScale({"likely": 1.2})


class TestUpdate:
    def test_hard_bayes(self, kb_two):
        b = kb_two.prior()
        b2 = update_belief(b, kb_two, EvidenceTriple("f1", "yes", 1.0))
        assert np.allclose(b2.probs(), [0.9, 0.1], atol=1e-12)

    def test_jeffrey_low_confidence_hand_value(self, kb_two):
        b = kb_two.prior()
        b2 = update_belief(b, kb_two, EvidenceTriple("f1", "yes", 0.05))
        # L_eff = (0.995, 0.955) -> posterior (0.51026, 0.48974)
        assert b2.probs() == pytest.approx([0.51026, 0.48974], abs=5e-6)

    def test_uninformative_feature_leaves_belief_alone(self, kb_twin):
        b = kb_twin.prior()
        b2 = update_belief(b, kb_twin, EvidenceTriple("f1", "yes", 1.0))
        assert np.allclose(b2.probs(), b.probs(), atol=1e-12)

    def test_neutral_evidence_skipped_entirely(self, kb_two):
        b = kb_two.prior()
        b2 = update_belief(b, kb_two, EvidenceTriple("f1", "yes", 1e-14))
        assert b2 is b  # same object: the update was skipped

    def test_unknown_value_refused(self, kb_two):
        with pytest.raises(ValueError):
            update_belief(kb_two.prior(), kb_two, EvidenceTriple("f1", UNKNOWN, 1.0))

    def test_confidence_bounds_enforced(self):
        with pytest.raises(ValueError):
            EvidenceTriple("f1", "yes", 0.0)
        with pytest.raises(ValueError):
            EvidenceTriple("f1", "yes", 1.5)

    def test_unknown_feature_rejected(self, kb_two):
        with pytest.raises(ValueError):
            update_belief(kb_two.prior(), kb_two, EvidenceTriple("fX", "yes", 1.0))

    def test_jeffrey_c1_equals_bayes_exactly(self, kb_two):
        b = kb_two.prior()
        jeffrey = update_belief(b, kb_two, EvidenceTriple("f1", "no", 1.0)).probs()
        lik = np.array([kb_two.likelihood(d, "f1", "no") for d in kb_two.disease_order])
        direct = b.probs() * lik
        direct /= direct.sum()
        assert np.max(np.abs(jeffrey - direct)) < 1e-12

    def test_vanishing_confidence_endpoint(self, kb_two):
        b = kb_two.prior()
        b2 = update_belief(b, kb_two, EvidenceTriple("f1", "yes", 1e-9))
        assert np.max(np.abs(b2.probs() - b.probs())) < 1e-8

    def test_hard_updates_commute(self, rng):
        kb = random_kb(rng, k=4, n=5)
        evidence = [
            EvidenceTriple(f.id, f.values[int(rng.integers(len(f.values)))], 1.0)
            for f in kb.features
        ]
        base = None
        for perm in itertools.permutations(evidence):
            b = kb.prior()
            for e in perm:
                b = update_belief(b, kb, e)
            if base is None:
                base = b.probs()
            else:
                assert np.max(np.abs(b.probs() - base)) < 1e-9

    def test_no_nan_after_long_low_likelihood_runs(self, rng):
        diseases = [Disease(f"d{i}", f"d{i}", 1.0) for i in range(3)]
        feats = [
            Feature("f1", "weird sign", "binary", BINARY_VALUES, "Do you have the weird sign?")
        ]
        # near-degenerate: one disease at ~1e-6 likelihood for yes
        counts = {
            ("d0", "f1"): {"yes": 0.0, "no": 100.0},
            ("d1", "f1"): {"yes": 99.0, "no": 1.0},
            ("d2", "f1"): {"yes": 50.0, "no": 50.0},
        }
        kb = KnowledgeBase(1, diseases, feats, counts)
        b = kb.prior()
        for _ in range(25):
            b = update_belief(b, kb, EvidenceTriple("f1", "yes", 1.0))
        assert np.all(np.isfinite(b.log_probs))
        assert math.exp(float(np.logaddexp.reduce(b.log_probs))) == pytest.approx(1.0, abs=1e-9)


class TestNumericSoftMatch:
    @pytest.fixture
    def kb_numeric(self):
        diseases = [Disease("d1", "one", 1.0), Disease("d2", "two", 1.0)]
        values = tuple(str(v) for v in range(11))
        f = Feature("pain", "pain level", "numeric", values,
                    "On a scale from 0 to 10, how bad is the pain?",
                    numeric_scale=(0.0, 10.0, 1.0))
        rngl = np.random.default_rng(7)
        counts = {}
        for d in ("d1", "d2"):
            p = rngl.dirichlet(np.ones(11))
            counts[(d, "pain")] = {v: float(x) * 100.0 for v, x in zip(values, p)}
        return KnowledgeBase(1, diseases, [f], counts)

    def test_sigma_to_zero_recovers_point_likelihood(self, kb_numeric):
        b = kb_numeric.prior()
        soft = update_belief(b, kb_numeric, EvidenceTriple("pain", 7.0, 1.0), numeric_sigma=1e-6)
        point = b.probs() * kb_numeric.likelihood_vector("pain", "7")
        point /= point.sum()
        assert np.max(np.abs(soft.probs() - point)) < 1e-6

    def test_off_grid_reading_accepted(self, kb_numeric):
        b = kb_numeric.prior()
        b2 = update_belief(b, kb_numeric, EvidenceTriple("pain", 6.4, 1.0))
        assert np.isfinite(b2.log_probs).all()

    def test_out_of_scale_reading_rejected(self, kb_numeric):
        with pytest.raises(ValueError, match="outside numeric scale"):
            update_belief(kb_numeric.prior(), kb_numeric, EvidenceTriple("pain", 11.5, 1.0))

    def test_soft_match_mixes_neighbours(self, kb_numeric):
        # a reading between grid points must blend adjacent conditionals
        b = kb_numeric.prior()
        mid = update_belief(b, kb_numeric, EvidenceTriple("pain", 6.5, 1.0), numeric_sigma=0.5)
        at6 = update_belief(b, kb_numeric, EvidenceTriple("pain", 6.0, 1.0), numeric_sigma=0.5)
        at7 = update_belief(b, kb_numeric, EvidenceTriple("pain", 7.0, 1.0), numeric_sigma=0.5)
        p_mid = mid.probs()[0]
        assert min(at6.probs()[0], at7.probs()[0]) <= p_mid <= max(at6.probs()[0], at7.probs()[0])


class TestEntropy:
    def test_uniform_49(self):
        b = belief_from_probs(np.ones(49), tuple(f"d{i}" for i in range(49)))
        assert entropy(b) == pytest.approx(math.log2(49), abs=1e-12)
        assert entropy(b) == pytest.approx(5.6147, abs=1e-4)

    def test_one_hot_zero(self):
        b = belief_from_probs([1.0, 0.0, 0.0], ("a", "b", "c"))
        assert entropy(b) == 0.0

    def test_hand_value_09_01(self):
        b = belief_from_probs([0.9, 0.1], ("a", "b"))
        assert entropy(b) == pytest.approx(0.4690, abs=1e-4)

    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_bounds(self, weights):
        order = tuple(f"d{i}" for i in range(len(weights)))
        b = belief_from_probs(weights, order)
        h = entropy(b)
        assert -1e-12 <= h <= math.log2(len(weights)) + 1e-12


class TestTopK:
    def test_uniform_tie_goes_to_lowest_id(self):
        b = belief_from_probs([1, 1, 1], ("d3", "d1", "d2"))
        assert top_k(b, 1)[0][0] == "d1"

    def test_direct_sort(self):
        b = belief_from_probs([0.2, 0.5, 0.3], ("d1", "d2", "d3"))
        assert [d for d, _ in top_k(b, 2)] == ["d2", "d3"]

    def test_full_ranking_sums_to_one(self):
        b = belief_from_probs([0.2, 0.5, 0.3], ("d1", "d2", "d3"))
        total = sum(p for _, p in top_k(b, 3))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_k_out_of_range(self):
        b = belief_from_probs([1, 1], ("a", "b"))
        with pytest.raises(ValueError):
            top_k(b, 0)
        with pytest.raises(ValueError):
            top_k(b, 3)
