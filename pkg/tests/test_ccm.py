"""Exact constrained decoding against brute-force enumeration, constraint
satisfaction guarantees, and penalty weight estimation."""

import math

import numpy as np
import pytest

import support
from rqlqa.corpus import LabelSequence, PartialLabeling, UNKNOWN
from rqlqa.crf import (
    CONSTRAINT_ATTR_EXISTS,
    CONSTRAINT_TYPE_EXISTS,
    CONSTRAINT_TYPE_SAME_SENTENCE,
    Constraint,
    ConstraintSet,
    ccm_decode,
    complete_partial,
    constraint_violations,
    default_constraints,
    estimate_rho,
    penalized_objective,
    viterbi_decode,
)


def label_indices(model, seq):
    return tuple(model.labels.index(l) for l in seq.labels)


def test_constraint_violation_scores():
    question = support.chain_question(
        "c", ["a", "b", "c", "d"], sents=[0, 0, 1, 1]
    )
    cons = default_constraints()
    v = constraint_violations(cons, question, ("other",) * 4)
    assert v == {
        CONSTRAINT_TYPE_EXISTS: 1.0,
        CONSTRAINT_ATTR_EXISTS: 1.0,
        CONSTRAINT_TYPE_SAME_SENTENCE: 0.0,
    }
    v = constraint_violations(
        cons, question, ("x.type", "x.attribute", "x.type", "other")
    )
    assert v[CONSTRAINT_TYPE_EXISTS] == 0.0
    assert v[CONSTRAINT_ATTR_EXISTS] == 0.0
    assert v[CONSTRAINT_TYPE_SAME_SENTENCE] == 1.0  # two sentences with types


def test_penalized_objective_hard_violation_is_minus_inf():
    rng = np.random.default_rng(0)
    model = support.random_model(rng)
    question = support.chain_question("c", ["tok0", "tok1"])
    cons = default_constraints()
    assert penalized_objective(model, cons, question, ("other", "other")) == -math.inf
    finite = penalized_objective(model, cons, question, ("x.type", "x.attribute"))
    assert math.isfinite(finite)


def test_viterbi_matches_brute_force():
    rng = np.random.default_rng(11)
    for trial in range(100):
        model = support.random_model(rng)
        question = support.random_question(rng, f"v{trial}", 12)
        got = viterbi_decode(model, question)
        want_idx, want_val = support.brute_force_decode(model, question)
        assert label_indices(model, got) == want_idx
        assert model.sequence_score(question, got) == pytest.approx(want_val, abs=1e-9)


def test_ccm_decode_matches_brute_force():
    rng = np.random.default_rng(12)
    for trial in range(100):
        model = support.random_model(rng)
        question = support.random_question(rng, f"c{trial}", 12)
        cons = support.random_constraints(rng)
        got = ccm_decode(model, cons, question)
        want_idx, want_val = support.brute_force_decode(model, question, cons)
        assert label_indices(model, got) == want_idx
        assert penalized_objective(model, cons, question, got) == pytest.approx(
            want_val, abs=1e-9
        )


def test_complete_partial_matches_brute_force():
    rng = np.random.default_rng(13)
    for trial in range(100):
        model = support.random_model(rng)
        question = support.random_question(rng, f"p{trial}", 12)
        cons = support.random_constraints(rng)
        partial = support.random_partial(rng, question, model.labels)
        clamps = [
            None if l == UNKNOWN else model.labels.index(l)
            for l in partial.labels
        ]
        if all(c is not None for c in clamps):
            continue  # fully observed sequences short-circuit; tested below
        got = complete_partial(model, cons, question, partial)
        want_idx, _ = support.brute_force_decode(model, question, cons, clamps)
        assert label_indices(model, got) == want_idx
        # Observed positions stay clamped.
        for l_got, l_partial in zip(got.labels, partial.labels):
            if l_partial != UNKNOWN:
                assert l_got == l_partial


def test_complete_partial_fully_observed_is_identity():
    rng = np.random.default_rng(14)
    model = support.random_model(rng)
    question = support.chain_question("f", ["tok0", "tok1", "tok2"])
    partial = PartialLabeling(
        question_id="f", labels=("other", "x.attribute", "other")
    )
    got = complete_partial(model, default_constraints(), question, partial)
    # Returned verbatim even though it violates the hard type constraint.
    assert got.labels == partial.labels


def test_ccm_decode_always_emits_a_type():
    rng = np.random.default_rng(15)
    cons = default_constraints()
    for trial in range(300):
        model = support.random_model(rng)
        question = support.random_question(rng, f"t{trial}", 12)
        got = ccm_decode(model, cons, question)
        assert "x.type" in got.labels


def test_high_same_sentence_penalty_confines_types():
    rng = np.random.default_rng(16)
    cons = default_constraints(rho_same=10.0)
    multi = 0
    for trial in range(200):
        model = support.random_model(rng)
        question = support.random_question(rng, f"s{trial}", 12)
        got = ccm_decode(model, cons, question)
        sents = {
            question.tokens[i].sent
            for i, l in enumerate(got.labels)
            if l == "x.type"
        }
        if len(sents) > 1:
            # Allowed only when provably optimal despite the penalty.
            want_idx, _ = support.brute_force_decode(model, question, cons)
            assert label_indices(model, got) == want_idx
            multi += 1
    assert multi < 20  # the penalty must actually bite


def test_tie_break_prefers_canonical_label_order():
    rng = np.random.default_rng(17)
    model = support.random_model(rng)
    model.emissions[:] = 0.0
    model.transitions[:] = 0.0
    question = support.chain_question("tie", ["tok0", "tok1"])
    got = viterbi_decode(model, question)
    # Full tie: the all-first-label sequence wins.
    assert got.labels == ("other", "other")
    got = ccm_decode(model, default_constraints(rho_attr=0.0, rho_same=0.0), question)
    # Hard constraint forces one x.type; the lexicographically smallest
    # satisfying sequence keeps earlier positions at the first label.
    assert got.labels == ("other", "x.type")


def test_estimate_rho_formula():
    rng = np.random.default_rng(18)
    cons = default_constraints()
    # 4 sequences, 1 violates the attribute constraint -> -ln(2/6).
    corpus = []
    for i, labels in enumerate([
        ("x.type", "x.attribute"),
        ("x.type", "x.attribute"),
        ("x.type", "x.attribute"),
        ("x.type", "other"),
    ]):
        q = support.chain_question(f"r{i}", ["a", "b"])
        corpus.append((q, LabelSequence(question_id=q.id, labels=labels)))
    rhos = estimate_rho(cons, corpus)
    assert rhos[CONSTRAINT_ATTR_EXISTS] == pytest.approx(-math.log(2 / 6))
    assert rhos[CONSTRAINT_TYPE_SAME_SENTENCE] == pytest.approx(-math.log(1 / 6))
    # 100 sequences, no violations -> -ln(1/102).
    corpus = []
    for i in range(100):
        q = support.chain_question(f"z{i}", ["a", "b"])
        corpus.append(
            (q, LabelSequence(question_id=q.id, labels=("x.type", "x.attribute")))
        )
    rhos = estimate_rho(cons, corpus)
    assert rhos[CONSTRAINT_ATTR_EXISTS] == pytest.approx(-math.log(1 / 102))
    with pytest.raises(ValueError):
        estimate_rho(cons, [])


def test_constraint_set_guards():
    with pytest.raises(ValueError):
        ConstraintSet(
            constraints=(
                Constraint("dup", hard=True),
                Constraint("dup", hard=False),
            )
        )
    cons = default_constraints(rho_attr=0.5, rho_same=1.5)
    updated = cons.with_rhos({CONSTRAINT_ATTR_EXISTS: 2.0})
    assert updated.get(CONSTRAINT_ATTR_EXISTS).rho == 2.0
    assert updated.get(CONSTRAINT_TYPE_SAME_SENTENCE).rho == 1.5
    assert updated.rhos() == {
        CONSTRAINT_ATTR_EXISTS: 2.0,
        CONSTRAINT_TYPE_SAME_SENTENCE: 1.5,
    }
