"""Shared helpers for the test suite: random model construction, brute-force
decoding oracles, and a synthetic hidden-chain corpus generator."""

from __future__ import annotations

import itertools

import numpy as np

from rqlqa.corpus import (
    DEFAULT_LABEL_SUBSET,
    LabelSequence,
    PartialLabeling,
    Question,
    Token,
    UNKNOWN,
)
from rqlqa.crf import (
    CONSTRAINT_ATTR_EXISTS,
    CONSTRAINT_TYPE_EXISTS,
    CONSTRAINT_TYPE_SAME_SENTENCE,
    Constraint,
    ConstraintSet,
    CrfModel,
)
from rqlqa.features import FeatureExtractor

TIE_EPS = 1e-9


def make_token(text: str, sent: int) -> Token:
    return Token(
        text=text, lemma=text.lower(), pos="NN", ner="O", cluster="UNK",
        dep_head=None, sent=sent,
    )


def chain_question(qid: str, words, sents=None) -> Question:
    sents = sents or [0] * len(words)
    return Question(
        id=qid,
        tokens=tuple(make_token(w, s) for w, s in zip(words, sents)),
    )


def random_model(
    rng: np.random.Generator,
    num_features: int = 12,
    labels=DEFAULT_LABEL_SUBSET,
    scale: float = 1.0,
) -> CrfModel:
    """Model with random weights over synthetic single-feature tokens.

    The extractor is pre-frozen with features tok0..tok{F-1}; questions built
    by `random_question` use those words so each token fires one feature."""
    extractor = FeatureExtractor()
    for i in range(num_features):
        extractor._lookup(f"w=tok{i}")
    extractor.freeze()
    return CrfModel(
        labels=tuple(labels),
        emissions=rng.normal(scale=scale, size=(num_features, len(labels))),
        transitions=rng.normal(scale=scale, size=(len(labels), len(labels))),
        sigma2=10.0,
        extractor=extractor,
    )


def random_question(
    rng: np.random.Generator, qid: str, num_features: int, max_len: int = 8,
    max_sents: int = 3,
) -> Question:
    n = int(rng.integers(2, max_len + 1))
    words = [f"tok{int(rng.integers(0, num_features))}" for _ in range(n)]
    # Non-decreasing sentence indices with at most max_sents sentences.
    cuts = sorted(rng.integers(0, max_sents, size=n))
    return chain_question(qid, words, sents=[int(c) for c in cuts])


def random_constraints(rng: np.random.Generator) -> ConstraintSet:
    return ConstraintSet(
        constraints=(
            Constraint(CONSTRAINT_TYPE_EXISTS, hard=True),
            Constraint(
                CONSTRAINT_ATTR_EXISTS, hard=False, rho=float(rng.uniform(0, 3))
            ),
            Constraint(
                CONSTRAINT_TYPE_SAME_SENTENCE,
                hard=False,
                rho=float(rng.uniform(0, 3)),
            ),
        )
    )


def brute_force_decode(
    model: CrfModel,
    question: Question,
    constraints: ConstraintSet | None = None,
    clamps=None,
):
    """Exhaustive maximizer of the (optionally penalized) sequence score.

    Scoring is vectorized over all candidate labelings.  Ties within TIE_EPS
    resolve to the lexicographically smallest labeling in canonical label
    order, mirroring the decoder's documented tie rule.  Returns
    (label index tuple, objective value).
    """
    e = model.emission_scores(question)
    n, L = e.shape
    allowed = [
        [clamps[t]] if (clamps is not None and clamps[t] is not None) else range(L)
        for t in range(n)
    ]
    seqs = np.array(list(itertools.product(*allowed)), dtype=int)  # (M, n)
    scores = e[np.arange(n), seqs].sum(axis=1)
    if n > 1:
        scores += model.transitions[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)

    if constraints is not None:
        sents = np.array([tok.sent for tok in question.tokens])
        type_idx = model.label_index("x.type")
        attr_idx = model.label_index("x.attribute")
        is_type = seqs == type_idx
        c = constraints.get(CONSTRAINT_TYPE_EXISTS)
        if c is not None and type_idx is not None:
            scores = np.where(is_type.any(axis=1), scores, -np.inf)
        c = constraints.get(CONSTRAINT_ATTR_EXISTS)
        if c is not None and attr_idx is not None:
            scores -= c.rho * (~(seqs == attr_idx).any(axis=1)).astype(float)
        c = constraints.get(CONSTRAINT_TYPE_SAME_SENTENCE)
        if c is not None and type_idx is not None:
            distinct = np.zeros(len(seqs))
            for s in np.unique(sents):
                distinct += (is_type & (sents == s)).any(axis=1)
            scores -= c.rho * np.maximum(distinct - 1, 0)

    top = scores.max()
    # itertools.product enumerates in lexicographic order, so the first
    # near-maximal row is the canonical tie-break winner.
    winner = int(np.argmax(scores >= top - TIE_EPS))
    return tuple(int(y) for y in seqs[winner]), float(top)


def random_partial(rng: np.random.Generator, question: Question, labels) -> PartialLabeling:
    seq = tuple(
        labels[int(rng.integers(0, len(labels)))] if rng.random() < 0.5 else UNKNOWN
        for _ in question.tokens
    )
    return PartialLabeling(question_id=question.id, labels=seq)


# ---------------------------------------------------------------------------
# Synthetic hidden-chain corpus for the semi-supervision experiment


CHAIN_LABELS = ("other", "x.type", "x.attribute", "x.location")
CHAIN_VOCAB = [f"w{i}" for i in range(12)]


def chain_corpus_question(rng: np.random.Generator, qid: str):
    """One sequence from a sticky 4-state chain; each state prefers its own
    block of 3 emission symbols with probability 0.7."""
    n = int(rng.integers(6, 13))
    trans = np.full((4, 4), 0.1)
    np.fill_diagonal(trans, 0.7)
    trans /= trans.sum(axis=1, keepdims=True)
    state = int(rng.integers(0, 4))
    words, labels = [], []
    for _ in range(n):
        labels.append(CHAIN_LABELS[state])
        if rng.random() < 0.7:
            words.append(CHAIN_VOCAB[3 * state + int(rng.integers(0, 3))])
        else:
            words.append(CHAIN_VOCAB[int(rng.integers(0, 12))])
        state = int(rng.choice(4, p=trans[state]))
    question = chain_question(qid, words)
    return question, LabelSequence(question_id=qid, labels=tuple(labels))


def chain_corpus(rng: np.random.Generator, n_labeled=20, n_partial=200, n_held=100,
                 mask=0.5):
    labeled = [chain_corpus_question(rng, f"l{i}") for i in range(n_labeled)]
    partials = []
    for i in range(n_partial):
        question, gold = chain_corpus_question(rng, f"p{i}")
        seq = tuple(
            l if rng.random() > mask else UNKNOWN for l in gold.labels
        )
        partials.append((question, PartialLabeling(question_id=question.id, labels=seq)))
    held = [chain_corpus_question(rng, f"h{i}") for i in range(n_held)]
    return labeled, partials, held
