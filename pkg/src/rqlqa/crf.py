"""Linear-chain CRF with global constraints and semi-supervised training.

The model scores a labeling by per-token emission weights over sparse
features plus label-bigram transition weights.  Three global constraints can
be layered on top: a hard "at least one x.type token" constraint, a soft
penalty for sequences with no x.attribute, and a soft per-sentence penalty
that discourages x.type tokens spread over multiple sentences.  Constrained
decoding is exact, via dynamic programming over an augmented state that
tracks which constraints the prefix has satisfied.

Semi-supervised training interpolates supervised parameters with parameters
re-learned from partially labeled sequences whose gaps are filled in by
constrained inference.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from .corpus import (
    DEFAULT_LABEL_SUBSET,
    PartialLabeling,
    Question,
    LabelSequence,
    UNKNOWN,
)
from .features import FeatureExtractor

MODEL_FORMAT_VERSION = "rqlqa-model-v1"

HARD_PENALTY = float("inf")

CONSTRAINT_TYPE_EXISTS = "type_exists"
CONSTRAINT_ATTR_EXISTS = "attr_exists"
CONSTRAINT_TYPE_SAME_SENTENCE = "type_same_sentence"


class NumericalError(Exception):
    pass


class NonConvergence(UserWarning):
    pass


@dataclass(frozen=True)
class Constraint:
    id: str
    hard: bool
    rho: float = 0.0  # ignored for hard constraints


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        ids = [c.id for c in self.constraints]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate constraint ids")

    def get(self, cid: str) -> Constraint | None:
        for c in self.constraints:
            if c.id == cid:
                return c
        return None

    def with_rhos(self, rhos: dict[str, float]) -> "ConstraintSet":
        updated = tuple(
            replace(c, rho=rhos[c.id]) if (not c.hard and c.id in rhos) else c
            for c in self.constraints
        )
        return ConstraintSet(constraints=updated)

    def rhos(self) -> dict[str, float]:
        return {c.id: c.rho for c in self.constraints if not c.hard}


def default_constraints(rho_attr: float = 1.0, rho_same: float = 1.0) -> ConstraintSet:
    return ConstraintSet(
        constraints=(
            Constraint(CONSTRAINT_TYPE_EXISTS, hard=True),
            Constraint(CONSTRAINT_ATTR_EXISTS, hard=False, rho=rho_attr),
            Constraint(CONSTRAINT_TYPE_SAME_SENTENCE, hard=False, rho=rho_same),
        )
    )


@dataclass
class CrfHyperparams:
    labels: tuple[str, ...] = DEFAULT_LABEL_SUBSET
    sigma2: float = 10.0
    max_iter: int = 500
    tol: float = 1e-5


@dataclass
class CodlConfig:
    gamma: float = 0.9
    max_iter: int = 10
    tol: float = 1e-8


@dataclass
class CrfModel:
    labels: tuple[str, ...]
    emissions: np.ndarray  # (num_features, num_labels)
    transitions: np.ndarray  # (num_labels, num_labels)
    sigma2: float
    extractor: FeatureExtractor

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    def label_index(self, label: str) -> int | None:
        try:
            return self.labels.index(label)
        except ValueError:
            return None

    def feature_matrix(self, question: Question) -> sparse.csr_matrix:
        feats = self.extractor.extract(question)
        rows, cols = [], []
        for t, idxs in enumerate(feats):
            rows.extend([t] * len(idxs))
            cols.extend(idxs)
        data = np.ones(len(rows))
        return sparse.csr_matrix(
            (data, (rows, cols)), shape=(len(feats), self.extractor.num_features)
        )

    def emission_scores(self, question: Question) -> np.ndarray:
        return np.asarray(self.feature_matrix(question) @ self.emissions)

    def sequence_score(self, question: Question, labels) -> float:
        """Unnormalized CRF score of a labeling."""
        idxs = self._label_indices(labels)
        e = self.emission_scores(question)
        score = sum(e[t, y] for t, y in enumerate(idxs))
        score += sum(
            self.transitions[idxs[t - 1], idxs[t]] for t in range(1, len(idxs))
        )
        return float(score)

    def _label_indices(self, labels) -> list[int]:
        seq = labels.labels if hasattr(labels, "labels") else labels
        out = []
        for label in seq:
            idx = self.label_index(label)
            if idx is None:
                raise ValueError(f"label {label!r} not in model label set")
            out.append(idx)
        return out

    # -- persistence --------------------------------------------------------

    def save(self, path, constraints: ConstraintSet | None = None):
        payload = {
            "version": MODEL_FORMAT_VERSION,
            "labels": list(self.labels),
            "sigma2": self.sigma2,
            "features": self.extractor.feature_ids,
            "emissions": self.emissions.tolist(),
            "transitions": self.transitions.tolist(),
            "rhos": constraints.rhos() if constraints else {},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @staticmethod
    def load(path) -> tuple["CrfModel", dict[str, float]]:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(
                f"unsupported model version {payload.get('version')!r}, "
                f"expected {MODEL_FORMAT_VERSION}"
            )
        extractor = FeatureExtractor()
        extractor.feature_ids = {k: int(v) for k, v in payload["features"].items()}
        extractor.freeze()
        model = CrfModel(
            labels=tuple(payload["labels"]),
            emissions=np.array(payload["emissions"], dtype=float),
            transitions=np.array(payload["transitions"], dtype=float),
            sigma2=float(payload["sigma2"]),
            extractor=extractor,
        )
        return model, {k: float(v) for k, v in payload["rhos"].items()}


# ---------------------------------------------------------------------------
# Likelihood and gradient


def _logsumexp(a: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis) if axis is not None else float(out.ravel()[0])


def forward_backward(e: np.ndarray, trans: np.ndarray):
    """Log-space alpha/beta tables and log partition for emission scores e."""
    n, L = e.shape
    alpha = np.empty((n, L))
    beta = np.empty((n, L))
    alpha[0] = e[0]
    for t in range(1, n):
        alpha[t] = e[t] + _logsumexp(alpha[t - 1][:, None] + trans, axis=0)
    beta[n - 1] = 0.0
    for t in range(n - 2, -1, -1):
        beta[t] = _logsumexp(trans + (e[t + 1] + beta[t + 1])[None, :], axis=1)
    log_z = _logsumexp(alpha[n - 1])
    if not np.isfinite(log_z):
        raise NumericalError("non-finite partition function")
    return alpha, beta, log_z


def token_marginals(e: np.ndarray, trans: np.ndarray) -> np.ndarray:
    alpha, beta, log_z = forward_backward(e, trans)
    return np.exp(alpha + beta - log_z)


def _ll_and_grad_cached(emissions, transitions, sigma2, cached):
    """Objective and gradient from precomputed (feature matrix, gold index)
    pairs; avoids re-extracting features inside the optimizer loop."""
    ll = 0.0
    grad_w = np.zeros_like(emissions)
    grad_t = np.zeros_like(transitions)
    for phi, idxs in cached:
        e = np.asarray(phi @ emissions)
        n, _ = e.shape
        idx_arr = np.asarray(idxs)
        alpha, beta, log_z = forward_backward(e, transitions)

        score = e[np.arange(n), idx_arr].sum() + transitions[
            idx_arr[:-1], idx_arr[1:]
        ].sum()
        ll += score - log_z

        marg = np.exp(alpha + beta - log_z)  # (n, L)
        target = -marg
        target[np.arange(n), idx_arr] += 1.0
        grad_w += np.asarray(phi.T @ target)

        if n > 1:
            np.add.at(grad_t, (idx_arr[:-1], idx_arr[1:]), 1.0)
            pair = (
                alpha[:-1, :, None]
                + transitions[None, :, :]
                + (e[1:] + beta[1:])[:, None, :]
                - log_z
            )
            grad_t -= np.exp(pair).sum(axis=0)

    ll -= (np.sum(emissions**2) + np.sum(transitions**2)) / (2.0 * sigma2)
    grad_w -= emissions / sigma2
    grad_t -= transitions / sigma2
    return ll, (grad_w, grad_t)


def crf_log_likelihood_and_gradient(model: CrfModel, examples):
    """Sum of per-sequence log-likelihoods and its gradient, both including
    the L2 penalty.  Gradient is returned as (d_emissions, d_transitions)."""
    cached = [
        (model.feature_matrix(q), model._label_indices(gold)) for q, gold in examples
    ]
    return _ll_and_grad_cached(
        model.emissions, model.transitions, model.sigma2, cached
    )


# ---------------------------------------------------------------------------
# Training


def crf_train(
    extractor: FeatureExtractor, examples, hyper: CrfHyperparams | None = None
) -> CrfModel:
    """Batch gradient ascent with adaptive step; deterministic given inputs."""
    hyper = hyper or CrfHyperparams()
    examples = list(examples)
    if not examples:
        raise ValueError("no training examples")

    if not extractor.frozen:
        for question, _ in examples:
            extractor.extract(question)
        extractor.freeze()

    L = len(hyper.labels)
    label_order = tuple(hyper.labels)
    lookup = {l: i for i, l in enumerate(label_order)}
    cached = []
    for question, gold in examples:
        seq = gold.labels if hasattr(gold, "labels") else gold
        idxs = [lookup[l] for l in seq]
        feats = extractor.extract(question)
        rows, cols = [], []
        for t, fidx in enumerate(feats):
            rows.extend([t] * len(fidx))
            cols.extend(fidx)
        phi = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)),
            shape=(len(feats), extractor.num_features),
        )
        cached.append((phi, idxs))

    W = np.zeros((extractor.num_features, L))
    T = np.zeros((L, L))
    step = 1.0 / max(len(examples), 1)
    ll, grad = _ll_and_grad_cached(W, T, hyper.sigma2, cached)
    converged = False
    for _ in range(hyper.max_iter):
        accepted = False
        for _ in range(40):
            W2 = W + step * grad[0]
            T2 = T + step * grad[1]
            cand_ll, cand_grad = _ll_and_grad_cached(W2, T2, hyper.sigma2, cached)
            if cand_ll >= ll:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        rel_change = abs(cand_ll - ll) / max(abs(ll), 1.0)
        W, T, ll, grad = W2, T2, cand_ll, cand_grad
        step *= 1.2
        if rel_change < hyper.tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            "optimizer hit the iteration cap before converging", NonConvergence
        )
    return CrfModel(
        labels=label_order,
        emissions=W,
        transitions=T,
        sigma2=hyper.sigma2,
        extractor=extractor,
    )


# ---------------------------------------------------------------------------
# Constraint violation scores


def constraint_violations(
    constraints: ConstraintSet, question: Question, labels
) -> dict[str, float]:
    """Per-constraint violation scores for a full labeling."""
    seq = labels.labels if hasattr(labels, "labels") else tuple(labels)
    type_positions = [i for i, l in enumerate(seq) if l == "x.type"]
    has_attr = any(l == "x.attribute" for l in seq)
    type_sentences = {question.tokens[i].sent for i in type_positions}
    scores = {}
    for c in constraints.constraints:
        if c.id == CONSTRAINT_TYPE_EXISTS:
            scores[c.id] = 0.0 if type_positions else 1.0
        elif c.id == CONSTRAINT_ATTR_EXISTS:
            scores[c.id] = 0.0 if has_attr else 1.0
        elif c.id == CONSTRAINT_TYPE_SAME_SENTENCE:
            scores[c.id] = float(max(len(type_sentences) - 1, 0))
        else:
            raise ValueError(f"unknown constraint {c.id!r}")
    return scores


def penalized_objective(
    model: CrfModel, constraints: ConstraintSet, question: Question, labels
) -> float:
    """CRF score minus weighted violations; -inf when a hard constraint is
    violated."""
    score = model.sequence_score(question, labels)
    for cid, d in constraint_violations(constraints, question, labels).items():
        c = constraints.get(cid)
        if d > 0:
            if c.hard:
                return float("-inf")
            score -= c.rho * d
    return score


# ---------------------------------------------------------------------------
# Exact decoding
#
# All decoders share one DP over an augmented state (bit 2: x.type seen in an
# earlier sentence, bit 1: x.type seen in the current sentence, bit 0:
# x.attribute seen anywhere).  A backward table of optimal suffix values
# followed by a greedy forward pass yields the lexicographically smallest
# maximizer, matching a brute-force scan in canonical label order.

_NUM_STATES = 8


def _decode(
    model: CrfModel,
    constraints: ConstraintSet,
    question: Question,
    clamps: list[int | None] | None = None,
) -> tuple[list[int], float]:
    e = model.emission_scores(question)
    n, L = e.shape
    trans = model.transitions
    sents = [tok.sent for tok in question.tokens]

    type_idx = model.label_index("x.type")
    attr_idx = model.label_index("x.attribute")
    hard_type = constraints.get(CONSTRAINT_TYPE_EXISTS) is not None and type_idx is not None
    c_attr = constraints.get(CONSTRAINT_ATTR_EXISTS)
    rho_attr = c_attr.rho if (c_attr and attr_idx is not None) else 0.0
    c_same = constraints.get(CONSTRAINT_TYPE_SAME_SENTENCE)
    rho_same = c_same.rho if (c_same and type_idx is not None) else 0.0

    def advance(state: int, y: int) -> tuple[int, float]:
        tb, tc, at = state >> 2 & 1, state >> 1 & 1, state & 1
        penalty = 0.0
        if y == type_idx:
            if tc == 0 and tb == 1:
                penalty = rho_same
            tc = 1
        if y == attr_idx:
            at = 1
        return (tb << 2) | (tc << 1) | at, penalty

    def cross_sentence(state: int) -> int:
        tb, tc, at = state >> 2 & 1, state >> 1 & 1, state & 1
        return ((tb | tc) << 2) | at

    def end_value(state: int) -> float:
        tb, tc, at = state >> 2 & 1, state >> 1 & 1, state & 1
        value = 0.0
        if hard_type and not (tb | tc):
            value = float("-inf")
        if at == 0 and attr_idx is not None and c_attr is not None:
            value -= rho_attr
        return value

    allowed = []
    for t in range(n):
        if clamps is not None and clamps[t] is not None:
            allowed.append([clamps[t]])
        else:
            allowed.append(list(range(L)))

    # best[t][y_prev][state]: optimal value of tokens t.. given the previous
    # label and the prefix state (already adjusted for t's sentence).
    NEG = float("-inf")
    best = np.full((n + 1, L + 1, _NUM_STATES), NEG)
    for y_prev in range(L + 1):
        for s in range(_NUM_STATES):
            best[n, y_prev, s] = end_value(s)
    for t in range(n - 1, -1, -1):
        boundary = t + 1 < n and sents[t + 1] != sents[t]
        for s in range(_NUM_STATES):
            step_vals = np.full(L, NEG)
            for y in allowed[t]:
                s2, penalty = advance(s, y)
                s_next = cross_sentence(s2) if boundary else s2
                step_vals[y] = e[t, y] - penalty + best[t + 1, y, s_next]
            for y_prev in range(L + 1):
                tr = trans[y_prev] if y_prev < L and t > 0 else 0.0
                vals = step_vals + (tr if t > 0 else 0.0)
                best[t, y_prev, s] = np.max(vals)

    # Greedy forward pass: smallest label index that attains the optimum.
    # The tolerance absorbs summation-order ulp noise so exact mathematical
    # ties still resolve to the canonically smaller label.
    eps = 1e-9
    total = best[0, L, 0]
    if not np.isfinite(total) and hard_type:
        raise NumericalError("constrained decoding infeasible")
    labels_out: list[int] = []
    state, y_prev = 0, L
    for t in range(n):
        boundary = t + 1 < n and sents[t + 1] != sents[t]
        step_vals = []
        for y in allowed[t]:
            s2, penalty = advance(state, y)
            s_next = cross_sentence(s2) if boundary else s2
            val = e[t, y] - penalty + best[t + 1, y, s_next]
            if t > 0 and y_prev < L:
                val += trans[y_prev, y]
            step_vals.append((val, y, s_next))
        target = max(v for v, _, _ in step_vals)
        _, y, state = next(item for item in step_vals if item[0] >= target - eps)
        labels_out.append(y)
        y_prev = y
    return labels_out, float(total)


def viterbi_decode(model: CrfModel, question: Question) -> LabelSequence:
    """MAP labeling; ties prefer the lower canonical label index."""
    idxs, _ = _decode(model, ConstraintSet(), question)
    return LabelSequence(
        question_id=question.id, labels=tuple(model.labels[i] for i in idxs)
    )


def ccm_decode(
    model: CrfModel, constraints: ConstraintSet, question: Question
) -> LabelSequence:
    """Exact argmax of the CRF score minus weighted constraint violations."""
    idxs, _ = _decode(model, constraints, question)
    return LabelSequence(
        question_id=question.id, labels=tuple(model.labels[i] for i in idxs)
    )


def complete_partial(
    model: CrfModel,
    constraints: ConstraintSet,
    question: Question,
    partial: PartialLabeling,
) -> LabelSequence:
    """Fill UNKNOWN positions by constrained inference; observed positions are
    clamped."""
    if partial.unknown_count == 0:
        return LabelSequence(question_id=partial.question_id, labels=partial.labels)
    clamps: list[int | None] = []
    for label in partial.labels:
        if label == UNKNOWN:
            clamps.append(None)
        else:
            idx = model.label_index(label)
            if idx is None:
                raise ValueError(f"clamped label {label!r} not in model label set")
            clamps.append(idx)
    idxs, _ = _decode(model, constraints, question, clamps=clamps)
    return LabelSequence(
        question_id=question.id, labels=tuple(model.labels[i] for i in idxs)
    )


# ---------------------------------------------------------------------------
# Penalty weight estimation


def estimate_rho(constraints: ConstraintSet, corpus) -> dict[str, float]:
    """Laplace-smoothed negative log-frequency of gold-corpus violations for
    each soft constraint: rho = -ln((V + 1) / (N + 2))."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty corpus")
    n = len(corpus)
    violated = {c.id: 0 for c in constraints.constraints if not c.hard}
    for question, gold in corpus:
        scores = constraint_violations(constraints, question, gold)
        for cid in violated:
            if scores[cid] > 0:
                violated[cid] += 1
    return {
        cid: float(-np.log((v + 1) / (n + 2))) for cid, v in violated.items()
    }


# ---------------------------------------------------------------------------
# Semi-supervised training


def _flatten(model: CrfModel, rhos: dict[str, float]) -> np.ndarray:
    parts = [model.emissions.ravel(), model.transitions.ravel()]
    parts.append(np.array([rhos[k] for k in sorted(rhos)]))
    return np.concatenate(parts)


def codl_train(
    labeled,
    partials,
    constraints: ConstraintSet,
    config: CodlConfig | None = None,
    hyper: CrfHyperparams | None = None,
    extractor: FeatureExtractor | None = None,
) -> tuple[CrfModel, dict[str, float]]:
    """Iterative constraint-driven semi-supervised training.

    Iteration 0 learns from the labeled set only.  Each later iteration
    completes the partial sequences with the current parameters, re-learns
    from the completed set, and interpolates both weights and penalty
    weights: new = gamma * supervised + (1 - gamma) * relearned.  The
    feature dictionary is frozen at iteration 0.
    """
    config = config or CodlConfig()
    hyper = hyper or CrfHyperparams()
    labeled = list(labeled)
    partials = list(partials)
    if not labeled:
        raise ValueError("labeled set must be non-empty")

    extractor = extractor or FeatureExtractor()
    if not extractor.frozen:
        for question, _ in labeled:
            extractor.extract(question)
        for question, _ in partials:
            extractor.extract(question)
        extractor.freeze()

    model0 = crf_train(extractor, labeled, hyper)
    rhos0 = estimate_rho(constraints, labeled)
    if not partials or config.gamma == 1.0:
        return model0, rhos0

    model, rhos = model0, dict(rhos0)
    prev_vec = _flatten(model, rhos)
    for _ in range(config.max_iter):
        current = constraints.with_rhos(rhos)
        completed = [
            (q, complete_partial(model, current, q, p)) for q, p in partials
        ]
        learned = crf_train(extractor, completed, hyper)
        rhos_u = estimate_rho(constraints, completed)
        g = config.gamma
        model = CrfModel(
            labels=model0.labels,
            emissions=g * model0.emissions + (1.0 - g) * learned.emissions,
            transitions=g * model0.transitions + (1.0 - g) * learned.transitions,
            sigma2=model0.sigma2,
            extractor=extractor,
        )
        rhos = {k: g * rhos0[k] + (1.0 - g) * rhos_u[k] for k in rhos0}
        vec = _flatten(model, rhos)
        if np.max(np.abs(vec - prev_vec)) < config.tol:
            break
        prev_vec = vec
    return model, rhos
