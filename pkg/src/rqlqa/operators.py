"""Trigger-word operator detection, scope resolution, and query assembly.

Trigger words flag negation, disjunction, preference, and proximity
operators in a sentence.  Deterministic rules attach each labeled segment
within a token window of a trigger to that trigger's scope, a second rule
layer composes the operators (negation distributes over a disjunction and
flips it into a conjunction), and the composed chains are assembled into a
final query over the labeled phrases.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import LabelSequence, Question, Segment, segments_from_labels
from .rql import (
    Clause,
    OP_IN_SET,
    OP_NEAR,
    OP_NOT,
    OP_PREF,
    RqlQuery,
    validate_query,
)

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 4

OP_OR = "OR"  # scope-level pseudo-operator; never appears in clause chains

DEFAULT_SEEDS = {
    OP_NOT: ["not", "no", "without", "avoid", "never"],
    OP_OR: ["or", "either", "alternatively"],
    OP_PREF: ["prefer", "preferably", "ideally", "rather"],
    OP_NEAR: ["near", "close", "nearby", "around", "walking distance"],
}


class AssemblyError(Exception):
    pass


@dataclass
class TriggerLexicon:
    """Trigger words per operator; each entry flagged seed or expanded."""

    entries: dict[str, dict[str, str]]  # op -> word -> "seed" | "expanded"

    @staticmethod
    def from_seeds(seeds: dict[str, list[str]] | None = None) -> "TriggerLexicon":
        seeds = seeds if seeds is not None else DEFAULT_SEEDS
        return TriggerLexicon(
            entries={op: {w: "seed" for w in words} for op, words in seeds.items()}
        )

    @staticmethod
    def from_file(path) -> "TriggerLexicon":
        with open(path, encoding="utf-8") as fh:
            return TriggerLexicon.from_seeds(json.load(fh))

    def words(self, op: str) -> set[str]:
        return set(self.entries.get(op, {}))


@dataclass(frozen=True)
class OperatorSpan:
    op: str
    trigger_start: int
    trigger_end: int
    segments: tuple[Segment, ...]


def expand_trigger_lexicon(
    seeds: TriggerLexicon, vectors: dict[str, np.ndarray], threshold: float = 0.7
) -> TriggerLexicon:
    """Add vocabulary words whose cosine similarity to any seed word reaches
    the threshold.  Multi-word seeds and out-of-vocabulary seeds are skipped."""
    entries = {op: dict(words) for op, words in seeds.entries.items()}
    norms = {w: v / np.linalg.norm(v) for w, v in vectors.items() if np.linalg.norm(v) > 0}
    for op, words in seeds.entries.items():
        seed_vecs = []
        for w in words:
            if " " in w:
                continue
            if w in norms:
                seed_vecs.append(norms[w])
            else:
                log.debug("no vector for seed word %r", w)
        if not seed_vecs:
            continue
        for cand, vec in norms.items():
            if cand in entries[op]:
                continue
            if max(float(vec @ s) for s in seed_vecs) >= threshold:
                entries[op][cand] = "expanded"
    return TriggerLexicon(entries=entries)


def _find_triggers(question: Question, lexicon: TriggerLexicon) -> list[tuple[str, int, int]]:
    """(op, start, end) trigger spans; bigram entries matched first."""
    tokens = [tok.text.lower() for tok in question.tokens]
    lemmas = [tok.lemma.lower() for tok in question.tokens]
    found = []
    claimed: set[int] = set()
    for op, words in lexicon.entries.items():
        for phrase in sorted(words, key=lambda w: -len(w.split())):
            parts = phrase.split()
            for i in range(len(tokens) - len(parts) + 1):
                span = range(i, i + len(parts))
                if any(j in claimed for j in span):
                    continue
                if question.tokens[i].sent != question.tokens[i + len(parts) - 1].sent:
                    continue
                if all(
                    tokens[i + k] == p or lemmas[i + k] == p
                    for k, p in enumerate(parts)
                ):
                    found.append((op, i, i + len(parts)))
                    if len(parts) > 1:
                        claimed.update(span)
    found.sort(key=lambda f: (f[1], f[0]))
    return found


def _segment_distance(seg: Segment, start: int, end: int) -> int:
    if seg.end <= start:
        return start - seg.end + 1
    if seg.start >= end:
        return seg.start - end + 1
    return 0


def detect_operators(
    question: Question,
    labels: LabelSequence,
    lexicon: TriggerLexicon,
    window: int = DEFAULT_WINDOW,
) -> list[OperatorSpan]:
    """Attach labeled segments to operator triggers.

    A segment is in scope when it lies within the window (in tokens) of the
    trigger and in the same sentence.  When several triggers of the same
    operator compete for a segment, the nearest wins; ties go to the earlier
    trigger.  Only NOT, OR, PREF, and NEAR are detected.
    """
    segments = segments_from_labels(question, labels)
    triggers = _find_triggers(question, lexicon)

    # op -> segment -> (distance, trigger order, trigger index)
    claims: dict[tuple[str, int], tuple[int, int, Segment]] = {}
    for order, (op, start, end) in enumerate(triggers):
        sent = question.tokens[start].sent
        for seg in segments:
            if question.tokens[seg.start].sent != sent:
                continue
            dist = _segment_distance(seg, start, end)
            if dist > window:
                continue
            key = (op, order)
            claims.setdefault(key, (start, end, []))[2].append(seg)

    # Resolve competition per (op, segment): nearest trigger, then earliest.
    # Disjunction triggers are exempt: the disjuncts of "either X or Y" flank
    # both trigger words, so every OR trigger keeps its full scope and
    # duplicate groups collapse during assembly.
    best: dict[tuple[str, Segment], tuple[int, int]] = {}
    for (op, order), (start, end, segs) in claims.items():
        if op == OP_OR:
            continue
        for seg in segs:
            dist = _segment_distance(seg, start, end)
            key = (op, seg)
            if key not in best or (dist, order) < best[key]:
                best[key] = (dist, order)

    spans = []
    for (op, order), (start, end, segs) in sorted(claims.items(), key=lambda kv: kv[0][1]):
        kept = tuple(
            seg for seg in segs
            if op == OP_OR
            or best[(op, seg)] == (_segment_distance(seg, start, end), order)
        )
        if kept:
            spans.append(
                OperatorSpan(op=op, trigger_start=start, trigger_end=end, segments=kept)
            )
    return spans


@dataclass
class ComposedOperators:
    """Per-segment operator chains plus surviving disjunction groups."""

    chains: dict[Segment, tuple[str, ...]]
    or_groups: list[tuple[Segment, ...]]  # disjunctions that were not rewritten
    merged_sets: list[tuple[tuple[str, ...], tuple[Segment, ...]]]
    # merged_sets: negated disjunctions collapsed into one set-membership
    # clause (chain, member segments)


def compose_operators(spans: list[OperatorSpan], segments=None) -> ComposedOperators:
    """Normalize detected spans into per-segment chains.

    Negation over a disjunction distributes over all disjuncts and the
    disjunction becomes a conjunction; when the disjuncts share a label the
    negated disjuncts collapse into a single NOT set-membership clause.
    PREF composes outermost.  Chains are capped at three operators.
    """
    per_segment: dict[Segment, set[str]] = {}
    or_spans: list[OperatorSpan] = []
    all_segments = list(segments) if segments is not None else []
    for span in spans:
        for seg in span.segments:
            per_segment.setdefault(seg, set())
        if span.op == OP_OR:
            or_spans.append(span)
        else:
            for seg in span.segments:
                per_segment[seg].add(span.op)
    for seg in all_segments:
        per_segment.setdefault(seg, set())

    chains: dict[Segment, tuple[str, ...]] = {}
    or_groups: list[tuple[Segment, ...]] = []
    merged_sets: list[tuple[tuple[str, ...], tuple[Segment, ...]]] = []
    consumed: set[Segment] = set()

    for span in or_spans:
        group = [seg for seg in span.segments if seg not in consumed]
        if len(group) < 2:
            continue
        negated = any(OP_NOT in per_segment.get(seg, ()) for seg in group)
        if negated:
            # NOT over (A OR B) => NOT A AND NOT B; same-label disjuncts
            # collapse to NOT-membership over the set {A, B}.
            preferred = any(OP_PREF in per_segment.get(seg, ()) for seg in group)
            if len({seg.label for seg in group}) == 1:
                chain = ([OP_PREF] if preferred else []) + [OP_NOT, OP_IN_SET]
                merged_sets.append((tuple(chain), tuple(group)))
                consumed.update(group)
            else:
                for seg in group:
                    per_segment[seg].add(OP_NOT)
                    if preferred:
                        per_segment[seg].add(OP_PREF)
        elif tuple(group) not in or_groups:
            or_groups.append(tuple(group))

    for seg, ops in per_segment.items():
        if seg in consumed:
            continue
        chain = []
        if OP_PREF in ops:
            chain.append(OP_PREF)
        if OP_NOT in ops:
            chain.append(OP_NOT)
        if OP_NEAR in ops:
            chain.append(OP_NEAR)
        chains[seg] = tuple(chain[:3])

    return ComposedOperators(chains=chains, or_groups=or_groups, merged_sets=merged_sets)


def segment_phrase(question: Question, seg: Segment) -> str:
    return " ".join(question.tokens[i].text for i in seg.span())


def _clause_label(tag: str) -> str:
    # Sibling-entity mentions surface as bare-x clauses in the query.
    return "x" if tag == "x.sibling" else tag


def assemble_rql(
    question: Question,
    labels: LabelSequence,
    composed: ComposedOperators,
) -> tuple[RqlQuery, list[str]]:
    """Build the final query: one clause per segment, conjunction by default,
    disjunction groups preserved.  Returns (query, warnings)."""
    segments = segments_from_labels(question, labels)
    if not segments and not composed.merged_sets:
        raise AssemblyError("no labeled content")
    warnings: list[str] = []

    merged_members = {seg for _, group in composed.merged_sets for seg in group}
    clause_of: dict[Segment, int] = {}
    clauses: list[Clause] = []

    for seg in segments:
        if seg in merged_members:
            continue
        chain = composed.chains.get(seg, ())
        if OP_NEAR in chain and seg.label != "x.location":
            warnings.append(
                f"dropped NEAR on {seg.label} segment {segment_phrase(question, seg)!r}"
            )
            chain = tuple(op for op in chain if op != OP_NEAR)
        clause_of[seg] = len(clauses)
        clauses.append(
            Clause(
                label=_clause_label(seg.label),
                ops=chain,
                phrases=(segment_phrase(question, seg),),
            )
        )

    for chain, group in composed.merged_sets:
        label = _clause_label(group[0].label)
        if OP_NEAR in chain and label != "x.location":
            chain = tuple(op for op in chain if op != OP_NEAR)
        clauses.append(
            Clause(
                label=label,
                ops=tuple(chain),
                phrases=tuple(segment_phrase(question, seg) for seg in group),
            )
        )

    if not clauses:
        raise AssemblyError("no labeled content")

    # Connective tree: OR groups become disjunction subtrees, everything else
    # joins the top-level conjunction.
    in_or: set[int] = set()
    subtrees = []
    for group in composed.or_groups:
        idxs = [clause_of[seg] for seg in group if seg in clause_of]
        idxs = [i for i in idxs if i not in in_or]
        if len(idxs) < 2:
            continue
        node = idxs[0]
        for i in idxs[1:]:
            node = ("or", node, i)
        subtrees.append(node)
        in_or.update(idxs)
    for i in range(len(clauses)):
        if i not in in_or:
            subtrees.append(i)
    tree = subtrees[0]
    for node in subtrees[1:]:
        tree = ("and", tree, node)
    # Order-stable tree: leaves appear in clause order within each group.
    query = RqlQuery(clauses=tuple(clauses), tree=tree)
    problems = validate_query(query)
    if problems:
        raise AssemblyError("; ".join(problems))
    return query, warnings
