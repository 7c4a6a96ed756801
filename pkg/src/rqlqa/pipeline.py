"""Query compilation and answering: translates a parsed query into boolean
and geo queries over the entity index, with relaxation back-off, plus the
keyword-selection baseline."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .corpus import Question
from .index import BooleanQuery, EntityIndex, tokenize, resolve_type
from .rql import (
    OP_IN_RANGE,
    OP_IN_SET,
    OP_NEAR,
    OP_NOT,
    OP_PREF,
    RqlQuery,
)

log = logging.getLogger(__name__)

DEFAULT_NEAR_RADIUS_KM = 100.0


class CompileError(Exception):
    pass


class EmptyKeywords(Exception):
    pass


@dataclass
class NearPlan:
    """Two-stage proximity plan: gather cities within a radius of the anchor,
    then search entities restricted to those cities."""

    anchor_lat: float
    anchor_lon: float
    radius_km: float
    phrase: str


@dataclass
class CompiledQuery:
    boolean: BooleanQuery
    near: NearPlan | None = None
    warnings: list[str] = field(default_factory=list)


@dataclass
class AnswerList:
    question_id: str
    answers: list[tuple[str, str, float]]  # (entity id, name, score)
    attempted: bool
    backoff: int  # 0 = strict query succeeded

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.question_id,
                "attempted": self.attempted,
                "backoff": self.backoff,
                "answers": [
                    {"entity": eid, "name": name, "score": score}
                    for eid, name, score in self.answers
                ],
            }
        )


def _or_group_indices(tree, acc: set[int]):
    if isinstance(tree, int):
        return
    kind, left, right = tree
    if kind == "or":
        leaves: list[int] = []
        _collect_leaves(tree, leaves)
        acc.update(leaves)
    else:
        _or_group_indices(left, acc)
        _or_group_indices(right, acc)


def _collect_leaves(tree, out: list[int]):
    if isinstance(tree, int):
        out.append(tree)
    else:
        _collect_leaves(tree[1], out)
        _collect_leaves(tree[2], out)


def compile_query(
    rql: RqlQuery,
    index: EntityIndex,
    metadata_city: str | None = None,
    vectors=None,
    near_radius_km: float = DEFAULT_NEAR_RADIUS_KM,
    city_aliases: dict[str, str] | None = None,
) -> CompiledQuery:
    """Translate a validated query into a boolean query plus optional
    proximity plan.

    The first type clause picks the type filter; type phrases also join the
    optional groups since descriptive words sometimes ride along in the type
    phrase.  Attribute phrases become strict groups, negated ones excluded
    groups, disjunction members optional groups.  Preference chains carry no
    retrieval semantics and are stripped.
    """
    warnings: list[str] = []
    type_clauses = [c for c in rql.clauses if c.label == "x.type"]
    attr_clauses = [c for c in rql.clauses if c.label == "x.attribute"]
    if not type_clauses and not attr_clauses:
        raise CompileError("query has no type and no attribute clause")

    in_or: set[int] = set()
    _or_group_indices(rql.tree, in_or)

    query = BooleanQuery()
    near: NearPlan | None = None

    if type_clauses:
        first = type_clauses[0]
        query.kb_type = resolve_type(first.phrases[0], index.kb_types, vectors)
        for clause in type_clauses:
            for phrase in clause.phrases:
                query.should.append(tokenize(phrase))

    for i, clause in enumerate(rql.clauses):
        if clause.label != "x.attribute":
            continue
        ops = tuple(op for op in clause.ops if op != OP_PREF)
        negated = OP_NOT in ops
        for phrase in clause.phrases:
            group = tokenize(phrase)
            if not group:
                continue
            if negated:
                query.must_not.append(group)
            elif i in in_or or OP_IN_SET in ops or OP_IN_RANGE in ops:
                query.should.append(group)
            else:
                query.must.append(group)

    city: str | None = None
    for clause in rql.clauses:
        if clause.label != "x.location":
            continue
        ops = tuple(op for op in clause.ops if op != OP_PREF)
        if OP_NEAR in ops:
            anchor = index.city_record(clause.phrases[0], aliases=city_aliases)
            if anchor is None:
                warnings.append(
                    f"NEAR location {clause.phrases[0]!r} not resolvable; "
                    "falling back to a city filter"
                )
                city = clause.phrases[0]
            else:
                near = NearPlan(
                    anchor_lat=anchor.lat,
                    anchor_lon=anchor.lon,
                    radius_km=near_radius_km,
                    phrase=clause.phrases[0],
                )
        elif city is None and OP_NOT not in ops:
            city = clause.phrases[0]
    if city is None and near is None and metadata_city:
        city = metadata_city
    if near is None:
        query.city = city

    for w in warnings:
        log.warning(w)
    return CompiledQuery(boolean=query, near=near, warnings=warnings)


def _relax(query: BooleanQuery, level: int) -> BooleanQuery:
    """Back-off: level 1 demotes strict attribute groups to optional, level 2
    drops attribute groups entirely."""
    if level == 0:
        return query
    if level == 1:
        return BooleanQuery(
            must=[],
            should=query.should + query.must,
            must_not=list(query.must_not),
            kb_type=query.kb_type,
            city=query.city,
        )
    return BooleanQuery(
        must=[],
        should=list(query.should),
        must_not=list(query.must_not),
        kb_type=query.kb_type,
        city=query.city,
    )


def _execute(compiled: CompiledQuery, index: EntityIndex, query: BooleanQuery, k: int):
    if compiled.near is not None:
        plan = compiled.near
        nearby = index.geo_within(
            plan.anchor_lat, plan.anchor_lon, plan.radius_km, kb_type="city"
        )
        cities = {index.records[rid].name.lower() for rid, _ in nearby}
        results = []
        for rid, score in index.boolean_search(query, k=len(index.records)):
            if index.records[rid].city.lower() in cities:
                results.append((rid, score))
        return results[:k]
    return index.boolean_search(query, k=k)


def answer_question(
    rql: RqlQuery,
    index: EntityIndex,
    question_id: str,
    metadata_city: str | None = None,
    k: int = 3,
    vectors=None,
    near_radius_km: float = DEFAULT_NEAR_RADIUS_KM,
    max_backoff: int = 2,
) -> AnswerList:
    compiled = compile_query(
        rql,
        index,
        metadata_city=metadata_city,
        vectors=vectors,
        near_radius_km=near_radius_km,
    )
    strict = compiled.boolean
    for level in range(max_backoff + 1):
        relaxed = _relax(strict, level)
        if not relaxed.must and not relaxed.should:
            continue
        results = _execute(compiled, index, relaxed, k)
        if results:
            return AnswerList(
                question_id=question_id,
                answers=[
                    (rid, index.records[rid].name, score) for rid, score in results
                ],
                attempted=True,
                backoff=level,
            )
    return AnswerList(question_id=question_id, answers=[], attempted=False, backoff=max_backoff)


# ---------------------------------------------------------------------------
# Keyword baseline


def question_corpus_idf(questions: list[Question], stopwords) -> dict[str, float]:
    import math

    n = len(questions)
    df: dict[str, int] = {}
    for q in questions:
        seen = {
            tok.text.lower()
            for tok in q.tokens
            if tok.text.lower() not in stopwords
        }
        for term in seen:
            df[term] = df.get(term, 0) + 1
    return {term: math.log(n / c) for term, c in df.items()}


def webqa_keywords(
    question: Question, idf: dict[str, float], stopwords, shortlist: int = 10, top: int = 3
) -> list[str]:
    """Top question words by in-question tf-idf; ties broken by first
    occurrence."""
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    for pos, tok in enumerate(question.tokens):
        term = tok.text.lower()
        if term in stopwords or not any(c.isalnum() for c in term):
            continue
        counts[term] = counts.get(term, 0) + 1
        first_seen.setdefault(term, pos)
    if not counts:
        raise EmptyKeywords(question.id)
    ranked = sorted(
        counts,
        key=lambda t: (-counts[t] * idf.get(t, 0.0), first_seen[t]),
    )
    return ranked[:shortlist][:top]


def webqa_answer(
    question: Question,
    index: EntityIndex,
    idf: dict[str, float],
    stopwords,
    k: int = 3,
    manual_words: list[str] | None = None,
) -> AnswerList:
    """Keyword-baseline answering: optional-group query from the selected
    words, backing off by dropping the lowest-weighted keyword."""
    if manual_words is not None:
        words = list(manual_words)
    else:
        words = webqa_keywords(question, idf, stopwords)
    # Keep keyword order by descending tf-idf so back-off drops the tail.
    backoff = 0
    while words:
        query = BooleanQuery(
            should=[[w] for w in words],
            city=question.city,
        )
        results = index.boolean_search(query, k=k)
        if results:
            return AnswerList(
                question_id=question.id,
                answers=[
                    (rid, index.records[rid].name, score) for rid, score in results
                ],
                attempted=True,
                backoff=backoff,
            )
        if len(words) == 1:
            break
        words = words[:-1]
        backoff += 1
    return AnswerList(question_id=question.id, answers=[], attempted=False, backoff=backoff)
