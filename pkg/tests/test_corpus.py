"""Data model, loading, annotation merging, and segmentation tests."""

import json

import pytest

from rqlqa.corpus import (
    LabelSequence,
    LengthMismatch,
    PartialLabeling,
    SchemaError,
    Segment,
    UNKNOWN,
    load_crowd_annotations,
    load_questions,
    make_question,
    merge_crowd_annotations,
    question_from_json,
    segments_from_labels,
)


def test_load_fixture_questions(toy_questions):
    assert len(toy_questions) == 10
    for question, gold in toy_questions:
        assert gold is not None
        assert len(gold.labels) == len(question.tokens)
    by_id = {q.id: q for q, _ in toy_questions}
    assert by_id["q07"].city == "Budapest"
    assert by_id["q01"].city is None
    assert by_id["q01"].sentence_count == 2


def test_question_schema_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "tokens": []}\n')
    with pytest.raises(SchemaError):
        load_questions(bad)
    bad.write_text(
        '{"id": "a", "tokens": [{"t": "hi", "sent": 1}, {"t": "yo", "sent": 0}]}\n'
    )
    with pytest.raises(SchemaError):
        load_questions(bad)
    bad.write_text(
        '{"id": "a", "tokens": [{"t": "hi", "sent": 0}], "gold": ["other", "other"]}\n'
    )
    with pytest.raises(LengthMismatch):
        load_questions(bad)
    bad.write_text(
        '{"id": "a", "tokens": [{"t": "hi", "sent": 0}], "gold": ["bogus"]}\n'
    )
    with pytest.raises(SchemaError):
        load_questions(bad)


def test_fallback_annotation_fills_gaps():
    obj = {"id": "a", "tokens": [{"t": "Hotels", "sent": 0}, {"t": "2024", "sent": 0}]}
    question, _ = question_from_json(obj)
    assert question.tokens[0].lemma == "hotel"
    assert question.tokens[0].pos.startswith("NN")
    assert question.tokens[1].pos == "CD"
    assert question.tokens[1].ner == "NUM"


def test_merge_crowd_annotations_keeps_agreements(data_dir):
    rows = load_crowd_annotations(data_dir / "crowd.jsonl")
    assert [qid for qid, _, _ in rows] == ["q01", "q02"]
    _, a, b = rows[0]
    merged = merge_crowd_annotations(a, b)
    assert merged.labels[9] == UNKNOWN  # the one disagreement
    assert merged.labels[10] == "x.attribute"
    assert merged.unknown_count == 1


def test_merge_rejects_mismatched_annotations():
    a = LabelSequence(question_id="a", labels=("other",))
    b = LabelSequence(question_id="b", labels=("other",))
    with pytest.raises(LengthMismatch):
        merge_crowd_annotations(a, b)
    c = LabelSequence(question_id="a", labels=("other", "other"))
    with pytest.raises(LengthMismatch):
        merge_crowd_annotations(a, c)


def test_segments_are_maximal_and_sentence_bounded():
    question = make_question(
        "s", [["nice", "cheap", "hotel"], ["cheap", "deal"]]
    )
    labels = ("x.attribute", "x.attribute", "x.type", "x.attribute", "x.attribute")
    segs = segments_from_labels(question, labels)
    assert segs == [
        Segment(label="x.attribute", start=0, end=2),
        Segment(label="x.type", start=2, end=3),
        Segment(label="x.attribute", start=3, end=5),
    ]
    # Same label across a sentence boundary still splits.
    labels = ("x.attribute",) * 5
    segs = segments_from_labels(question, labels)
    assert [(s.start, s.end) for s in segs] == [(0, 3), (3, 5)]
    # `other` produces no segments.
    assert segments_from_labels(question, ("other",) * 5) == []
    with pytest.raises(LengthMismatch):
        segments_from_labels(question, ("other",) * 3)


def test_partial_labeling_counts_unknowns():
    partial = PartialLabeling(
        question_id="p", labels=("other", UNKNOWN, "x.type", UNKNOWN)
    )
    assert partial.unknown_count == 2


def test_questions_jsonl_round_trip(tmp_path, toy_questions):
    path = tmp_path / "copy.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for question, gold in toy_questions:
            fh.write(json.dumps({
                "id": question.id,
                "metadata": {"city": question.city} if question.city else {},
                "tokens": [
                    {"t": t.text, "lemma": t.lemma, "pos": t.pos, "ner": t.ner,
                     "sent": t.sent}
                    for t in question.tokens
                ],
                "gold": list(gold.labels),
            }) + "\n")
    reloaded = load_questions(path)
    assert [(q.id, g.labels) for q, g in reloaded] == [
        (q.id, g.labels) for q, g in toy_questions
    ]
