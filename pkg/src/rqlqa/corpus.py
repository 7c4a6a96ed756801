"""Data model for annotated questions, crowd labels, and label segments."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

# Token-level semantic labels in canonical order.  The order is load bearing:
# decoders break ties by preferring the lower index.
TAG_LABELS = (
    "other",
    "x.type",
    "x.attribute",
    "x.location",
    "x.sibling",
    "user.attribute",
    "user.location",
)

# Subset actually trained by default; the rest are representable but unused.
DEFAULT_LABEL_SUBSET = ("other", "x.type", "x.attribute", "x.location")

UNKNOWN = "?"  # placeholder in partial labelings


class SchemaError(Exception):
    pass


class LengthMismatch(Exception):
    pass


@dataclass(frozen=True)
class Token:
    text: str
    lemma: str
    pos: str
    ner: str
    cluster: str  # "UNK" when unavailable
    dep_head: int | None
    sent: int  # 0-based sentence index


@dataclass(frozen=True)
class Question:
    id: str
    tokens: tuple[Token, ...]
    city: str | None = None

    @property
    def sentence_count(self) -> int:
        return self.tokens[-1].sent + 1 if self.tokens else 0


@dataclass(frozen=True)
class LabelSequence:
    question_id: str
    labels: tuple[str, ...]


@dataclass(frozen=True)
class PartialLabeling:
    question_id: str
    labels: tuple[str, ...]  # TAG_LABELS entries or UNKNOWN

    @property
    def unknown_count(self) -> int:
        return sum(1 for l in self.labels if l == UNKNOWN)


@dataclass(frozen=True)
class Segment:
    """Maximal same-label token run [start, end) within a single sentence."""

    label: str
    start: int
    end: int

    def span(self) -> range:
        return range(self.start, self.end)


# ---------------------------------------------------------------------------
# Fallback linguistic annotation
#
# Fixtures normally ship precomputed lemma/POS/NER; when a token arrives
# bare, these cheap guessers keep the feature extractor functional.

_ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "al", "ic", "less", "ish")


def guess_pos(text: str) -> str:
    low = text.lower()
    if re.fullmatch(r"[\d.,:-]+", text):
        return "CD"
    if low in ("what", "where", "which", "who", "when"):
        return "WP"
    if low.endswith("ly"):
        return "RB"
    if low.endswith(_ADJ_SUFFIXES) or low in ("good", "best", "cheap", "nice", "great"):
        return "JJ"
    if low.endswith("ing") or low.endswith("ed"):
        return "VB"
    return "NN"


def guess_ner(text: str, position: int) -> str:
    if position > 0 and text[:1].isupper():
        return "ENT"
    if re.fullmatch(r"\d+[\d.,]*", text):
        return "NUM"
    return "O"


def guess_lemma(text: str) -> str:
    low = text.lower()
    for suffix in ("ies", "es", "s"):
        if low.endswith(suffix) and len(low) > len(suffix) + 2:
            if suffix == "ies":
                return low[:-3] + "y"
            return low[: -len(suffix)]
    return low


def annotate_token(text: str, sent: int, position: int) -> Token:
    return Token(
        text=text,
        lemma=guess_lemma(text),
        pos=guess_pos(text),
        ner=guess_ner(text, position),
        cluster="UNK",
        dep_head=None,
        sent=sent,
    )


# ---------------------------------------------------------------------------
# Loading


def _token_from_json(obj: dict, position: int) -> Token:
    text = obj["t"]
    sent = obj["sent"]
    return Token(
        text=text,
        lemma=obj.get("lemma") or guess_lemma(text),
        pos=obj.get("pos") or guess_pos(text),
        ner=obj.get("ner") or guess_ner(text, position),
        cluster=obj.get("cluster") or "UNK",
        dep_head=obj.get("dep_head"),
        sent=sent,
    )


def question_from_json(obj: dict) -> tuple[Question, LabelSequence | None]:
    tokens = tuple(
        _token_from_json(tok, pos) for pos, tok in enumerate(obj["tokens"])
    )
    if not tokens:
        raise SchemaError("question has no tokens")
    prev = 0
    for tok in tokens:
        if tok.sent < prev:
            raise SchemaError("sentence indices must be non-decreasing")
        prev = tok.sent
    question = Question(
        id=obj["id"],
        tokens=tokens,
        city=(obj.get("metadata") or {}).get("city"),
    )
    gold = None
    if obj.get("gold") is not None:
        if len(obj["gold"]) != len(tokens):
            raise LengthMismatch(
                f"gold labels ({len(obj['gold'])}) != tokens ({len(tokens)})"
            )
        for label in obj["gold"]:
            if label not in TAG_LABELS:
                raise SchemaError(f"unknown gold label {label!r}")
        gold = LabelSequence(question_id=obj["id"], labels=tuple(obj["gold"]))
    return question, gold


def load_questions(path) -> list[tuple[Question, LabelSequence | None]]:
    """Load a questions.jsonl file; one (question, optional gold) per line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(question_from_json(obj))
            except LengthMismatch as exc:
                raise LengthMismatch(f"line {lineno}: {exc}") from None
            except (KeyError, TypeError, ValueError, SchemaError) as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
    return out


def load_crowd_annotations(path) -> list[tuple[str, LabelSequence, LabelSequence]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                qid = obj["id"]
                a = LabelSequence(question_id=qid, labels=tuple(obj["ann_a"]))
                b = LabelSequence(question_id=qid, labels=tuple(obj["ann_b"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
            out.append((qid, a, b))
    return out


# ---------------------------------------------------------------------------
# Operations


def merge_crowd_annotations(a: LabelSequence, b: LabelSequence) -> PartialLabeling:
    """Keep positions where the two annotators agree; the rest become UNKNOWN."""
    if a.question_id != b.question_id:
        raise LengthMismatch("annotations refer to different questions")
    if len(a.labels) != len(b.labels):
        raise LengthMismatch(
            f"annotation lengths differ: {len(a.labels)} vs {len(b.labels)}"
        )
    merged = tuple(
        la if la == lb else UNKNOWN for la, lb in zip(a.labels, b.labels)
    )
    return PartialLabeling(question_id=a.question_id, labels=merged)


def segments_from_labels(question: Question, labels) -> list[Segment]:
    """Maximal same-label runs, excluding `other`, never crossing sentences."""
    seq = labels.labels if hasattr(labels, "labels") else tuple(labels)
    if len(seq) != len(question.tokens):
        raise LengthMismatch(
            f"labels ({len(seq)}) != tokens ({len(question.tokens)})"
        )
    segments = []
    start = None
    for i, label in enumerate(seq):
        boundary = i > 0 and question.tokens[i].sent != question.tokens[i - 1].sent
        if start is not None:
            if label != seq[start] or boundary:
                segments.append(Segment(label=seq[start], start=start, end=i))
                start = None
        if start is None and label != "other":
            start = i
    if start is not None:
        segments.append(Segment(label=seq[start], start=start, end=len(seq)))
    return segments


def make_question(qid: str, sentences: list[list[str]], city: str | None = None) -> Question:
    """Build a Question from raw token strings using the fallback annotator."""
    tokens = []
    pos = 0
    for sent_idx, sent in enumerate(sentences):
        for text in sent:
            tokens.append(annotate_token(text, sent_idx, pos))
            pos += 1
    return Question(id=qid, tokens=tuple(tokens), city=city)
