"""Segment-matching precision/recall/F1 for labeling, and top-3 accuracy,
mean reciprocal rank, and recall for end-to-end answering."""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import LabelSequence, LengthMismatch, Question, segments_from_labels
from .pipeline import AnswerList


class MissingGold(Exception):
    pass


@dataclass
class LabelEvalReport:
    per_label: dict[str, tuple[float, float, float]]  # label -> (P, R, F1)

    @property
    def aggregate_f1(self) -> float:
        if not self.per_label:
            return 0.0
        return sum(f1 for _, _, f1 in self.per_label.values()) / len(self.per_label)

    def to_dict(self) -> dict:
        return {
            "per_label": {
                label: {"precision": p, "recall": r, "f1": f1}
                for label, (p, r, f1) in self.per_label.items()
            },
            "aggregate_f1": self.aggregate_f1,
        }


@dataclass
class QaEvalReport:
    acc_at_3: float
    mrr: float
    recall: float
    attempted: int
    total: int

    def to_dict(self) -> dict:
        return {
            "acc@3": self.acc_at_3,
            "mrr": self.mrr,
            "recall": self.recall,
            "attempted": self.attempted,
            "total": self.total,
        }


def _overlap(a_start: int, a_end: int, b_start: int, b_end: int) -> int:
    return max(0, min(a_end, b_end) - max(a_start, b_start))


def _directional_score(from_segments, to_segments) -> float:
    """Mean best-overlap fraction of each segment in `from_segments` against
    `to_segments`; each segment matches its best counterpart independently."""
    if not from_segments:
        return 1.0 if not to_segments else 0.0
    total = 0.0
    for seg in from_segments:
        best = 0
        for other in to_segments:
            best = max(best, _overlap(seg.start, seg.end, other.start, other.end))
        total += best / (seg.end - seg.start)
    return total / len(from_segments)


def segment_prf(
    gold: LabelSequence,
    predicted: LabelSequence,
    question: Question,
    labels=None,
) -> LabelEvalReport:
    """Per-class segment precision/recall/F1.

    Each predicted segment is matched against the gold segment of the same
    class with the largest token overlap (and symmetrically for recall); the
    matching is independent per segment, so two predicted segments may claim
    the same gold segment.
    """
    if len(gold.labels) != len(predicted.labels):
        raise LengthMismatch(
            f"gold ({len(gold.labels)}) != predicted ({len(predicted.labels)})"
        )
    gold_segs = segments_from_labels(question, gold)
    pred_segs = segments_from_labels(question, predicted)
    if labels is None:
        labels = sorted(
            {s.label for s in gold_segs} | {s.label for s in pred_segs}
        )
    per_label = {}
    for label in labels:
        g = [s for s in gold_segs if s.label == label]
        p = [s for s in pred_segs if s.label == label]
        precision = _directional_score(p, g)
        recall = _directional_score(g, p)
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        per_label[label] = (precision, recall, f1)
    return LabelEvalReport(per_label=per_label)


def aggregate_f1(per_label_f1s) -> float:
    """Unweighted mean of per-label F1 scores."""
    values = list(per_label_f1s)
    return sum(values) / len(values)


def mean_label_report(reports: list[LabelEvalReport], labels) -> LabelEvalReport:
    """Average per-label P/R/F1 across questions (macro over questions)."""
    per_label = {}
    for label in labels:
        rows = [r.per_label[label] for r in reports if label in r.per_label]
        if not rows:
            per_label[label] = (0.0, 0.0, 0.0)
            continue
        per_label[label] = tuple(
            sum(row[i] for row in rows) / len(rows) for i in range(3)
        )
    return LabelEvalReport(per_label=per_label)


def qa_metrics(
    answers: list[AnswerList],
    gold: dict[str, set[str]],
    k: int = 3,
) -> QaEvalReport:
    """Accuracy@k and MRR over attempted questions; recall over all.

    A question counts as correct when any gold entity appears in the top k
    (entity ids compared case-insensitively).  Attempted questions with no
    gold entity anywhere in the returned list contribute 0 to MRR.
    """
    total = len(answers)
    attempted = 0
    correct_at_k = 0
    rr_sum = 0.0
    for ans in answers:
        if ans.question_id not in gold:
            raise MissingGold(ans.question_id)
        gold_ids = {g.lower() for g in gold[ans.question_id]}
        if not ans.attempted:
            continue
        attempted += 1
        hit_rank = None
        for rank, (eid, _, _) in enumerate(ans.answers, start=1):
            if eid.lower() in gold_ids:
                hit_rank = rank
                break
        if hit_rank is not None and hit_rank <= k:
            correct_at_k += 1
        rr_sum += 1.0 / hit_rank if hit_rank is not None else 0.0
    return QaEvalReport(
        acc_at_3=correct_at_k / attempted if attempted else 0.0,
        mrr=rr_sum / attempted if attempted else 0.0,
        recall=correct_at_k / total if total else 0.0,
        attempted=attempted,
        total=total,
    )
