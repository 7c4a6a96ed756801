"""Command-line entry point wiring the full pipeline."""

from __future__ import annotations

import json
import random
import sys

import click

from . import corpus, crf, operators, rql
from .config import PipelineConfig
from .features import FeatureExtractor
from .index import EntityIndex, build_index, load_entities, load_stopwords, load_vectors
from .metrics import mean_label_report, qa_metrics, segment_prf
from .pipeline import answer_question, question_corpus_idf, webqa_answer
from .report import (
    label_report_table,
    qa_report_table,
    write_label_report,
    write_qa_report,
)


def _fail(exc: Exception):
    click.echo(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True
    )
    sys.exit(1)


def _load_config(path: str | None) -> PipelineConfig:
    return PipelineConfig.from_yaml(path) if path else PipelineConfig()


def _load_gold_corpus(path):
    loaded = corpus.load_questions(path)
    out = []
    for question, gold in loaded:
        if gold is None:
            raise corpus.SchemaError(f"question {question.id} has no gold labels")
        out.append((question, gold))
    return out


config_option = click.option("--config", "config_path", type=click.Path(exists=True))
seed_option = click.option("--seed", type=int, default=0, show_default=True)


@click.group()
def main():
    """Parse recommendation questions into structured queries and answer
    them over a local entity corpus."""


@main.command("train-crf")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path())
@config_option
@seed_option
def train_crf(in_path, model_path, config_path, seed):
    """Train a supervised sequence labeler on gold-labeled questions."""
    cfg = _load_config(config_path)
    random.seed(seed)
    try:
        examples = _load_gold_corpus(in_path)
        model = crf.crf_train(FeatureExtractor(), examples, cfg.hyperparams())
        model.save(model_path)
    except Exception as exc:  # noqa: BLE001 - uniform machine-readable errors
        _fail(exc)
    click.echo(f"trained on {len(examples)} questions -> {model_path}")


@main.command("train-ccm")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path())
@config_option
@seed_option
def train_ccm(in_path, model_path, config_path, seed):
    """Train the labeler and estimate constraint penalty weights."""
    cfg = _load_config(config_path)
    random.seed(seed)
    try:
        examples = _load_gold_corpus(in_path)
        model = crf.crf_train(FeatureExtractor(), examples, cfg.hyperparams())
        rhos = crf.estimate_rho(cfg.constraints(), examples)
        model.save(model_path, constraints=cfg.constraints(rhos))
    except Exception as exc:
        _fail(exc)
    click.echo(f"trained + penalties {rhos} -> {model_path}")


@main.command("train-codl")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--partial-questions", type=click.Path(exists=True))
@click.option("--crowd", "crowd_path", type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--gamma", type=float, default=None)
@config_option
@seed_option
def train_codl(in_path, partial_questions, crowd_path, model_path, gamma, config_path, seed):
    """Semi-supervised training over partially labeled crowd sequences."""
    cfg = _load_config(config_path)
    if gamma is not None:
        cfg.gamma = gamma
    random.seed(seed)
    try:
        labeled = _load_gold_corpus(in_path)
        partials = []
        if partial_questions and crowd_path:
            questions = {
                q.id: q for q, _ in corpus.load_questions(partial_questions)
            }
            for qid, a, b in corpus.load_crowd_annotations(crowd_path):
                if qid not in questions:
                    continue
                partials.append((questions[qid], corpus.merge_crowd_annotations(a, b)))
        constraints = cfg.constraints()
        model, rhos = crf.codl_train(
            labeled, partials, constraints, cfg.codl(), cfg.hyperparams()
        )
        model.save(model_path, constraints=constraints.with_rhos(rhos))
    except Exception as exc:
        _fail(exc)
    click.echo(
        f"semi-supervised training on {len(labeled)} labeled + "
        f"{len(partials)} partial -> {model_path}"
    )


@main.command("label")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--no-constraints", is_flag=True, help="plain MAP decoding")
@config_option
def label(model_path, in_path, out_path, no_constraints, config_path):
    """Label questions with the trained model (constrained by default)."""
    cfg = _load_config(config_path)
    try:
        model, rhos = crf.CrfModel.load(model_path)
        constraints = cfg.constraints(rhos)
        questions = [q for q, _ in corpus.load_questions(in_path)]
        questions.sort(key=lambda q: q.id)
        with open(out_path, "w", encoding="utf-8") as fh:
            for q in questions:
                if no_constraints:
                    seq = crf.viterbi_decode(model, q)
                else:
                    seq = crf.ccm_decode(model, constraints, q)
                fh.write(json.dumps({"id": q.id, "labels": list(seq.labels)}) + "\n")
    except Exception as exc:
        _fail(exc)
    click.echo(f"labeled {len(questions)} questions -> {out_path}")


@main.command("parse-rql")
@click.argument("text", required=False)
@click.option("--in", "in_path", type=click.Path(exists=True))
def parse_rql_cmd(text, in_path):
    """Parse RQL text (argument or one query per input line) to JSON ASTs."""
    try:
        lines = (
            [text]
            if text is not None
            else [l for l in open(in_path, encoding="utf-8").read().splitlines() if l.strip()]
        )
        for line in lines:
            query = rql.parse_rql(line)
            click.echo(rql.query_to_json(query))
    except Exception as exc:
        _fail(exc)


def _labels_for(question, predicted, gold):
    if predicted is not None:
        return corpus.LabelSequence(question_id=question.id, labels=tuple(predicted))
    return gold


def _assemble_one(question, labels, lexicon, window):
    spans = operators.detect_operators(question, labels, lexicon, window=window)
    segs = corpus.segments_from_labels(question, labels)
    composed = operators.compose_operators(spans, segments=segs)
    return operators.assemble_rql(question, labels, composed)


def _load_predictions(path):
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                preds[obj["id"]] = obj["labels"]
    return preds


@main.command("assemble")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@config_option
def assemble(in_path, labels_path, out_path, config_path):
    """Build RQL queries from labeled questions (gold labels by default)."""
    cfg = _load_config(config_path)
    lexicon = (
        operators.TriggerLexicon.from_file(cfg.lexicon_path)
        if cfg.lexicon_path
        else operators.TriggerLexicon.from_seeds()
    )
    try:
        preds = _load_predictions(labels_path) if labels_path else {}
        count = 0
        with open(out_path, "w", encoding="utf-8") as fh:
            for question, gold in corpus.load_questions(in_path):
                labels = _labels_for(question, preds.get(question.id), gold)
                if labels is None:
                    raise corpus.SchemaError(f"no labels for question {question.id}")
                query, _ = _assemble_one(question, labels, lexicon, cfg.window)
                fh.write(
                    json.dumps({"id": question.id, "rql": rql.render_rql(query)})
                    + "\n"
                )
                count += 1
    except Exception as exc:
        _fail(exc)
    click.echo(f"assembled {count} queries -> {out_path}")


@main.command("index-build")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path())
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True))
def index_build(in_path, index_path, stopwords_path):
    """Build the inverted entity index from an entities.jsonl file."""
    try:
        records = load_entities(in_path)
        index = build_index(records, load_stopwords(stopwords_path))
        index.save(index_path)
    except Exception as exc:
        _fail(exc)
    click.echo(f"indexed {len(records)} entities -> {index_path}")


@main.command("answer")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--k", type=int, default=None)
@config_option
def answer(in_path, index_path, model_path, out_path, k, config_path):
    """Full pipeline: label, detect operators, build the query, retrieve.

    Without --model, gold labels from the input file are used.
    """
    cfg = _load_config(config_path)
    if k is not None:
        cfg.k = k
    lexicon = (
        operators.TriggerLexicon.from_file(cfg.lexicon_path)
        if cfg.lexicon_path
        else operators.TriggerLexicon.from_seeds()
    )
    vectors = load_vectors(cfg.vectors_path) if cfg.vectors_path else None
    try:
        index = EntityIndex.load(index_path)
        model = rhos = None
        constraints = None
        if model_path:
            model, rhos = crf.CrfModel.load(model_path)
            constraints = cfg.constraints(rhos)
        entries = sorted(corpus.load_questions(in_path), key=lambda qg: qg[0].id)
        count = 0
        with open(out_path, "w", encoding="utf-8") as fh:
            for question, gold in entries:
                if model is not None:
                    labels = crf.ccm_decode(model, constraints, question)
                elif gold is not None:
                    labels = gold
                else:
                    raise corpus.SchemaError(
                        f"question {question.id}: no model and no gold labels"
                    )
                query, _ = _assemble_one(question, labels, lexicon, cfg.window)
                result = answer_question(
                    query,
                    index,
                    question.id,
                    metadata_city=question.city,
                    k=cfg.k,
                    vectors=vectors,
                    near_radius_km=cfg.near_radius_km,
                )
                fh.write(result.to_json() + "\n")
                count += 1
    except Exception as exc:
        _fail(exc)
    click.echo(f"answered {count} questions -> {out_path}")


@main.command("baseline-webqa")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--k", type=int, default=3, show_default=True)
@click.option(
    "--manual-words",
    "manual_path",
    type=click.Path(exists=True),
    help="JSON map question id -> list of query words",
)
def baseline_webqa(in_path, index_path, out_path, k, manual_path):
    """Keyword-selection baseline over the same index."""
    try:
        index = EntityIndex.load(index_path)
        manual = {}
        if manual_path:
            with open(manual_path, encoding="utf-8") as fh:
                manual = json.load(fh)
        questions = sorted(
            (q for q, _ in corpus.load_questions(in_path)), key=lambda q: q.id
        )
        idf = question_corpus_idf(questions, index.stopwords)
        with open(out_path, "w", encoding="utf-8") as fh:
            for question in questions:
                result = webqa_answer(
                    question,
                    index,
                    idf,
                    index.stopwords,
                    k=k,
                    manual_words=manual.get(question.id),
                )
                fh.write(result.to_json() + "\n")
    except Exception as exc:
        _fail(exc)
    click.echo(f"answered {len(questions)} questions -> {out_path}")


@main.command("eval-labels")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--pred", "pred_path", type=click.Path(exists=True))
@click.option("--out", "out_prefix", type=click.Path())
@click.option(
    "--loo",
    is_flag=True,
    help="leave-one-out cross-validation (train a model per held-out question)",
)
@config_option
@seed_option
def eval_labels(in_path, pred_path, out_prefix, loo, config_path, seed):
    """Segment-matching evaluation of predicted labels against gold."""
    cfg = _load_config(config_path)
    random.seed(seed)
    try:
        data = _load_gold_corpus(in_path)
        eval_labels_list = [l for l in cfg.labels if l != "other"]
        reports = []
        if pred_path:
            preds = _load_predictions(pred_path)
            for question, gold in data:
                if question.id not in preds:
                    raise corpus.SchemaError(f"no prediction for {question.id}")
                seq = corpus.LabelSequence(
                    question_id=question.id, labels=tuple(preds[question.id])
                )
                reports.append(segment_prf(gold, seq, question, labels=eval_labels_list))
        elif loo:
            for i, (question, gold) in enumerate(data):
                fold = data[:i] + data[i + 1 :]
                model = crf.crf_train(FeatureExtractor(), fold, cfg.hyperparams())
                rhos = crf.estimate_rho(cfg.constraints(), fold)
                seq = crf.ccm_decode(model, cfg.constraints(rhos), question)
                reports.append(segment_prf(gold, seq, question, labels=eval_labels_list))
        else:
            raise click.UsageError("provide --pred or --loo")
        report = mean_label_report(reports, eval_labels_list)
        click.echo(label_report_table(report))
        if out_prefix:
            write_label_report(report, out_prefix)
    except click.UsageError:
        raise
    except Exception as exc:
        _fail(exc)


@main.command("eval-qa")
@click.option("--answers", "answers_path", required=True, type=click.Path(exists=True))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_prefix", type=click.Path())
@click.option("--k", type=int, default=3, show_default=True)
def eval_qa(answers_path, gold_path, out_prefix, k):
    """Score answer lists against gold entities."""
    from .pipeline import AnswerList

    try:
        answers = []
        with open(answers_path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                answers.append(
                    AnswerList(
                        question_id=obj["id"],
                        answers=[
                            (a["entity"], a["name"], a["score"])
                            for a in obj["answers"]
                        ],
                        attempted=obj["attempted"],
                        backoff=obj["backoff"],
                    )
                )
        gold = {}
        with open(gold_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    gold[obj["id"]] = set(obj["entities"])
        report = qa_metrics(answers, gold, k=k)
        click.echo(qa_report_table(report))
        if out_prefix:
            write_qa_report(report, out_prefix)
    except Exception as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
