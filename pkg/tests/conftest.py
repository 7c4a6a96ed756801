import json
from pathlib import Path

import pytest

from rqlqa import corpus, operators
from rqlqa.index import EntityIndex, load_entities, load_stopwords

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def toy_index() -> EntityIndex:
    return EntityIndex(load_entities(DATA / "entities.jsonl"), load_stopwords())


@pytest.fixture(scope="session")
def toy_questions():
    """(question, gold label sequence) pairs from the 10-question fixture."""
    return corpus.load_questions(DATA / "questions.jsonl")


@pytest.fixture(scope="session")
def toy_gold_entities() -> dict[str, set[str]]:
    gold = {}
    with open(DATA / "gold_entities.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                gold[obj["id"]] = set(obj["entities"])
    return gold


@pytest.fixture(scope="session")
def trigger_lexicon() -> operators.TriggerLexicon:
    return operators.TriggerLexicon.from_seeds()


def assemble_from_gold(question, gold, lexicon, window=4):
    """Gold labels -> operator detection -> composed chains -> query."""
    spans = operators.detect_operators(question, gold, lexicon, window=window)
    segments = corpus.segments_from_labels(question, gold)
    composed = operators.compose_operators(spans, segments=segments)
    return operators.assemble_rql(question, gold, composed)
