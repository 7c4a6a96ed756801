"""Report rendering: text tables, delimited files, and figures."""

import json

from rqlqa.metrics import LabelEvalReport, QaEvalReport
from rqlqa.report import (
    label_report_table,
    label_report_tsv,
    qa_report_table,
    qa_report_tsv,
    write_label_report,
    write_qa_report,
)

LABEL_REPORT = LabelEvalReport(
    per_label={
        "x.type": (0.514, 0.60, 0.553),
        "x.attribute": (0.453, 0.40, 0.425),
    }
)
QA_REPORT = QaEvalReport(acc_at_3=0.8, mrr=0.72, recall=0.8, attempted=10, total=10)


def test_label_table_contains_percentages():
    table = label_report_table(LABEL_REPORT)
    assert "x.type" in table and "51.4" in table and "55.3" in table
    assert "aggregate" in table


def test_label_tsv_round_trips_values():
    lines = label_report_tsv(LABEL_REPORT).strip().split("\n")
    assert lines[0] == "label\tprecision\trecall\tf1"
    row = dict(zip(lines[0].split("\t"), lines[1].split("\t")))
    assert float(row["precision"]) == 0.514
    assert lines[-1].startswith("aggregate\t")


def test_qa_table_and_tsv():
    assert "80.0" in qa_report_table(QA_REPORT)
    lines = qa_report_tsv(QA_REPORT).strip().split("\n")
    row = dict(zip(lines[0].split("\t"), lines[1].split("\t")))
    assert float(row["acc@3"]) == 0.8
    assert int(row["attempted"]) == 10


def test_write_label_report_emits_three_files(tmp_path):
    prefix = str(tmp_path / "labels")
    write_label_report(LABEL_REPORT, prefix)
    with open(prefix + ".json", encoding="utf-8") as fh:
        obj = json.load(fh)
    assert obj["per_label"]["x.type"]["precision"] == 0.514
    assert (tmp_path / "labels.tsv").read_text().startswith("label\t")
    png = (tmp_path / "labels.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_write_qa_report_emits_three_files(tmp_path):
    prefix = str(tmp_path / "qa")
    write_qa_report(QA_REPORT, prefix)
    with open(prefix + ".json", encoding="utf-8") as fh:
        obj = json.load(fh)
    assert obj["acc@3"] == 0.8
    assert (tmp_path / "qa.tsv").exists()
    assert (tmp_path / "qa.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
