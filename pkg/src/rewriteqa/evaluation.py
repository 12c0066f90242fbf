"""Scoring answered questions: exact match, embedding similarity, and
aggregation of human grades, rolled up into a comparison-table report."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .agnostic import RewriteDecision
from .data import VisualQuestion, normalize_answer
from .errors import BackendError, InvalidInputError, MissingGoldError
from .ports import AnswerEmbedder, TextQA, cosine

logger = logging.getLogger("rewriteqa.evaluation")

UNKNOWN_ANSWER = "unknown"
VERDICTS = ("correct", "incorrect")
BS_AGGREGATIONS = ("max", "mean")
SECTIONS = ("VQA Models", "Baselines", "Our Methods")


@dataclass(frozen=True)
class AnswerPrediction:
    question_id: str
    system: str
    predicted_answer: str
    rewrite_text: str | None = None

    def __post_init__(self):
        if not self.question_id:
            raise ValueError("question_id must be non-empty")
        if not self.system:
            raise ValueError("system must be non-empty")
        if not self.predicted_answer:
            raise ValueError("predicted_answer must be non-empty (use the 'unknown' sentinel)")


@dataclass(frozen=True)
class GradeRecord:
    question_id: str
    system: str
    grader_id: str
    verdict: str
    timestamp: float

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        for field in ("question_id", "system", "grader_id"):
            if not getattr(self, field):
                raise ValueError(f"{field} must be non-empty")


@dataclass(frozen=True)
class ReportRow:
    system: str
    em: float
    bs: float
    he: float | None = None
    train_data: int | None = None
    section: str = "Our Methods"

    def __post_init__(self):
        for name in ("em", "bs"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.he is not None and not 0.0 <= self.he <= 1.0:
            raise ValueError(f"he must lie in [0, 1], got {self.he}")


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple[ReportRow, ...]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "system": r.system,
                    "section": r.section,
                    "train_data": r.train_data,
                    "em": r.em,
                    "bs": r.bs,
                    "he": r.he,
                }
                for r in self.rows
            ]
        }


# Published comparison numbers, kept as static rows so reports can show the
# reference systems next to freshly computed ones.  Never recomputed here.
PUBLISHED_RESULTS: tuple[ReportRow, ...] = (
    ReportRow(system="MUTAN+AN", em=0.28, bs=0.70, he=0.45, train_data=9009, section="VQA Models"),
    ReportRow(system="BAN", em=0.29, bs=0.70, he=0.47, train_data=9009, section="VQA Models"),
    ReportRow(system="BAN+AN", em=0.29, bs=0.70, he=0.43, train_data=9009, section="VQA Models"),
    ReportRow(system="MUTAN", em=0.30, bs=0.69, he=0.43, train_data=9009, section="VQA Models"),
    ReportRow(system="QOnly", em=0.16, bs=0.62, he=0.24, train_data=9009, section="VQA Models"),
    ReportRow(system="Concatenated Input", em=0.32, bs=0.71, he=0.54, section="Baselines"),
    ReportRow(system="Fine-Tuned T5", em=0.30, bs=0.71, he=0.48, train_data=9009, section="Baselines"),
    ReportRow(system="Model Agnostic", em=0.31, bs=0.70, he=0.67, section="Our Methods"),
    ReportRow(system="Model Aware", em=0.29, bs=0.69, he=0.67, train_data=1010, section="Our Methods"),
)


def gold_map(dataset: Iterable[VisualQuestion]) -> dict[str, tuple[str, ...]]:
    return {record.question_id: record.gold_answers for record in dataset}


def answer_dataset(
    decisions: Sequence[RewriteDecision], qa: TextQA, system: str
) -> list[AnswerPrediction]:
    """Feed every chosen rewrite to the QA backend.  A backend failure maps
    to the "unknown" sentinel so one flaky call cannot sink the batch."""
    predictions = []
    for decision in decisions:
        try:
            answer = qa.answer(decision.chosen.text)
        except BackendError as exc:
            logger.warning(
                "QA backend failed on %s (%s); recording 'unknown'", decision.question_id, exc
            )
            answer = UNKNOWN_ANSWER
        predictions.append(
            AnswerPrediction(
                question_id=decision.question_id,
                system=system,
                predicted_answer=answer or UNKNOWN_ANSWER,
                rewrite_text=decision.chosen.text,
            )
        )
    return predictions


def _require_golds(
    prediction: AnswerPrediction, golds: Mapping[str, Sequence[str]]
) -> Sequence[str]:
    try:
        answers = golds[prediction.question_id]
    except KeyError:
        raise MissingGoldError(prediction.question_id) from None
    if not answers:
        raise MissingGoldError(prediction.question_id)
    return answers


def exact_match(
    predictions: Sequence[AnswerPrediction], golds: Mapping[str, Sequence[str]]
) -> float:
    """Fraction of predictions whose normalized answer equals the normalized
    form of any gold answer."""
    if not predictions:
        raise InvalidInputError("cannot score an empty prediction list")
    hits = 0
    for prediction in predictions:
        answers = _require_golds(prediction, golds)
        predicted = normalize_answer(prediction.predicted_answer)
        if any(predicted == normalize_answer(gold) for gold in answers):
            hits += 1
    return hits / len(predictions)


def bert_similarity(
    predictions: Sequence[AnswerPrediction],
    golds: Mapping[str, Sequence[str]],
    embedder: AnswerEmbedder,
    aggregation: str = "max",
) -> float:
    """Mean per-question embedding similarity between predicted and gold
    answers.  Per question the gold similarities are aggregated (max by
    default) and negatives are mapped to 0 to keep the score in [0, 1]."""
    if not predictions:
        raise InvalidInputError("cannot score an empty prediction list")
    if aggregation not in BS_AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {BS_AGGREGATIONS}")
    total = 0.0
    for prediction in predictions:
        answers = _require_golds(prediction, golds)
        predicted_vector = embedder.embed(prediction.predicted_answer)
        similarities = [cosine(embedder.embed(gold), predicted_vector) for gold in answers]
        score = max(similarities) if aggregation == "max" else sum(similarities) / len(similarities)
        total += min(1.0, max(0.0, score))
    return total / len(predictions)


def latest_verdicts(
    grades: Sequence[GradeRecord], system: str | None = None
) -> dict[tuple[str, str, str], GradeRecord]:
    """Collapse a grade log to one record per (question, system, grader).
    Later timestamps win; among equal timestamps, later log entries win."""
    latest: dict[tuple[str, str, str], GradeRecord] = {}
    for grade in grades:
        if system is not None and grade.system != system:
            continue
        key = (grade.question_id, grade.system, grade.grader_id)
        current = latest.get(key)
        if current is None or grade.timestamp >= current.timestamp:
            latest[key] = grade
    return latest


def human_eval_score(grades: Sequence[GradeRecord], system: str) -> float | None:
    """Mean over graded questions of the fraction of graders marking the
    system's answer correct.  None when the system has no grades at all."""
    latest = latest_verdicts(grades, system=system)
    if not latest:
        return None
    per_question: dict[str, list[bool]] = {}
    for (question_id, _, _), grade in latest.items():
        per_question.setdefault(question_id, []).append(grade.verdict == "correct")
    scores = [sum(marks) / len(marks) for marks in per_question.values()]
    return sum(scores) / len(scores)


def build_report(
    rows: Sequence[ReportRow], include_published: bool = False
) -> EvaluationReport:
    """Order rows section by section (best EM first inside each) and
    optionally append the published comparison rows."""
    if not rows and not include_published:
        raise InvalidInputError("report needs at least one row")
    combined = list(rows)
    if include_published:
        present = {row.system for row in combined}
        combined.extend(row for row in PUBLISHED_RESULTS if row.system not in present)

    def sort_key(row: ReportRow):
        section_index = SECTIONS.index(row.section) if row.section in SECTIONS else len(SECTIONS)
        return (section_index, row.section, -row.em, row.system)

    return EvaluationReport(rows=tuple(sorted(combined, key=sort_key)))


def render_report(report: EvaluationReport) -> str:
    """Fixed-width text table, grouped by section."""

    def fmt(value: float | None, width: int) -> str:
        return ("-" if value is None else f"{value:.2f}").rjust(width)

    name_width = max([len("System")] + [len(r.system) for r in report.rows])
    lines = [
        f"{'System'.ljust(name_width)}  {'Train':>6}  {'EM':>5}  {'BS':>5}  {'HE':>5}",
        "-" * (name_width + 2 + 6 + 2 + 5 + 2 + 5 + 2 + 5),
    ]
    previous_section = None
    for row in report.rows:
        if row.section != previous_section:
            lines.append(f"[{row.section}]")
            previous_section = row.section
        train = "-" if row.train_data is None else str(row.train_data)
        lines.append(
            f"{row.system.ljust(name_width)}  {train:>6}  "
            f"{fmt(row.em, 5)}  {fmt(row.bs, 5)}  {fmt(row.he, 5)}"
        )
    return "\n".join(lines) + "\n"


# -- JSONL persistence for predictions and grades -----------------------------


def prediction_to_dict(prediction: AnswerPrediction) -> dict:
    return {
        "question_id": prediction.question_id,
        "system": prediction.system,
        "rewrite_text": prediction.rewrite_text,
        "predicted_answer": prediction.predicted_answer,
    }


def prediction_from_dict(payload: dict) -> AnswerPrediction:
    return AnswerPrediction(
        question_id=payload["question_id"],
        system=payload["system"],
        predicted_answer=payload["predicted_answer"],
        rewrite_text=payload.get("rewrite_text"),
    )


def write_predictions(path: str | Path, predictions: Iterable[AnswerPrediction]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as handle:
        for prediction in predictions:
            handle.write(json.dumps(prediction_to_dict(prediction), sort_keys=True))
            handle.write("\n")


def read_predictions(path: str | Path) -> list[AnswerPrediction]:
    records = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(prediction_from_dict(json.loads(line)))
    return records


def grade_to_dict(grade: GradeRecord) -> dict:
    return {
        "question_id": grade.question_id,
        "system": grade.system,
        "grader_id": grade.grader_id,
        "verdict": grade.verdict,
        "timestamp": grade.timestamp,
    }


def grade_from_dict(payload: dict) -> GradeRecord:
    return GradeRecord(
        question_id=payload["question_id"],
        system=payload["system"],
        grader_id=payload["grader_id"],
        verdict=payload["verdict"],
        timestamp=float(payload["timestamp"]),
    )
