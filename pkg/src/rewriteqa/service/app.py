"""The grading service: serves examples with every system's rewrite and
answer, records binary verdicts append-only, and reports EM/BS/HE on demand."""

from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Mapping, Sequence

from fastapi import FastAPI, HTTPException, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from ..data import VisualQuestion
from ..evaluation import (
    PUBLISHED_RESULTS,
    AnswerPrediction,
    EvaluationReport,
    GradeRecord,
    ReportRow,
    bert_similarity,
    build_report,
    exact_match,
    gold_map,
    human_eval_score,
    render_report,
)
from ..grading import GradeStore
from ..ports import AnswerEmbedder
from .models import (
    ExampleDetail,
    ExampleSummary,
    GradeIn,
    GradeOut,
    GuidelinesOut,
    ProgressOut,
    ReportOut,
    ReportRowOut,
    SystemAnswer,
)

logger = logging.getLogger("rewriteqa.service")

DEFAULT_GUIDELINES = """\
Grading guidelines

Mark an answer "correct" when it conveys the same fact as any gold answer,
even when the wording differs. Otherwise mark it "incorrect".

1. Ignore case, punctuation, and leading articles (a, an, the).
2. Accept synonyms and paraphrases that a knowledgeable person would read
   as the same answer.
3. Accept an answer that is more specific than a gold answer when it is
   factually consistent with it.
4. For numeric answers, accept a period or range containing the gold value,
   such as 19th century for 1890.
5. Judge only the answer, not the rewritten question that produced it.
6. When unsure, mark "incorrect".
"""

_SECTION_ALIASES = {
    "agnostic": "Our Methods",
    "aware": "Our Methods",
    "concat": "Baselines",
    "passthrough": "Baselines",
}
_PUBLISHED_SECTIONS = {row.system: row.section for row in PUBLISHED_RESULTS}


def section_for_system(system: str) -> str:
    if system in _PUBLISHED_SECTIONS:
        return _PUBLISHED_SECTIONS[system]
    return _SECTION_ALIASES.get(system, "Our Methods")


_PLACEHOLDER_SVG = """\
<svg xmlns="http://www.w3.org/2000/svg" width="480" height="360">
  <rect width="100%" height="100%" fill="#d8dee9"/>
  <text x="50%" y="48%" text-anchor="middle" font-family="sans-serif"
        font-size="20" fill="#4c566a">image unavailable</text>
  <text x="50%" y="58%" text-anchor="middle" font-family="sans-serif"
        font-size="14" fill="#4c566a">{image_id}</text>
</svg>
"""

_IMAGE_TYPES = {
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".png": "image/png",
    ".gif": "image/gif",
    ".svg": "image/svg+xml",
}


class GradingState:
    """Everything the endpoints read: the test split, per-system predictions
    restricted to the shared question set, and the grade log."""

    def __init__(
        self,
        dataset: Sequence[VisualQuestion],
        predictions: Mapping[str, Sequence[AnswerPrediction]],
        store: GradeStore,
        embedder: AnswerEmbedder,
        images_dir: str | Path | None = None,
        guidelines_text: str = DEFAULT_GUIDELINES,
    ):
        if not predictions:
            raise ValueError("grading needs predictions for at least one system")
        self.systems = sorted(predictions)
        self.by_system: dict[str, dict[str, AnswerPrediction]] = {
            system: {p.question_id: p for p in preds} for system, preds in predictions.items()
        }
        shared = set.intersection(*(set(m) for m in self.by_system.values()))
        self.examples = [q for q in dataset if q.question_id in shared]
        dropped = len([q for q in dataset if q.question_id not in shared])
        if dropped:
            logger.warning(
                "%d example(s) lack predictions from every system and are not served", dropped
            )
        if not self.examples:
            raise ValueError("no example is covered by every loaded prediction file")
        self.by_id = {q.question_id: q for q in self.examples}
        self.store = store
        self.embedder = embedder
        self.images_dir = Path(images_dir) if images_dir else None
        self.guidelines_text = guidelines_text
        self.golds = gold_map(self.examples)

    def summary(self, record: VisualQuestion) -> ExampleSummary:
        return ExampleSummary(
            question_id=record.question_id,
            image_id=record.image_id,
            question=record.question,
            gold_answers=list(record.gold_answers),
            systems=self.systems,
        )

    def detail(self, record: VisualQuestion) -> ExampleDetail:
        answers = []
        for system in self.systems:
            prediction = self.by_system[system][record.question_id]
            answers.append(
                SystemAnswer(
                    system=system,
                    rewrite_text=prediction.rewrite_text,
                    predicted_answer=prediction.predicted_answer,
                )
            )
        return ExampleDetail(
            **self.summary(record).model_dump(),
            image_url=f"/api/images/{record.image_id}",
            answers=answers,
        )

    def find_image(self, image_id: str) -> Path | None:
        if self.images_dir is None or not self.images_dir.is_dir():
            return None
        for suffix in _IMAGE_TYPES:
            candidate = self.images_dir / f"{image_id}{suffix}"
            if candidate.is_file():
                return candidate
        return None

    def compute_report(self) -> EvaluationReport:
        grades = self.store.all()
        rows = []
        for system in self.systems:
            predictions = [self.by_system[system][q.question_id] for q in self.examples]
            rows.append(
                ReportRow(
                    system=system,
                    em=exact_match(predictions, self.golds),
                    bs=bert_similarity(predictions, self.golds, self.embedder),
                    he=human_eval_score(grades, system),
                    section=section_for_system(system),
                )
            )
        return build_report(rows, include_published=True)


def create_grading_app(
    dataset: Sequence[VisualQuestion],
    predictions: Mapping[str, Sequence[AnswerPrediction]],
    store: GradeStore,
    embedder: AnswerEmbedder,
    images_dir: str | Path | None = None,
    guidelines_text: str = DEFAULT_GUIDELINES,
    static_dir: str | Path | None = None,
) -> FastAPI:
    state = GradingState(
        dataset=dataset,
        predictions=predictions,
        store=store,
        embedder=embedder,
        images_dir=images_dir,
        guidelines_text=guidelines_text,
    )
    app = FastAPI(title="rewriteqa grading service")
    app.state.grading = state

    @app.exception_handler(RequestValidationError)
    async def validation_as_400(request: Request, exc: RequestValidationError):
        # The grading client treats malformed bodies as caller bugs: 400.
        return JSONResponse(status_code=400, content={"detail": jsonable_encoder(exc.errors())})

    @app.get("/api/examples", response_model=list[ExampleSummary])
    def list_examples():
        return [state.summary(record) for record in state.examples]

    @app.get("/api/examples/{question_id}", response_model=ExampleDetail)
    def get_example(question_id: str):
        record = state.by_id.get(question_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown question_id {question_id!r}")
        return state.detail(record)

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        path = state.find_image(image_id)
        if path is not None:
            media_type = _IMAGE_TYPES.get(path.suffix.lower(), "application/octet-stream")
            return Response(content=path.read_bytes(), media_type=media_type)
        return Response(
            content=_PLACEHOLDER_SVG.format(image_id=image_id), media_type="image/svg+xml"
        )

    @app.post("/api/grades", response_model=GradeOut)
    def post_grade(grade: GradeIn):
        if grade.question_id not in state.by_id:
            raise HTTPException(status_code=404, detail=f"unknown question_id {grade.question_id!r}")
        if grade.system not in state.systems:
            raise HTTPException(status_code=404, detail=f"unknown system {grade.system!r}")
        record = GradeRecord(
            question_id=grade.question_id,
            system=grade.system,
            grader_id=grade.grader_id,
            verdict=grade.verdict,
            timestamp=time.time(),
        )
        state.store.add(record)
        return GradeOut(**grade.model_dump(), timestamp=record.timestamp)

    @app.get("/api/grades", response_model=list[GradeOut])
    def list_grades(grader_id: str | None = None, question_id: str | None = None):
        records = []
        for record in state.store.latest().values():
            if grader_id is not None and record.grader_id != grader_id:
                continue
            if question_id is not None and record.question_id != question_id:
                continue
            records.append(
                GradeOut(
                    question_id=record.question_id,
                    system=record.system,
                    grader_id=record.grader_id,
                    verdict=record.verdict,
                    timestamp=record.timestamp,
                )
            )
        records.sort(key=lambda g: (g.question_id, g.system, g.grader_id))
        return records

    @app.get("/api/progress", response_model=ProgressOut)
    def progress(grader_id: str | None = None):
        latest = state.store.latest()
        served = set(state.by_id)
        pairs = set()
        for (question_id, system, grader) in latest:
            if question_id not in served:
                continue
            if grader_id is not None and grader != grader_id:
                continue
            pairs.add((question_id, system))
        per_system = {system: 0 for system in state.systems}
        per_question: dict[str, int] = {}
        for question_id, system in pairs:
            per_system[system] += 1
            per_question[question_id] = per_question.get(question_id, 0) + 1
        fully = sum(1 for count in per_question.values() if count == len(state.systems))
        return ProgressOut(
            grader_id=grader_id,
            total_examples=len(state.examples),
            total_pairs=len(state.examples) * len(state.systems),
            graded_pairs=len(pairs),
            fully_graded_examples=fully,
            per_system=per_system,
        )

    @app.get("/api/report", response_model=ReportOut)
    def report():
        computed = state.compute_report()
        rows = [
            ReportRowOut(
                system=r.system,
                section=r.section,
                train_data=r.train_data,
                em=r.em,
                bs=r.bs,
                he=r.he,
            )
            for r in computed.rows
        ]
        return ReportOut(rows=rows, text=render_report(computed))

    @app.get("/api/guidelines", response_model=GuidelinesOut)
    def guidelines():
        return GuidelinesOut(text=state.guidelines_text)

    # Mounted last so /api/* stays routed to the handlers above.
    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
