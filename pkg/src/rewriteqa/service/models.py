"""Request/response bodies for the grading service and the backend wire
protocol."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


# -- grading service -----------------------------------------------------------


class GradeIn(BaseModel):
    question_id: str = Field(min_length=1)
    system: str = Field(min_length=1)
    grader_id: str = Field(min_length=1)
    verdict: Literal["correct", "incorrect"]


class GradeOut(GradeIn):
    timestamp: float


class SystemAnswer(BaseModel):
    system: str
    rewrite_text: Optional[str] = None
    predicted_answer: str


class ExampleSummary(BaseModel):
    question_id: str
    image_id: str
    question: str
    gold_answers: list[str]
    systems: list[str]


class ExampleDetail(ExampleSummary):
    image_url: str
    answers: list[SystemAnswer]


class ProgressOut(BaseModel):
    grader_id: Optional[str] = None
    total_examples: int
    total_pairs: int
    graded_pairs: int
    fully_graded_examples: int
    per_system: dict[str, int]


class GuidelinesOut(BaseModel):
    text: str


class ReportRowOut(BaseModel):
    system: str
    section: str
    train_data: Optional[int] = None
    em: float
    bs: float
    he: Optional[float] = None


class ReportOut(BaseModel):
    rows: list[ReportRowOut]
    text: str


# -- backend wire protocol -------------------------------------------------------


class ScoreIn(BaseModel):
    text: str


class ScoreOut(BaseModel):
    total_logprob: float
    token_count: int


class AnswerIn(BaseModel):
    question: str


class AnswerOut(BaseModel):
    answer: str


class EmbedIn(BaseModel):
    text: str


class EmbedOut(BaseModel):
    vector: list[float]


class GenerateIn(BaseModel):
    input: str
    k: int = 1
    beam_width: int = 5
    seed: int = 0


class GenerateOut(BaseModel):
    candidates: list[str]


class UpdateCandidateIn(BaseModel):
    text: str = Field(min_length=1)
    weight: float


class UpdateIn(BaseModel):
    input: str
    candidates: list[UpdateCandidateIn]


class UpdateOut(BaseModel):
    loss: float
