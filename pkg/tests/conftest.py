"""Shared fixtures: bundled example data and reference backend stacks.

Also prints a one-line verdict per acceptance criterion at the end of the
run (see tests/test_acceptance.py).
"""

from __future__ import annotations

from pathlib import Path

import pytest

from rewriteqa.aware import BackendSuite, ExplorationConfig, TrainingConfig
from rewriteqa.backends.reference import (
    HashEmbedder,
    LogLinearRewriter,
    LookupQA,
    NgramTableScorer,
    vocab_from_questions,
)
from rewriteqa.data import EntityLabel, FilterSpec, VisualQuestion, load_dataset

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def make_question(
    question: str,
    entities: list[str],
    question_id: str = "q1",
    gold_answers: tuple[str, ...] = ("gold",),
    split: str = "test",
) -> VisualQuestion:
    return VisualQuestion(
        question_id=question_id,
        image_id=f"img-{question_id}",
        question=question,
        gold_answers=gold_answers,
        entities=tuple(
            EntityLabel(text=text, source="object", rank=i + 1) for i, text in enumerate(entities)
        ),
        split=split,
    )


@pytest.fixture(scope="session")
def paper_records():
    return load_dataset(FIXTURES / "paper_questions.jsonl", FilterSpec())


@pytest.fixture(scope="session")
def paper_scorer():
    return NgramTableScorer.from_json(FIXTURES / "ngram_table.json")


@pytest.fixture(scope="session")
def paper_qa():
    return LookupQA.from_json(FIXTURES / "qa_table.json")


@pytest.fixture(scope="session")
def embedder():
    return HashEmbedder()


@pytest.fixture(scope="session")
def paper_suite(paper_scorer, paper_qa, embedder):
    return BackendSuite(scorer=paper_scorer, qa=paper_qa, embedder=embedder)


@pytest.fixture(scope="session")
def training_records():
    return load_dataset(FIXTURES / "training_questions.jsonl", FilterSpec())


@pytest.fixture()
def training_suite():
    return BackendSuite(
        scorer=NgramTableScorer.from_json(FIXTURES / "training_ngram_table.json"),
        qa=LookupQA.from_json(FIXTURES / "training_qa.json"),
        embedder=HashEmbedder(),
    )


def fresh_smoke_rewriter(training_records) -> LogLinearRewriter:
    """The rewriter configuration used by the training smoke runs."""
    vocab = vocab_from_questions(training_records)
    return LogLinearRewriter(vocab, max_len=8, learning_rate=1.0, seed=0)


def smoke_training_config(**overrides) -> TrainingConfig:
    """Training hyperparameters for the 10-question fixture runs."""
    base = dict(
        batch_size=4,
        total_steps=200,
        learning_rate=1.0,
        warmup_steps=4,
        checkpoint_every=100,
        seed=7,
    )
    base.update(overrides)
    return TrainingConfig(**base)


def smoke_exploration_config() -> ExplorationConfig:
    return ExplorationConfig(t=2, k=1, beam_width=5, seed=7)


# Acceptance reporting: one line per criterion in the terminal summary.

_ACCEPTANCE: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if "test_acceptance" not in item.nodeid:
        return
    label = (item.function.__doc__ or item.name).strip().splitlines()[0]
    if report.when == "setup" and report.skipped:
        _ACCEPTANCE[label] = "SKIP"
    elif report.when == "call":
        _ACCEPTANCE[label] = {
            "passed": "PASS",
            "failed": "FAIL",
            "skipped": "SKIP",
        }.get(report.outcome, report.outcome.upper())


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, verdict in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{verdict:4s}  {label}")
