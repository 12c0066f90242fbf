"""Dataset records, ingestion, filtering, and the shared text conventions.

Every other module builds on the two normalization functions defined here:
``tokenize`` fixes what a "token" and a "span" mean for rewriting, and
``normalize_answer`` fixes what "the same answer" means for evaluation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DatasetParseError, DatasetSchemaError

ENTITY_SOURCES = ("object", "scene")
SPLITS = ("train", "test")

DEFAULT_SPATIAL_KEYWORDS = (
    "left",
    "right",
    "behind",
    "front",
    "closest",
    "nearest",
    "top",
    "bottom",
)

# Trailing sentence punctuation dropped by the tokenizer.  Stripping greedily
# (rather than one character) keeps tokenize a fixpoint of its own output.
_TERMINAL_CHARS = "?. \t\r\n"

_PUNCT_RE = re.compile(r"[^\w\s]")
_WS_RE = re.compile(r"\s+")
_ARTICLES = frozenset({"a", "an", "the"})


def tokenize(text: str) -> list[str]:
    """Lowercase, drop terminal '?'/'.', and split on whitespace."""
    stripped = text.lower().rstrip(_TERMINAL_CHARS)
    return stripped.split()


def join_tokens(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


def normalize_answer(text: str) -> str:
    """Canonical answer form: lowercase, no punctuation, no leading article.

    Matches the usual open-domain QA convention so exact match is insensitive
    to casing, surrounding whitespace, and "the"/"a"/"an" prefixes.
    """
    lowered = _PUNCT_RE.sub("", text.lower())
    tokens = _WS_RE.split(lowered.strip())
    while tokens and tokens[0] in _ARTICLES:
        tokens = tokens[1:]
    return " ".join(t for t in tokens if t)


@dataclass(frozen=True)
class EntityLabel:
    """One image label: text plus its extractor provenance and confidence rank."""

    text: str
    source: str
    rank: int

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("entity text must be non-empty")
        if self.source not in ENTITY_SOURCES:
            raise ValueError(f"entity source must be one of {ENTITY_SOURCES}, got {self.source!r}")
        if self.rank < 1:
            raise ValueError(f"entity rank must be >= 1, got {self.rank}")


@dataclass(frozen=True)
class VisualQuestion:
    """One dataset record: a question about an image plus precomputed labels."""

    question_id: str
    image_id: str
    question: str
    gold_answers: tuple[str, ...]
    entities: tuple[EntityLabel, ...]
    split: str

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError("question must be non-empty")
        if not self.gold_answers:
            raise ValueError("gold_answers must have at least one entry")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        ranks = [e.rank for e in self.entities]
        if len(set(ranks)) != len(ranks):
            raise ValueError("entity ranks must be unique within a record")

    @property
    def tokens(self) -> list[str]:
        return tokenize(self.question)


@dataclass(frozen=True)
class FilterSpec:
    """How raw annotation files are reduced to the working corpus.

    ``keep_question_type`` selects the knowledge-question annotation tag,
    ``spatial_keywords`` excludes questions needing spatial reasoning, and
    ``top_e`` caps how many image entities each record keeps.
    """

    keep_question_type: str = "knowledge"
    spatial_keywords: tuple[str, ...] = DEFAULT_SPATIAL_KEYWORDS
    top_e: int = 4

    def __post_init__(self):
        if self.top_e < 1:
            raise ValueError(f"top_e must be >= 1, got {self.top_e}")
        object.__setattr__(
            self, "spatial_keywords", tuple(k.lower() for k in self.spatial_keywords)
        )


_REQUIRED_KEYS = (
    "question_id",
    "image_id",
    "question",
    "gold_answers",
    "entities",
    "question_type",
    "split",
)


def _parse_entities(raw_entities, path: str, line_number: int) -> tuple[EntityLabel, ...]:
    entities = []
    for raw in raw_entities:
        for key in ("text", "source", "rank"):
            if key not in raw:
                raise DatasetSchemaError(path, line_number, f"entity missing field {key!r}")
        try:
            entities.append(
                EntityLabel(text=str(raw["text"]), source=raw["source"], rank=int(raw["rank"]))
            )
        except (ValueError, TypeError) as exc:
            raise DatasetSchemaError(path, line_number, f"bad entity: {exc}") from exc
    return tuple(entities)


def _select_entities(entities: Sequence[EntityLabel], top_e: int) -> tuple[EntityLabel, ...]:
    # Sort by rank, drop duplicates of the same normalized text (best rank
    # wins), then truncate.  Result has strictly increasing ranks.
    seen: set[str] = set()
    selected = []
    for entity in sorted(entities, key=lambda e: e.rank):
        key = join_tokens(tokenize(entity.text))
        if key in seen:
            continue
        seen.add(key)
        selected.append(entity)
        if len(selected) == top_e:
            break
    return tuple(selected)


def load_dataset(path: str | Path, spec: FilterSpec) -> list[VisualQuestion]:
    """Read a JSONL annotation file and apply the corpus filter.

    Keeps records whose ``question_type`` matches ``spec.keep_question_type``
    and whose question contains no spatial keyword as a whole token; entities
    are truncated to the ``spec.top_e`` best-ranked labels.  Input order is
    preserved.
    """
    path = Path(path)
    records: list[VisualQuestion] = []
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(str(path), line_number, exc.msg) from exc
            for key in _REQUIRED_KEYS:
                if key not in raw:
                    raise DatasetSchemaError(str(path), line_number, f"missing field {key!r}")
            if raw["question_type"] != spec.keep_question_type:
                continue
            question = str(raw["question"])
            question_tokens = set(tokenize(question))
            if question_tokens & set(spec.spatial_keywords):
                continue
            entities = _select_entities(
                _parse_entities(raw["entities"], str(path), line_number), spec.top_e
            )
            gold_answers = raw["gold_answers"]
            if not isinstance(gold_answers, list) or not gold_answers:
                raise DatasetSchemaError(
                    str(path), line_number, "gold_answers must be a non-empty array"
                )
            try:
                records.append(
                    VisualQuestion(
                        question_id=str(raw["question_id"]),
                        image_id=str(raw["image_id"]),
                        question=question,
                        gold_answers=tuple(str(a) for a in gold_answers),
                        entities=entities,
                        split=raw["split"],
                    )
                )
            except ValueError as exc:
                raise DatasetSchemaError(str(path), line_number, str(exc)) from exc
    return records


def write_dataset(path: str | Path, records: Iterable[VisualQuestion]) -> None:
    """Write records back out in the same JSONL schema ``load_dataset`` reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record_to_dict(record), ensure_ascii=False))
            handle.write("\n")


def record_to_dict(record: VisualQuestion, question_type: str = "knowledge") -> dict:
    return {
        "question_id": record.question_id,
        "image_id": record.image_id,
        "question": record.question,
        "gold_answers": list(record.gold_answers),
        "entities": [
            {"text": e.text, "source": e.source, "rank": e.rank} for e in record.entities
        ],
        "question_type": question_type,
        "split": record.split,
    }
