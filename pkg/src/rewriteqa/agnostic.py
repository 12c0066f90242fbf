"""QA-model-agnostic rewriting: mask an n-gram span, substitute an image
entity, rank every substitution by language-model score, keep the best."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .data import EntityLabel, VisualQuestion, join_tokens, tokenize
from .errors import BackendError, InvalidInputError, ScoringError
from .ports import LanguageModelScorer, SequenceScore

REWRITE_MODES = ("agnostic", "aware", "concat", "passthrough")


@dataclass(frozen=True)
class SpanSub:
    """Replace ``length`` question tokens starting at ``start`` with an entity."""

    start: int
    length: int
    entity: EntityLabel

    def __post_init__(self):
        if self.start < 0 or self.length < 1:
            raise ValueError(f"bad span ({self.start}, {self.length})")


@dataclass(frozen=True)
class RewriteCandidate:
    """One rewritten question.  ``sub`` and ``score`` are absent for rewrites
    that did not come from span substitution (concat / passthrough / aware)."""

    text: str
    sub: SpanSub | None = None
    score: SequenceScore | None = None


@dataclass(frozen=True)
class RewriteDecision:
    question_id: str
    chosen: RewriteCandidate
    ranked: tuple[RewriteCandidate, ...]
    mode: str

    def __post_init__(self):
        if self.mode not in REWRITE_MODES:
            raise ValueError(f"mode must be one of {REWRITE_MODES}, got {self.mode!r}")
        if not self.ranked or self.ranked[0] != self.chosen:
            raise ValueError("chosen must be the first ranked candidate")


@dataclass(frozen=True)
class CandidateGenConfig:
    """Span enumeration and ranking knobs.

    ``n_max`` caps the masked span length; ``length_normalize`` ranks by mean
    per-token log-prob instead of the raw total (fairer across entity
    lengths); ``min_surviving_tokens`` rejects rewrites that keep too little
    of the original question.
    """

    n_max: int = 3
    length_normalize: bool = True
    min_surviving_tokens: int = 1

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.min_surviving_tokens < 0:
            raise ValueError("min_surviving_tokens must be >= 0")


def substitute_span(tokens: Sequence[str], sub: SpanSub) -> str:
    if sub.start + sub.length > len(tokens):
        raise ValueError(f"span ({sub.start}, {sub.length}) exceeds {len(tokens)} tokens")
    entity_tokens = tokenize(sub.entity.text)
    out = list(tokens[: sub.start]) + entity_tokens + list(tokens[sub.start + sub.length :])
    return join_tokens(out)


def enumerate_candidates(
    question: VisualQuestion,
    cfg: CandidateGenConfig,
    entities: Sequence[EntityLabel] | None = None,
) -> list[RewriteCandidate]:
    """All (span, entity) substitutions, unscored.

    One candidate per span of length 1..min(n_max, L) per entity, ordered by
    span start, then span length, then entity rank.  ``entities`` restricts
    substitution to a subset (defaults to all of the question's entities).
    """
    tokens = question.tokens
    if not tokens:
        raise InvalidInputError(f"question {question.question_id!r} has no tokens")
    pool = list(question.entities if entities is None else entities)
    if not pool:
        raise InvalidInputError(f"question {question.question_id!r} has no entities")
    pool.sort(key=lambda e: e.rank)
    length_cap = min(cfg.n_max, len(tokens))
    candidates = []
    for start in range(len(tokens)):
        for length in range(1, length_cap + 1):
            if start + length > len(tokens):
                break
            if len(tokens) - length < cfg.min_surviving_tokens:
                continue
            for entity in pool:
                sub = SpanSub(start=start, length=length, entity=entity)
                candidates.append(RewriteCandidate(text=substitute_span(tokens, sub), sub=sub))
    return candidates


def _rank_key(candidate: RewriteCandidate, length_normalize: bool):
    score = candidate.score
    value = score.normalized if length_normalize else score.total_logprob
    sub = candidate.sub
    return (-value, sub.length, sub.start, sub.entity.rank)


def rank_candidates(
    candidates: Sequence[RewriteCandidate],
    scorer: LanguageModelScorer,
    cfg: CandidateGenConfig,
) -> list[RewriteCandidate]:
    """Score every candidate once and sort best-first.

    Ties resolve toward the shorter span, then the earlier start, then the
    better entity rank, so the ordering is deterministic.
    """
    if not candidates:
        raise InvalidInputError("rank_candidates requires at least one candidate")
    scored = []
    for candidate in candidates:
        try:
            score = scorer.score_sequence(candidate.text)
        except BackendError as exc:
            raise ScoringError(candidate.text, str(exc)) from exc
        scored.append(replace(candidate, score=score))
    scored.sort(key=lambda c: _rank_key(c, cfg.length_normalize))
    return scored


def rewrite_agnostic(
    question: VisualQuestion,
    scorer: LanguageModelScorer,
    cfg: CandidateGenConfig | None = None,
) -> RewriteDecision:
    cfg = cfg or CandidateGenConfig()
    ranked = rank_candidates(enumerate_candidates(question, cfg), scorer, cfg)
    return RewriteDecision(
        question_id=question.question_id,
        chosen=ranked[0],
        ranked=tuple(ranked),
        mode="agnostic",
    )


def build_concat_input(question: VisualQuestion) -> str:
    """Question followed by its entities in rank order, " . "-separated."""
    parts = [join_tokens(question.tokens)]
    for entity in sorted(question.entities, key=lambda e: e.rank):
        parts.append(join_tokens(tokenize(entity.text)))
    return " . ".join(parts)


def concat_decision(question: VisualQuestion) -> RewriteDecision:
    chosen = RewriteCandidate(text=build_concat_input(question))
    return RewriteDecision(
        question_id=question.question_id, chosen=chosen, ranked=(chosen,), mode="concat"
    )


def passthrough_decision(question: VisualQuestion) -> RewriteDecision:
    chosen = RewriteCandidate(text=join_tokens(question.tokens))
    return RewriteDecision(
        question_id=question.question_id, chosen=chosen, ranked=(chosen,), mode="passthrough"
    )


# -- JSONL serialization -----------------------------------------------------


def _candidate_to_dict(candidate: RewriteCandidate) -> dict:
    out: dict = {"text": candidate.text}
    if candidate.sub is not None:
        out["span"] = {"start": candidate.sub.start, "length": candidate.sub.length}
        out["entity"] = candidate.sub.entity.text
        out["entity_rank"] = candidate.sub.entity.rank
        out["entity_source"] = candidate.sub.entity.source
    else:
        out["span"] = None
        out["entity"] = None
    if candidate.score is not None:
        out["score_total"] = candidate.score.total_logprob
        out["score_normalized"] = candidate.score.normalized
    else:
        out["score_total"] = None
        out["score_normalized"] = None
    return out


def decision_to_dict(decision: RewriteDecision, include_ranked: bool = True) -> dict:
    head = _candidate_to_dict(decision.chosen)
    out = {
        "question_id": decision.question_id,
        "mode": decision.mode,
        "chosen_text": decision.chosen.text,
        "span": head["span"],
        "entity": head["entity"],
        "score_total": head["score_total"],
        "score_normalized": head["score_normalized"],
    }
    if include_ranked:
        out["ranked"] = [_candidate_to_dict(c) for c in decision.ranked]
    return out


def _candidate_from_dict(raw: dict) -> RewriteCandidate:
    sub = None
    if raw.get("span") is not None:
        sub = SpanSub(
            start=raw["span"]["start"],
            length=raw["span"]["length"],
            entity=EntityLabel(
                text=raw["entity"],
                source=raw.get("entity_source", "object"),
                rank=raw.get("entity_rank", 1),
            ),
        )
    score = None
    if raw.get("score_total") is not None:
        # token_count is not serialized; recover it from the text.
        score = SequenceScore(
            total_logprob=raw["score_total"], token_count=max(1, len(tokenize(raw["text"])))
        )
    return RewriteCandidate(text=raw["text"], sub=sub, score=score)


def decision_from_dict(raw: dict) -> RewriteDecision:
    if raw.get("ranked"):
        ranked = tuple(_candidate_from_dict(c) for c in raw["ranked"])
        chosen = ranked[0]
        if chosen.text != raw.get("chosen_text", chosen.text):
            raise ValueError(
                f"decision {raw.get('question_id')!r}: chosen_text disagrees with ranked[0]"
            )
    else:
        chosen = _candidate_from_dict(
            {
                "text": raw["chosen_text"],
                "span": raw.get("span"),
                "entity": raw.get("entity"),
                "score_total": raw.get("score_total"),
                "score_normalized": raw.get("score_normalized"),
            }
        )
        ranked = (chosen,)
    return RewriteDecision(
        question_id=raw["question_id"], chosen=chosen, ranked=ranked, mode=raw["mode"]
    )


def write_decisions(path, decisions: Iterable[RewriteDecision], include_ranked: bool = True):
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for decision in decisions:
            handle.write(json.dumps(decision_to_dict(decision, include_ranked), ensure_ascii=False))
            handle.write("\n")


def read_decisions(path) -> list[dict]:
    """Decisions as raw dicts; downstream evaluation only needs question_id,
    mode, and chosen_text."""
    from pathlib import Path

    out = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                out.append(json.loads(line))
    return out
