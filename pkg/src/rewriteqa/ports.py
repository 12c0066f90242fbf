"""Abstract contracts for every external model the pipeline touches.

The algorithms only ever see these interfaces; concrete implementations live
in :mod:`rewriteqa.backends` (deterministic in-repo references plus remote
HTTP adapters).  Scoring, answering, embedding, and generation are read-only
and safe to call concurrently.  ``TrainableRewriter.update`` mutates model
parameters and callers must serialize it (single writer per instance).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SequenceScore:
    """Log-probability of a token sequence under a language model."""

    total_logprob: float
    token_count: int

    def __post_init__(self):
        if self.token_count < 1:
            raise ValueError(f"token_count must be >= 1, got {self.token_count}")

    @property
    def normalized(self) -> float:
        return self.total_logprob / self.token_count


@dataclass(frozen=True)
class GenerationRequest:
    """Ask a rewriter for up to ``k`` candidates via beam search.

    ``seed`` makes stochastic backends reproducible; deterministic backends
    ignore it.
    """

    input_text: str
    k: int = 1
    beam_width: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1 or self.beam_width < 1:
            raise ValueError("k and beam_width must be >= 1")
        if self.k > self.beam_width:
            raise ValueError(f"k ({self.k}) must not exceed beam_width ({self.beam_width})")


@dataclass(frozen=True)
class WeightedCandidate:
    """A generated rewrite paired with its reward-derived update coefficient."""

    text: str
    weight: float

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("candidate text must be non-empty")


class LanguageModelScorer(ABC):
    """Scores how plausible a token sequence is."""

    @abstractmethod
    def score_sequence(self, text: str) -> SequenceScore:
        """Return the sequence log-probability.  Raises InvalidInputError on
        text with no tokens."""


class TextQA(ABC):
    """Answers a non-grounded question from text alone."""

    @abstractmethod
    def answer(self, question: str) -> str:
        ...


class AnswerEmbedder(ABC):
    """Maps answer text to a fixed-dimension unit vector."""

    dim: int

    @abstractmethod
    def embed(self, text: str) -> np.ndarray:
        """Return an L2-normalized float vector of length ``dim``.  Text with
        no tokens embeds to the zero vector."""


class Seq2SeqRewriter(ABC):
    """Generates rewrite candidates for an input text."""

    @abstractmethod
    def generate(self, request: GenerationRequest) -> list[str]:
        """Return up to ``request.k`` distinct candidate texts, best first,
        deterministic for a fixed seed."""


class TrainableRewriter(Seq2SeqRewriter):
    """A rewriter whose parameters can take reward-weighted gradient steps.

    The gradient never crosses a process boundary: callers hand over reward
    weights and the implementation differentiates its own log-likelihood.
    """

    @abstractmethod
    def update(self, input_text: str, candidates: list[WeightedCandidate]) -> float:
        """Take one gradient step in the direction of
        ``sum_i weight_i * grad log P(candidate_i | input)`` and return the
        scalar loss (negated weighted log-likelihood) at the pre-step
        parameters.  All-zero weights leave parameters unchanged."""

    @abstractmethod
    def snapshot(self) -> bytes:
        """Serialize current parameters; restore() round-trips bit-exactly."""

    @abstractmethod
    def restore(self, blob: bytes) -> None:
        ...


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero vectors compare as 0.0."""
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))
