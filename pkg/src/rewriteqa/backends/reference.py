"""Deterministic in-repo backends.

These stand in for the large pretrained models behind each port so every
algorithm in the pipeline is testable offline: an n-gram table scorer, a
lookup-table QA, a token-hash embedder, and a trainable log-linear rewriter
with a closed-form gradient.
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..data import join_tokens, tokenize
from ..errors import InvalidInputError, VocabularyError
from ..ports import (
    AnswerEmbedder,
    GenerationRequest,
    LanguageModelScorer,
    Seq2SeqRewriter,
    SequenceScore,
    TextQA,
    TrainableRewriter,
    WeightedCandidate,
)

EOS_TOKEN = "</s>"


class NgramTableScorer(LanguageModelScorer):
    """Scores sequences from a fixed table of unigram/bigram log-probs.

    Each token contributes its bigram log-prob given the previous token when
    that bigram is tabled, else its unigram log-prob, else ``default_logprob``.
    """

    def __init__(
        self,
        unigrams: Mapping[str, float] | None = None,
        bigrams: Mapping[tuple[str, str], float] | None = None,
        default_logprob: float = -10.0,
    ):
        self.unigrams = dict(unigrams or {})
        self.bigrams = dict(bigrams or {})
        self.default_logprob = float(default_logprob)

    @classmethod
    def uniform(cls, logprob: float) -> "NgramTableScorer":
        """Every token scores ``logprob`` regardless of context."""
        return cls(default_logprob=logprob)

    @classmethod
    def from_json(cls, path: str | Path) -> "NgramTableScorer":
        """Load a table file: {"unigrams": {tok: lp}, "bigrams": {"a b": lp},
        "default_logprob": lp}."""
        with Path(path).open("r", encoding="utf-8") as handle:
            raw = json.load(handle)
        bigrams = {}
        for key, value in raw.get("bigrams", {}).items():
            first, second = key.split()
            bigrams[(first, second)] = float(value)
        return cls(
            unigrams={k: float(v) for k, v in raw.get("unigrams", {}).items()},
            bigrams=bigrams,
            default_logprob=float(raw.get("default_logprob", -10.0)),
        )

    def token_logprob(self, token: str, previous: str | None) -> float:
        if previous is not None and (previous, token) in self.bigrams:
            return self.bigrams[(previous, token)]
        return self.unigrams.get(token, self.default_logprob)

    def score_sequence(self, text: str) -> SequenceScore:
        tokens = tokenize(text)
        if not tokens:
            raise InvalidInputError(f"cannot score text with no tokens: {text!r}")
        total = 0.0
        previous = None
        for token in tokens:
            total += self.token_logprob(token, previous)
            previous = token
        return SequenceScore(total_logprob=total, token_count=len(tokens))


class LookupQA(TextQA):
    """Answers from a fixed table keyed by normalized question text."""

    def __init__(self, table: Mapping[str, str], fallback: str = "unknown"):
        from ..data import normalize_answer

        self._normalize = normalize_answer
        self.table = {self._normalize(k): str(v) for k, v in table.items()}
        self.fallback = fallback

    @classmethod
    def from_json(cls, path: str | Path, fallback: str = "unknown") -> "LookupQA":
        with Path(path).open("r", encoding="utf-8") as handle:
            return cls(json.load(handle), fallback=fallback)

    def answer(self, question: str) -> str:
        return self.table.get(self._normalize(question), self.fallback)


class HashEmbedder(AnswerEmbedder):
    """Bag-of-tokens embedding: each token hashes to one of ``dim`` buckets,
    counts are L2-normalized.  Text with no tokens embeds to the zero vector."""

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim

    def bucket(self, token: str) -> int:
        digest = hashlib.md5(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big") % self.dim

    def embed(self, text: str) -> np.ndarray:
        vector = np.zeros(self.dim, dtype=np.float64)
        for token in tokenize(text):
            vector[self.bucket(token)] += 1.0
        norm = np.linalg.norm(vector)
        if norm > 0.0:
            vector /= norm
        return vector


class IdentityRewriter(Seq2SeqRewriter):
    """Echoes its input; the one candidate is always the input text."""

    def generate(self, request: GenerationRequest) -> list[str]:
        return [request.input_text]


class LookupRewriter(Seq2SeqRewriter):
    """Generates from a fixed input-to-candidates table (identity fallback).

    Stands in for an already-trained rewriter in fixtures: keys are matched
    on tokenized text so casing and terminal punctuation do not matter.
    """

    def __init__(self, table: Mapping[str, Sequence[str]], identity_fallback: bool = True):
        self.table = {join_tokens(tokenize(k)): list(v) for k, v in table.items()}
        self.identity_fallback = identity_fallback

    def generate(self, request: GenerationRequest) -> list[str]:
        key = join_tokens(tokenize(request.input_text))
        candidates = self.table.get(key)
        if candidates is None:
            candidates = [request.input_text] if self.identity_fallback else []
        seen: set[str] = set()
        out = []
        for text in candidates:
            if text not in seen:
                seen.add(text)
                out.append(text)
            if len(out) == request.k:
                break
        return out


class LogLinearRewriter(TrainableRewriter):
    """Per-position log-linear emitter over a closed vocabulary.

    Position ``t`` emits token ``v`` with probability
    ``softmax(bias[t] + inter[t] @ phi(x))[v]`` where ``phi(x)`` is the
    normalized bag-of-tokens of the input.  A sequence of length L has
    log-probability ``sum_t log p_t(y_t) + log p_L(EOS)``, so the likelihood
    and its gradient are exact and cheap — small enough to check every
    parameter against finite differences.

    Unknown input tokens contribute nothing to ``phi``; candidate tokens must
    be in-vocabulary.
    """

    def __init__(
        self,
        vocab: Sequence[str],
        max_len: int = 16,
        learning_rate: float = 0.5,
        init_scale: float = 0.01,
        seed: int = 0,
    ):
        tokens = [t for t in dict.fromkeys(vocab) if t != EOS_TOKEN]
        if not tokens:
            raise ValueError("vocab must contain at least one token")
        if max_len < 2:
            raise ValueError("max_len must be >= 2 (one token plus EOS)")
        self.tokens = tokens + [EOS_TOKEN]
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        self.max_len = max_len
        self.learning_rate = learning_rate
        self.init_scale = init_scale
        self.seed = seed
        vocab_size = len(self.tokens)
        rng = np.random.default_rng(seed)
        self.bias = init_scale * rng.standard_normal((max_len, vocab_size))
        self.inter = init_scale * rng.standard_normal((max_len, vocab_size, vocab_size))

    # -- model internals ---------------------------------------------------

    @property
    def eos_index(self) -> int:
        return len(self.tokens) - 1

    def features(self, text: str) -> np.ndarray:
        phi = np.zeros(len(self.tokens), dtype=np.float64)
        known = [self.index[t] for t in tokenize(text) if t in self.index and t != EOS_TOKEN]
        for idx in known:
            phi[idx] += 1.0
        if known:
            phi /= len(known)
        return phi

    def position_logprobs(self, phi: np.ndarray) -> np.ndarray:
        scores = self.bias + self.inter @ phi
        scores = scores - scores.max(axis=1, keepdims=True)
        return scores - np.log(np.exp(scores).sum(axis=1, keepdims=True))

    def _encode(self, text: str) -> list[int]:
        tokens = tokenize(text)
        if not tokens:
            raise InvalidInputError(f"candidate has no tokens: {text!r}")
        if len(tokens) >= self.max_len:
            raise InvalidInputError(
                f"candidate has {len(tokens)} tokens; this model handles at most {self.max_len - 1}"
            )
        ids = []
        for token in tokens:
            if token == EOS_TOKEN or token not in self.index:
                raise VocabularyError(token)
            ids.append(self.index[token])
        return ids

    def sequence_logprob(self, text: str, input_text: str) -> float:
        """Exact log P(text | input_text) including the end-of-sequence factor."""
        ids = self._encode(text) + [self.eos_index]
        logp = self.position_logprobs(self.features(input_text))
        return float(sum(logp[t, v] for t, v in enumerate(ids)))

    # -- port operations ----------------------------------------------------

    def generate(self, request: GenerationRequest) -> list[str]:
        logp = self.position_logprobs(self.features(request.input_text))
        eos = self.eos_index
        vocab_size = len(self.tokens)
        open_beams: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
        finished: list[tuple[float, tuple[int, ...]]] = []
        for t in range(self.max_len):
            if not open_beams:
                break
            last_position = t == self.max_len - 1
            expanded: list[tuple[float, tuple[int, ...]]] = []
            for score, prefix in open_beams:
                finished.append((score + logp[t, eos], prefix))
                if not last_position:
                    for v in range(vocab_size):
                        if v == eos:
                            continue
                        expanded.append((score + logp[t, v], prefix + (v,)))
            expanded.sort(key=lambda item: (-item[0], item[1]))
            open_beams = expanded[: request.beam_width]
        finished.sort(key=lambda item: (-item[0], item[1]))
        out = []
        for _, prefix in finished:
            if not prefix:
                continue  # never return the empty rewrite
            out.append(join_tokens(self.tokens[v] for v in prefix))
            if len(out) == request.k:
                break
        return out

    def update(self, input_text: str, candidates: list[WeightedCandidate]) -> float:
        if not candidates:
            raise InvalidInputError("update requires at least one candidate")
        encoded = [(self._encode(c.text) + [self.eos_index], c.weight) for c in candidates]
        phi = self.features(input_text)
        logp = self.position_logprobs(phi)
        probs = np.exp(logp)
        d_scores = np.zeros_like(logp)
        objective = 0.0
        for ids, weight in encoded:
            for t, v in enumerate(ids):
                objective += weight * logp[t, v]
                d_scores[t, v] += weight
                d_scores[t] -= weight * probs[t]
        self.bias += self.learning_rate * d_scores
        self.inter += self.learning_rate * d_scores[:, :, None] * phi[None, None, :]
        return -objective

    def snapshot(self) -> bytes:
        buffer = io.BytesIO()
        np.savez(buffer, bias=self.bias, inter=self.inter)
        return buffer.getvalue()

    def restore(self, blob: bytes) -> None:
        with np.load(io.BytesIO(blob)) as arrays:
            bias, inter = arrays["bias"], arrays["inter"]
        if bias.shape != self.bias.shape or inter.shape != self.inter.shape:
            raise InvalidInputError(
                f"snapshot shapes {bias.shape}/{inter.shape} do not match model "
                f"{self.bias.shape}/{self.inter.shape}"
            )
        self.bias = bias.copy()
        self.inter = inter.copy()

    def checkpoint_meta(self) -> dict:
        """Construction parameters, enough to rebuild this model for restore()."""
        return {
            "kind": "loglinear",
            "vocab": self.tokens[:-1],
            "max_len": self.max_len,
            "learning_rate": self.learning_rate,
            "init_scale": self.init_scale,
            "seed": self.seed,
        }

    @classmethod
    def from_checkpoint_meta(cls, meta: Mapping) -> "LogLinearRewriter":
        return cls(
            vocab=meta["vocab"],
            max_len=int(meta["max_len"]),
            learning_rate=float(meta["learning_rate"]),
            init_scale=float(meta.get("init_scale", 0.01)),
            seed=int(meta.get("seed", 0)),
        )


def vocab_from_questions(records, extra_tokens: Sequence[str] = (".",)) -> list[str]:
    """Deterministic closed vocabulary covering questions, entities, and the
    concatenation separator."""
    seen: set[str] = set()
    for record in records:
        seen.update(tokenize(record.question))
        for entity in record.entities:
            seen.update(tokenize(entity.text))
    seen.update(extra_tokens)
    return sorted(seen)
