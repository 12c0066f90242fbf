"""HTTP adapters for the backend ports.

Each adapter speaks the one-endpoint-per-port JSON protocol:

    POST /score    {text}                          -> {total_logprob, token_count}
    POST /answer   {question}                      -> {answer}
    POST /embed    {text}                          -> {vector}
    POST /generate {input, k, beam_width, seed}    -> {candidates}
    POST /update   {input, candidates}             -> {loss}

Transport failures and 5xx responses are retried; after the configured
attempts they surface as BackendUnavailableError.  Well-delivered but
malformed responses raise RemoteProtocolError immediately.
"""

from __future__ import annotations

from dataclasses import dataclass

import httpx
import numpy as np

from ..data import tokenize
from ..errors import (
    BackendError,
    BackendUnavailableError,
    InvalidInputError,
    RemoteProtocolError,
)
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


@dataclass(frozen=True)
class RemoteEndpoint:
    url: str
    timeout_ms: int = 10_000
    retries: int = 2

    def __post_init__(self):
        if not self.url.startswith(("http://", "https://")):
            raise ValueError(f"endpoint URL must be http(s), got {self.url!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


class _RemoteBase:
    """Shared POST-with-retries plumbing.  A custom httpx.Client (for
    example a test client bound to an in-process app) may be injected."""

    def __init__(self, endpoint: RemoteEndpoint, client: httpx.Client | None = None):
        self.endpoint = endpoint
        if client is None:
            client = httpx.Client(
                base_url=endpoint.url, timeout=endpoint.timeout_ms / 1000.0
            )
        self._client = client

    def _post(self, path: str, payload: dict) -> dict:
        attempts = self.endpoint.retries + 1
        last_error: str = "no attempt made"
        for _ in range(attempts):
            try:
                response = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code >= 500:
                last_error = f"server error {response.status_code}"
                continue
            if response.status_code >= 400:
                raise RemoteProtocolError(
                    f"{path} rejected with {response.status_code}: {response.text[:200]}"
                )
            try:
                data = response.json()
            except ValueError as exc:
                raise RemoteProtocolError(f"{path} returned non-JSON body: {exc}") from exc
            if not isinstance(data, dict):
                raise RemoteProtocolError(f"{path} must return a JSON object, got {type(data).__name__}")
            return data
        raise BackendUnavailableError(
            f"{path} unreachable after {attempts} attempt(s); last failure: {last_error}"
        )

    def close(self) -> None:
        self._client.close()


def _require_number(data: dict, key: str, path: str) -> float:
    value = data.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise RemoteProtocolError(f"{path} response field {key!r} must be a number, got {value!r}")
    return float(value)


class RemoteScorer(_RemoteBase, LanguageModelScorer):
    def score_sequence(self, text: str) -> SequenceScore:
        if not tokenize(text):
            raise InvalidInputError("cannot score empty text")
        data = self._post("/score", {"text": text})
        total = _require_number(data, "total_logprob", "/score")
        count = data.get("token_count")
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise RemoteProtocolError(f"/score token_count must be a positive integer, got {count!r}")
        return SequenceScore(total_logprob=total, token_count=count)


class RemoteQA(_RemoteBase, TextQA):
    def answer(self, question: str) -> str:
        data = self._post("/answer", {"question": question})
        answer = data.get("answer")
        if not isinstance(answer, str) or not answer:
            raise RemoteProtocolError(f"/answer must return a non-empty string, got {answer!r}")
        return answer


class RemoteEmbedder(_RemoteBase, AnswerEmbedder):
    def __init__(
        self,
        endpoint: RemoteEndpoint,
        client: httpx.Client | None = None,
        dim: int | None = None,
    ):
        super().__init__(endpoint, client)
        # Unknown until the first response when the server owns the model.
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        data = self._post("/embed", {"text": text})
        vector = data.get("vector")
        if not isinstance(vector, list) or not vector:
            raise RemoteProtocolError(f"/embed must return a non-empty 'vector' list, got {vector!r}")
        try:
            array = np.asarray(vector, dtype=float)
        except (TypeError, ValueError) as exc:
            raise RemoteProtocolError(f"/embed vector contains non-numeric entries: {exc}") from exc
        if array.ndim != 1 or not np.all(np.isfinite(array)):
            raise RemoteProtocolError("/embed vector must be a flat list of finite numbers")
        if self.dim is None:
            self.dim = array.shape[0]
        elif array.shape[0] != self.dim:
            raise RemoteProtocolError(
                f"/embed dimension changed from {self.dim} to {array.shape[0]}"
            )
        return array


class RemoteRewriter(_RemoteBase, Seq2SeqRewriter):
    def generate(self, request: GenerationRequest) -> list[str]:
        data = self._post(
            "/generate",
            {
                "input": request.input_text,
                "k": request.k,
                "beam_width": request.beam_width,
                "seed": request.seed,
            },
        )
        candidates = data.get("candidates")
        if not isinstance(candidates, list):
            raise RemoteProtocolError(f"/generate must return a 'candidates' list, got {candidates!r}")
        if len(candidates) > request.k:
            raise RemoteProtocolError(
                f"/generate returned {len(candidates)} candidates for k={request.k}"
            )
        texts: list[str] = []
        for item in candidates:
            if not isinstance(item, str) or not item:
                raise RemoteProtocolError(f"/generate candidates must be non-empty strings, got {item!r}")
            texts.append(item)
        if len(set(texts)) != len(texts):
            raise RemoteProtocolError("/generate candidates must be distinct")
        return texts


class RemoteTrainableRewriter(RemoteRewriter, TrainableRewriter):
    def update(self, input_text: str, candidates: list[WeightedCandidate]) -> float:
        if not candidates:
            raise InvalidInputError("update requires at least one candidate")
        data = self._post(
            "/update",
            {
                "input": input_text,
                "candidates": [{"text": c.text, "weight": c.weight} for c in candidates],
            },
        )
        return _require_number(data, "loss", "/update")

    # Parameters live on the server; the wire protocol deliberately has no
    # endpoint for shipping them, so checkpointing stays a local concern.
    def snapshot(self) -> bytes:
        raise BackendError("remote rewriter does not expose parameter snapshots")

    def restore(self, blob: bytes) -> None:
        raise BackendError("remote rewriter does not accept parameter snapshots")
